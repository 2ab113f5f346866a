"""Outer loops: the nested primal-dual solver, its single-inner-step special
case, and the classical proximal-gradient baseline."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .core import CompositeProblem, ProximableTerm, SmoothTerm, as_vector, objective
from .innerloop import inner_budgeted
from .proxlib import fenchel_dual_prox, zero_term

__all__ = [
    "ConfigError",
    "SolverConfig",
    "SolveTrace",
    "SolveOutcome",
    "validate_config",
    "optimality_residuals",
    "nested_primal_dual",
    "loris_verhoeven_step_solver",
    "proximal_gradient",
]

BLOWUP_FACTOR = 1e12


class ConfigError(ValueError):
    """A solver configuration violates the convergence conditions."""


@dataclass(frozen=True)
class SolverConfig:
    alpha: float
    beta: float
    k_max: int = 1
    start_mode: str = "warm"
    max_outer: int = 1000
    outer_tol: float = 0.0
    u0: Optional[np.ndarray] = None
    v00: Optional[np.ndarray] = None
    trace_every: int = 1
    unsafe: bool = False

    def with_(self, **changes) -> "SolverConfig":
        return replace(self, **changes)


def validate_config(problem: CompositeProblem, config: SolverConfig) -> None:
    """Raise :class:`ConfigError` naming the first violated condition.

    ``0 < alpha < 2/L`` and ``0 < beta < 1/||A||^2`` are checked against the
    declared constants. Out-of-range steps and cold starts need ``unsafe``.
    Structural problems (k_max, dimensions) are rejected regardless.
    """
    if config.k_max < 1 or int(config.k_max) != config.k_max:
        raise ConfigError(f"k_max must be a positive integer, got {config.k_max}")
    if config.start_mode not in ("warm", "cold"):
        raise ConfigError(f"start_mode must be 'warm' or 'cold', got {config.start_mode!r}")
    if config.max_outer < 0:
        raise ConfigError("max_outer must be nonnegative")
    if config.outer_tol < 0:
        raise ConfigError("outer_tol must be nonnegative")
    if config.trace_every < 1:
        raise ConfigError("trace_every must be >= 1")
    if not (config.alpha > 0 and config.beta > 0):
        raise ConfigError("alpha and beta must be positive")
    if config.u0 is not None and np.shape(config.u0) != (problem.dim,):
        raise ConfigError(f"u0 must have length {problem.dim}")
    if config.v00 is not None and np.shape(config.v00) != (problem.dual_dim,):
        raise ConfigError(f"v00 must have length {problem.dual_dim}")
    if config.unsafe:
        return
    L = problem.f.lipschitz
    if not config.alpha < 2.0 / L:
        raise ConfigError(f"alpha={config.alpha!r} violates 0 < alpha < 2/L = {2.0 / L!r}")
    bmax = 1.0 / problem.A.norm_bound**2
    if not config.beta < bmax:
        raise ConfigError(f"beta={config.beta!r} violates 0 < beta < 1/||A||^2 = {bmax!r}")
    if config.start_mode == "cold":
        raise ConfigError("start_mode 'cold' carries no convergence guarantee; pass unsafe=True")


def optimality_residuals(problem: CompositeProblem, u, v, alpha, beta):
    """Residuals of the primal-dual optimality system at ``(u, v)``.

    ``r_p = ||u - prox_{alpha h}(u - alpha grad f(u) - alpha A^T v)||`` and
    ``r_d = ||v - prox_{(beta/alpha) g*}(v + (beta/alpha) A u)||``. Both vanish
    exactly when `u` minimizes the problem with multiplier `v`, for any
    positive `alpha` and `beta`.
    """
    if not (alpha > 0 and beta > 0):
        raise ValueError("alpha and beta must be positive")
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != (problem.dim,):
        raise ValueError(f"u has shape {u.shape}, expected ({problem.dim},)")
    if v.shape != (problem.dual_dim,):
        raise ValueError(f"v has shape {v.shape}, expected ({problem.dual_dim},)")
    return _residuals(problem, u, v, alpha, beta)


def _residuals(problem, u, v, alpha, beta):
    A = problem.A
    p = problem.h.prox(u - alpha * problem.f.gradient(u) - alpha * A.adjoint(v), alpha)
    s = beta / alpha
    q = fenchel_dual_prox(problem.g, v + s * A.apply(u), s)
    return float(np.linalg.norm(u - p)), float(np.linalg.norm(v - q))


# ---------------------------------------------------------------------------
# Traces


COLUMNS = ("n", "objective", "r_p", "r_d", "dist_to_ref", "lyapunov", "inner_dual_step_norm_last")


@dataclass
class SolveTrace:
    """Per-iteration records; optional columns hold ``None`` when absent."""

    n: list = field(default_factory=list)
    objective: list = field(default_factory=list)
    r_p: list = field(default_factory=list)
    r_d: list = field(default_factory=list)
    dist_to_ref: list = field(default_factory=list)
    lyapunov: list = field(default_factory=list)
    inner_dual_step_norm_last: list = field(default_factory=list)
    diverged_at: Optional[int] = None

    def __len__(self):
        return len(self.n)

    def append(self, **row):
        for name in COLUMNS:
            getattr(self, name).append(row.get(name))

    def rows(self):
        return [tuple(getattr(self, c)[i] for c in COLUMNS) for i in range(len(self))]

    @property
    def has_reference(self) -> bool:
        return len(self) > 0 and all(x is not None for x in self.lyapunov)


@dataclass
class SolveOutcome:
    u_final: np.ndarray
    v_final: np.ndarray
    outer_iterations: int
    trace: SolveTrace
    status: str


class _Monitor:
    """Records trace rows, checks stopping and divergence."""

    def __init__(self, problem, alpha, beta, k_max, outer_tol, trace_every, reference):
        self.problem = problem
        self.alpha = alpha
        self.beta = beta
        self.k_max = k_max
        self.outer_tol = outer_tol
        self.trace_every = trace_every
        self.trace = SolveTrace()
        self.F0 = None
        if reference is not None:
            u_ref, v_ref = reference
            self.u_ref = as_vector(u_ref, problem.dim, "reference u")
            self.v_ref = as_vector(v_ref, problem.dual_dim, "reference v")
        else:
            self.u_ref = self.v_ref = None
        self._pending = None

    def _objective(self, u):
        try:
            return objective(self.problem, u)
        except ValueError:
            return math.nan

    def observe(self, n, u, v_res, v_carry, step_norm):
        """Look at state ``n``. Returns the status string if the loop must stop.

        `v_res` pairs with `u` in the residuals; `v_carry` is the dual that
        seeds the next inner loop and enters the Lyapunov value.
        """
        if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v_res))):
            self._record(n, u, v_res, v_carry, step_norm, diverged=True)
            return "diverged"
        r_p, r_d = _residuals(self.problem, u, v_res, self.alpha, self.beta)
        F = self._objective(u)
        if self.F0 is None:
            self.F0 = F
        elif math.isfinite(self.F0) and math.isfinite(F) and F > BLOWUP_FACTOR * max(abs(self.F0), 1.0):
            self._record(n, u, v_res, v_carry, step_norm, diverged=True, r=(r_p, r_d), F=F)
            return "diverged"
        done = (self.outer_tol > 0 and r_p <= self.outer_tol and r_d <= self.outer_tol)
        row = dict(n=n, u=u, v_res=v_res, v_carry=v_carry, step=step_norm, r=(r_p, r_d), F=F)
        if n == 0 or n % self.trace_every == 0 or done:
            self._commit(row)
            self._pending = None
        else:
            self._pending = row
        self.last_residuals = (r_p, r_d)
        return "converged" if done else None

    def finish(self):
        if self._pending is not None:
            self._commit(self._pending)
            self._pending = None

    def _record(self, n, u, v_res, v_carry, step, diverged, r=None, F=None):
        self.finish()
        self.trace.diverged_at = n
        r = r if r is not None else (math.nan, math.nan)
        self.trace.append(n=n, objective=F if F is not None else math.nan,
                          r_p=r[0], r_d=r[1], inner_dual_step_norm_last=step)
        self.last_residuals = r

    def _commit(self, row):
        u, v_carry = row["u"], row["v_carry"]
        dist = lyap = None
        if self.u_ref is not None:
            du = u - self.u_ref
            dv = v_carry - self.v_ref
            dist = float(np.linalg.norm(du))
            # gamma = 1/k_max kept as an exact integer division
            lyap = self.beta * float(np.dot(du, du)) + self.alpha**2 * float(np.dot(dv, dv)) / self.k_max
        self.trace.append(n=row["n"], objective=row["F"], r_p=row["r"][0], r_d=row["r"][1],
                          dist_to_ref=dist, lyapunov=lyap,
                          inner_dual_step_norm_last=row["step"])


# ---------------------------------------------------------------------------
# Solvers


def _start(problem, config):
    u = np.zeros(problem.dim) if config.u0 is None else as_vector(config.u0, problem.dim, "u0")
    v0 = np.zeros(problem.dual_dim) if config.v00 is None else as_vector(config.v00, problem.dual_dim, "v00")
    return u, v0


def nested_primal_dual(problem: CompositeProblem, config: SolverConfig, reference=None,
                       callback: Optional[Callable] = None) -> SolveOutcome:
    """Nested primal-dual proximal gradient with a preset inner budget.

    Each outer step takes a gradient step ``z = u - alpha grad f(u)`` and
    approximates ``prox_{alpha h + alpha g o A}(z)`` by `k_max` averaged dual
    iterations. In warm mode the inner loop starts from the previous inner
    loop's final dual; in cold mode it restarts from ``config.v00``.

    Parameters
    ----------
    problem : CompositeProblem
    config : SolverConfig
        Validated against the problem's declared L and ``||A||`` bound.
    reference : tuple of arrays, optional
        A solution pair ``(u_hat, v_hat)``; enables the distance and Lyapunov
        columns ``beta ||u_n - u_hat||^2 + alpha^2/k_max ||v_n^0 - v_hat||^2``.
    callback : callable, optional
        Called as ``callback(n, u_n, v_n0)`` for every outer state.

    Returns
    -------
    SolveOutcome
        Status is ``converged`` when both optimality residuals drop to
        ``outer_tol`` (never, if it is 0), ``budget_exhausted`` after
        ``max_outer`` steps, or ``diverged`` on non-finite iterates or a
        ``1e12``-fold objective blow-up.
    """
    validate_config(problem, config)
    f, g, h, A = problem.f, problem.g, problem.h, problem.A
    alpha, beta, k_max = config.alpha, config.beta, config.k_max
    warm = config.start_mode == "warm"
    u, v00 = _start(problem, config)
    v_carry = v00.copy()
    v_res = v00.copy()
    mon = _Monitor(problem, alpha, beta, k_max, config.outer_tol, config.trace_every, reference)
    step = None
    status = "budget_exhausted"
    n = 0
    with np.errstate(over="ignore", invalid="ignore"):
        while True:
            if callback is not None:
                callback(n, u, v_carry)
            st = mon.observe(n, u, v_res, v_carry, step)
            if st is not None:
                status = st
                break
            if n >= config.max_outer:
                break
            z = u - alpha * f.gradient(u)
            res = inner_budgeted(h, g, A, z, alpha, beta, v_carry, k_max)
            u = res.primal
            v_res = res.final_dual
            v_carry = res.final_dual if warm else v00.copy()
            step = res.last_step_norm
            n += 1
    mon.finish()
    return SolveOutcome(u, v_res, n, mon.trace, status)


def loris_verhoeven_step_solver(problem: CompositeProblem, config: SolverConfig,
                                reference=None, callback=None) -> SolveOutcome:
    """Direct recursion for ``h = 0`` and a single inner step::

        z_n     = u_n - alpha grad f(u_n)
        v_{n+1} = prox_{(beta/alpha) g*}(v_n + (beta/alpha) A(z_n - alpha A^T v_n))
        u_{n+1} = z_n - alpha A^T v_{n+1}

    Written independently of :func:`nested_primal_dual` so the two can be
    cross-checked.
    """
    if not problem.h.is_zero:
        raise ValueError("loris_verhoeven_step_solver requires h = 0")
    if config.k_max != 1:
        raise ValueError("loris_verhoeven_step_solver requires k_max = 1")
    validate_config(problem, config)
    f, g, A = problem.f, problem.g, problem.A
    alpha, beta = config.alpha, config.beta
    s = beta / alpha
    u, v = _start(problem, config)
    mon = _Monitor(problem, alpha, beta, 1, config.outer_tol, config.trace_every, reference)
    step = None
    status = "budget_exhausted"
    n = 0
    with np.errstate(over="ignore", invalid="ignore"):
        while True:
            if callback is not None:
                callback(n, u, v)
            st = mon.observe(n, u, v, v, step)
            if st is not None:
                status = st
                break
            if n >= config.max_outer:
                break
            z = u - alpha * f.gradient(u)
            v_next = fenchel_dual_prox(g, v + s * A.apply(z - alpha * A.adjoint(v)), s)
            step = float(np.linalg.norm(v_next - v))
            v = v_next
            u = z - alpha * A.adjoint(v)
            n += 1
    mon.finish()
    return SolveOutcome(u, v, n, mon.trace, status)


def proximal_gradient(f: SmoothTerm, h: ProximableTerm, alpha: float, u0, max_iter: int = 1000,
                      tol: float = 0.0, callback=None) -> SolveOutcome:
    """Proximal gradient ``u_{n+1} = prox_{alpha h}(u_n - alpha grad f(u_n))``.

    Stops when ``||u_{n+1} - u_n|| <= tol``. With `h` an indicator this is the
    projected gradient method. The trace carries the objective ``f + h`` and
    the step norm in the ``r_p`` column.
    """
    if not 0 < alpha < 2.0 / f.lipschitz:
        raise ConfigError(f"alpha={alpha!r} violates 0 < alpha < 2/L = {2.0 / f.lipschitz!r}")
    u = as_vector(u0, f.dim, "u0")
    trace = SolveTrace()

    def F(x):
        hv = h.value(x) if h.has_value else 0.0
        return math.inf if hv == math.inf else float(f.value(x)) + float(hv)

    status = "budget_exhausted"
    n = 0
    trace.append(n=0, objective=F(u))
    with np.errstate(over="ignore", invalid="ignore"):
        while n < max_iter:
            if callback is not None:
                callback(n, u)
            u_next = h.prox(u - alpha * f.gradient(u), alpha)
            n += 1
            if not np.all(np.isfinite(u_next)):
                trace.diverged_at = n
                trace.append(n=n, objective=math.nan)
                return SolveOutcome(u_next, np.zeros(0), n, trace, "diverged")
            step = float(np.linalg.norm(u_next - u))
            u = u_next
            trace.append(n=n, objective=F(u), r_p=step)
            if step <= tol:
                status = "converged"
                break
    if callback is not None:
        callback(n, u)
    return SolveOutcome(u, np.zeros(0), n, trace, status)


def zero_dual_problem(f: SmoothTerm, h: ProximableTerm) -> CompositeProblem:
    """Embed ``min f + h`` as a composite problem with ``g = 0`` and ``A = I``."""
    from .core import identity_operator

    d = f.dim if f.dim is not None else h.dim
    return CompositeProblem(f, zero_term(d), h, identity_operator(d))
