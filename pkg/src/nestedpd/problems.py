"""Seeded test instances with exact constants and independent reference solutions."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import (CompositeProblem, difference_operator, identity_operator, matrix_operator,
                   squared_distance)
from .innerloop import dual_fixed_point_converged
from .proxlib import l1_norm, zero_term

__all__ = [
    "Constants",
    "Instance",
    "taut_string_tv",
    "piecewise_signal",
    "recover_dual",
    "reference_solution",
    "make_tv_denoise_1d",
    "make_fused_lasso",
    "make_strongly_convex_rate_instance",
    "INSTANCES",
    "make_instance",
]

ORACLE_TOL = 1e-12


@dataclass(frozen=True)
class Constants:
    L: float
    norm_A: float
    mu: Optional[float] = None
    sigma: Optional[float] = None

    def as_dict(self):
        return {"L": self.L, "mu": self.mu, "norm_A": self.norm_A, "sigma": self.sigma}


@dataclass(frozen=True)
class Instance:
    problem: CompositeProblem
    name: str
    seed: int
    constants: Constants
    oracle_solution: Optional[np.ndarray] = None
    oracle_dual: Optional[np.ndarray] = None
    documented_budget: int = 10_000
    params: dict = field(default_factory=dict)
    data: Optional[np.ndarray] = None

    @property
    def supports_rate_check(self) -> bool:
        c = self.constants
        return (self.problem.h.is_zero and c.mu is not None and c.mu > 0
                and c.sigma is not None and c.sigma > 0)

    @property
    def reference(self):
        if self.oracle_solution is None or self.oracle_dual is None:
            return None
        return self.oracle_solution, self.oracle_dual

    def describe(self) -> dict:
        return {"name": self.name, "seed": self.seed, "params": dict(self.params),
                "constants": self.constants.as_dict(), "documented_budget": self.documented_budget,
                "dim": self.problem.dim, "dual_dim": self.problem.dual_dim}


# ---------------------------------------------------------------------------
# Exact 1D TV denoising


def taut_string_tv(b, lam):
    """Exact minimizer of ``0.5*||u - b||^2 + lam * sum_i |u_{i+1} - u_i|``.

    Direct taut-string scan (Condat's formulation): the string is pulled
    through the tube of half-width `lam` around the cumulative sum of `b`,
    and segments are emitted whenever the string must bend.
    """
    y = np.asarray(b, dtype=float)
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    n = y.shape[0]
    x = np.empty(n)
    if n == 0:
        return x
    if lam == 0:
        return y.copy()
    k = k0 = kplus = kminus = 0
    umin, umax = lam, -lam
    vmin, vmax = y[0] - lam, y[0] + lam
    while True:
        while k == n - 1:
            if umin < 0.0:
                # segment value too high: emit a negative jump
                x[k0:kminus + 1] = vmin
                k0 = kminus + 1
                k = kminus = k0
                vmin = y[k]
                umin = lam
                umax = vmin + umin - vmax
            elif umax > 0.0:
                x[k0:kplus + 1] = vmax
                k0 = kplus + 1
                k = kplus = k0
                vmax = y[k]
                umax = -lam
                umin = vmax + umax - vmin
            else:
                vmin += umin / (k - k0 + 1)
                x[k0:k + 1] = vmin
                return x
        umin += y[k + 1] - vmin
        if umin < -lam:
            x[k0:kminus + 1] = vmin
            k0 = kminus + 1
            k = kplus = kminus = k0
            vmin = y[k]
            vmax = vmin + 2 * lam
            umin, umax = lam, -lam
            continue
        umax += y[k + 1] - vmax
        if umax > lam:
            x[k0:kplus + 1] = vmax
            k0 = kplus + 1
            k = kplus = kminus = k0
            vmax = y[k]
            vmin = vmax - 2 * lam
            umin, umax = lam, -lam
            continue
        k += 1
        if umin >= lam:
            kminus = k
            vmin += (umin - lam) / (kminus - k0 + 1)
            umin = lam
        if umax <= -lam:
            kplus = k
            vmax += (umax + lam) / (kplus - k0 + 1)
            umax = -lam


def piecewise_signal(d, seed, levels=None, noise=0.2):
    """Three-level piecewise-constant signal plus uniform noise in ``[-noise, noise]``."""
    rng = np.random.default_rng(seed)
    if levels is None:
        levels = rng.uniform(-1.5, 1.5, size=3)
    cuts = np.sort(rng.choice(np.arange(1, d), size=min(2, d - 1), replace=False))
    clean = np.empty(d)
    bounds = [0, *cuts.tolist(), d]
    for i in range(len(bounds) - 1):
        clean[bounds[i]:bounds[i + 1]] = levels[i]
    return clean + rng.uniform(-noise, noise, size=d)


# ---------------------------------------------------------------------------
# Reference solutions through the converged dual iteration


def _oracle_beta(problem):
    return 1.0 / problem.A.norm_bound**2


def recover_dual(problem, u_hat, alpha=None, beta=None, tol=ORACLE_TOL, max_iter=2_000_000):
    """Multiplier ``v_hat`` pairing with a known minimizer ``u_hat``.

    Runs the converged dual iteration at ``a = u_hat - alpha grad f(u_hat)``,
    whose inner solution is ``u_hat`` itself.
    """
    alpha = 1.0 / problem.f.lipschitz if alpha is None else alpha
    beta = _oracle_beta(problem) if beta is None else beta
    a = u_hat - alpha * problem.f.gradient(u_hat)
    res = dual_fixed_point_converged(problem.h, problem.g, problem.A, a, alpha, beta,
                                     tol=tol, max_iter=max_iter)
    return res.dual


def reference_solution(problem, tol=ORACLE_TOL, max_outer=10_000, inner_budget=1_000_000):
    """High-accuracy minimizer via proximal gradient with an exact inner prox.

    The inner prox is the converged dual iteration, warm-started across
    outer steps; ``alpha = 1/L``. Returns ``(u_hat, v_hat)``.
    """
    f, g, h, A = problem.f, problem.g, problem.h, problem.A
    alpha = 1.0 / f.lipschitz
    beta = _oracle_beta(problem)
    u = np.zeros(problem.dim)
    v = np.zeros(problem.dual_dim)
    used = 0
    for _ in range(max_outer):
        res = dual_fixed_point_converged(h, g, A, u - alpha * f.gradient(u), alpha, beta, v0=v,
                                         tol=tol, max_iter=max(inner_budget - used, 1))
        used += res.iterations
        step = float(np.linalg.norm(res.prox_point - u))
        u, v = res.prox_point, res.dual
        if step <= tol or used >= inner_budget:
            break
    return u, v


# ---------------------------------------------------------------------------
# Instance generators


def _tv_sigma(d):
    # singular values of the (d-1) x d forward difference are 2 sin(k pi / (2d))
    return 2.0 * math.sin(math.pi / (2 * d))


def make_tv_denoise_1d(d=20, lam=1.0, seed=7, b=None):
    """``0.5||u - b||^2 + lam ||D u||_1`` with D the forward difference on R^d."""
    if d < 2:
        raise ValueError("d must be >= 2")
    if lam <= 0:
        raise ValueError("lam must be positive")
    b = piecewise_signal(d, seed) if b is None else np.asarray(b, dtype=float)
    problem = CompositeProblem(squared_distance(b), l1_norm(lam, dim=d - 1), zero_term(d),
                               difference_operator(d))
    u_hat = taut_string_tv(b, lam)
    v_hat = recover_dual(problem, u_hat)
    return Instance(problem, "tv-1d", seed, Constants(L=1.0, norm_A=2.0, mu=1.0, sigma=_tv_sigma(d)),
                    u_hat, v_hat, documented_budget=5_000,
                    params={"d": d, "lam": lam}, data=b)


def make_fused_lasso(d=15, lam1=0.5, lam2=0.5, seed=3):
    """``0.5||u - b||^2 + lam1 ||D u||_1 + lam2 ||u||_1``."""
    if d < 2:
        raise ValueError("d must be >= 2")
    if lam1 < 0 or lam2 < 0:
        raise ValueError("weights must be nonnegative")
    levels = np.array([0.0, 1.2, -0.8])
    b = piecewise_signal(d, seed, levels=levels)
    g = l1_norm(lam1, dim=d - 1) if lam1 > 0 else zero_term(d - 1)
    h = l1_norm(lam2, dim=d) if lam2 > 0 else zero_term(d)
    problem = CompositeProblem(squared_distance(b), g, h, difference_operator(d))
    u_hat, v_hat = reference_solution(problem)
    return Instance(problem, "fused-lasso", seed, Constants(L=1.0, norm_A=2.0, mu=1.0),
                    u_hat, v_hat, documented_budget=5_000,
                    params={"d": d, "lam1": lam1, "lam2": lam2}, data=b)


def _random_orthogonal(rng, d):
    q, r = np.linalg.qr(rng.standard_normal((d, d)))
    return q * np.sign(np.diag(r))


def make_strongly_convex_rate_instance(d=10, seed=11, weight=0.5, A=None, b=None):
    """``0.5||u - b||^2 + weight ||A u||_1`` with a well-conditioned square A.

    A is ``Q1 diag(s) Q2^T`` with seeded orthogonal factors and singular values
    drawn from ``[1, 2]``; the declared ``||A||`` and ``sigma`` are read off a
    dense SVD.
    """
    if d < 1:
        raise ValueError("d must be >= 1")
    rng = np.random.default_rng(seed)
    if A is None:
        s = np.sort(rng.uniform(1.0, 2.0, size=d))[::-1]
        M = (_random_orthogonal(rng, d) * s) @ _random_orthogonal(rng, d).T
    else:
        M = np.asarray(A, dtype=float)
    if b is None:
        b = rng.uniform(-2.0, 2.0, size=d)
    b = np.asarray(b, dtype=float)
    sv = np.linalg.svd(M, compute_uv=False)
    norm_A, sigma = float(sv[0]), float(sv[-1])
    op = identity_operator(d) if A is not None and np.array_equal(M, np.eye(d)) else \
        matrix_operator(M, norm_bound=norm_A)
    problem = CompositeProblem(squared_distance(b), l1_norm(weight, dim=d), zero_term(d), op)
    u_hat, v_hat = reference_solution(problem)
    return Instance(problem, "strongly-convex", seed,
                    Constants(L=1.0, norm_A=norm_A, mu=1.0, sigma=sigma),
                    u_hat, v_hat, documented_budget=1_000,
                    params={"d": d, "weight": weight}, data=b)


INSTANCES = {
    "tv-1d": (make_tv_denoise_1d, {"d": 20, "lam": 1.0, "seed": 7}),
    "fused-lasso": (make_fused_lasso, {"d": 15, "lam1": 0.5, "lam2": 0.5, "seed": 3}),
    "strongly-convex": (make_strongly_convex_rate_instance, {"d": 10, "seed": 11}),
}


def make_instance(name, **params):
    """Build a registered instance, filling unspecified parameters with defaults."""
    try:
        factory, defaults = INSTANCES[name]
    except KeyError:
        raise ValueError(f"unknown instance {name!r}; known: {sorted(INSTANCES)}") from None
    unknown = set(params) - set(defaults)
    if unknown:
        raise ValueError(f"unknown parameters for {name}: {sorted(unknown)}")
    return factory(**{**defaults, **params})
