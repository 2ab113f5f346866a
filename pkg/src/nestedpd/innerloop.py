"""Dual iterations approximating ``prox_{alpha h + alpha g o A}(a)``.

With ``s = beta / alpha`` one inner step reads::

    u^k     = prox_{alpha h}(a - alpha A^T v^k)
    v^{k+1} = prox_{s g*}(v^k + s A u^k)

:func:`dual_fixed_point_converged` runs this to a tolerance and serves as a
high-accuracy oracle. :func:`inner_budgeted` runs a preset number of steps
and averages the primal points, which is what the nested solver uses.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .core import LinearOperator, ProximableTerm
from .proxlib import fenchel_dual_prox

__all__ = [
    "InnerState",
    "InnerResult",
    "DualFixedPoint",
    "dual_fixed_point_converged",
    "inner_budgeted",
]


@dataclass
class InnerState:
    """Running state of a dual inner loop."""

    v: np.ndarray
    last_u: np.ndarray
    iterations_done: int = 0


@dataclass(frozen=True)
class InnerResult:
    """Outcome of a budgeted inner loop.

    `primal` is the mean of ``u^1 .. u^kmax``; `final_dual` is ``v^kmax``,
    the warm-start payload for the next outer iteration.
    """

    primal: np.ndarray
    final_dual: np.ndarray
    last_step_norm: float
    inner_trace: Optional[list] = None
    primal_points: Optional[list] = None


class DualFixedPoint(NamedTuple):
    prox_point: np.ndarray
    dual: np.ndarray
    iterations: int
    converged: bool
    residual: float


def _check_parts(h: ProximableTerm, g: ProximableTerm, A: LinearOperator, a, v0):
    if a.shape[0] != A.in_dim:
        raise ValueError(f"a has length {a.shape[0]}, A maps from R^{A.in_dim}")
    if v0.shape[0] != A.out_dim:
        raise ValueError(f"v0 has length {v0.shape[0]}, A maps into R^{A.out_dim}")


def dual_fixed_point_converged(h, g, A, a, alpha, beta, v0=None, tol=1e-12, max_iter=100_000):
    """Iterate the dual fixed-point map until ``||v^{k+1} - v^k|| <= tol``.

    Parameters
    ----------
    h, g : ProximableTerm
        Terms on the primal and dual side.
    A : LinearOperator
    a : array
        Point at which ``prox_{alpha h + alpha g o A}`` is wanted.
    alpha : float
        Prox scale, positive.
    beta : float
        Dual step in ``(0, 2/||A||^2)`` with ``||A||`` taken from ``A.norm_bound``.
    v0 : array, optional
        Dual starting point, zero by default.
    tol : float
        Threshold on the dual step norm.
    max_iter : int
        Iteration cap; hitting it returns ``converged=False``.

    Returns
    -------
    DualFixedPoint
        ``prox_point = prox_{alpha h}(a - alpha A^T v)`` for the final dual,
        the dual itself, the number of steps taken, the convergence flag and
        the last step norm.
    """
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    if not tol > 0:
        raise ValueError("tol must be positive")
    if not 0 < beta < 2.0 / A.norm_bound**2:
        raise ValueError(f"beta={beta} outside (0, 2/||A||^2) = (0, {2.0 / A.norm_bound**2})")
    a = np.asarray(a, dtype=float)
    v = np.zeros(A.out_dim) if v0 is None else np.array(v0, dtype=float)
    _check_parts(h, g, A, a, v)
    s = beta / alpha
    step = np.inf
    converged = False
    k = 0
    while k < max_iter:
        u = h.prox(a - alpha * A.adjoint(v), alpha)
        v_new = fenchel_dual_prox(g, v + s * A.apply(u), s)
        step = float(np.linalg.norm(v_new - v))
        v = v_new
        k += 1
        if step <= tol:
            converged = True
            break
    u = h.prox(a - alpha * A.adjoint(v), alpha)
    return DualFixedPoint(u, v, k, converged, step)


def inner_budgeted(h, g, A, a, alpha, beta, v0, k_max, record=False):
    """Run exactly `k_max` dual steps from `v0` and average the primal points.

    The step-size regime is the caller's business: ``beta < 1/||A||^2`` inside
    the nested solver, ``beta < 2/||A||^2`` standalone. With ``record=True``
    the dual step norms and the primal points ``u^1..u^kmax`` are returned too.
    """
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    if not (alpha > 0 and beta > 0):
        raise ValueError("alpha and beta must be positive")
    s = beta / alpha
    v = v0
    total = None
    trace = [] if record else None
    points = [] if record else None
    step = 0.0
    u = h.prox(a - alpha * A.adjoint(v), alpha)  # u^0
    for k in range(k_max):
        v_new = fenchel_dual_prox(g, v + s * A.apply(u), s)
        if record or k == k_max - 1:
            step = float(np.linalg.norm(v_new - v))
            if record:
                trace.append(step)
        v = v_new
        u = h.prox(a - alpha * A.adjoint(v), alpha)  # u^{k+1}
        total = u.copy() if total is None else total + u
        if record:
            points.append(u)
    return InnerResult(total / k_max, v, step, trace, points)
