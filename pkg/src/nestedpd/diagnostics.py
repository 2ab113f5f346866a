"""Rate bounds, measured contraction ratios, the A-norm and dual objectives."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import LinearOperator, ProximableTerm
from .proxlib import UnsupportedTermError, moreau_envelope

__all__ = [
    "RateReport",
    "LyapunovUnderflowError",
    "theoretical_rate",
    "measure_rate",
    "lyapunov_ratios",
    "a_norm_squared",
    "dual_smooth_part",
    "dual_smooth_gradient",
    "dual_objective",
]

LYAPUNOV_FLOOR = 1e-14
RATE_SLACK = 1e-9
DEFAULT_SKIP = 5


class LyapunovUnderflowError(ValueError):
    """The Lyapunov sequence is too small in the requested window to give ratios."""


@dataclass(frozen=True)
class RateReport:
    epsilon_bound: float
    measured_ratios: list
    max_measured: float
    satisfied: bool

    def as_dict(self):
        return {"epsilon_bound": self.epsilon_bound, "max_measured": self.max_measured,
                "satisfied": self.satisfied}


def theoretical_rate(mu, L, alpha, beta, sigma, norm_A=None):
    """Contraction factor ``max(1 + mu*alpha*(alpha*L - 2), 1 - beta*sigma^2)``.

    Requires ``0 < alpha < 2/L``, ``0 < mu <= L``, ``sigma > 0`` and
    ``0 < beta < 1/||A||^2``; when `norm_A` is omitted the weakest admissible
    bound ``||A|| >= sigma`` is used for the beta check.
    """
    if not L > 0:
        raise ValueError("L must be positive")
    if not 0 < alpha < 2.0 / L:
        raise ValueError(f"alpha={alpha} violates 0 < alpha < 2/L")
    if not mu > 0:
        raise ValueError(f"mu={mu} violates mu > 0")
    if mu > L:
        raise ValueError(f"mu={mu} exceeds L={L}")
    if not sigma > 0:
        raise ValueError(f"sigma={sigma} violates sigma > 0")
    if norm_A is not None and sigma > norm_A:
        raise ValueError("sigma cannot exceed ||A||")
    bound = norm_A if norm_A is not None else sigma
    if not 0 < beta < 1.0 / bound**2:
        raise ValueError(f"beta={beta} violates 0 < beta < 1/||A||^2")
    first = 1.0 + mu * alpha * (alpha * L - 2.0)
    # the first branch is >= 1 - mu/L >= 0 in exact arithmetic
    return max(first, 1.0 - beta * sigma**2, 0.0)


def lyapunov_ratios(values, start=0, end=None):
    vals = list(values)[start:end]
    return [b / a for a, b in zip(vals[:-1], vals[1:])]


def measure_rate(trace, epsilon_bound, window=None):
    """Per-step Lyapunov ratios of a trace against a bound.

    The trace must carry reference columns. The default window skips the
    first five recorded steps and stops before the Lyapunov value drops
    below ``1e-14``. An explicit ``window=(start, end)`` (slice bounds into
    the recorded rows) is used as given and must stay above that floor.
    """
    lyap = getattr(trace, "lyapunov", trace)
    steps = getattr(trace, "n", None)
    if steps is not None and any(b - a != 1 for a, b in zip(steps[:-1], steps[1:])):
        raise ValueError("per-step ratios need an undecimated trace (trace_every=1)")
    if any(x is None for x in lyap):
        raise ValueError("trace has no Lyapunov column; rerun with a reference")
    lyap = [float(x) for x in lyap]
    if window is None:
        start = min(DEFAULT_SKIP, max(len(lyap) - 2, 0))
        end = start
        while end < len(lyap) and lyap[end] > LYAPUNOV_FLOOR:
            end += 1
    else:
        start, end = window
        end = len(lyap) if end is None else end
        if not 0 <= start < end <= len(lyap):
            raise ValueError(f"window {window} outside trace of length {len(lyap)}")
        if min(lyap[start:end]) <= LYAPUNOV_FLOOR:
            raise LyapunovUnderflowError(
                "Lyapunov value falls below 1e-14 inside the window; use a shorter window")
    if end - start < 2:
        raise LyapunovUnderflowError(
            "fewer than two Lyapunov values above 1e-14 in the window; use a shorter or earlier window")
    ratios = lyapunov_ratios(lyap, start, end)
    worst = max(ratios)
    return RateReport(float(epsilon_bound), ratios, worst, worst <= epsilon_bound + RATE_SLACK)


def a_norm_squared(v, A: LinearOperator, beta):
    """``||v||^2 - beta ||A^T v||^2``, a squared norm for ``0 < beta < 1/||A||^2``."""
    if not 0 < beta < 1.0 / A.norm_bound**2:
        raise ValueError(f"beta={beta} violates 0 < beta < 1/||A||^2")
    v = np.asarray(v, dtype=float)
    w = A.adjoint(v)
    return float(np.dot(v, v)) - beta * float(np.dot(w, w))


def dual_smooth_part(h: ProximableTerm, A: LinearOperator, a, v, alpha):
    """``psi(v) = (||w||^2/(2 alpha) - env_alpha h(w)) / alpha`` with ``w = a - alpha A^T v``."""
    w = np.asarray(a, dtype=float) - alpha * A.adjoint(np.asarray(v, dtype=float))
    env = moreau_envelope(h, w, alpha)
    return (float(np.dot(w, w)) / (2.0 * alpha) - env.value) / alpha


def dual_smooth_gradient(h: ProximableTerm, A: LinearOperator, a, v, alpha):
    """``grad psi(v) = -A prox_{alpha h}(a - alpha A^T v) / alpha``."""
    w = np.asarray(a, dtype=float) - alpha * A.adjoint(np.asarray(v, dtype=float))
    return -A.apply(h.prox(w, alpha)) / alpha


def dual_objective(h: ProximableTerm, g: ProximableTerm, A: LinearOperator, a, v, alpha,
                   g_conjugate_value: Optional[callable] = None):
    """Dual objective ``psi(v) + g*(v)/alpha`` of the inner prox problem.

    The conjugate value comes from `g_conjugate_value` or the catalogue entry
    ``g.conjugate_value``.
    """
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    gstar = g_conjugate_value or g.conjugate_value
    if gstar is None:
        raise UnsupportedTermError(f"conjugate value of g ({g.kind}) is not available")
    c = gstar(np.asarray(v, dtype=float))
    if c == math.inf:
        return math.inf
    return dual_smooth_part(h, A, a, v, alpha) + c / alpha
