"""Closed-form proximal operators, conjugates and Moreau envelopes.

Only terms with an exact prox are catalogued. Conjugate proxes are always
obtained from the primal prox through Moreau's decomposition.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import DimensionError, ProximableTerm, as_vector

__all__ = [
    "UnsupportedTermError",
    "EnvelopeResult",
    "prox_l1",
    "prox_squared_l2",
    "prox_indicator_box",
    "prox_zero",
    "l1_norm",
    "squared_l2",
    "box_indicator",
    "nonnegative_indicator",
    "zero_term",
    "scale_term",
    "translate_term",
    "fenchel_dual_prox",
    "conjugate",
    "moreau_envelope",
]

INF = math.inf

# Feasibility slack for indicator values; dual points produced through the
# Moreau decomposition can land a few ulps outside the set.
_FEAS_RTOL = 1e-12


class UnsupportedTermError(ValueError):
    """Raised when a term lacks a value or conjugate value that is required."""


def _check_scale(t):
    if not t > 0:
        raise ValueError(f"prox scale must be positive, got {t}")


def prox_l1(a, t):
    """Soft threshold ``sign(a) * max(|a| - t, 0)``; ties map to exactly 0."""
    _check_scale(t)
    a = np.asarray(a, dtype=float)
    return np.sign(a) * np.maximum(np.abs(a) - t, 0.0)


def prox_squared_l2(a, t, center):
    """Prox of ``0.5 * ||x - center||^2`` at scale t: ``(a + t*center) / (1 + t)``."""
    _check_scale(t)
    a = np.asarray(a, dtype=float)
    center = np.asarray(center, dtype=float)
    if a.shape != center.shape:
        raise DimensionError(f"point has shape {a.shape}, center has shape {center.shape}")
    return (a + t * center) / (1.0 + t)


def prox_indicator_box(a, t, lower, upper):
    """Projection onto ``[lower, upper]``. The scale is irrelevant."""
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    if np.any(lower > upper):
        raise ValueError("box has lower > upper in some component")
    return np.clip(np.asarray(a, dtype=float), lower, upper)


def prox_zero(a, t):
    _check_scale(t)
    return np.array(a, dtype=float, copy=True)


# ---------------------------------------------------------------------------
# Catalogue of terms


def _in_box(x, lower, upper):
    slack = _FEAS_RTOL * np.maximum(1.0, np.maximum(np.abs(lower), np.abs(upper)))
    return bool(np.all(x >= lower - slack) and np.all(x <= upper + slack))


def l1_norm(weight: float = 1.0, dim: Optional[int] = None) -> ProximableTerm:
    """``weight * ||x||_1``; its conjugate is the indicator of the weight-box."""
    if weight < 0:
        raise ValueError("weight must be nonnegative")
    w = float(weight)

    def value(x):
        return w * float(np.sum(np.abs(x)))

    def prox(a, t):
        _check_scale(t)
        return prox_l1(a, t * w)

    def conj(y):
        bound = w * (1.0 + _FEAS_RTOL) + _FEAS_RTOL
        return 0.0 if float(np.max(np.abs(y), initial=0.0)) <= bound else INF

    return ProximableTerm(value, prox, conj, dim=dim, kind="l1", params={"weight": w})


def squared_l2(center=None, dim: Optional[int] = None) -> ProximableTerm:
    """``0.5 * ||x - center||^2``; self-conjugate up to a linear term."""
    if center is None:
        if dim is None:
            c = None
        else:
            c = np.zeros(dim)
    else:
        c = as_vector(center, dim=dim, name="center")
    if c is not None:
        c.setflags(write=False)
        dim = c.shape[0]

    def _c(x):
        return np.zeros_like(x) if c is None else c

    def value(x):
        r = x - _c(x)
        return 0.5 * float(np.dot(r, r))

    def prox(a, t):
        return prox_squared_l2(a, t, _c(a))

    def conj(y):
        return 0.5 * float(np.dot(y, y)) + float(np.dot(y, _c(y)))

    return ProximableTerm(value, prox, conj, dim=dim, kind="squared_l2",
                          params={"center": None if c is None else c.tolist()})


def box_indicator(lower, upper) -> ProximableTerm:
    """Indicator of ``{x : lower <= x <= upper}``; conjugate is the support function."""
    lower = as_vector(lower, name="lower")
    upper = as_vector(upper, dim=lower.shape[0], name="upper")
    if np.any(lower > upper):
        raise ValueError("box has lower > upper in some component")
    lower.setflags(write=False)
    upper.setflags(write=False)

    def value(x):
        return 0.0 if _in_box(x, lower, upper) else INF

    def prox(a, t):
        return np.clip(a, lower, upper)

    def conj(y):
        return float(np.sum(np.maximum(lower * y, upper * y)))

    return ProximableTerm(value, prox, conj, dim=lower.shape[0], kind="box",
                          params={"lower": lower.tolist(), "upper": upper.tolist()})


def nonnegative_indicator(dim: int) -> ProximableTerm:
    """Indicator of the nonnegative orthant (conjugate: indicator of the nonpositive one)."""

    def value(x):
        return 0.0 if bool(np.all(x >= 0.0)) else INF

    def prox(a, t):
        return np.maximum(a, 0.0)

    def conj(y):
        return 0.0 if float(np.max(y, initial=0.0)) <= _FEAS_RTOL else INF

    return ProximableTerm(value, prox, conj, dim=dim, kind="nonnegative")


def zero_term(dim: Optional[int] = None) -> ProximableTerm:
    """The zero function; its conjugate is the indicator of the origin."""

    def conj(y):
        return 0.0 if float(np.max(np.abs(y), initial=0.0)) <= _FEAS_RTOL else INF

    return ProximableTerm(lambda x: 0.0, prox_zero, conj, dim=dim, kind="zero")


def scale_term(lam: float, term: ProximableTerm) -> ProximableTerm:
    """``lam * term`` with ``lam > 0``: prox at scale t is ``term.prox(a, lam*t)``."""
    if not lam > 0:
        raise ValueError("scale must be positive")
    lam = float(lam)
    value = None
    if term.has_value:
        def value(x):
            v = term.value(x)
            return INF if v == INF else lam * v
    conj = None
    if term.conjugate_value is not None:
        def conj(y):
            v = term.conjugate_value(y / lam)
            return INF if v == INF else lam * v

    def prox(a, t):
        _check_scale(t)
        return term.prox(a, lam * t)

    kind = "zero" if term.is_zero else "scaled"
    return ProximableTerm(value, prox, conj, dim=term.dim, kind=kind,
                          params={"scale": lam, "inner": term.kind})


def translate_term(term: ProximableTerm, shift) -> ProximableTerm:
    """``x -> term(x - shift)``."""
    c = as_vector(shift, dim=term.dim, name="shift")
    c.setflags(write=False)
    value = None
    if term.has_value:
        def value(x):
            return term.value(x - c)
    conj = None
    if term.conjugate_value is not None:
        def conj(y):
            v = term.conjugate_value(y)
            return INF if v == INF else v + float(np.dot(y, c))

    def prox(a, t):
        return c + term.prox(a - c, t)

    return ProximableTerm(value, prox, conj, dim=c.shape[0], kind="translated",
                          params={"shift": c.tolist(), "inner": term.kind})


# ---------------------------------------------------------------------------
# Duality and envelopes


def fenchel_dual_prox(term: ProximableTerm, a, t):
    """``prox_{t h*}(a) = a - t * prox_{h/t}(a/t)``."""
    _check_scale(t)
    return a - t * term.prox(a / t, 1.0 / t)


def conjugate(term: ProximableTerm) -> ProximableTerm:
    """The Fenchel conjugate as a term whose prox comes from the decomposition.

    The conjugate's value is the catalogued ``term.conjugate_value``; when that
    is missing the returned term has ``value=None``. Its own conjugate value is
    the primal value (biconjugation).
    """

    def prox(a, t):
        return fenchel_dual_prox(term, a, t)

    return ProximableTerm(term.conjugate_value, prox, term.value, dim=term.dim,
                          kind="conjugate", params={"inner": term.kind})


@dataclass(frozen=True)
class EnvelopeResult:
    value: float
    gradient: np.ndarray
    proximal_point: np.ndarray


def moreau_envelope(term: ProximableTerm, u, alpha: float) -> EnvelopeResult:
    """Moreau envelope of index `alpha` at `u`, with its gradient and prox point.

    The gradient is ``(u - prox_{alpha h}(u)) / alpha``.
    """
    if not alpha > 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    if not term.has_value:
        raise UnsupportedTermError("envelope value needs term values")
    u = np.asarray(u, dtype=float)
    p = term.prox(u, alpha)
    r = p - u
    value = float(np.dot(r, r)) / (2.0 * alpha) + float(term.value(p))
    return EnvelopeResult(value, (u - p) / alpha, p)
