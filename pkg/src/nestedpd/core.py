"""Vectors, matrix-free linear operators, term interfaces and the composite problem.

Vectors are plain one-dimensional ``float64`` numpy arrays. Validation
happens at API boundaries through :func:`as_vector`; the solver hot loops
work on raw arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

__all__ = [
    "DimensionError",
    "as_vector",
    "LinearOperator",
    "identity_operator",
    "matrix_operator",
    "difference_operator",
    "SmoothTerm",
    "squared_distance",
    "least_squares",
    "ProximableTerm",
    "CompositeProblem",
    "objective",
    "adjoint_consistency_check",
    "estimate_operator_norm",
]

INF = math.inf


class DimensionError(ValueError):
    """Raised when vectors or problem components disagree on dimension."""


def as_vector(x, dim: Optional[int] = None, name: str = "vector") -> np.ndarray:
    """Return `x` as a finite 1-D float array, optionally of length `dim`."""
    arr = np.array(x, dtype=float).reshape(-1) if np.ndim(x) == 0 else np.array(x, dtype=float)
    if arr.ndim != 1:
        raise DimensionError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if dim is not None and arr.shape[0] != dim:
        raise DimensionError(f"{name} has length {arr.shape[0]}, expected {dim}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} has non-finite entries")
    return arr


def _frozen(x) -> np.ndarray:
    arr = as_vector(x)
    arr.setflags(write=False)
    return arr


# ---------------------------------------------------------------------------
# Linear operators


@dataclass(frozen=True)
class LinearOperator:
    """Matrix-free linear map ``A: R^in_dim -> R^out_dim``.

    `norm_bound` is an upper bound on the largest singular value. Step-size
    conditions are always derived from it, never from an estimate.
    """

    apply: Callable[[np.ndarray], np.ndarray]
    adjoint: Callable[[np.ndarray], np.ndarray]
    norm_bound: float
    in_dim: int
    out_dim: int
    name: str = "operator"

    def __post_init__(self):
        if not self.norm_bound > 0:
            raise ValueError("norm_bound must be positive")
        if self.in_dim < 1 or self.out_dim < 1:
            raise DimensionError("operator dimensions must be positive")

    def __call__(self, u):
        return self.apply(u)

    @property
    def T(self) -> "LinearOperator":
        return LinearOperator(self.adjoint, self.apply, self.norm_bound,
                              self.out_dim, self.in_dim, name=f"{self.name}^T")

    def to_dense(self) -> np.ndarray:
        """Materialize the operator column by column (small sizes only)."""
        cols = [self.apply(e) for e in np.eye(self.in_dim)]
        return np.column_stack(cols)


def identity_operator(d: int) -> LinearOperator:
    return LinearOperator(lambda u: u.copy(), lambda v: v.copy(), 1.0, d, d, name="identity")


def matrix_operator(M, norm_bound: Optional[float] = None, adjoint=None) -> LinearOperator:
    """Wrap a dense matrix.

    The bound defaults to the exact spectral norm. `adjoint` overrides the
    transpose and exists to build deliberately inconsistent pairs in tests.
    """
    M = np.array(M, dtype=float)
    if M.ndim != 2:
        raise DimensionError("matrix_operator needs a 2-D array")
    M.setflags(write=False)
    if norm_bound is None:
        norm_bound = float(np.linalg.norm(M, 2))
    if adjoint is None:
        MT = M.T
        adjoint_fn = lambda v: MT @ v  # noqa: E731
    else:
        Madj = np.array(adjoint, dtype=float)
        adjoint_fn = lambda v: Madj @ v  # noqa: E731
    return LinearOperator(lambda u: M @ u, adjoint_fn, norm_bound,
                          M.shape[1], M.shape[0], name="matrix")


def _diff_adjoint(v):
    # (D^T v)_j = v_{j-1} - v_j with v_{-1} = v_{d-1} = 0
    out = np.empty(v.shape[0] + 1)
    out[0] = -v[0]
    out[1:-1] = v[:-1] - v[1:]
    out[-1] = v[-1]
    return out


def difference_operator(d: int) -> LinearOperator:
    """Forward differences ``(Du)_i = u_{i+1} - u_i`` on R^d, declared bound 2."""
    if d < 2:
        raise DimensionError("difference operator needs d >= 2")
    return LinearOperator(np.diff, _diff_adjoint, 2.0, d, d - 1, name="difference")


# ---------------------------------------------------------------------------
# Terms


@dataclass(frozen=True)
class SmoothTerm:
    """Convex differentiable term with L-Lipschitz gradient."""

    value: Callable[[np.ndarray], float]
    gradient: Callable[[np.ndarray], np.ndarray]
    lipschitz: float
    strong_convexity: Optional[float] = None
    dim: Optional[int] = None
    name: str = "smooth"

    def __post_init__(self):
        if not self.lipschitz > 0:
            raise ValueError("lipschitz must be positive")
        if self.strong_convexity is not None and self.strong_convexity < 0:
            raise ValueError("strong_convexity must be nonnegative")


def squared_distance(b) -> SmoothTerm:
    """``f(u) = 0.5 * ||u - b||^2`` with L = mu = 1."""
    b = _frozen(b)
    return SmoothTerm(
        value=lambda u: 0.5 * float(np.dot(u - b, u - b)),
        gradient=lambda u: u - b,
        lipschitz=1.0,
        strong_convexity=1.0,
        dim=b.shape[0],
        name="squared_distance",
    )


def least_squares(M, b) -> SmoothTerm:
    """``f(u) = 0.5 * ||M u - b||^2``; constants from the singular values of M."""
    M = np.array(M, dtype=float)
    M.setflags(write=False)
    b = _frozen(b)
    s = np.linalg.svd(M, compute_uv=False)
    mu = float(s[-1] ** 2) if M.shape[0] >= M.shape[1] else 0.0

    def value(u):
        r = M @ u - b
        return 0.5 * float(np.dot(r, r))

    return SmoothTerm(value, lambda u: M.T @ (M @ u - b), float(s[0] ** 2),
                      mu, dim=M.shape[1], name="least_squares")


@dataclass(frozen=True)
class ProximableTerm:
    """Convex lsc term with an exact proximal operator.

    ``prox(a, t)`` returns ``argmin_x 0.5*||x - a||^2 + t*value(x)``.
    `value` may return ``inf`` outside the domain. It is ``None`` when the
    value is not available (conjugates of terms outside the catalogue).
    `conjugate_value` evaluates the Fenchel conjugate when known.
    """

    value: Optional[Callable[[np.ndarray], float]]
    prox: Callable[[np.ndarray, float], np.ndarray]
    conjugate_value: Optional[Callable[[np.ndarray], float]] = None
    dim: Optional[int] = None
    kind: str = "custom"
    params: dict = field(default_factory=dict, compare=False)

    @property
    def is_zero(self) -> bool:
        return self.kind == "zero"

    @property
    def has_value(self) -> bool:
        return self.value is not None


@dataclass(frozen=True)
class CompositeProblem:
    """``min_u f(u) + g(A u) + h(u)``."""

    f: SmoothTerm
    g: ProximableTerm
    h: ProximableTerm
    A: LinearOperator

    def __post_init__(self):
        d, dp = self.A.in_dim, self.A.out_dim
        if self.f.dim is not None and self.f.dim != d:
            raise DimensionError(f"f lives on R^{self.f.dim} but A maps from R^{d}")
        if self.h.dim is not None and self.h.dim != d:
            raise DimensionError(f"h lives on R^{self.h.dim} but A maps from R^{d}")
        if self.g.dim is not None and self.g.dim != dp:
            raise DimensionError(f"g lives on R^{self.g.dim} but A maps into R^{dp}")

    @property
    def dim(self) -> int:
        return self.A.in_dim

    @property
    def dual_dim(self) -> int:
        return self.A.out_dim


def objective(problem: CompositeProblem, u) -> float:
    """Evaluate ``f(u) + g(Au) + h(u)``; ``inf`` propagates."""
    u = as_vector(u, name="u")
    if u.shape[0] != problem.dim:
        raise DimensionError(f"u has length {u.shape[0]} but the problem lives on R^{problem.dim}")
    if not (problem.g.has_value and problem.h.has_value):
        raise ValueError("objective needs value evaluations of g and h")
    Au = problem.A.apply(u)
    if Au.shape[0] != problem.dual_dim:
        raise DimensionError(f"A u has length {Au.shape[0]}, A declares out_dim {problem.dual_dim}")
    gv = problem.g.value(Au)
    hv = problem.h.value(u)
    if gv == INF or hv == INF:
        return INF
    return float(problem.f.value(u)) + float(gv) + float(hv)


# ---------------------------------------------------------------------------
# Randomized operator checks


def adjoint_consistency_check(A: LinearOperator, trials: int = 100, seed: int = 0) -> float:
    """Max over seeded trials of ``|<Au,v> - <u,A^T v>| / (1 + |<Au,v>|)``."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        u = rng.standard_normal(A.in_dim)
        v = rng.standard_normal(A.out_dim)
        lhs = float(np.dot(A.apply(u), v))
        rhs = float(np.dot(u, A.adjoint(v)))
        worst = max(worst, abs(lhs - rhs) / (1.0 + abs(lhs)))
    return worst


def estimate_operator_norm(A: LinearOperator, iterations: int = 100, seed: int = 0) -> float:
    """Power iteration on ``A^T A`` from a seeded start.

    Returns ``sqrt(||A^T A x||)`` for the final unit iterate `x`, which never
    exceeds the true largest singular value.
    """
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(A.in_dim)
    x /= np.linalg.norm(x)
    est = 0.0
    for _ in range(iterations):
        y = A.adjoint(A.apply(x))
        ny = float(np.linalg.norm(y))
        if ny == 0.0:
            return 0.0
        est = math.sqrt(ny)
        x = y / ny
    return est
