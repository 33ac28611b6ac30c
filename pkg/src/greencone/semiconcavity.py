"""Anisotropic semi-concavity certificates and the gradient bound on argmin sets.

A function is ``A``-semi-concave when subtracting the quadratic ``x -> A x.x / 2``
leaves it concave; the matrix generalizes the usual scalar modulus.  On the
set where ``f - g`` attains its minimum (``f`` being ``B``-semi-concave and
``g`` bounded below by ``A``-paraboloids), gradients vary in an anisotropic
Lipschitz fashion measured by ``U = B - A``:

    | dp - (A + B) dx / 2 |_{U^{-1}}  <=  | dx |_U / 2.

The same inequality read on a single tangent vector (h, k) is a ball
condition equivalent to membership in the cone C(S_A, S_B); see
``ball_cone_membership``.  ``empirical_paratingent`` builds the finite-scale
surrogate of the paratingent directions from point samples.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import DimensionMismatch, EmptyWindow, NotPositiveDefinite
from .symplectic_cones import SymMatrix, TangentVector

# Argmin extraction threshold: (f-g)(x) <= min + ARGMIN_RANGE_FACTOR * range(f-g).
ARGMIN_RANGE_FACTOR = 1e-6
# One-sided vs central difference disagreement above which a sample point is
# treated as a kink and excluded from gradient extraction.
SMOOTHNESS_TOL = 1e-3


def torus_lift(dx: np.ndarray) -> np.ndarray:
    """Minimal-norm representative of a coordinate difference on the unit torus."""
    return (np.asarray(dx, dtype=float) + 0.5) % 1.0 - 0.5


@dataclass(frozen=True)
class SampledFunction:
    """Point samples (x, f(x), l_x) of a function with super/sub-gradient candidates.

    Coordinates live in a local chart of radius ``radius`` (lifts already
    applied by the caller when the domain is a torus).
    """

    xs: np.ndarray
    fs: np.ndarray
    ls: np.ndarray
    radius: float | None = None

    def __post_init__(self):
        xs = np.atleast_2d(np.asarray(self.xs, dtype=float))
        fs = np.asarray(self.fs, dtype=float).ravel()
        ls = np.atleast_2d(np.asarray(self.ls, dtype=float))
        if xs.shape[0] != fs.shape[0] or ls.shape != xs.shape:
            raise DimensionMismatch("inconsistent sample shapes")
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "fs", fs)
        object.__setattr__(self, "ls", ls)

    @property
    def m(self) -> int:
        return self.xs.shape[0]

    @property
    def n(self) -> int:
        return self.xs.shape[1]


@dataclass(frozen=True)
class ArgminSet:
    """Sampled argmin of f - g, lifted by the common gradient: points (x, p)."""

    xs: np.ndarray
    ps: np.ndarray

    def __post_init__(self):
        xs = np.atleast_2d(np.asarray(self.xs, dtype=float))
        ps = np.atleast_2d(np.asarray(self.ps, dtype=float))
        if xs.shape != ps.shape:
            raise DimensionMismatch("xs and ps shapes differ")
        if xs.shape[0] == 0:
            raise ValueError("argmin set must be nonempty")
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "ps", ps)

    @property
    def m(self) -> int:
        return self.xs.shape[0]

    @property
    def n(self) -> int:
        return self.xs.shape[1]


@dataclass(frozen=True)
class AnisoBound:
    """Anisotropy data A <= B with U = B - A positive definite."""

    A: SymMatrix
    B: SymMatrix
    U: SymMatrix = field(init=False)

    def __post_init__(self):
        if self.A.n != self.B.n:
            raise DimensionMismatch("A and B dimensions differ")
        u = SymMatrix(self.B.a - self.A.a)
        if u.min_eig() <= 1e-10:
            raise NotPositiveDefinite(f"U = B - A has min eigenvalue {u.min_eig():.3e}")
        object.__setattr__(self, "U", u)


@dataclass(frozen=True)
class ViolationReport:
    """Pairwise certificate check: offending (i, j) pairs and the worst excess."""

    violations: list
    worst_excess: float
    n_pairs: int

    @property
    def passed(self) -> bool:
        return not self.violations


@dataclass(frozen=True)
class GradientBoundReport:
    """Margins of the anisotropic gradient bound over all sample pairs."""

    min_margin: float
    offending: list
    n_pairs: int

    @property
    def passed(self) -> bool:
        return not self.offending


def _check_pd(u: SymMatrix) -> np.ndarray:
    try:
        return scipy.linalg.cho_factor(u.a)[0]
    except scipy.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from exc


def unorm(u: SymMatrix, x) -> float:
    """Anisotropic norm |x|_U = sqrt(x.U x); U must be positive definite."""
    _check_pd(u)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    val = float(x @ u.a @ x)
    return float(np.sqrt(max(val, 0.0)))


def uinv_norm(u: SymMatrix, x) -> float:
    """|x|_{U^{-1}} via a Cholesky solve rather than an explicit inverse."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    try:
        y = scipy.linalg.cho_solve(scipy.linalg.cho_factor(u.a), x)
    except scipy.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from exc
    return float(np.sqrt(max(float(x @ y), 0.0)))


def _pair_excess(sf: SampledFunction, a: SymMatrix) -> np.ndarray:
    """E[i, j] = f(x_j) - f(x_i) - l_i.(x_j - x_i) - A(x_j - x_i)^2 / 2."""
    dx = sf.xs[None, :, :] - sf.xs[:, None, :]
    lin = np.einsum("id,ijd->ij", sf.ls, dx)
    quad = 0.5 * np.einsum("ijd,de,ije->ij", dx, a.a, dx)
    return sf.fs[None, :] - sf.fs[:, None] - lin - quad


def check_semiconcave(sf: SampledFunction, a: SymMatrix, tol: float = 1e-9) -> ViolationReport:
    """All (i, j) violating the A-semi-concavity upper bound beyond tol."""
    e = _pair_excess(sf, a)
    np.fill_diagonal(e, -np.inf)
    bad = np.argwhere(e > tol)
    worst = float(np.max(e)) if e.size else 0.0
    violations = [(int(i), int(j), float(e[i, j])) for i, j in bad]
    return ViolationReport(violations=violations, worst_excess=worst, n_pairs=sf.m * (sf.m - 1))


def check_semiconvex(sf: SampledFunction, a: SymMatrix, tol: float = 1e-9) -> ViolationReport:
    """Dual certificate: f(x_j) - f(x_i) - l_i.(x_j - x_i) >= A(x_j - x_i)^2 / 2 - tol."""
    e = _pair_excess(sf, a)
    np.fill_diagonal(e, np.inf)
    bad = np.argwhere(e < -tol)
    worst = float(-np.min(e)) if e.size else 0.0
    violations = [(int(i), int(j), float(-e[i, j])) for i, j in bad]
    return ViolationReport(violations=violations, worst_excess=worst, n_pairs=sf.m * (sf.m - 1))


def aniso_gradient_bound(
    k_set: ArgminSet,
    bound: AnisoBound,
    tol: float = 1e-9,
    torus: bool = True,
) -> GradientBoundReport:
    """Worst margin of |dp - (A+B) dx / 2|_{U^{-1}} <= |dx|_U / 2 over pairs of K.

    On the torus, dx is the minimal-norm lift of the coordinate difference.
    """
    factor = scipy.linalg.cho_factor(bound.U.a)
    mid = 0.5 * (bound.A.a + bound.B.a)
    m = k_set.m
    min_margin = np.inf
    offending = []
    n_pairs = 0
    for i in range(m):
        dx = k_set.xs[i + 1 :] - k_set.xs[i]
        if torus:
            dx = torus_lift(dx)
        dp = k_set.ps[i + 1 :] - k_set.ps[i]
        if dx.size == 0:
            continue
        q = dp - dx @ mid.T
        qsol = scipy.linalg.cho_solve(factor, q.T).T
        lhs = np.sqrt(np.maximum(np.einsum("jd,jd->j", q, qsol), 0.0))
        rhs = 0.5 * np.sqrt(np.maximum(np.einsum("jd,de,je->j", dx, bound.U.a, dx), 0.0))
        margins = rhs - lhs
        n_pairs += margins.shape[0]
        for off, margin in enumerate(margins):
            if margin < min_margin:
                min_margin = float(margin)
            if margin < -tol:
                offending.append((i, i + 1 + off, float(margin)))
    if n_pairs == 0:
        min_margin = 0.0
    return GradientBoundReport(min_margin=float(min_margin), offending=offending, n_pairs=n_pairs)


def ball_margin(bound: AnisoBound, v: TangentVector) -> float:
    """Quadratic-form margin |h|_U^2 / 4 - |k - (A+B) h / 2|_{U^{-1}}^2.

    Equals the sg value of v for the cone C(S_A, S_B); nonnegative exactly on
    the cone.
    """
    q = v.k - 0.5 * (bound.A.a + bound.B.a) @ v.h
    qn = uinv_norm(bound.U, q)
    hn = unorm(bound.U, v.h)
    return 0.25 * hn * hn - qn * qn


def ball_cone_membership(bound: AnisoBound, v: TangentVector, tol: float = 1e-10) -> bool:
    """Membership in C(S_A, S_B) via the ball inequality."""
    return ball_margin(bound, v) >= -tol


def extract_argmin(
    xs: np.ndarray,
    vals: np.ndarray,
    grads: np.ndarray | None,
    eps_abs: float = 0.0,
) -> tuple[np.ndarray, np.ndarray]:
    """Indices and threshold of the sampled argmin of vals.

    Threshold is min + max(ARGMIN_RANGE_FACTOR * range, eps_abs); ``eps_abs``
    lets callers raise the floor to their own noise level.  ``grads`` rows
    with NaN (excluded kinks) are dropped.
    """
    vals = np.asarray(vals, dtype=float)
    lo = float(np.min(vals))
    eps = max(ARGMIN_RANGE_FACTOR * float(np.ptp(vals)), eps_abs)
    idx = np.flatnonzero(vals <= lo + eps)
    if grads is not None:
        ok = ~np.any(np.isnan(np.atleast_2d(grads)[idx]), axis=1)
        idx = idx[ok]
    return idx, lo + eps


def empirical_paratingent(
    xs: np.ndarray,
    ps: np.ndarray,
    delta_min: float,
    delta_max: float,
    torus: bool = True,
) -> list[tuple[int, int, TangentVector]]:
    """Finite-scale surrogate of paratingent directions near a point.

    All normalized differences (z_i - z_j) / |z_i - z_j| over ordered sample
    pairs whose separation falls in [delta_min, delta_max]; base-coordinate
    differences take the minimal torus lift.  Output is ordered
    lexicographically by (i, j).
    """
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    ps = np.atleast_2d(np.asarray(ps, dtype=float))
    if xs.shape != ps.shape:
        raise DimensionMismatch("xs and ps shapes differ")
    m = xs.shape[0]
    if m < 2:
        raise EmptyWindow("need at least two samples")
    out = []
    for i in range(m):
        for j in range(m):
            if i == j:
                continue
            dx = xs[i] - xs[j]
            if torus:
                dx = torus_lift(dx)
            dp = ps[i] - ps[j]
            dist = float(np.sqrt(dx @ dx + dp @ dp))
            if delta_min <= dist <= delta_max:
                out.append((i, j, TangentVector(dx / dist, dp / dist)))
    if not out:
        raise EmptyWindow(
            f"no sample pair with separation in [{delta_min:g}, {delta_max:g}]"
        )
    return out
