"""Linear-symplectic algebra of Lagrangian graphs and the cone between two of them.

A Lagrangian subspace transversal to the vertical is the graph ``{(h, S h)}``
of a symmetric matrix ``S``.  For an ordered pair ``S1 <= S2`` the cone
``C(S1, S2)`` collects the graphs of every symmetric ``S`` squeezed between
them.  Membership of a tangent vector ``v = (h, k)`` is decided by the sign
function ``sg_value``: split ``v = v1 + v2`` with ``v_i`` in graph ``S_i`` and
evaluate the symplectic area ``omega(v1, v2)``.  The value is independent of
the splitting, equals ``-inf`` off the sum of the two graphs, and is
nonnegative exactly on the cone; ``cone_witness`` makes the equivalence
constructive by producing the interpolating symmetric matrix.

Degenerate pairs (``S2 - S1`` singular) are handled by an orthogonal/Schur
reduction to a strictly ordered block plus a common invertible block, after a
shear making both matrices positive definite.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import (
    DimensionMismatch,
    NegativeInnerProduct,
    NotPositiveDefinite,
    RankDetectionAmbiguous,
    SingularMatrix,
)

# Symmetry defect allowed at construction (entries of order one).
TOL_SYM = 1e-12
# PSD-order tolerance: S1 <= S2 means min eig(S2 - S1) >= -TOL_ORDER.
TOL_ORDER = 1e-10
# Relative residual above which v is declared outside L1 + L2.
SG_RESIDUAL_RTOL = 1e-8
# Validation tolerance for the block-diagonalization of a reduced pair.
BLOCK_DIAG_TOL = 1e-9
# Eigenvalues of U within a factor RANK_BAND of the rank threshold are ambiguous.
RANK_BAND = 100.0


class MinusInfinity:
    """Sentinel for the sg value of vectors outside L1 + L2.

    A distinct type rather than a float so that tests can drive the two
    branches separately; compares less than every float.
    """

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "MinusInfinity"

    def __lt__(self, other) -> bool:
        return True

    def __gt__(self, other) -> bool:
        return False

    def __ge__(self, other) -> bool:
        return False

    def __le__(self, other) -> bool:
        return True


MINUS_INFINITY = MinusInfinity()


def _as_square(a, name: str = "matrix") -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"{name} must be square, got shape {a.shape}")
    return a


@dataclass(frozen=True)
class SymMatrix:
    """Dense real symmetric matrix carrying Lagrangian-graph semantics {(h, S h)}."""

    a: np.ndarray

    def __init__(self, a):
        a = _as_square(a, "SymMatrix")
        scale = max(1.0, float(np.max(np.abs(a))) if a.size else 1.0)
        defect = float(np.max(np.abs(a - a.T))) if a.size else 0.0
        if defect > TOL_SYM * scale:
            raise ValueError(f"symmetry defect {defect:.3e} exceeds {TOL_SYM * scale:.3e}")
        sym = 0.5 * (a + a.T)
        sym.flags.writeable = False
        object.__setattr__(self, "a", sym)

    @property
    def n(self) -> int:
        return self.a.shape[0]

    def min_eig(self) -> float:
        return float(np.linalg.eigvalsh(self.a)[0])

    def norm2(self) -> float:
        if self.n == 0:
            return 0.0
        return float(np.linalg.norm(self.a, 2))

    def leq(self, other: "SymMatrix", tol: float = TOL_ORDER) -> bool:
        """PSD-order predicate: self <= other up to tol."""
        if self.n != other.n:
            raise DimensionMismatch("SymMatrix dimensions differ")
        if self.n == 0:
            return True
        return float(np.linalg.eigvalsh(other.a - self.a)[0]) >= -tol

    def __matmul__(self, h):
        return self.a @ h


@dataclass(frozen=True)
class TangentVector:
    """Phase-space tangent vector v = (h, k) with base component h and fiber component k."""

    h: np.ndarray
    k: np.ndarray

    def __init__(self, h, k):
        h = np.atleast_1d(np.asarray(h, dtype=float))
        k = np.atleast_1d(np.asarray(k, dtype=float))
        if h.shape != k.shape or h.ndim != 1:
            raise DimensionMismatch(f"h and k must be equal-length vectors, got {h.shape}, {k.shape}")
        h.flags.writeable = False
        k.flags.writeable = False
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "k", k)

    @property
    def n(self) -> int:
        return self.h.shape[0]

    @property
    def vec(self) -> np.ndarray:
        return np.concatenate([self.h, self.k])

    def norm(self) -> float:
        return float(np.linalg.norm(self.vec))


@dataclass(frozen=True)
class ConePair:
    """Ordered pair S1 <= S2 together with U = S2 - S1, representing C(S1, S2)."""

    S1: SymMatrix
    S2: SymMatrix
    U: SymMatrix
    transversal: bool

    def __init__(self, S1: SymMatrix, S2: SymMatrix, tol: float = TOL_ORDER):
        if not isinstance(S1, SymMatrix):
            S1 = SymMatrix(S1)
        if not isinstance(S2, SymMatrix):
            S2 = SymMatrix(S2)
        if S1.n != S2.n:
            raise DimensionMismatch("S1 and S2 have different dimensions")
        U = SymMatrix(S2.a - S1.a)
        if U.min_eig() < -tol:
            raise ValueError(f"pair not ordered: min eig(S2 - S1) = {U.min_eig():.3e}")
        object.__setattr__(self, "S1", S1)
        object.__setattr__(self, "S2", S2)
        object.__setattr__(self, "U", U)
        object.__setattr__(self, "transversal", U.min_eig() > tol)

    @property
    def n(self) -> int:
        return self.S1.n


@dataclass(frozen=True)
class ReducedPair:
    """Output of the degenerate-pair reduction.

    After the internal shear by ``shear_c`` and the change of coordinates
    ``Phi_A`` with ``A = P^T Q``, both shifted matrices become
    ``diag(Sbar_i, N)`` with ``Sbar1 < Sbar2`` of size ``m`` and a common
    invertible block ``N`` of size ``n - m``.
    """

    A: np.ndarray
    m: int
    Sbar1: SymMatrix
    Sbar2: SymMatrix
    N: SymMatrix
    shear_c: float


def omega(v: TangentVector, w: TangentVector) -> float:
    """Standard symplectic form: omega((h1,k1),(h2,k2)) = h1.k2 - k1.h2."""
    if v.n != w.n:
        raise DimensionMismatch("tangent vectors of different dimension")
    return float(v.h @ w.k - v.k @ w.h)


def sg_value(pair: ConePair, v: TangentVector):
    """Sign function of the cone: omega(v1, v2) for any splitting v = v1 + v2.

    Transversal pairs use the closed-form splitting
    ``x1 = U^{-1}(S2 h - k)``, ``x2 = U^{-1}(k - S1 h)``; degenerate pairs
    solve the block system with a rank-revealing least-squares factorization
    and return MINUS_INFINITY when the residual shows v outside L1 + L2.
    """
    if v.n != pair.n:
        raise DimensionMismatch("vector dimension does not match the pair")
    S1, S2, U = pair.S1.a, pair.S2.a, pair.U.a
    if pair.transversal:
        r1 = S2 @ v.h - v.k
        x2 = np.linalg.solve(U, v.k - S1 @ v.h)
        # x1^T U x2 = (U x1)^T x2 = r1^T x2
        return float(r1 @ x2)
    n = pair.n
    block = np.zeros((2 * n, 2 * n))
    block[:n, :n] = np.eye(n)
    block[:n, n:] = np.eye(n)
    block[n:, :n] = S1
    block[n:, n:] = S2
    rhs = v.vec
    sol, *_ = np.linalg.lstsq(block, rhs, rcond=None)
    residual = float(np.linalg.norm(block @ sol - rhs))
    vnorm = float(np.linalg.norm(rhs))
    if vnorm == 0.0:
        return 0.0
    if residual > SG_RESIDUAL_RTOL * vnorm:
        return MINUS_INFINITY
    x1, x2 = sol[:n], sol[n:]
    return float(x1 @ U @ x2)


def cone_contains(pair: ConePair, v: TangentVector, tol: float = TOL_ORDER) -> bool:
    """Membership v in C(S1, S2), i.e. sg_value >= -tol and finite."""
    sg = sg_value(pair, v)
    if sg is MINUS_INFINITY:
        return False
    return sg >= -tol


def decompose_nonneg(y1, y2) -> tuple[SymMatrix, SymMatrix]:
    """Split the identity into PSD W1 + W2 = I with W1(y1+y2) = y1, W2(y1+y2) = y2.

    Requires y1.y2 >= 0 (up to roundoff).  Follows the constructive proof:
    scale y = y1+y2 to unit length, rotate y to e1 and z = y1-y2 into
    span{e1,e2}, insert the 2x2 block [[z1, z2], [z2, -z1]] (eigenvalues
    +-|z| <= 1), rotate back and form W_i = (I +- W)/2.
    """
    y1 = np.atleast_1d(np.asarray(y1, dtype=float))
    y2 = np.atleast_1d(np.asarray(y2, dtype=float))
    if y1.shape != y2.shape or y1.ndim != 1:
        raise DimensionMismatch("y1, y2 must be equal-length vectors")
    n = y1.shape[0]
    inner = float(y1 @ y2)
    norms = float(np.linalg.norm(y1) * np.linalg.norm(y2))
    if inner < -1e-12 * norms:
        raise NegativeInnerProduct(f"y1.y2 = {inner:.3e} < 0 beyond tolerance")
    y = y1 + y2
    z = y1 - y2
    ynorm = float(np.linalg.norm(y))
    if ynorm == 0.0:
        # y1 = -y2 forces y1.y2 = -|y1|^2 <= 0, legal only when both vanish.
        if norms > 0.0:
            raise NegativeInnerProduct("y1 + y2 = 0 with nonzero inputs")
        half = SymMatrix(0.5 * np.eye(n))
        return half, half
    yhat = y / ynorm
    zhat = z / ynorm
    if n == 1:
        w = np.array([[zhat[0] * yhat[0]]])
    else:
        z_perp = zhat - (zhat @ yhat) * yhat
        z_perp_norm = float(np.linalg.norm(z_perp))
        if z_perp_norm > 1e-12:
            u2 = z_perp / z_perp_norm
        else:
            # z parallel to y: complete with the basis vector least aligned to y.
            idx = int(np.argmin(np.abs(yhat)))
            cand = np.zeros(n)
            cand[idx] = 1.0
            cand -= (cand @ yhat) * yhat
            u2 = cand / np.linalg.norm(cand)
        rows = [yhat, u2]
        if n > 2:
            rest = scipy.linalg.null_space(np.vstack(rows))
            rows.extend(rest.T)
        p = np.vstack(rows)
        pz = p @ zhat
        wprime = np.zeros((n, n))
        wprime[0, 0] = pz[0]
        wprime[0, 1] = pz[1]
        wprime[1, 0] = pz[1]
        wprime[1, 1] = -pz[0]
        w = p.T @ wprime @ p
    w1 = SymMatrix(0.5 * (np.eye(n) + w))
    w2 = SymMatrix(0.5 * (np.eye(n) - w))
    return w1, w2


def psd_sqrt(s: SymMatrix) -> np.ndarray:
    """Principal square root via symmetric eigendecomposition.

    Eigenvalues in [-1e-12, 0) are clamped to 0 (PSD inputs contaminated by
    roundoff); anything more negative raises.
    """
    vals, vecs = np.linalg.eigh(s.a)
    scale = max(1.0, float(np.max(np.abs(vals))) if vals.size else 1.0)
    if vals.size and vals[0] < -1e-12 * scale:
        raise NotPositiveDefinite(f"matrix has eigenvalue {vals[0]:.3e} < 0")
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.T


def _witness_transversal(pair: ConePair, v: TangentVector) -> SymMatrix | None:
    S1, U = pair.S1.a, pair.U.a
    x1 = np.linalg.solve(U, pair.S2.a @ v.h - v.k)
    x2 = np.linalg.solve(U, v.k - S1 @ v.h)
    sg = float(x1 @ U @ x2)
    vnorm2 = float(v.h @ v.h + v.k @ v.k)
    slack = 1e-10 * max(1.0, vnorm2) * max(1.0, pair.U.norm2())
    if sg < -slack:
        return None
    uhalf = psd_sqrt(pair.U)
    y1 = uhalf @ x1
    y2 = uhalf @ x2
    try:
        _, wb = decompose_nonneg(y1, y2)
    except NegativeInnerProduct:
        return None
    # U1 = U^{1/2} W_b U^{1/2} with W_b mapping y1+y2 to y2, so U1(x1+x2) = U x2
    # and S = S1 + U1 satisfies S h = k with S1 <= S <= S2.
    u1 = uhalf @ wb.a @ uhalf
    return SymMatrix(S1 + 0.5 * (u1 + u1.T))


def cone_witness(pair: ConePair, v: TangentVector) -> SymMatrix | None:
    """Constructive membership: symmetric S with S1 <= S <= S2 and S h = k.

    Returns None when sg_value(v) < 0 (v outside the cone) or v is outside
    L1 + L2.  Degenerate pairs are reduced first; the witness is assembled
    blockwise with the common N-block fixed.
    """
    if v.n != pair.n:
        raise DimensionMismatch("vector dimension does not match the pair")
    if pair.transversal:
        return _witness_transversal(pair, v)
    red = reduce_degenerate(pair)
    scale = max(1.0, v.norm())
    w = phi_gl(red.A, phi_shear(red.shear_c, v))
    m = red.m
    xbar, ybar = w.h[:m], w.h[m:]
    kbar1, kbar2 = w.k[:m], w.k[m:]
    if float(np.linalg.norm(kbar2 - red.N.a @ ybar)) > SG_RESIDUAL_RTOL * scale:
        return None
    if m == 0:
        s_red = red.N.a
    else:
        sbar = _witness_transversal(ConePair(red.Sbar1, red.Sbar2), TangentVector(xbar, kbar1))
        if sbar is None:
            return None
        s_red = scipy.linalg.block_diag(sbar.a, red.N.a)
    # undo Phi_A (S' = A^{-T} S_red A^{-1}) and the shear
    b = np.linalg.solve(red.A.T, s_red)
    s_prime = np.linalg.solve(red.A.T, b.T).T
    s_prime = 0.5 * (s_prime + s_prime.T)
    return SymMatrix(s_prime - red.shear_c * np.eye(pair.n))


def phi_shear(c: float, v: TangentVector) -> TangentVector:
    """Symplectic shear (x, y) -> (x, y + C x); maps graph of S to graph of S + C I."""
    return TangentVector(v.h, v.k + c * v.h)


def phi_gl(a, v: TangentVector) -> TangentVector:
    """Symplectic change (x, y) -> (A^{-1} x, A^T y); maps graph of S to graph of A^T S A."""
    a = _as_square(a, "A")
    cond = np.linalg.cond(a)
    if not np.isfinite(cond) or cond > 1e14:
        raise SingularMatrix(f"A numerically singular (cond = {cond:.3e})")
    return TangentVector(np.linalg.solve(a, v.h), a.T @ v.k)


def shear_graph(s: SymMatrix, c: float) -> SymMatrix:
    return SymMatrix(s.a + c * np.eye(s.n))


def gl_graph(s: SymMatrix, a) -> SymMatrix:
    a = _as_square(a, "A")
    m = a.T @ s.a @ a
    return SymMatrix(0.5 * (m + m.T))


def reduce_degenerate(pair: ConePair) -> ReducedPair:
    """Reduce a non-transversal pair to a strictly ordered block plus a common block.

    Rotates ker(S2 - S1) to the last coordinates with an orthogonal P and
    eliminates the coupling with the Schur factor Q = [I 0; -N^{-1} M^T I].
    When the kernel block N of the rotated S1 is (numerically) singular, a
    preliminary shear by C = |S1|_2 + |S2|_2 + 1 makes both matrices positive
    definite, hence N invertible; C is recorded.  The composed change is
    A = P^T Q; the block-diagonalization is validated at construction.
    """
    n = pair.n
    if pair.transversal:
        return ReducedPair(
            A=np.eye(n), m=n, Sbar1=pair.S1, Sbar2=pair.S2,
            N=SymMatrix(np.zeros((0, 0))), shear_c=0.0,
        )
    u = pair.U.a
    unorm = pair.U.norm2()
    vals, vecs = np.linalg.eigh(u)
    if unorm == 0.0:
        m = 0
        p = np.eye(n)
    else:
        thresh = TOL_ORDER * unorm
        band = (np.abs(vals) > thresh / RANK_BAND) & (np.abs(vals) < thresh * RANK_BAND)
        if np.any(band):
            raise RankDetectionAmbiguous(
                f"eigenvalues {vals[band]} within a factor {RANK_BAND} of threshold {thresh:.3e}"
            )
        kernel = np.abs(vals) <= thresh
        m = int(np.sum(~kernel))
        # rows: range eigenvectors first, kernel eigenvectors last
        p = np.vstack([vecs[:, ~kernel].T, vecs[:, kernel].T])
    # Skip the shear only when the kernel block of the rotated S1 is well
    # conditioned; a merely-invertible N makes A = P^T Q ill conditioned and
    # degrades the witness residual.
    c = 0.0
    nblock0 = (p @ pair.S1.a @ p.T)[m:, m:]
    scale0 = max(1.0, pair.S1.norm2())
    if nblock0.size and np.linalg.svd(nblock0, compute_uv=False)[-1] <= 0.25 * scale0:
        c = pair.S1.norm2() + pair.S2.norm2() + 1.0
    s1p = pair.S1.a + c * np.eye(n)
    s2p = pair.S2.a + c * np.eye(n)
    ps1 = p @ s1p @ p.T
    ps2 = p @ s2p @ p.T
    nblock = 0.5 * (ps1[m:, m:] + ps1[m:, m:].T)
    mblock = ps1[:m, m:]
    q = np.eye(n)
    if n > m:
        q[m:, :m] = -np.linalg.solve(nblock, mblock.T)
    a = p.T @ q
    red1 = a.T @ s1p @ a
    red2 = a.T @ s2p @ a
    sbar1 = SymMatrix(0.5 * (red1[:m, :m] + red1[:m, :m].T))
    sbar2 = SymMatrix(0.5 * (red2[:m, :m] + red2[:m, :m].T))
    nsym = SymMatrix(nblock)
    out = ReducedPair(A=a, m=m, Sbar1=sbar1, Sbar2=sbar2, N=nsym, shear_c=c)
    # validate the block-diagonalization
    scale = max(1.0, abs(c) + unorm)
    for red, sbar in ((red1, sbar1), (red2, sbar2)):
        target = scipy.linalg.block_diag(sbar.a, nsym.a)
        if float(np.max(np.abs(red - target))) > BLOCK_DIAG_TOL * scale:
            raise SingularMatrix("block-diagonalization failed validation")
    if m > 0 and sbar1.a.size and np.linalg.eigvalsh(sbar2.a - sbar1.a)[0] <= 0:
        raise RankDetectionAmbiguous("reduced pair not strictly ordered")
    return out


def sg_via_reduction(pair: ConePair, red: ReducedPair, v: TangentVector):
    """Sg computed through the reduced coordinates (degenerate-pair route).

    The common N-block component contributes zero (it lies in S1 and S2), so
    membership is decided by the reduced transversal block alone.
    """
    w = phi_gl(red.A, phi_shear(red.shear_c, v))
    m = red.m
    ybar = w.h[m:]
    kbar2 = w.k[m:]
    scale = max(1.0, v.norm())
    if float(np.linalg.norm(kbar2 - red.N.a @ ybar)) > SG_RESIDUAL_RTOL * scale:
        return MINUS_INFINITY
    if m == 0:
        return 0.0
    return sg_value(ConePair(red.Sbar1, red.Sbar2), TangentVector(w.h[:m], w.k[:m]))


def subspace_distance(g1: SymMatrix, g2: SymMatrix) -> float:
    """Operator-norm distance between two Lagrangian graphs (surrogate metric)."""
    if g1.n != g2.n:
        raise DimensionMismatch("graph dimensions differ")
    return float(np.linalg.norm(g1.a - g2.a, 2))


def _sample_cone_sphere(pair: ConePair, n_samples: int, rng: np.random.Generator) -> np.ndarray:
    n = pair.n
    uhalf = psd_sqrt(pair.U)
    pts = np.empty((n_samples, 2 * n))
    for i in range(n_samples):
        t = rng.uniform()
        w = np.eye(n) * t
        s = pair.S1.a + uhalf @ w @ uhalf
        h = rng.standard_normal(n)
        h /= np.linalg.norm(h)
        v = np.concatenate([h, s @ h])
        pts[i] = v / np.linalg.norm(v)
    return pts


def cone_distance(pair_a: ConePair, pair_b: ConePair, n_samples: int = 1000, seed: int = 0) -> float:
    """Sampled two-sided Hausdorff distance between unit-sphere sections of two cones."""
    if pair_a.n != pair_b.n:
        raise DimensionMismatch("cone dimensions differ")
    rng = np.random.default_rng(seed)
    pa = _sample_cone_sphere(pair_a, n_samples, rng)
    pb = _sample_cone_sphere(pair_b, n_samples, rng)
    d = np.linalg.norm(pa[:, None, :] - pb[None, :, :], axis=2)
    return float(max(d.min(axis=1).max(), d.min(axis=0).max()))
