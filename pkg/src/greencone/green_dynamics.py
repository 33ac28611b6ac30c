"""Tonelli Hamiltonian flows on the torus and Green-bundle computation.

Systems are Hamiltonians ``H(x, p)`` on the n-torus (n = 1 or 2), strictly
convex in ``p``, with an optional cohomology shift ``c``: every evaluation
goes through ``H(x, p + c)`` so the shift lives in exactly one place.
Mechanical systems ``H = |p|^2/2 + V(x)`` carry closed-form Legendre data;
the general class solves the Legendre transform by Newton iteration.

``variational_transport`` pushes Lagrangian frames with the linearized flow,
re-orthonormalizing periodically so hyperbolic growth never degrades the
spanned subspace.  The pre-Green matrices are graph extractions of the
transported vertical; their large-time limits (computed on a doubling time
ladder) are the Green bundles bounding the Aubry set's paratingent
directions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .errors import (
    BlowUp,
    ConjugatePoint,
    DimensionMismatch,
    IntegratorFailure,
    NonConvergence,
    NotPositiveDefinite,
)
from .symplectic_cones import SymMatrix

# Local integration tolerance (absolute and relative).
INTEGRATOR_TOL = 1e-10
# Transport re-orthonormalizes the frame every RENORM_DT time units.
RENORM_DT = 0.5
# Graph extraction fails when the inverse of the orthonormalized X block
# exceeds this condition number.
COND_LIMIT = 1e10
# Default momentum-norm bound for blow-up detection.
P_BOUND = 1e6


@dataclass(frozen=True)
class PhasePoint:
    """Point (x, p) of the phase space with x reduced mod 1."""

    x: np.ndarray
    p: np.ndarray

    def __init__(self, x, p):
        x = np.atleast_1d(np.asarray(x, dtype=float)) % 1.0
        p = np.atleast_1d(np.asarray(p, dtype=float))
        if x.shape != p.shape or x.ndim != 1:
            raise DimensionMismatch("x and p must be equal-length vectors")
        x.flags.writeable = False
        p.flags.writeable = False
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "p", p)

    @property
    def n(self) -> int:
        return self.x.shape[0]


@dataclass(frozen=True)
class LagrangianFrame:
    """2n x n frame [X; Y] whose columns span a Lagrangian subspace."""

    X: np.ndarray
    Y: np.ndarray

    def __init__(self, X, Y):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        if X.shape != Y.shape or X.shape[0] != X.shape[1]:
            raise DimensionMismatch("X and Y must be equal square blocks")
        frame = np.vstack([X, Y])
        if np.linalg.matrix_rank(frame) < X.shape[1]:
            raise ValueError("frame columns are rank deficient")
        defect = float(np.max(np.abs(X.T @ Y - Y.T @ X)))
        scale = max(1.0, float(np.max(np.abs(frame))) ** 2)
        if defect > 1e-8 * scale:
            raise ValueError(f"Lagrangian defect {defect:.3e} too large")
        X = X.copy()
        Y = Y.copy()
        X.flags.writeable = False
        Y.flags.writeable = False
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    def graph(self) -> SymMatrix:
        """Symmetric matrix G with the frame spanning {(h, G h)}.

        Raises ConjugatePoint when X is numerically singular relative to the
        frame scale (transversality to the vertical lost).
        """
        frame = np.vstack([self.X, self.Y])
        q, _ = np.linalg.qr(frame)
        xq, yq = q[: self.n], q[self.n :]
        smin = np.linalg.svd(xq, compute_uv=False)[-1]
        if smin <= 1.0 / COND_LIMIT:
            raise ConjugatePoint(f"graph extraction condition number {1/max(smin,1e-300):.3e}")
        g = yq @ np.linalg.inv(xq)
        defect = float(np.max(np.abs(g - g.T)))
        if defect > 1e-6 * max(1.0, float(np.max(np.abs(g)))):
            raise IntegratorFailure(f"graph symmetry defect {defect:.3e}")
        return SymMatrix(0.5 * (g + g.T))


def vertical_frame(n: int) -> LagrangianFrame:
    return LagrangianFrame(np.zeros((n, n)), np.eye(n))


def graph_frame(s: SymMatrix) -> LagrangianFrame:
    return LagrangianFrame(np.eye(s.n), s.a)


@dataclass
class FlowInfo:
    energy_drift: float
    n_steps: int


class TonelliSystem:
    """Hamiltonian on T^n x R^n with derivatives and Legendre-dual Lagrangian.

    ``ham``/``dham``/``d2ham`` receive the already-shifted momentum; the
    public methods apply the cohomology shift ``c`` so callers never do.
    """

    def __init__(self, n, ham, dham, d2ham, c=None, name="custom"):
        self.n = int(n)
        self.c = np.zeros(self.n) if c is None else np.atleast_1d(np.asarray(c, dtype=float))
        if self.c.shape != (self.n,):
            raise DimensionMismatch("cohomology shift has wrong dimension")
        self._ham = ham
        self._dham = dham
        self._d2ham = d2ham
        self.name = name
        self._validate()

    is_mechanical = False

    def _validate(self, n_samples: int = 16):
        rng = np.random.default_rng(0)
        for _ in range(n_samples):
            x = rng.uniform(0, 1, self.n)
            p = rng.standard_normal(self.n)
            hpp = self.d2_hamiltonian(x, p)[2]
            if np.linalg.eigvalsh(hpp)[0] <= 0:
                raise NotPositiveDefinite(f"H_pp not positive definite at x={x}, p={p}")
            for e in np.eye(self.n):
                if abs(self.hamiltonian(x + e, p) - self.hamiltonian(x, p)) > 1e-9 * (
                    1 + abs(self.hamiltonian(x, p))
                ):
                    raise ValueError("Hamiltonian is not 1-periodic")

    # -- shifted evaluations ------------------------------------------------
    def hamiltonian(self, x, p) -> float:
        return float(self._ham(np.asarray(x, float), np.asarray(p, float) + self.c))

    def d_hamiltonian(self, x, p):
        hx, hp = self._dham(np.asarray(x, float), np.asarray(p, float) + self.c)
        return np.asarray(hx, float), np.asarray(hp, float)

    def d2_hamiltonian(self, x, p):
        hxx, hxp, hpp = self._d2ham(np.asarray(x, float), np.asarray(p, float) + self.c)
        return np.asarray(hxx, float), np.asarray(hxp, float), np.asarray(hpp, float)

    # -- Legendre -----------------------------------------------------------
    def legendre(self, x, v, tol: float = 1e-12, max_iter: int = 50):
        """L(x, v) = sup_p { p.v - H(x, p) } by Newton on H_p(x, p) = v.

        Returns (L, p) with p = L_v(x, v).
        """
        x = np.atleast_1d(np.asarray(x, float))
        v = np.atleast_1d(np.asarray(v, float))
        p = v.copy()
        for _ in range(max_iter):
            _, hp = self.d_hamiltonian(x, p)
            res = hp - v
            if np.max(np.abs(res)) < tol:
                break
            hpp = self.d2_hamiltonian(x, p)[2]
            p = p - np.linalg.solve(hpp, res)
        else:
            raise NonConvergence("Legendre Newton iteration did not converge")
        lval = float(p @ v - self.hamiltonian(x, p))
        return lval, p

    def lagrangian_derivs(self, x, v):
        """(L, L_x, L_v, L_xx, L_xv, L_vv) at a single (x, v), via H derivatives.

        Standard implicit relations at p = L_v(x, v): L_x = -H_x,
        L_vv = H_pp^{-1}, L_xv = -H_xp H_pp^{-1}, and
        L_xx = -H_xx + H_xp H_pp^{-1} H_px.
        """
        lval, p = self.legendre(x, v)
        hx, _ = self.d_hamiltonian(x, p)
        hxx, hxp, hpp = self.d2_hamiltonian(x, p)
        hpp_inv = np.linalg.inv(hpp)
        lvv = hpp_inv
        lxv = -hxp @ hpp_inv
        lxx = -hxx + hxp @ hpp_inv @ hxp.T
        return lval, -hx, p, lxx, lxv, lvv

    # -- flow RHS -----------------------------------------------------------
    def rhs_flow(self, t, y):
        x, p = y[: self.n], y[self.n :]
        hx, hp = self.d_hamiltonian(x, p)
        return np.concatenate([hp, -hx])

    def rhs_coupled(self, t, y, k: int):
        """Flow plus variational transport of a 2n x k matrix."""
        n = self.n
        x, p = y[:n], y[n : 2 * n]
        hx, hp = self.d_hamiltonian(x, p)
        hxx, hxp, hpp = self.d2_hamiltonian(x, p)
        m = y[2 * n :].reshape(2 * n, k)
        dx, dp = m[:n], m[n:]
        dxdot = hxp.T @ dx + hpp @ dp
        dpdot = -hxx @ dx - hxp @ dp
        return np.concatenate([hp, -hx, np.vstack([dxdot, dpdot]).ravel()])


class MechanicalSystem(TonelliSystem):
    """H(x, p) = |p|^2 / 2 + V(x) with vectorized potential callables.

    ``potential``/``d_potential``/``d2_potential`` accept arrays with the
    coordinate axis last and broadcast over leading axes; this feeds the
    batched action minimizer.
    """

    is_mechanical = True

    def __init__(self, n, potential, d_potential, d2_potential, c=None, name="mechanical"):
        self.potential = potential
        self.d_potential = d_potential
        self.d2_potential = d2_potential

        def ham(x, p):
            return 0.5 * float(p @ p) + float(potential(x))

        def dham(x, p):
            return np.atleast_1d(d_potential(x)), p

        def d2ham(x, p):
            nloc = len(np.atleast_1d(x))
            return np.atleast_2d(d2_potential(x)), np.zeros((nloc, nloc)), np.eye(nloc)

        super().__init__(n, ham, dham, d2ham, c=c, name=name)

    def legendre(self, x, v, tol: float = 1e-12, max_iter: int = 50):
        x = np.atleast_1d(np.asarray(x, float))
        v = np.atleast_1d(np.asarray(v, float))
        p = v - self.c
        lval = float(0.5 * v @ v - self.potential(x) - self.c @ v)
        return lval, p

    def lagrangian_derivs(self, x, v):
        x = np.atleast_1d(np.asarray(x, float))
        v = np.atleast_1d(np.asarray(v, float))
        lval, p = self.legendre(x, v)
        n = self.n
        return (
            lval,
            -np.atleast_1d(self.d_potential(x)),
            p,
            -np.atleast_2d(self.d2_potential(x)),
            np.zeros((n, n)),
            np.eye(n),
        )


# -- built-in example systems ------------------------------------------------

def pendulum(c=0.0) -> MechanicalSystem:
    """H = p^2/2 + cos(2 pi x) on the circle; saddle at (0, 0), critical value 1."""
    two_pi = 2.0 * math.pi
    return MechanicalSystem(
        1,
        potential=lambda x: np.cos(two_pi * np.asarray(x))[..., 0]
        if np.asarray(x).ndim
        else math.cos(two_pi * float(x)),
        d_potential=lambda x: -two_pi * np.sin(two_pi * np.asarray(x, float)),
        d2_potential=lambda x: _diag_last(-two_pi * two_pi * np.cos(two_pi * np.asarray(x, float))),
        c=c,
        name="pendulum",
    )


def two_site(c=0.0, a2=0.3) -> MechanicalSystem:
    """H = p^2/2 + cos(2 pi x) + a2 cos(4 pi x): two wells of unequal depth."""
    two_pi = 2.0 * math.pi

    def pot(x):
        x = np.asarray(x, float)
        v = np.cos(two_pi * x) + a2 * np.cos(2 * two_pi * x)
        return v[..., 0] if v.ndim else float(v)

    return MechanicalSystem(
        1,
        potential=pot,
        d_potential=lambda x: -two_pi * np.sin(two_pi * np.asarray(x, float))
        - 2 * two_pi * a2 * np.sin(2 * two_pi * np.asarray(x, float)),
        d2_potential=lambda x: _diag_last(
            -two_pi**2 * np.cos(two_pi * np.asarray(x, float))
            - (2 * two_pi) ** 2 * a2 * np.cos(2 * two_pi * np.asarray(x, float))
        ),
        c=c,
        name="two_site",
    )


def free_system(n=1, c=None) -> MechanicalSystem:
    """H = |p|^2 / 2: straight-line flow, constant weak-KAM solutions."""

    def pot(x):
        x = np.asarray(x, float)
        return np.zeros(x.shape[:-1]) if x.ndim else 0.0

    return MechanicalSystem(
        n,
        potential=pot,
        d_potential=lambda x: np.zeros_like(np.asarray(x, float)),
        d2_potential=lambda x: _diag_last(np.zeros_like(np.asarray(x, float))),
        c=c,
        name="free",
    )


def product_system(a1=1.0, a2=0.5, c=None) -> MechanicalSystem:
    """Decoupled 2-torus system V(x) = a1 cos(2 pi x1) + a2 cos(2 pi x2)."""
    two_pi = 2.0 * math.pi
    amps = np.array([a1, a2])

    def pot(x):
        x = np.asarray(x, float)
        return np.sum(amps * np.cos(two_pi * x), axis=-1)

    def dpot(x):
        x = np.asarray(x, float)
        return -two_pi * amps * np.sin(two_pi * x)

    def d2pot(x):
        x = np.asarray(x, float)
        return _diag_last(-(two_pi**2) * amps * np.cos(two_pi * x))

    return MechanicalSystem(2, pot, dpot, d2pot, c=c, name="product")


def _diag_last(vals: np.ndarray) -> np.ndarray:
    """Diagonal matrices from the last axis of vals (scalar -> 1x1)."""
    vals = np.atleast_1d(np.asarray(vals, float))
    n = vals.shape[-1]
    out = np.zeros(vals.shape + (n,))
    idx = np.arange(n)
    out[..., idx, idx] = vals
    return out


SYSTEMS = {
    "pendulum": pendulum,
    "two_site": two_site,
    "free": free_system,
    "free2d": lambda c=None: free_system(2, c),
    "product": product_system,
}


# -- flow and transport -------------------------------------------------------

def _integrate(sys: TonelliSystem, rhs, y0, t, p_slice) -> tuple[np.ndarray, int]:
    if t == 0.0:
        return np.asarray(y0, float), 0
    events = None
    if p_slice is not None:
        def blow_up(tt, y):
            return float(np.linalg.norm(y[p_slice])) - P_BOUND
        blow_up.terminal = True
        events = [blow_up]
    sol = solve_ivp(
        rhs,
        (0.0, t),
        np.asarray(y0, float),
        method="DOP853",
        rtol=INTEGRATOR_TOL,
        atol=INTEGRATOR_TOL,
        events=events,
        dense_output=False,
    )
    if sol.status == 1:
        raise BlowUp(f"momentum norm exceeded {P_BOUND:g} during integration")
    if not sol.success:
        raise IntegratorFailure(sol.message)
    return sol.y[:, -1], sol.t.shape[0]


def flow(sys: TonelliSystem, z: PhasePoint, t: float, full_output: bool = False):
    """Hamiltonian flow of z over time t (adaptive, local tol 1e-10)."""
    if not np.isfinite(t):
        raise ValueError("t must be finite")
    y0 = np.concatenate([z.x, z.p])
    h0 = sys.hamiltonian(z.x, z.p)
    y, n_steps = _integrate(sys, sys.rhs_flow, y0, t, slice(sys.n, 2 * sys.n))
    out = PhasePoint(y[: sys.n], y[sys.n :])
    if full_output:
        drift = abs(sys.hamiltonian(out.x, out.p) - h0)
        return out, FlowInfo(energy_drift=drift, n_steps=n_steps)
    return out


def flow_lifted(sys: TonelliSystem, z: PhasePoint, t: float) -> tuple[np.ndarray, np.ndarray]:
    """Flow endpoint with the base coordinate left unwrapped (continuous lift)."""
    y0 = np.concatenate([z.x, z.p])
    y, _ = _integrate(sys, sys.rhs_flow, y0, t, slice(sys.n, 2 * sys.n))
    return y[: sys.n], y[sys.n :]


def orbit_lifted(sys: TonelliSystem, z: PhasePoint, ts) -> np.ndarray:
    """Unwrapped base coordinates of the orbit at the requested times."""
    ts = np.asarray(ts, dtype=float)
    sol = solve_ivp(
        sys.rhs_flow,
        (min(0.0, ts.min()), ts.max()),
        np.concatenate([z.x, z.p]),
        method="DOP853",
        rtol=INTEGRATOR_TOL,
        atol=INTEGRATOR_TOL,
        t_eval=ts,
    )
    if not sol.success:
        raise IntegratorFailure(sol.message)
    return sol.y[: sys.n].T


def orbit(sys: TonelliSystem, z: PhasePoint, ts) -> np.ndarray:
    """Sampled orbit: rows (t, x, p, H) at the requested times (ts[0] must be 0)."""
    ts = np.asarray(ts, dtype=float)
    sol = solve_ivp(
        sys.rhs_flow,
        (ts[0], ts[-1]),
        np.concatenate([z.x, z.p]),
        method="DOP853",
        rtol=INTEGRATOR_TOL,
        atol=INTEGRATOR_TOL,
        t_eval=ts,
    )
    if not sol.success:
        raise IntegratorFailure(sol.message)
    rows = []
    for i, t in enumerate(sol.t):
        x, p = sol.y[: sys.n, i], sol.y[sys.n :, i]
        rows.append(np.concatenate([[t], x % 1.0, p, [sys.hamiltonian(x, p)]]))
    return np.asarray(rows)


def transport_matrix(sys: TonelliSystem, z: PhasePoint, t: float, m0: np.ndarray,
                     renorm_dt: float | None = RENORM_DT):
    """Push a 2n x k matrix of tangent vectors along the orbit of z for time t.

    With ``renorm_dt`` set, columns are re-orthonormalized (QR) at fixed
    sub-intervals; the spanned subspace is unchanged but hyperbolic overflow
    is prevented.  Returns (matrix, endpoint PhasePoint).
    """
    n = sys.n
    m0 = np.asarray(m0, dtype=float)
    k = m0.shape[1]
    y = np.concatenate([z.x, z.p, m0.ravel()])
    remaining = t
    sign = 1.0 if t >= 0 else -1.0
    chunk = renorm_dt if renorm_dt else abs(t) or 1.0
    while abs(remaining) > 1e-14:
        step = sign * min(abs(remaining), chunk)
        y, _ = _integrate(sys, lambda tt, yy: sys.rhs_coupled(tt, yy, k), y, step,
                          slice(n, 2 * n))
        remaining -= step
        if renorm_dt and abs(remaining) > 1e-14:
            m = y[2 * n :].reshape(2 * n, k)
            q, _ = np.linalg.qr(m)
            y = np.concatenate([y[: 2 * n], q.ravel()])
    m = y[2 * n :].reshape(2 * n, k)
    return m, PhasePoint(y[:n], y[n : 2 * n])


def variational_transport(sys: TonelliSystem, z: PhasePoint, t: float,
                          frame: LagrangianFrame) -> LagrangianFrame:
    """Transport a Lagrangian frame at z by the linearized flow over time t."""
    m, _ = transport_matrix(sys, z, t, np.vstack([frame.X, frame.Y]))
    q, _ = np.linalg.qr(m)
    return LagrangianFrame(q[: sys.n], q[sys.n :])


def pre_green(sys: TonelliSystem, z: PhasePoint, t: float) -> SymMatrix:
    """G_t(z): the vertical at phi_{-t} z pushed forward by t, in graph form."""
    if t <= 0:
        raise ValueError("t must be positive")
    back = flow(sys, z, -t)
    frame = variational_transport(sys, back, t, vertical_frame(sys.n))
    return frame.graph()


def pre_green_minus(sys: TonelliSystem, z: PhasePoint, t: float) -> SymMatrix:
    """G_{-t}(z): the vertical at phi_t z pulled back by t, in graph form."""
    if t <= 0:
        raise ValueError("t must be positive")
    fwd = flow(sys, z, t)
    frame = variational_transport(sys, fwd, -t, vertical_frame(sys.n))
    return frame.graph()


@dataclass
class GreenResult:
    """Green-bundle ladder and limits at a single phase point."""

    point: PhasePoint
    ladder: list  # (t, G_t, G_{-t}) triples
    G_plus: SymMatrix
    G_minus: SymMatrix
    residual_plus: list
    residual_minus: list
    T_max: float
    converged_at: float
    orientation: str
    separation_min: float


def green_limits(sys: TonelliSystem, z: PhasePoint, T_max: float = 4.0,
                 tail_tol: float = 1e-8) -> GreenResult:
    """Evaluate G_t, G_{-t} on the doubling ladder t in {1, 2, 4, ...} up to T_max.

    Convergence is declared once the consecutive operator-norm gaps of both
    families drop below tail_tol; the limits are assigned as
    G_plus = lim G_t and G_minus = lim G_{-t} and validated to satisfy
    G_minus <= G_plus.  The monotonicity direction of each family is reported
    as a diagnostic, not assumed.
    """
    if T_max <= 0:
        raise ValueError("T_max must be positive")
    ts = []
    t = min(1.0, T_max)
    while t < T_max * (1 - 1e-12):
        ts.append(t)
        t *= 2
    ts.append(T_max)
    ladder = []
    res_plus, res_minus = [], []
    converged_at = None
    for t in ts:
        gt = pre_green(sys, z, t)
        gmt = pre_green_minus(sys, z, t)
        ladder.append((t, gt, gmt))
        if len(ladder) > 1:
            res_plus.append(float(np.linalg.norm(gt.a - ladder[-2][1].a, 2)))
            res_minus.append(float(np.linalg.norm(gmt.a - ladder[-2][2].a, 2)))
            if res_plus[-1] < tail_tol and res_minus[-1] < tail_tol:
                converged_at = t
                break
    if converged_at is None:
        if len(ladder) == 1:
            converged_at = ts[0]  # single-rung ladder: nothing to compare
        else:
            partial = ladder
            raise NonConvergence(
                f"tail gap {max(res_plus[-1], res_minus[-1]):.3e} above {tail_tol:g} at T_max={T_max:g}",
                partial=partial,
            )
    g_plus = ladder[-1][1]
    g_minus = ladder[-1][2]
    # When the bundles coincide (circles, separatrices) the two families
    # straddle the common limit by the residual integration error; tolerate
    # crossings up to the achieved convergence scale, then clamp to exact
    # order by splitting the difference around the midpoint.
    order_tol = 1e-6
    if res_plus:
        order_tol = max(order_tol, 4.0 * (res_plus[-1] + res_minus[-1]))
    if not g_minus.leq(g_plus, tol=order_tol):
        raise IntegratorFailure("computed limits violate G_minus <= G_plus")
    mid = 0.5 * (g_plus.a + g_minus.a)
    half = 0.5 * (g_plus.a - g_minus.a)
    vals, vecs = np.linalg.eigh(half)
    half_psd = (vecs * np.clip(vals, 0.0, None)) @ vecs.T
    g_plus = SymMatrix(mid + half_psd)
    g_minus = SymMatrix(mid - half_psd)
    # orientation diagnostic: how does each family move, and how are the two
    # families separated?
    sep = np.inf
    for t1, gt, _ in ladder:
        for t2, _, gmt in ladder:
            sep = min(sep, float(np.linalg.eigvalsh(gt.a - gmt.a)[0]))
    direction = "n/a"
    if len(ladder) > 1:
        d_plus = np.linalg.eigvalsh(ladder[-1][1].a - ladder[0][1].a)
        direction = "plus-decreasing" if d_plus[-1] <= 1e-12 else (
            "plus-increasing" if d_plus[0] >= -1e-12 else "plus-mixed")
    return GreenResult(
        point=z,
        ladder=ladder,
        G_plus=g_plus,
        G_minus=g_minus,
        residual_plus=res_plus,
        residual_minus=res_minus,
        T_max=T_max,
        converged_at=converged_at,
        orientation=direction,
        separation_min=float(sep),
    )


def modified_green(g_minus: SymMatrix, g_plus: SymMatrix) -> tuple[SymMatrix, SymMatrix]:
    """Fattened pair (2 G_- - G_+, 2 G_+ - G_-); the chain
    Gtilde_- <= G_- <= G_+ <= Gtilde_+ holds identically."""
    if not g_minus.leq(g_plus):
        raise ValueError("requires G_minus <= G_plus")
    return (
        SymMatrix(2.0 * g_minus.a - g_plus.a),
        SymMatrix(2.0 * g_plus.a - g_minus.a),
    )
