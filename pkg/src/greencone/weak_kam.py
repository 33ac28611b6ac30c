"""Action minimization, Lax-Oleinik semigroups, conjugate pairs, and the
cone-containment verification of Aubry-set paratingent directions.

The action between two torus points is minimized over broken-segment curves
(midpoint quadrature, damped Newton on the interior nodes, restarts over
integer winding lifts).  A kernel of pairwise actions over grid nodes turns
the backward/forward Lax-Oleinik semigroups into exact discrete min/max
convolutions; their fixed points (up to the critical drift c t) are the
weak-KAM solutions.  A conjugate pair (u, w) localizes the Aubry set as the
argmin of u - w lifted by du; ``verify_theorem`` tests every finite-scale
paratingent direction of that set against the epsilon-fattened cone between
the Green bundles.
"""

from __future__ import annotations

import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ConfigError,
    DimensionMismatch,
    EmptyWindow,
    NonConvergence,
)
from .green_dynamics import (
    GreenResult,
    PhasePoint,
    TonelliSystem,
    flow_lifted,
    green_limits,
    modified_green,
    orbit_lifted,
    pre_green,
    pre_green_minus,
)
from .semiconcavity import (
    ArgminSet,
    SampledFunction,
    ViolationReport,
    check_semiconcave,
    check_semiconvex,
    empirical_paratingent,
    extract_argmin,
    torus_lift,
)
from .symplectic_cones import ConePair, SymMatrix, TangentVector, sg_value

KERNEL_MAGIC = b"GCKERN01"
# Per-axis node budgets for kernel construction.
KERNEL_BUDGET = {1: 2048, 2: 64}
# Winding window: restarts over integer lifts with |m|_inf <= WINDING_WINDOW.
WINDING_WINDOW = 2
# Default interior-segment counts.
N_SEGMENTS_KERNEL = 48
N_SEGMENTS_ACTION = 32


# ---------------------------------------------------------------------------
# grid functions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GridFunction:
    """Real values on the uniform periodic grid with nodes i / resolution."""

    n: int
    resolution: int
    values: np.ndarray

    def __post_init__(self):
        if self.n not in (1, 2):
            raise ConfigError("only tori of dimension 1 and 2 are supported")
        if self.resolution < 16:
            raise ConfigError("resolution must be at least 16")
        values = np.asarray(self.values, dtype=float)
        expected = (self.resolution,) * self.n
        if values.shape != expected:
            raise DimensionMismatch(f"values shape {values.shape} != {expected}")
        if not np.all(np.isfinite(values)):
            raise ValueError("grid values must be finite")
        object.__setattr__(self, "values", values)

    @property
    def n_nodes(self) -> int:
        return self.resolution**self.n

    def nodes(self) -> np.ndarray:
        """Node coordinates, row-major over axes, shape (n_nodes, n)."""
        axes = [np.arange(self.resolution) / self.resolution] * self.n
        grids = np.meshgrid(*axes, indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=1)

    def flat(self) -> np.ndarray:
        return self.values.ravel()


def grid_function(n: int, resolution: int, flat_values) -> GridFunction:
    flat_values = np.asarray(flat_values, dtype=float)
    return GridFunction(n, resolution, flat_values.reshape((resolution,) * n))


# ---------------------------------------------------------------------------
# batched trajectory minimization
# ---------------------------------------------------------------------------

def _batch_terms(sys: TonelliSystem, mid: np.ndarray, slope: np.ndarray, order: int):
    """Lagrangian terms over a (B, N, n) batch of segment midpoints/slopes.

    order 0: L only; order 2 adds (Lx, Lv, Lxx, Lxv, Lvv).  Mechanical
    systems evaluate in closed form; the general path loops.
    """
    if sys.is_mechanical:
        c = sys.c
        l_val = 0.5 * np.sum(slope * slope, axis=-1) - sys.potential(mid) - slope @ c
        if order == 0:
            return (l_val,)
        b, nseg, n = mid.shape
        lx = -np.asarray(sys.d_potential(mid), dtype=float)
        lv = slope - c
        lxx = -np.asarray(sys.d2_potential(mid), dtype=float)
        lxv = np.zeros((b, nseg, n, n))
        lvv = np.broadcast_to(np.eye(n), (b, nseg, n, n))
        return l_val, lx, lv, lxx, lxv, lvv
    b, nseg, n = mid.shape
    l_val = np.empty((b, nseg))
    lx = np.empty((b, nseg, n))
    lv = np.empty((b, nseg, n))
    lxx = np.empty((b, nseg, n, n))
    lxv = np.empty((b, nseg, n, n))
    lvv = np.empty((b, nseg, n, n))
    for i in range(b):
        for j in range(nseg):
            lval, lxi, lvi, lxxi, lxvi, lvvi = sys.lagrangian_derivs(mid[i, j], slope[i, j])
            l_val[i, j] = lval
            lx[i, j] = lxi
            lv[i, j] = lvi
            lxx[i, j] = lxxi
            lxv[i, j] = lxvi
            lvv[i, j] = lvvi
    if order == 0:
        return (l_val,)
    return l_val, lx, lv, lxx, lxv, lvv


def _action_values(sys, gamma, dt):
    mid = 0.5 * (gamma[:, :-1] + gamma[:, 1:])
    slope = (gamma[:, 1:] - gamma[:, :-1]) / dt
    (l_val,) = _batch_terms(sys, mid, slope, order=0)
    return np.sum(l_val, axis=1) * dt


def _thomas_scalar(d, e, rhs, floor):
    """Tridiagonal solve, batched over axis 0; returns (delta, positive_pivots)."""
    b, m = d.shape
    dhat = np.empty_like(d)
    y = np.empty_like(rhs)
    dhat[:, 0] = d[:, 0]
    y[:, 0] = rhs[:, 0]
    ok = d[:, 0] > floor
    safe = np.where(np.abs(dhat[:, 0]) > 1e-300, dhat[:, 0], 1.0)
    for a in range(1, m):
        w = e[:, a - 1] / safe
        dhat[:, a] = d[:, a] - e[:, a - 1] * w
        y[:, a] = rhs[:, a] - w * y[:, a - 1]
        ok &= dhat[:, a] > floor
        safe = np.where(np.abs(dhat[:, a]) > 1e-300, dhat[:, a], 1.0)
    delta = np.empty_like(rhs)
    delta[:, m - 1] = y[:, m - 1] / np.where(np.abs(dhat[:, m - 1]) > 1e-300, dhat[:, m - 1], 1.0)
    for a in range(m - 2, -1, -1):
        da = np.where(np.abs(dhat[:, a]) > 1e-300, dhat[:, a], 1.0)
        delta[:, a] = (y[:, a] - e[:, a] * delta[:, a + 1]) / da
    return delta, ok


def _sym2_min_eig(m):
    """Smallest eigenvalue of symmetric 2x2 matrices, batched."""
    half_tr = 0.5 * (m[..., 0, 0] + m[..., 1, 1])
    rad = np.sqrt(0.25 * (m[..., 0, 0] - m[..., 1, 1]) ** 2 + m[..., 0, 1] * m[..., 1, 0])
    return half_tr - rad


def _solve2(a, b):
    """Cramer solve for batched 2x2 systems with vector rhs."""
    det = a[..., 0, 0] * a[..., 1, 1] - a[..., 0, 1] * a[..., 1, 0]
    det = np.where(np.abs(det) > 1e-300, det, 1.0)
    x0 = (b[..., 0] * a[..., 1, 1] - b[..., 1] * a[..., 0, 1]) / det
    x1 = (a[..., 0, 0] * b[..., 1] - a[..., 1, 0] * b[..., 0]) / det
    return np.stack([x0, x1], axis=-1)


def _solve2_mat(a, b):
    """Cramer solve for batched 2x2 systems with 2x2 matrix rhs."""
    return np.stack([_solve2(a, b[..., 0]), _solve2(a, b[..., 1])], axis=-1)


def _solve_vec(a, b):
    if a.shape[-1] == 2:
        return _solve2(a, b)
    return np.linalg.solve(a, b[..., None])[..., 0]


def _min_eig_block(m):
    if m.shape[-1] == 2:
        return _sym2_min_eig(m)
    return np.linalg.eigvalsh(m)[..., 0]


def _solve_mat(a, b):
    if a.shape[-1] == 2:
        return _solve2_mat(a, b)
    return np.linalg.solve(a, b)


def _thomas_block(diag, off, rhs, floor):
    """Block-tridiagonal solve, batched; pivot blocks must stay positive definite."""
    b, m, n, _ = diag.shape
    hhat = np.empty_like(diag)
    y = np.empty_like(rhs)
    hhat[:, 0] = diag[:, 0]
    y[:, 0] = rhs[:, 0]
    ok = _min_eig_block(diag[:, 0]) > floor
    for a in range(1, m):
        w = _solve_mat(hhat[:, a - 1], off[:, a - 1])
        et = np.swapaxes(off[:, a - 1], -1, -2)
        hhat[:, a] = diag[:, a] - et @ w
        y[:, a] = rhs[:, a] - np.einsum("bij,bj->bi", et, _solve_vec(hhat[:, a - 1], y[:, a - 1]))
        ok &= _min_eig_block(hhat[:, a]) > floor
    delta = np.empty_like(rhs)
    delta[:, m - 1] = _solve_vec(hhat[:, m - 1], y[:, m - 1])
    for a in range(m - 2, -1, -1):
        delta[:, a] = _solve_vec(
            hhat[:, a], y[:, a] - np.einsum("bij,bj->bi", off[:, a], delta[:, a + 1])
        )
    return delta, ok


def _batch_minimize(sys, x0, x1, t, n_seg, init=None, gtol=1e-9, max_iter=80):
    """Damped Newton over interior nodes of broken-segment curves (batched).

    x0, x1: (B, n) lifted endpoints.  The Levenberg shift is per-entry and
    raised only when elimination pivots lose positivity or a step is
    rejected, so nearly-degenerate entries (conjugate-point directions) keep
    genuine Newton steps.  Returns (values, curves, grad_inf, converged);
    curves have shape (B, n_seg + 1, n) and include endpoints.
    """
    x0 = np.atleast_2d(np.asarray(x0, dtype=float))
    x1 = np.atleast_2d(np.asarray(x1, dtype=float))
    b, n = x0.shape
    dt = t / n_seg
    if init is None:
        ramp = np.linspace(0.0, 1.0, n_seg + 1)[None, :, None]
        gamma = x0[:, None, :] * (1 - ramp) + x1[:, None, :] * ramp
    else:
        gamma = np.array(init, dtype=float)
        gamma[:, 0] = x0
        gamma[:, -1] = x1
    f_cur = _action_values(sys, gamma, dt)
    mu = np.zeros(b)
    converged = np.zeros(b, dtype=bool)
    grad_inf = np.full(b, np.inf)
    scale = 2.0 / dt
    mu_floor = 1e-8 * scale
    piv_floor = 1e-12 * scale
    eye = np.eye(n)
    for _ in range(max_iter):
        mid = 0.5 * (gamma[:, :-1] + gamma[:, 1:])
        slope = (gamma[:, 1:] - gamma[:, :-1]) / dt
        _, lx, lv, lxx, lxv, lvv = _batch_terms(sys, mid, slope, order=2)
        grad = 0.5 * dt * (lx[:, :-1] + lx[:, 1:]) + (lv[:, :-1] - lv[:, 1:])
        grad_inf = np.max(np.abs(grad), axis=(1, 2))
        converged |= grad_inf <= gtol
        if np.all(converged):
            break
        if n == 1:
            d = (
                0.25 * dt * (lxx[:, :-1, 0, 0] + lxx[:, 1:, 0, 0])
                + (lvv[:, :-1, 0, 0] + lvv[:, 1:, 0, 0]) / dt
            )
            e = 0.25 * dt * lxx[:, 1:-1, 0, 0] - lvv[:, 1:-1, 0, 0] / dt
            g = grad[:, :, 0]
            for _attempt in range(8):
                delta, ok = _thomas_scalar(d + mu[:, None], e, -g, piv_floor)
                if np.all(ok | converged):
                    break
                mu = np.where(ok, mu, np.maximum(mu * 10.0, mu_floor))
            delta = delta[:, :, None]
        else:
            lxv_sym = 0.5 * (lxv + np.swapaxes(lxv, -1, -2))
            diag = (
                0.25 * dt * (lxx[:, :-1] + lxx[:, 1:])
                + (lvv[:, :-1] + lvv[:, 1:]) / dt
                + (lxv_sym[:, :-1] - lxv_sym[:, 1:])
            )
            lxv_asym = 0.5 * (lxv - np.swapaxes(lxv, -1, -2))
            off = 0.25 * dt * lxx[:, 1:-1] + lxv_asym[:, 1:-1] - lvv[:, 1:-1] / dt
            off = 0.5 * (off + np.swapaxes(off, -1, -2))
            for _attempt in range(8):
                shifted = diag + mu[:, None, None, None] * eye
                delta, ok = _thomas_block(shifted, off, -grad, piv_floor)
                if np.all(ok | converged):
                    break
                mu = np.where(ok, mu, np.maximum(mu * 10.0, mu_floor))
        descent = np.sum(grad * delta, axis=(1, 2))
        # entries whose predicted decrease is below the roundoff floor of F
        # are at the numerical minimum already
        floor_hit = ~converged & (np.abs(descent) <= 1e-14 * (1.0 + np.abs(f_cur)))
        converged |= floor_hit
        if np.all(converged):
            break
        alpha = np.ones(b)
        remaining = ~converged
        for _ls in range(30):
            if not np.any(remaining):
                break
            cand = gamma.copy()
            cand[:, 1:-1] += alpha[:, None, None] * delta
            f_cand = _action_values(sys, cand, dt)
            ok_ls = remaining & (f_cand <= f_cur + 1e-4 * alpha * descent)
            gamma[ok_ls, 1:-1] = cand[ok_ls, 1:-1]
            f_cur[ok_ls] = f_cand[ok_ls]
            remaining &= ~ok_ls
            alpha[remaining] *= 0.5
        mu = np.where(remaining, np.maximum(mu * 10.0, mu_floor), mu * 0.1)
    return f_cur, gamma, grad_inf, converged


# ---------------------------------------------------------------------------
# the action function
# ---------------------------------------------------------------------------

def _winding_lattice(n: int, window: int = WINDING_WINDOW) -> np.ndarray:
    axes = [np.arange(-window, window + 1)] * n
    grids = np.meshgrid(*axes, indexing="ij")
    lattice = np.stack([g.ravel() for g in grids], axis=1).astype(float)
    order = np.argsort(np.einsum("md,md->m", lattice, lattice), kind="stable")
    return lattice[order]


def action(sys: TonelliSystem, x, y, t: float, n_segments: int = N_SEGMENTS_ACTION,
           winding: int = WINDING_WINDOW):
    """Minimal Lagrangian action from x to y in time t, with its discrete curve.

    Minimizes the broken-segment discretization over interior nodes by damped
    Newton, restarting over the integer winding lifts y + m, |m|_inf <=
    ``winding``; returns (value, curve) for the best converged restart.
    """
    if not 0.1 <= t <= 10.0:
        raise ConfigError("t outside [0.1, 10]; compose via the semigroup property")
    if n_segments < 16:
        raise ConfigError("need at least 16 segments")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    lattice = _winding_lattice(sys.n, winding)
    x0 = np.broadcast_to(x, lattice.shape).copy()
    x1 = y[None, :] + lattice
    vals, curves, _, conv = _batch_minimize(sys, x0, x1, t, n_segments)
    if not np.any(conv):
        raise NonConvergence(
            "action minimization failed for every winding restart",
            partial=(vals, curves),
        )
    vals = np.where(conv, vals, np.inf)
    best = int(np.argmin(vals))
    return float(vals[best]), curves[best]


def _action_local(sys, x0_lift, x1_lift, t, n_segments, init, gtol=1e-11):
    """Locally minimized action from a supplied initial curve (no restarts)."""
    vals, curves, ginf, conv = _batch_minimize(
        sys,
        np.atleast_2d(x0_lift),
        np.atleast_2d(x1_lift),
        t,
        n_segments,
        init=init[None] if init.ndim == 2 else init,
        gtol=gtol,
        max_iter=120,
    )
    if not conv[0]:
        raise NonConvergence(f"local action minimization stalled (|grad|={ginf[0]:.2e})")
    return float(vals[0]), curves[0]


# ---------------------------------------------------------------------------
# the action kernel
# ---------------------------------------------------------------------------

@dataclass
class ActionKernel:
    """Pairwise actions A^{t_step}(x_i, x_j) over grid nodes.

    K[i, j] is the minimum over the winding window; ``winding`` stores the
    per-entry argmin lift.
    """

    n: int
    resolution: int
    t_step: float
    K: np.ndarray
    winding: np.ndarray
    n_segments: int

    @property
    def n_nodes(self) -> int:
        return self.resolution**self.n


def _potential_max(sys: TonelliSystem) -> float:
    res = 4096 if sys.n == 1 else 128
    axes = [np.arange(res) / res] * sys.n
    grids = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=1)
    return float(np.max(sys.potential(pts))) if sys.is_mechanical else 0.0


def _kernel_rows_1d(sys, resolution, t_step, n_seg, rows, vmax, gtol):
    """March the target offset over [-3, 3] for a block of start rows.

    Consecutive sweeps differ by one grid spacing, so each warm-started
    Newton typically converges in one or two iterations.  Candidates outside
    the winding window are masked; sweeps whose Jensen lower bound cannot
    beat the current best are skipped.
    """
    r = resolution
    nrows = rows.shape[0]
    xs = rows[:, None].astype(float) / r
    k_block = np.full((nrows, r), np.inf)
    w_block = np.zeros((nrows, r), dtype=np.int8)
    c_shift = float(sys.c[0])
    ramp = np.linspace(0.0, 1.0, n_seg + 1)[None, :, None]
    for direction in (1, -1):
        gamma = None
        d_of_gamma = 0.0
        ks = range(0, 3 * r) if direction == 1 else range(-1, -3 * r, -1)
        for k in ks:
            offset = k / r
            target_idx = (rows + k) % r
            m_int = (rows + k - target_idx) // r
            mask = np.abs(m_int) <= WINDING_WINDOW
            if not np.any(mask):
                continue
            bound = 0.5 * offset**2 / t_step - c_shift * offset - vmax * t_step
            if abs(k) > r:
                current = k_block[np.arange(nrows), target_idx]
                improvable = mask & (bound < current - 1e-12)
                if not np.any(improvable):
                    if direction * offset > direction * c_shift * t_step and abs(k) > r + 1:
                        break  # bound grows monotonically from here on
                    continue
            x1 = xs + offset
            if gamma is None:
                init = None
            else:
                init = gamma + (offset - d_of_gamma) * ramp
            vals, gamma, ginf, conv = _batch_minimize(
                sys, xs, x1, t_step, n_seg, init=init, gtol=gtol
            )
            d_of_gamma = offset
            if not np.all(conv):
                bad = np.flatnonzero(~conv)
                raise NonConvergence(
                    f"kernel entries failed to converge at offset {offset:+.4f}, rows {rows[bad][:5]}"
                )
            improved = mask & (vals < k_block[np.arange(nrows), target_idx])
            k_block[improved, target_idx[improved]] = vals[improved]
            w_block[improved, target_idx[improved]] = m_int[improved]
    return k_block, w_block


def _build_kernel_1d(sys, resolution, t_step, n_seg, threads, gtol):
    r = resolution
    vmax = _potential_max(sys)
    all_rows = np.arange(r)
    n_blocks = max(1, int(threads))
    blocks = np.array_split(all_rows, n_blocks)
    k_full = np.empty((r, r))
    w_full = np.empty((r, r), dtype=np.int8)

    def work(rows):
        return _kernel_rows_1d(sys, r, t_step, n_seg, rows, vmax, gtol)

    if n_blocks == 1:
        results = [work(blocks[0])]
    else:
        with ThreadPoolExecutor(max_workers=n_blocks) as pool:
            results = list(pool.map(work, blocks))
    for rows, (kb, wb) in zip(blocks, results):
        k_full[rows] = kb
        w_full[rows] = wb
    return k_full, w_full


def _build_kernel_nd(sys, resolution, t_step, n_seg, gtol):
    """Generic kernel over all node pairs, one batch per winding lift."""
    r = resolution
    n = sys.n
    axes = [np.arange(r) / r] * n
    grids = np.meshgrid(*axes, indexing="ij")
    nodes = np.stack([g.ravel() for g in grids], axis=1)
    m_nodes = nodes.shape[0]
    vmax = _potential_max(sys)
    starts = np.repeat(nodes, m_nodes, axis=0)
    targets = np.tile(nodes, (m_nodes, 1))
    k_flat = np.full(m_nodes * m_nodes, np.inf)
    w_flat = np.zeros((m_nodes * m_nodes, n), dtype=np.int8)
    chunk = max(1, 8_388_608 // max(1, (n_seg + 1) * n * 8))
    base_curves = None  # minimizers of the first (innermost) winding, reused as inits
    base_m = None
    ramp = np.linspace(0.0, 1.0, n_seg + 1)[None, :, None]
    for m_vec in _winding_lattice(n):
        lifted = targets + m_vec
        disp = lifted - starts
        bound = (
            0.5 * np.einsum("bd,bd->b", disp, disp) / t_step
            - disp @ sys.c
            - vmax * t_step
        )
        todo = np.flatnonzero(bound < k_flat - 1e-12)
        curves_out = np.empty((m_nodes * m_nodes, n_seg + 1, n)) if base_curves is None else None
        for lo in range(0, todo.size, chunk):
            sel = todo[lo : lo + chunk]
            init = None
            if base_curves is not None:
                init = base_curves[sel] + ramp * (m_vec - base_m)[None, None, :]
            vals, curves, _, conv = _batch_minimize(
                sys, starts[sel], lifted[sel], t_step, n_seg, init=init, gtol=gtol
            )
            if not np.all(conv):
                raise NonConvergence("kernel entries failed to converge")
            better = vals < k_flat[sel]
            k_flat[sel[better]] = vals[better]
            w_flat[sel[better]] = m_vec.astype(np.int8)
            if curves_out is not None:
                curves_out[sel] = curves
        if curves_out is not None:
            base_curves = curves_out
            base_m = m_vec.copy()
    return k_flat.reshape(m_nodes, m_nodes), w_flat.reshape(m_nodes, m_nodes, n)


def build_kernel(sys: TonelliSystem, resolution: int, t_step: float,
                 n_segments: int | None = None, threads: int = 1,
                 gtol: float = 1e-9) -> ActionKernel:
    """Precompute A^{t_step}(x_i, x_j) for all grid node pairs."""
    if resolution < 16:
        raise ConfigError("resolution must be at least 16")
    if resolution > KERNEL_BUDGET[sys.n]:
        raise ConfigError(
            f"resolution {resolution} exceeds the kernel budget {KERNEL_BUDGET[sys.n]} for n={sys.n}"
        )
    if not 0.1 <= t_step <= 10.0:
        raise ConfigError("t_step outside [0.1, 10]")
    n_seg = n_segments or N_SEGMENTS_KERNEL
    if sys.n == 1:
        k, w = _build_kernel_1d(sys, resolution, t_step, n_seg, threads, gtol)
    else:
        k, w = _build_kernel_nd(sys, resolution, t_step, n_seg, gtol)
    return ActionKernel(
        n=sys.n, resolution=resolution, t_step=t_step, K=k, winding=w, n_segments=n_seg
    )


def save_kernel(kernel: ActionKernel, path) -> None:
    """Binary kernel format: magic 'GCKERN01', then little-endian u32 n,
    u32 resolution, f64 t_step, then the matrix row-major float64."""
    with open(path, "wb") as fh:
        fh.write(KERNEL_MAGIC)
        fh.write(struct.pack("<II d", kernel.n, kernel.resolution, kernel.t_step))
        fh.write(np.ascontiguousarray(kernel.K, dtype="<f8").tobytes())


def load_kernel(path) -> ActionKernel:
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != KERNEL_MAGIC:
            raise ConfigError(f"bad kernel magic {magic!r}")
        n, resolution, t_step = struct.unpack("<II d", fh.read(16))
        m = resolution**n
        data = np.frombuffer(fh.read(m * m * 8), dtype="<f8").reshape(m, m)
    return ActionKernel(
        n=n, resolution=resolution, t_step=t_step, K=data.copy(),
        winding=np.zeros((m, m), dtype=np.int8), n_segments=0,
    )


# ---------------------------------------------------------------------------
# Lax-Oleinik semigroups
# ---------------------------------------------------------------------------

def lax_oleinik(kernel: ActionKernel, u: np.ndarray) -> np.ndarray:
    """Backward semigroup on flat node values: (T u)(y_j) = min_i u_i + K[i, j]."""
    u = np.asarray(u, dtype=float).ravel()
    if u.shape[0] != kernel.n_nodes:
        raise DimensionMismatch("grid/kernel resolution mismatch")
    return np.min(u[:, None] + kernel.K, axis=0)


def lax_oleinik_forward(kernel: ActionKernel, u: np.ndarray) -> np.ndarray:
    """Forward semigroup: (T+ u)(x_i) = max_j u_j - K[i, j]."""
    u = np.asarray(u, dtype=float).ravel()
    if u.shape[0] != kernel.n_nodes:
        raise DimensionMismatch("grid/kernel resolution mismatch")
    return np.max(u[None, :] - kernel.K, axis=1)


# ---------------------------------------------------------------------------
# weak KAM solutions and conjugate pairs
# ---------------------------------------------------------------------------

@dataclass
class WeakKAMSolution:
    u: GridFunction
    c: float
    residual: float
    t_step: float
    c_spread: float
    iterations: int


def weak_kam_solve(sys: TonelliSystem, resolution: int, t_step: float,
                   max_iter: int = 4000, tol: float = 1e-9,
                   kernel: ActionKernel | None = None,
                   n_segments: int | None = None, threads: int = 1) -> WeakKAMSolution:
    """Fixed point of u = T u + c t on the grid, normalized to u(x_0) = 0.

    The critical constant is estimated from the mean decrement per step;
    oscillation (residual non-monotone for 50 iterations) switches the
    iteration to Krasnoselskii averaging.
    """
    if kernel is None:
        kernel = build_kernel(sys, resolution, t_step, n_segments, threads)
    m = kernel.n_nodes
    u = np.zeros(m)
    best = np.inf
    stall = 0
    averaging = False
    change = np.inf
    c_est = 0.0
    it = 0
    for it in range(1, max_iter + 1):
        v = lax_oleinik(kernel, u)
        c_est = -float(np.mean(v - u)) / t_step
        v = v - v[0]
        change = float(np.max(np.abs(v - u)))
        u_next = 0.5 * (u + v) if averaging else v
        if change < tol:
            u = u_next
            break
        if change < best * (1 - 1e-3):
            best = change
            stall = 0
        else:
            stall += 1
            if stall >= 50:
                averaging = True
        u = u_next
    else:
        raise NonConvergence(
            f"weak KAM iteration change {change:.3e} above {tol:g} after {max_iter} steps",
            partial=u,
        )
    tu = lax_oleinik(kernel, u)
    decrement = (u - tu) / t_step
    c_final = float(np.mean(decrement))
    residual = float(np.max(np.abs(u - (tu + c_final * t_step))))
    spread = float(np.max(decrement) - np.min(decrement))
    return WeakKAMSolution(
        u=grid_function(kernel.n, kernel.resolution, u),
        c=c_final,
        residual=residual,
        t_step=t_step,
        c_spread=spread,
        iterations=it,
    )


def grid_gradient(values: GridFunction) -> np.ndarray:
    """Central-difference gradients with kink exclusion, flat (n_nodes, n).

    A node is smooth when one-sided and central differences agree within
    1e-3 plus twice the median curvature scale |D2 u| dx (the smooth-point
    disagreement is |u''| dx / 2, so the threshold must track resolution);
    kinks get NaN.
    """
    vals = values.values
    r = values.resolution
    dx = 1.0 / r
    out = np.empty((values.n_nodes, values.n))
    smooth = np.ones(vals.shape, dtype=bool)
    grads = []
    for axis in range(values.n):
        up = np.roll(vals, -1, axis=axis)
        dn = np.roll(vals, 1, axis=axis)
        central = (up - dn) / (2 * dx)
        fwd = (up - vals) / dx
        bwd = (vals - dn) / dx
        d2 = np.abs(up - 2 * vals + dn) / dx**2
        tol_sm = 1e-3 + 2.0 * float(np.median(d2)) * dx
        smooth &= (np.abs(fwd - central) <= tol_sm) & (np.abs(bwd - central) <= tol_sm)
        grads.append(central)
    for axis, central in enumerate(grads):
        g = central.copy()
        g[~smooth] = np.nan
        out[:, axis] = g.ravel()
    return out


@dataclass
class ConjugatePairData:
    solution: WeakKAMSolution
    w: GridFunction
    gap: GridFunction
    I_set: ArgminSet
    I_indices: np.ndarray
    lipschitz: float
    w_residual: float


def conjugate_pair(sys: TonelliSystem, solution: WeakKAMSolution,
                   kernel: ActionKernel | None = None, tol: float = 1e-9,
                   max_iter: int = 4000, i_set_floor: float | None = None,
                   threads: int = 1) -> ConjugatePairData:
    """Forward solution w <= u, the aligned gap u - w, and the lifted argmin set.

    w is the fixed point of w = T+ w - c t reached from w_0 = u (monotone
    decreasing).  The argmin threshold gets an absolute floor (solver noise)
    on top of the relative policy; gradients come from central differences
    at smooth nodes only.
    """
    if solution.residual > max(10 * tol, 1e-6):
        raise ConfigError("solution residual too large for conjugate-pair extraction")
    if kernel is None:
        kernel = build_kernel(sys, solution.u.resolution, solution.t_step, threads=threads)
    u = solution.u.flat()
    c_t = solution.c * solution.t_step
    w = u.copy()
    change = np.inf
    for _ in range(max_iter):
        # clamp to the conjugacy bound w <= u: the estimated critical constant
        # carries residual-level error that would otherwise drift the iterate
        # upward by ~iterations * |c_err| * t_step
        w_next = np.minimum(lax_oleinik_forward(kernel, w) - c_t, u)
        change = float(np.max(np.abs(w_next - w)))
        w = w_next
        if change < tol:
            break
    else:
        raise NonConvergence(f"forward iteration change {change:.3e} above {tol:g}", partial=w)
    w_res = float(np.max(np.abs(w - (lax_oleinik_forward(kernel, w) - c_t))))
    if np.max(w - u) > 1e-8:
        raise NonConvergence(f"forward solution exceeds u by {np.max(w - u):.3e}")
    gap = u - w
    gap -= np.min(gap)
    gf = grid_function(kernel.n, kernel.resolution, gap)
    d2_scale = _median_second_difference(gf)
    floor = i_set_floor if i_set_floor is not None else max(
        4.0 * d2_scale, 10.0 * (solution.residual + w_res), 1e-12
    )
    grads = grid_gradient(solution.u)
    idx, _ = extract_argmin(None, gap, grads, eps_abs=floor)
    if idx.size == 0:
        raise NonConvergence("argmin extraction produced an empty set")
    nodes = solution.u.nodes()
    i_set = ArgminSet(nodes[idx], grads[idx])
    lip = _lipschitz_constant(i_set)
    return ConjugatePairData(
        solution=solution,
        w=grid_function(kernel.n, kernel.resolution, w),
        gap=gf,
        I_set=i_set,
        I_indices=idx,
        lipschitz=lip,
        w_residual=w_res,
    )


def _median_second_difference(gf: GridFunction) -> float:
    vals = gf.values
    tot = 0.0
    for axis in range(gf.n):
        d2 = np.abs(np.roll(vals, -1, axis=axis) - 2 * vals + np.roll(vals, 1, axis=axis))
        tot = max(tot, float(np.median(d2)))
    return tot


def _lipschitz_constant(i_set: ArgminSet, cap: int = 400) -> float:
    m = i_set.m
    if m < 2:
        return 0.0
    step = max(1, m // cap)
    xs = i_set.xs[::step]
    ps = i_set.ps[::step]
    best = 0.0
    for i in range(xs.shape[0] - 1):
        dx = torus_lift(xs[i + 1 :] - xs[i])
        dp = ps[i + 1 :] - ps[i]
        nx = np.linalg.norm(dx, axis=1)
        np_ = np.linalg.norm(dp, axis=1)
        ok = nx > 1e-12
        if np.any(ok):
            best = max(best, float(np.max(np_[ok] / nx[ok])))
    return best


# ---------------------------------------------------------------------------
# action-Hessian cross-check (Green bundles from second derivatives)
# ---------------------------------------------------------------------------

@dataclass
class HessianCheckReport:
    T: float
    fd_22: np.ndarray
    fd_11: np.ndarray
    green_T: SymMatrix
    green_minus_T: SymMatrix
    rel_22: float
    rel_11: float
    richardson_22: float
    richardson_11: float


def _fd_hessian(f, base, h):
    """Dense symmetric finite-difference Hessian of a scalar function."""
    n = base.shape[0]
    out = np.empty((n, n))
    for a in range(n):
        ea = np.zeros(n)
        ea[a] = h
        out[a, a] = (f(base + ea) - 2.0 * f(base) + f(base - ea)) / h**2
        for bidx in range(a + 1, n):
            eb = np.zeros(n)
            eb[bidx] = h
            out[a, bidx] = out[bidx, a] = (
                f(base + ea + eb) - f(base + ea - eb) - f(base - ea + eb) + f(base - ea - eb)
            ) / (4 * h**2)
    return out


def action_hessian_check(sys: TonelliSystem, z: PhasePoint, T: float,
                         h_fd: float = 1e-4, n_segments: int | None = None) -> HessianCheckReport:
    """Compare finite-difference endpoint Hessians of A^T with pre-Green matrices.

    Along a minimizing orbit, the second derivative of the action in the
    arrival slot is G_T at the arrival point and in the departure slot is
    -G_{-T} at the departure point.  Stencil evaluations warm-start from the
    orbit curve and minimize locally (same branch as the orbit).
    """
    if not 0.1 <= T <= 10.0:
        raise ConfigError("T outside [0.1, 10]")
    n_seg = n_segments or max(64, int(round(T * 128)))
    ts = np.linspace(0.0, T, n_seg + 1)
    curve = orbit_lifted(sys, z, ts)
    x0 = curve[0]
    x1 = curve[-1]
    cache: dict[tuple, float] = {}

    def a_fn(xa, xb):
        key = (tuple(np.round(xa, 12)), tuple(np.round(xb, 12)))
        if key not in cache:
            ramp = np.linspace(0.0, 1.0, n_seg + 1)[:, None]
            init = curve + (1 - ramp) * (xa - x0)[None, :] + ramp * (xb - x1)[None, :]
            val, _ = _action_local(sys, xa, xb, T, n_seg, init)
            cache[key] = val
        return cache[key]

    fd22 = _fd_hessian(lambda yb: a_fn(x0, yb), x1, h_fd)
    fd22_2h = _fd_hessian(lambda yb: a_fn(x0, yb), x1, 2 * h_fd)
    fd11 = _fd_hessian(lambda ya: a_fn(ya, x1), x0, h_fd)
    fd11_2h = _fd_hessian(lambda ya: a_fn(ya, x1), x0, 2 * h_fd)
    z_arrive = PhasePoint(x1, flow_lifted(sys, z, T)[1])
    g_t = pre_green(sys, z_arrive, T)
    g_mt = pre_green_minus(sys, z, T)
    rel22 = float(np.max(np.abs(fd22 - g_t.a)) / max(1.0, np.max(np.abs(g_t.a))))
    rel11 = float(np.max(np.abs(-fd11 - g_mt.a)) / max(1.0, np.max(np.abs(g_mt.a))))
    rich22 = float(np.max(np.abs((4 * fd22 - fd22_2h) / 3 - fd22)))
    rich11 = float(np.max(np.abs((4 * fd11 - fd11_2h) / 3 - fd11)))
    return HessianCheckReport(
        T=T, fd_22=fd22, fd_11=fd11, green_T=g_t, green_minus_T=g_mt,
        rel_22=rel22, rel_11=rel11, richardson_22=rich22, richardson_11=rich11,
    )


# ---------------------------------------------------------------------------
# theorem verification
# ---------------------------------------------------------------------------

@dataclass
class DirectionRecord:
    i: int
    j: int
    h: list
    k: list
    margin: float
    passed: bool
    margin_modified: float
    passed_modified: bool


@dataclass
class VerifyReport:
    base: PhasePoint
    epsilon: float
    window: tuple
    n_samples: int
    directions: list
    worst_margin: float
    worst_margin_modified: float
    all_pass: bool
    all_pass_modified: bool
    vacuous: bool
    note: str
    green_T_max: float
    green_converged_at: float
    adversarial: bool

    @property
    def n_directions(self) -> int:
        return len(self.directions)


def verify_theorem(sys: TonelliSystem, pairdata: ConjugatePairData,
                   epsilon: float, window: tuple[float, float],
                   base_index: int | None = None,
                   green: GreenResult | None = None,
                   green_t_max: float = 2.0, green_tail_tol: float = 1.0,
                   adversarial: bool = False, seed: int = 0) -> VerifyReport:
    """Test empirical paratingent directions of the argmin set against the
    epsilon-fattened cone between the Green bundles at a base point.

    The Green matrices are the finite-T ladder values reported by
    ``green_limits``; each direction passes when its sg margin is at least
    -epsilon.  The same directions are also tested against the fattened
    modified-Green cone, which contains the first cone, for comparison.
    ``adversarial`` replaces the sampled momenta by random values (seeded)
    as a non-vacuousness control.
    """
    if epsilon <= 0:
        raise ConfigError("epsilon must be positive")
    dmin, dmax = window
    if not 0 < dmin < dmax:
        raise ConfigError("scale window must satisfy 0 < dmin < dmax")
    i_set = pairdata.I_set
    if base_index is None:
        gaps = pairdata.gap.flat()[pairdata.I_indices]
        base_row = int(np.argmin(gaps))
    else:
        base_row = int(base_index)
    zx = i_set.xs[base_row]
    zp = i_set.ps[base_row]
    z = PhasePoint(zx, zp)
    if green is None:
        green = green_limits(sys, z, T_max=green_t_max, tail_tol=green_tail_tol)
    n = sys.n
    eps_eye = epsilon * np.eye(n)
    cone = ConePair(SymMatrix(green.G_minus.a - eps_eye), SymMatrix(green.G_plus.a + eps_eye))
    gm_mod, gp_mod = modified_green(green.G_minus, green.G_plus)
    cone_mod = ConePair(SymMatrix(gm_mod.a - eps_eye), SymMatrix(gp_mod.a + eps_eye))
    dx = torus_lift(i_set.xs - zx)
    dp = i_set.ps - zp
    dist = np.sqrt(np.einsum("md,md->m", dx, dx) + np.einsum("md,md->m", dp, dp))
    sel = np.flatnonzero(dist <= dmax)
    xs = i_set.xs[sel]
    ps = i_set.ps[sel]
    if adversarial:
        # control: scatter the momenta off any invariant graph at the window
        # scale, so pair separations stay inside the window but chord
        # directions lean toward the vertical
        rng = np.random.default_rng(seed)
        ps = zp[None, :] + rng.uniform(-dmax, dmax, size=ps.shape)
    note = ""
    try:
        dirs = empirical_paratingent(xs, ps, dmin, dmax)
    except EmptyWindow:
        return VerifyReport(
            base=z, epsilon=epsilon, window=(dmin, dmax), n_samples=int(sel.size),
            directions=[], worst_margin=np.inf, worst_margin_modified=np.inf,
            all_pass=True, all_pass_modified=True, vacuous=True,
            note="paratingent sample is trivial (no pair in the scale window); vacuous pass",
            green_T_max=green.T_max, green_converged_at=green.converged_at,
            adversarial=adversarial,
        )
    records = []
    worst = np.inf
    worst_mod = np.inf
    for i, j, v in dirs:
        # both cones are strictly transversal after fattening, so sg is finite
        sg = sg_value(cone, v)
        sgm = sg_value(cone_mod, v)
        rec = DirectionRecord(
            i=int(sel[i]), j=int(sel[j]),
            h=[float(x) for x in v.h], k=[float(x) for x in v.k],
            margin=float(sg), passed=bool(sg >= -epsilon),
            margin_modified=float(sgm), passed_modified=bool(sgm >= -epsilon),
        )
        records.append(rec)
        worst = min(worst, rec.margin)
        worst_mod = min(worst_mod, rec.margin_modified)
    return VerifyReport(
        base=z, epsilon=epsilon, window=(dmin, dmax), n_samples=int(sel.size),
        directions=records, worst_margin=float(worst),
        worst_margin_modified=float(worst_mod),
        all_pass=all(r.passed for r in records),
        all_pass_modified=all(r.passed_modified for r in records),
        vacuous=False, note=note,
        green_T_max=green.T_max, green_converged_at=green.converged_at,
        adversarial=adversarial,
    )


@dataclass
class LocalSemiconcavityReport:
    T: float
    epsilon: float
    radius: float
    n_samples: int
    u_report: ViolationReport
    w_report: ViolationReport
    green_T: SymMatrix
    green_minus_T: SymMatrix

    @property
    def passed(self) -> bool:
        return self.u_report.passed and self.w_report.passed


def local_semiconcavity_check(sys: TonelliSystem, pairdata: ConjugatePairData,
                              base_index: int, T: float, epsilon: float,
                              radius: float, tol: float = 1e-12) -> LocalSemiconcavityReport:
    """Certify u as (G_T + eps I)-semi-concave and w against G_{-T} - eps I
    on grid samples within ``radius`` of the base point (chart-lifted)."""
    i_set = pairdata.I_set
    z = PhasePoint(i_set.xs[base_index], i_set.ps[base_index])
    g_t = pre_green(sys, z, T)
    g_mt = pre_green_minus(sys, z, T)
    a_u = SymMatrix(g_t.a + epsilon * np.eye(sys.n))
    a_w = SymMatrix(g_mt.a - epsilon * np.eye(sys.n))
    nodes = pairdata.solution.u.nodes()
    xi = torus_lift(nodes - z.x)
    sel = np.flatnonzero(np.linalg.norm(xi, axis=1) <= radius)
    du = grid_gradient(pairdata.solution.u)
    dw = grid_gradient(pairdata.w)
    u_ok = sel[~np.any(np.isnan(du[sel]), axis=1)]
    w_ok = sel[~np.any(np.isnan(dw[sel]), axis=1)]
    u_samples = SampledFunction(xi[u_ok], pairdata.solution.u.flat()[u_ok], du[u_ok], radius)
    w_samples = SampledFunction(xi[w_ok], pairdata.w.flat()[w_ok], dw[w_ok], radius)
    return LocalSemiconcavityReport(
        T=T, epsilon=epsilon, radius=radius, n_samples=int(sel.size),
        u_report=check_semiconcave(u_samples, a_u, tol=tol),
        w_report=check_semiconvex(w_samples, a_w, tol=tol),
        green_T=g_t, green_minus_T=g_mt,
    )
