"""Randomized property suites behind the cone-check and semiconcavity commands.

Each suite draws its own trials from a seeded generator, checks one statement
at a stated tolerance, and reports the worst margin seen (positive = slack
before failing).  The suites are deterministic given the seed and are reused
verbatim by the acceptance tests.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .semiconcavity import (
    AnisoBound,
    ArgminSet,
    aniso_gradient_bound,
    ball_cone_membership,
    ball_margin,
    extract_argmin,
)
from .symplectic_cones import (
    MINUS_INFINITY,
    ConePair,
    SymMatrix,
    TangentVector,
    cone_contains,
    cone_witness,
    decompose_nonneg,
    gl_graph,
    omega,
    phi_gl,
    phi_shear,
    psd_sqrt,
    reduce_degenerate,
    sg_value,
    sg_via_reduction,
    shear_graph,
)


@dataclass
class CheckRecord:
    name: str
    trials: int
    margin: float
    passed: bool
    detail: str = ""


def _random_sym(rng, n, scale=1.0):
    a = rng.standard_normal((n, n)) * scale
    return SymMatrix(0.5 * (a + a.T))


def _random_orthogonal(rng, n):
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    return q * np.sign(np.diag(r))


def _random_pair(rng, n, degenerate):
    s1 = _random_sym(rng, n)
    q = _random_orthogonal(rng, n)
    eigs = rng.uniform(0.5, 2.0, size=n)
    if degenerate:
        k = int(rng.integers(1, n)) if n > 1 else n
        eigs[:k] = 0.0
    u = q @ np.diag(eigs) @ q.T
    return ConePair(s1, SymMatrix(s1.a + 0.5 * (u + u.T)))


def _random_member(rng, pair):
    n = pair.n
    uhalf = psd_sqrt(pair.U)
    q = _random_orthogonal(rng, n)
    w = q @ np.diag(rng.uniform(0.0, 1.0, size=n)) @ q.T
    s = pair.S1.a + uhalf @ (0.5 * (w + w.T)) @ uhalf
    h = rng.standard_normal(n)
    return TangentVector(h, s @ h)


def suite_cone_equivalence(seed: int, trials: int, degenerate_fraction: float = 0.25) -> CheckRecord:
    """Membership iff nonnegative sign value, with a validated witness.

    Members v = (h, S h), S between the pair, must pass cone_contains and
    produce a witness whose post-conditions hold within 1e-8; random vectors
    with sign value below -1e-6 must get no witness.
    """
    rng = np.random.default_rng(seed)
    worst = np.inf
    rejected = 0
    for trial in range(trials):
        n = int(rng.integers(1, 6))
        degenerate = rng.uniform() < degenerate_fraction
        pair = _random_pair(rng, n, degenerate)
        v = _random_member(rng, pair)
        if not cone_contains(pair, v, tol=1e-8):
            return CheckRecord("cone_equivalence", trials, -1.0, False,
                               f"member rejected at trial {trial}")
        w = cone_witness(pair, v)
        if w is None:
            return CheckRecord("cone_equivalence", trials, -1.0, False,
                               f"no witness for member at trial {trial}")
        scale = max(1.0, float(np.linalg.norm(v.k)))
        res = float(np.max(np.abs(w.a @ v.h - v.k))) / scale
        order1 = float(np.linalg.eigvalsh(w.a - pair.S1.a)[0])
        order2 = float(np.linalg.eigvalsh(pair.S2.a - w.a)[0])
        worst = min(worst, 1e-8 - res, order1 + 1e-8, order2 + 1e-8)
        u = TangentVector(rng.standard_normal(n), rng.standard_normal(n))
        sg = sg_value(pair, u)
        if sg is not MINUS_INFINITY and sg < -1e-6:
            rejected += 1
            if cone_witness(pair, u) is not None:
                return CheckRecord("cone_equivalence", trials, -1.0, False,
                                   f"witness produced outside cone at trial {trial}")
    return CheckRecord("cone_equivalence", trials, float(worst), worst >= 0.0,
                       f"{rejected} exterior rejections")


def suite_slope_oracle_1d(seed: int, trials: int) -> CheckRecord:
    """n=1 brute-force oracle: membership iff the slope lies in [S1, S2]."""
    rng = np.random.default_rng(seed)
    mismatches = 0
    for _ in range(trials):
        s1 = rng.uniform(-2, 2)
        s2 = s1 + rng.uniform(0.1, 2.0)
        pair = ConePair(SymMatrix([[s1]]), SymMatrix([[s2]]))
        t = rng.uniform(-0.5, 1.5)
        while abs(t) < 0.01 or abs(t - 1.0) < 0.01:
            t = rng.uniform(-0.5, 1.5)
        slope = s1 + t * (s2 - s1)
        h = rng.uniform(0.1, 3.0) * (1.0 if rng.uniform() < 0.5 else -1.0)
        v = TangentVector([h], [slope * h])
        if cone_contains(pair, v) != (0.0 <= t <= 1.0):
            mismatches += 1
        if cone_contains(pair, TangentVector([0.0], [rng.uniform(0.1, 1.0)])):
            mismatches += 1
    return CheckRecord("slope_oracle_1d", trials, float(-mismatches), mismatches == 0,
                       f"{mismatches} mismatches")


def suite_well_definedness(seed: int, trials: int) -> CheckRecord:
    """Sign value independent of the splitting for degenerate pairs (1e-9)."""
    rng = np.random.default_rng(seed)
    worst = np.inf
    for _ in range(trials):
        n = int(rng.integers(2, 5))
        pair = _random_pair(rng, n, degenerate=True)
        kernel = np.linalg.eigh(pair.U.a)[1][:, 0]
        h1, h2 = rng.standard_normal(n), rng.standard_normal(n)
        v1 = TangentVector(h1, pair.S1.a @ h1)
        v2 = TangentVector(h2, pair.S2.a @ h2)
        direct = omega(v1, v2)
        shift = rng.standard_normal() * kernel
        w1 = TangentVector(h1 + shift, pair.S1.a @ (h1 + shift))
        w2 = TangentVector(h2 - shift, pair.S2.a @ (h2 - shift))
        err = abs(omega(w1, w2) - direct)
        v = TangentVector(v1.h + v2.h, v1.k + v2.k)
        sg = sg_value(pair, v)
        if sg is MINUS_INFINITY:
            return CheckRecord("well_definedness", trials, -1.0, False, "sum misclassified")
        err = max(err, abs(sg - direct))
        worst = min(worst, 1e-9 - err)
    return CheckRecord("well_definedness", trials, float(worst), worst >= 0.0)


def suite_decompose(seed: int, trials: int, n_max: int = 8) -> CheckRecord:
    """All four post-conditions of the nonneg splitting within 1e-9."""
    rng = np.random.default_rng(seed)
    worst = np.inf
    done = 0
    while done < trials:
        n = int(rng.integers(1, n_max + 1))
        y1 = rng.standard_normal(n)
        y2 = rng.standard_normal(n)
        if y1 @ y2 < 0:
            continue
        done += 1
        w1, w2 = decompose_nonneg(y1, y2)
        y = y1 + y2
        scale = max(1.0, float(np.linalg.norm(y)))
        errs = [
            float(np.max(np.abs(w1.a + w2.a - np.eye(n)))),
            float(np.max(np.abs(w1.a @ y - y1))) / scale,
            float(np.max(np.abs(w2.a @ y - y2))) / scale,
        ]
        psd = min(float(np.linalg.eigvalsh(w1.a)[0]), float(np.linalg.eigvalsh(w2.a)[0]))
        worst = min(worst, 1e-9 - max(errs), psd + 1e-9)
    return CheckRecord("decompose_nonneg", trials, float(worst), worst >= 0.0)


def suite_symplectic_invariance(seed: int, trials: int) -> CheckRecord:
    """Cone membership commutes with the shear and GL coordinate changes."""
    rng = np.random.default_rng(seed)
    for trial in range(trials):
        n = int(rng.integers(1, 5))
        pair = _random_pair(rng, n, degenerate=(trial % 5 == 0))
        v = TangentVector(rng.standard_normal(n), rng.standard_normal(n))
        inside = cone_contains(pair, v, tol=1e-9)
        c = rng.standard_normal()
        sheared = ConePair(shear_graph(pair.S1, c), shear_graph(pair.S2, c))
        if cone_contains(sheared, phi_shear(c, v), tol=1e-7) != inside:
            return CheckRecord("symplectic_invariance", trials, -1.0, False,
                               f"shear mismatch at trial {trial}")
        a = rng.standard_normal((n, n)) + 2.5 * np.eye(n)
        mapped = ConePair(gl_graph(pair.S1, a), gl_graph(pair.S2, a))
        if cone_contains(mapped, phi_gl(a, v), tol=1e-7) != inside:
            return CheckRecord("symplectic_invariance", trials, -1.0, False,
                               f"gl mismatch at trial {trial}")
    return CheckRecord("symplectic_invariance", trials, 0.0, True)


def suite_degenerate_reduction(seed: int, trials: int) -> CheckRecord:
    """Sign values through the orthogonal/Schur reduction agree with the
    direct least-squares route (1e-7 on unit-scale data)."""
    rng = np.random.default_rng(seed)
    worst = np.inf
    for _ in range(trials):
        n = int(rng.integers(2, 5))
        pair = _random_pair(rng, n, degenerate=True)
        red = reduce_degenerate(pair)
        v = _random_member(rng, pair)
        direct = sg_value(pair, v)
        via = sg_via_reduction(pair, red, v)
        scale = max(1.0, v.norm() ** 2)
        err = abs(via - direct) / scale
        worst = min(worst, 1e-7 - err)
        u = TangentVector(rng.standard_normal(n), rng.standard_normal(n))
        d2, v2 = sg_value(pair, u), sg_via_reduction(pair, red, u)
        if (d2 is MINUS_INFINITY) != (v2 is MINUS_INFINITY):
            return CheckRecord("degenerate_reduction", trials, -1.0, False,
                               "sum-membership disagreement")
        if d2 is not MINUS_INFINITY:
            worst = min(worst, 1e-7 - abs(v2 - d2) / max(1.0, u.norm() ** 2))
    return CheckRecord("degenerate_reduction", trials, float(worst), worst >= 0.0)


def suite_ball_cone(seed: int, trials: int, n_max: int = 4) -> CheckRecord:
    """Ball-form margin equals the sign value within 1e-9 (n <= n_max)."""
    rng = np.random.default_rng(seed)
    worst = np.inf
    for _ in range(trials):
        n = int(rng.integers(1, n_max + 1))
        a = _random_sym(rng, n)
        q = _random_orthogonal(rng, n)
        u = q @ np.diag(rng.uniform(0.2, 2.0, size=n)) @ q.T
        bound = AnisoBound(a, SymMatrix(a.a + 0.5 * (u + u.T)))
        v = TangentVector(rng.standard_normal(n), rng.standard_normal(n))
        sg = sg_value(ConePair(bound.A, bound.B), v)
        bm = ball_margin(bound, v)
        err = abs(bm - sg) / max(1.0, abs(sg))
        worst = min(worst, 1e-9 - err)
        if abs(sg) > 1e-9 and ball_cone_membership(bound, v) != (sg >= 0):
            return CheckRecord("ball_cone_identity", trials, -1.0, False, "membership mismatch")
    return CheckRecord("ball_cone_identity", trials, float(worst), worst >= 0.0)


def suite_concavity_shift(seed: int, trials: int) -> CheckRecord:
    """A-semi-concavity of quadratic-plus-concave test functions equals
    midpoint concavity of the shifted function on the same sample."""
    rng = np.random.default_rng(seed)
    worst = np.inf
    for _ in range(trials):
        n = int(rng.integers(1, 4))
        a = _random_sym(rng, n)
        w = rng.standard_normal(n)
        xs = rng.standard_normal((12, n))

        def f(x):
            return 0.5 * np.einsum("...d,de,...e->...", x, a.a, x) - np.abs(x @ w)

        # midpoint concavity of f - A x^2 / 2 over sample pairs
        shifted = f(xs) - 0.5 * np.einsum("id,de,ie->i", xs, a.a, xs)
        mids = 0.5 * (xs[None, :, :] + xs[:, None, :])
        mid_shift = f(mids) - 0.5 * np.einsum("ijd,de,ije->ij", mids, a.a, mids)
        excess = 0.5 * (shifted[None, :] + shifted[:, None]) - mid_shift
        worst = min(worst, 1e-9 - float(np.max(excess)))
    return CheckRecord("concavity_shift", trials, float(worst), worst >= 0.0)


def _calibrated_pair(rng, n, a_mat, b_mat, grid_xs, n_touch=5):
    """f = min of B-paraboloids and g = max of A-paraboloids, both tangent to
    a common quadratic (Hessian between A and B) at ``n_touch`` grid nodes.

    f >= g with equality exactly at the touch nodes, which therefore form the
    argmin set of f - g; both semi-concavity classes hold by construction.
    Returns (f values, f gradients, f smooth-mask, g values) on the grid.
    """
    u = b_mat - a_mat
    vals_u, vecs_u = np.linalg.eigh(u)
    uhalf = (vecs_u * np.sqrt(np.clip(vals_u, 0, None))) @ vecs_u.T
    q = _random_orthogonal(rng, n)
    w = q @ np.diag(rng.uniform(0.05, 0.95, size=n)) @ q.T
    m_mat = a_mat + uhalf @ (0.5 * (w + w.T)) @ uhalf
    b_lin = rng.standard_normal(n)
    touch_idx = rng.choice(grid_xs.shape[0], size=n_touch, replace=False)
    touch = grid_xs[touch_idx]
    phi_t = 0.5 * np.einsum("kd,de,ke->k", touch, m_mat, touch) + touch @ b_lin
    dphi_t = touch @ m_mat + b_lin

    def tangent_family(hess, xs):
        d = xs[:, None, :] - touch[None, :, :]
        vals = (
            phi_t[None, :]
            + np.einsum("kd,ikd->ik", dphi_t, d)
            + 0.5 * np.einsum("ikd,de,ike->ik", d, hess, d)
        )
        return vals, d

    fvals_all, fd = tangent_family(b_mat, grid_xs)
    which = np.argmin(fvals_all, axis=1)
    fvals = fvals_all[np.arange(grid_xs.shape[0]), which]
    fgrads = dphi_t[which] + np.einsum("id,de->ie", fd[np.arange(grid_xs.shape[0]), which], b_mat)
    gapped = np.partition(fvals_all, 1, axis=1)
    smooth = (gapped[:, 1] - gapped[:, 0]) > 1e-9
    gvals_all, _ = tangent_family(a_mat, grid_xs)
    gvals = np.max(gvals_all, axis=1)
    return fvals, fgrads, smooth, gvals


def suite_gradient_bound(seed: int, trials: int, n_max: int = 3) -> CheckRecord:
    """Anisotropic gradient bound on numerically extracted argmin sets of
    min-of-B-paraboloid / max-of-A-paraboloid pairs (margin >= -1e-6)."""
    rng = np.random.default_rng(seed)
    worst = np.inf
    sizes = []
    for _ in range(trials):
        n = int(rng.integers(1, n_max + 1))
        a = _random_sym(rng, n)
        q = _random_orthogonal(rng, n)
        u = q @ np.diag(rng.uniform(0.3, 2.0, size=n)) @ q.T
        bound = AnisoBound(a, SymMatrix(a.a + 0.5 * (u + u.T)))
        res = 21 if n == 3 else 41
        grids = np.meshgrid(*[np.linspace(-2, 2, res)] * n, indexing="ij")
        xs = np.stack([g0.ravel() for g0 in grids], axis=1)
        fv, fg, fsm, gv = _calibrated_pair(rng, n, bound.A.a, bound.B.a, xs)
        grads = np.where(fsm[:, None], fg, np.nan)
        idx, _ = extract_argmin(xs, fv - gv, grads)
        if idx.size < 2:
            continue
        sizes.append(int(idx.size))
        rep = aniso_gradient_bound(ArgminSet(xs[idx], fg[idx]), bound, tol=1e-6, torus=False)
        worst = min(worst, rep.min_margin + 1e-6)
        if not rep.passed:
            return CheckRecord("gradient_bound", trials, float(worst), False,
                               f"{len(rep.offending)} offending pairs")
    passed = worst >= 0.0 and len(sizes) >= trials // 2
    return CheckRecord("gradient_bound", trials, float(worst), passed,
                       f"{len(sizes)} nontrivial argmin sets, mean size {np.mean(sizes) if sizes else 0:.1f}")


def suite_isotropic_lipschitz(seed: int, trials: int) -> CheckRecord:
    """Isotropic case A = -C I, B = C I: the gradient bound gives the
    Lipschitz estimate |dp| <= C |dx| on the argmin set."""
    rng = np.random.default_rng(seed)
    worst = np.inf
    used = 0
    for _ in range(trials):
        n = int(rng.integers(1, 3))
        c = rng.uniform(0.5, 2.0)
        a_mat = -c * np.eye(n)
        b_mat = c * np.eye(n)
        grids = np.meshgrid(*[np.linspace(-2, 2, 41)] * n, indexing="ij")
        xs = np.stack([g0.ravel() for g0 in grids], axis=1)
        fv, fg, fsm, gv = _calibrated_pair(rng, n, a_mat, b_mat, xs)
        grads = np.where(fsm[:, None], fg, np.nan)
        idx, _ = extract_argmin(xs, fv - gv, grads)
        if idx.size < 2:
            continue
        used += 1
        pts, grs = xs[idx], fg[idx]
        for i in range(len(pts) - 1):
            dxs = pts[i + 1 :] - pts[i]
            dps = grs[i + 1 :] - grs[i]
            nx = np.linalg.norm(dxs, axis=1)
            npp = np.linalg.norm(dps, axis=1)
            ok = nx > 1e-9
            if np.any(ok):
                slack = c * nx[ok] - npp[ok] + 1e-6 * c
                worst = min(worst, float(np.min(slack)))
    return CheckRecord("isotropic_lipschitz", trials, float(worst),
                       worst >= 0.0 and used > 0, f"{used} nontrivial trials")


CONE_SUITES = (
    suite_cone_equivalence,
    suite_slope_oracle_1d,
    suite_well_definedness,
    suite_decompose,
    suite_symplectic_invariance,
    suite_degenerate_reduction,
)

SEMICONCAVITY_SUITES = (
    suite_ball_cone,
    suite_concavity_shift,
    suite_gradient_bound,
    suite_isotropic_lipschitz,
)
