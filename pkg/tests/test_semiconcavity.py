import numpy as np
import pytest

from greencone.errors import EmptyWindow, NotPositiveDefinite
from greencone.semiconcavity import (
    AnisoBound,
    ArgminSet,
    SampledFunction,
    aniso_gradient_bound,
    ball_cone_membership,
    ball_margin,
    check_semiconcave,
    check_semiconvex,
    empirical_paratingent,
    extract_argmin,
    torus_lift,
    uinv_norm,
    unorm,
)
from greencone.symplectic_cones import ConePair, SymMatrix, TangentVector, cone_contains, sg_value


def random_sym(rng, n, scale=1.0):
    a = rng.standard_normal((n, n)) * scale
    return SymMatrix(0.5 * (a + a.T))


def random_bound(rng, n):
    a = random_sym(rng, n)
    q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    u = q @ np.diag(rng.uniform(0.2, 2.0, size=n)) @ q.T
    b = SymMatrix(a.a + 0.5 * (u + u.T))
    return AnisoBound(A=a, B=b)


class TestNorms:
    def test_identity_is_euclidean(self):
        u = SymMatrix(np.eye(3))
        x = np.array([1.0, 2.0, -2.0])
        assert unorm(u, x) == pytest.approx(3.0)
        assert uinv_norm(u, x) == pytest.approx(3.0)

    def test_zero_vector(self):
        u = SymMatrix([[2.0]])
        assert unorm(u, [0.0]) == 0.0

    def test_scalar_values(self):
        u = SymMatrix([[4.0]])
        assert unorm(u, [3.0]) == pytest.approx(6.0)
        assert uinv_norm(u, [3.0]) == pytest.approx(1.5)

    def test_rejects_indefinite(self):
        with pytest.raises(NotPositiveDefinite):
            unorm(SymMatrix([[-1.0]]), [1.0])
        with pytest.raises(NotPositiveDefinite):
            uinv_norm(SymMatrix(np.diag([1.0, -0.5])), [1.0, 1.0])


class TestSemiconcave:
    def test_quadratic_equality_case(self):
        rng = np.random.default_rng(0)
        a = random_sym(rng, 2)
        xs = rng.standard_normal((20, 2))
        fs = 0.5 * np.einsum("id,de,ie->i", xs, a.a, xs)
        ls = xs @ a.a
        rep = check_semiconcave(SampledFunction(xs, fs, ls), a, tol=1e-10)
        assert rep.passed
        assert abs(rep.worst_excess) <= 1e-10

    def test_convex_fails_with_zero_modulus(self):
        xs = np.array([[0.0], [1.0]])
        fs = 0.5 * xs[:, 0] ** 2
        ls = xs
        rep = check_semiconcave(SampledFunction(xs, fs, ls), SymMatrix([[0.0]]), tol=1e-12)
        assert not rep.passed
        assert rep.worst_excess == pytest.approx(0.5)

    def test_concave_passes_zero_modulus(self):
        rng = np.random.default_rng(1)
        xs = np.sort(rng.uniform(-1, 1, size=30)).reshape(-1, 1)
        fs = -np.abs(xs[:, 0])
        ls = -np.sign(xs[:, 0]).reshape(-1, 1)
        rep = check_semiconcave(SampledFunction(xs, fs, ls), SymMatrix([[0.0]]))
        assert rep.passed

    def test_modulus_shift_equivalence(self):
        # f is A-semi-concave iff f - A x^2 / 2 is concave (checked through
        # the certificate with modulus zero on the shifted samples).
        rng = np.random.default_rng(2)
        for _ in range(20):
            n = int(rng.integers(1, 4))
            a = random_sym(rng, n)
            xs = rng.standard_normal((15, n))
            # f = quadratic A/2 + concave(-|x|-ish): A-semi-concave by construction
            w = rng.standard_normal(n)
            fs = 0.5 * np.einsum("id,de,ie->i", xs, a.a, xs) - np.abs(xs @ w)
            ls = xs @ a.a - np.sign(xs @ w)[:, None] * w[None, :]
            rep = check_semiconcave(SampledFunction(xs, fs, ls), a, tol=1e-10)
            assert rep.passed
            shifted = SampledFunction(
                xs,
                fs - 0.5 * np.einsum("id,de,ie->i", xs, a.a, xs),
                ls - xs @ a.a,
            )
            rep0 = check_semiconcave(shifted, SymMatrix(np.zeros((n, n))), tol=1e-10)
            assert rep0.passed


class TestSemiconvex:
    def test_quadratic_passes(self):
        rng = np.random.default_rng(3)
        a = random_sym(rng, 2)
        xs = rng.standard_normal((20, 2))
        fs = 0.5 * np.einsum("id,de,ie->i", xs, a.a, xs)
        ls = xs @ a.a
        rep = check_semiconvex(SampledFunction(xs, fs, ls), a, tol=1e-10)
        assert rep.passed

    def test_concave_fails(self):
        xs = np.array([[0.0], [1.0]])
        fs = -0.5 * xs[:, 0] ** 2
        ls = -xs
        rep = check_semiconvex(SampledFunction(xs, fs, ls), SymMatrix([[0.0]]), tol=1e-12)
        assert not rep.passed

    def test_linear_passes_zero(self):
        xs = np.linspace(-1, 1, 10).reshape(-1, 1)
        fs = 3.0 * xs[:, 0] + 1.0
        ls = np.full_like(xs, 3.0)
        rep = check_semiconvex(SampledFunction(xs, fs, ls), SymMatrix([[0.0]]))
        assert rep.passed


from greencone.suites import _calibrated_pair


class TestGradientBound:
    def test_singleton_vacuous(self):
        bound = AnisoBound(SymMatrix([[0.0]]), SymMatrix([[1.0]]))
        rep = aniso_gradient_bound(ArgminSet([[0.3]], [[0.1]]), bound)
        assert rep.passed
        assert rep.n_pairs == 0

    def test_scalar_shared_quadratic(self):
        # f = g = C x^2 / 2 with A <= C <= B: margin nonnegative by hand.
        a_val, b_val, c_val = -0.5, 2.0, 1.0
        bound = AnisoBound(SymMatrix([[a_val]]), SymMatrix([[b_val]]))
        xs = np.linspace(-0.2, 0.2, 9).reshape(-1, 1)
        ps = c_val * xs
        rep = aniso_gradient_bound(ArgminSet(xs, ps), bound, torus=False)
        assert rep.passed
        u = b_val - a_val
        dx_min = 0.05  # adjacent grid points give the smallest margin
        expected = 0.5 * dx_min * (np.sqrt(u) - abs(2 * c_val - a_val - b_val) / np.sqrt(u))
        assert rep.min_margin == pytest.approx(expected, rel=1e-9)

    def test_synthetic_min_max_paraboloids(self):
        # f = min of paraboloids with Hessian B, g = max of paraboloids with
        # Hessian A, calibrated on a common quadratic so the argmin of f - g
        # is a nontrivial set located by a grid oracle.
        rng = np.random.default_rng(4)
        nontrivial = 0
        for trial in range(15):
            n = int(rng.integers(1, 4))
            bound = random_bound(rng, n)
            res = 21 if n == 3 else 41
            grids = np.meshgrid(*[np.linspace(-2, 2, res)] * n, indexing="ij")
            xs = np.stack([g0.ravel() for g0 in grids], axis=1)
            fv, fg, fsm, gv = _calibrated_pair(rng, n, bound.A.a, bound.B.a, xs)
            grads = np.where(fsm[:, None], fg, np.nan)
            idx, _ = extract_argmin(xs, fv - gv, grads)
            if idx.size < 2:
                continue
            nontrivial += 1
            k_set = ArgminSet(xs[idx], fg[idx])
            rep = aniso_gradient_bound(k_set, bound, tol=1e-6, torus=False)
            assert rep.passed, (trial, rep.offending[:3])
        assert nontrivial >= 10

    def test_invariant_under_constant_shift(self):
        # the bound only reads K and gradients, so shifting f or g by a
        # constant cannot change the report
        rng = np.random.default_rng(5)
        bound = random_bound(rng, 2)
        xs = rng.uniform(-0.1, 0.1, size=(6, 2))
        ps = xs @ (0.5 * (bound.A.a + bound.B.a))
        r1 = aniso_gradient_bound(ArgminSet(xs, ps), bound, torus=False)
        r2 = aniso_gradient_bound(ArgminSet(xs, ps), bound, torus=False)
        assert r1.min_margin == r2.min_margin


class TestBallCone:
    def test_center_of_ball(self):
        rng = np.random.default_rng(6)
        for _ in range(20):
            n = int(rng.integers(1, 5))
            bound = random_bound(rng, n)
            h = rng.standard_normal(n)
            v = TangentVector(h, 0.5 * (bound.A.a + bound.B.a) @ h)
            assert ball_cone_membership(bound, v)

    def test_boundary_graphs_zero_margin(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            n = int(rng.integers(1, 5))
            bound = random_bound(rng, n)
            h = rng.standard_normal(n)
            for s in (bound.A.a, bound.B.a):
                v = TangentVector(h, s @ h)
                assert ball_margin(bound, v) == pytest.approx(0.0, abs=1e-9)

    def test_scalar_exterior(self):
        bound = AnisoBound(SymMatrix([[0.0]]), SymMatrix([[1.0]]))
        assert not ball_cone_membership(bound, TangentVector([1.0], [2.0]))

    def test_matches_cone_membership_and_sg(self):
        rng = np.random.default_rng(8)
        for _ in range(300):
            n = int(rng.integers(1, 5))
            bound = random_bound(rng, n)
            v = TangentVector(rng.standard_normal(n), rng.standard_normal(n))
            pair = ConePair(bound.A, bound.B)
            sg = sg_value(pair, v)
            bm = ball_margin(bound, v)
            assert bm == pytest.approx(sg, abs=1e-9 * max(1.0, abs(sg)))
            if abs(sg) > 1e-9:
                assert ball_cone_membership(bound, v, tol=1e-10) == cone_contains(pair, v, tol=1e-10)


class TestEmpiricalParatingent:
    def test_two_samples_antipodal(self):
        xs = np.array([[0.1], [0.2]])
        ps = np.array([[0.0], [0.05]])
        dirs = empirical_paratingent(xs, ps, 0.01, 1.0)
        assert len(dirs) == 2
        v1, v2 = dirs[0][2], dirs[1][2]
        assert np.allclose(v1.vec, -v2.vec)
        assert np.linalg.norm(v1.vec) == pytest.approx(1.0)

    def test_collinear_samples(self):
        ts = np.linspace(0, 0.04, 5)
        xs = ts.reshape(-1, 1)
        ps = 2.0 * xs
        dirs = empirical_paratingent(xs, ps, 1e-4, 1.0)
        ref = np.array([1.0, 2.0]) / np.sqrt(5.0)
        for _, _, v in dirs:
            assert np.allclose(np.abs(v.vec @ ref), 1.0, atol=1e-12)

    def test_circle_tangent_direction(self):
        # samples on the energy circle p(x) = sqrt(3 - 2 cos 2 pi x); chords at
        # scale <= 1e-2 align with the analytic tangent to 1e-2
        def p(x):
            return np.sqrt(3.0 - 2.0 * np.cos(2 * np.pi * x))

        x0 = 0.2
        xs = (x0 + np.linspace(-2e-3, 2e-3, 9)).reshape(-1, 1)
        ps = p(xs)
        dirs = empirical_paratingent(xs, ps, 1e-4, 1e-2)
        slope = 2 * np.pi * np.sin(2 * np.pi * x0) / p(x0)
        ref = np.array([1.0, slope])
        ref /= np.linalg.norm(ref)
        for _, _, v in dirs:
            assert min(np.linalg.norm(v.vec - ref), np.linalg.norm(v.vec + ref)) <= 1e-2

    def test_empty_window(self):
        xs = np.array([[0.0], [0.5]])
        ps = np.zeros((2, 1))
        with pytest.raises(EmptyWindow):
            empirical_paratingent(xs, ps, 1e-4, 1e-3)
        with pytest.raises(EmptyWindow):
            empirical_paratingent(xs[:1], ps[:1], 1e-4, 1e-3)

    def test_torus_minimal_lift(self):
        xs = np.array([[0.99], [0.01]])
        ps = np.zeros((2, 1))
        dirs = empirical_paratingent(xs, ps, 1e-3, 0.1)
        assert len(dirs) == 2
        assert abs(dirs[0][2].h[0]) == pytest.approx(1.0)


class TestTorusLift:
    def test_wraparound(self):
        assert torus_lift(0.9) == pytest.approx(-0.1)
        assert torus_lift(-0.6) == pytest.approx(0.4)
        assert np.allclose(torus_lift(np.array([0.2, 0.5])), [0.2, -0.5])


class TestExtractArgmin:
    def test_threshold_policy(self):
        vals = np.array([0.0, 1e-9, 0.5, 1.0])
        idx, thresh = extract_argmin(None, vals, None)
        assert list(idx) == [0, 1]
        assert thresh == pytest.approx(1e-6, rel=1e-3)

    def test_kink_exclusion(self):
        vals = np.array([0.0, 1e-9, 0.5])
        grads = np.array([[0.1], [np.nan], [0.2]])
        idx, _ = extract_argmin(None, vals, grads)
        assert list(idx) == [0]

    def test_absolute_floor(self):
        vals = np.array([0.0, 1e-5, 2e-5])
        idx, _ = extract_argmin(None, vals, None, eps_abs=1.5e-5)
        assert list(idx) == [0, 1]
