import math

import numpy as np
import pytest

from greencone.errors import ConfigError, EmptyWindow
from greencone.green_dynamics import (
    MechanicalSystem,
    PhasePoint,
    free_system,
    pendulum,
    product_system,
)
from greencone.weak_kam import (
    ActionKernel,
    GridFunction,
    action,
    action_hessian_check,
    build_kernel,
    conjugate_pair,
    grid_function,
    grid_gradient,
    lax_oleinik,
    lax_oleinik_forward,
    load_kernel,
    local_semiconcavity_check,
    save_kernel,
    verify_theorem,
    weak_kam_solve,
)

TWO_PI = 2.0 * math.pi


def half_pendulum(c=0.0):
    """V(x) = 0.5 cos(2 pi x): the second factor of the product system."""

    def pot(x):
        x = np.asarray(x, float)
        v = 0.5 * np.cos(TWO_PI * x)
        return v[..., 0] if v.ndim else float(v)

    def d2pot(x):
        vals = -0.5 * TWO_PI**2 * np.cos(TWO_PI * np.asarray(x, float))
        return vals[..., None] * np.eye(1)

    return MechanicalSystem(
        1,
        potential=pot,
        d_potential=lambda x: -0.5 * TWO_PI * np.sin(TWO_PI * np.asarray(x, float)),
        d2_potential=d2pot,
        c=c,
        name="half_pendulum",
    )


@pytest.fixture(scope="module")
def pendulum_artifacts():
    """Kernel, solution and conjugate pair for the plain pendulum at res 256."""
    sys_p = pendulum()
    kernel = build_kernel(sys_p, 256, 0.5)
    sol = weak_kam_solve(sys_p, 256, 0.5, kernel=kernel)
    pair = conjugate_pair(sys_p, sol, kernel=kernel)
    return sys_p, kernel, sol, pair


@pytest.fixture(scope="module")
def shifted_artifacts():
    """Supercritical pendulum (cohomology shift 2) at res 256."""
    sys2 = pendulum(c=2.0)
    kernel = build_kernel(sys2, 256, 0.5)
    sol = weak_kam_solve(sys2, 256, 0.5, kernel=kernel)
    pair = conjugate_pair(sys2, sol, kernel=kernel)
    return sys2, kernel, sol, pair


class TestGridFunction:
    def test_resolution_floor(self):
        with pytest.raises(ConfigError):
            GridFunction(1, 8, np.zeros(8))

    def test_nodes_row_major(self):
        g = grid_function(2, 16, np.zeros(256))
        nodes = g.nodes()
        assert nodes.shape == (256, 2)
        assert np.allclose(nodes[1], [0.0, 1.0 / 16])
        assert np.allclose(nodes[16], [1.0 / 16, 0.0])


class TestAction:
    def test_free_closed_form(self):
        sys_f = free_system()
        val, curve = action(sys_f, [0.0], [0.4], 1.0)
        assert val == pytest.approx(0.08, abs=1e-12)
        assert curve.shape[1] == 1
        # wrap-around distance chosen through the winding lift
        val2, _ = action(sys_f, [0.0], [0.9], 1.0)
        assert val2 == pytest.approx(0.005, abs=1e-12)

    def test_semigroup_min_composition(self):
        # A^{2t}(x, z) = min_y A^t(x, y) + A^t(y, z) via a grid oracle
        sys_p = pendulum()
        x, z, t = 0.15, 0.55, 0.5
        a2, _ = action(sys_p, [x], [z], 2 * t, n_segments=64)
        ys = np.arange(512) / 512
        left = np.array([action(sys_p, [x], [y], t, n_segments=32)[0] for y in ys[::8]])
        right = np.array([action(sys_p, [y], [z], t, n_segments=32)[0] for y in ys[::8]])
        composed = np.min(left + right)
        assert a2 == pytest.approx(composed, abs=1e-4)

    def test_saddle_constant_curve_bound(self):
        sys_p = pendulum()
        for t in (0.5, 1.0):
            val, _ = action(sys_p, [0.0], [0.0], t)
            assert val <= -t + 1e-6

    def test_time_window_validated(self):
        sys_f = free_system()
        with pytest.raises(ConfigError):
            action(sys_f, [0.0], [0.1], 0.05)
        with pytest.raises(ConfigError):
            action(sys_f, [0.0], [0.1], 11.0)
        with pytest.raises(ConfigError):
            action(sys_f, [0.0], [0.1], 1.0, n_segments=8)


class TestKernel:
    def test_free_rows_match_closed_form(self):
        sys_f = free_system()
        k = build_kernel(sys_f, 64, 0.5)
        xs = np.arange(64) / 64
        diff = xs[None, :] - xs[:, None]
        expected = np.min([(diff + m) ** 2 for m in range(-2, 3)], axis=0) / (2 * 0.5)
        assert np.max(np.abs(k.K - expected)) <= 1e-8

    def test_budget_enforced(self):
        with pytest.raises(ConfigError):
            build_kernel(free_system(), 4096, 0.5)
        with pytest.raises(ConfigError):
            build_kernel(free_system(2), 128, 0.5)

    def test_save_load_round_trip(self, tmp_path):
        k = build_kernel(free_system(), 32, 0.5)
        path = tmp_path / "kernel.bin"
        save_kernel(k, path)
        k2 = load_kernel(path)
        assert k2.resolution == 32 and k2.n == 1 and k2.t_step == 0.5
        assert np.array_equal(k.K, k2.K)

    def test_thread_determinism(self):
        sys_p = pendulum()
        k1 = build_kernel(sys_p, 64, 0.5, threads=1)
        k4 = build_kernel(sys_p, 64, 0.5, threads=4)
        assert np.array_equal(k1.K, k4.K)
        assert np.array_equal(k1.winding, k4.winding)

    def test_t_step_additivity_spot_check(self):
        # A^{2t} equals the min-plus square of A^t on random pairs
        sys_p = pendulum()
        k1 = build_kernel(sys_p, 128, 0.5)
        k2 = build_kernel(sys_p, 128, 1.0)
        rng = np.random.default_rng(3)
        composed = None
        errs = []
        for _ in range(100):
            i, j = rng.integers(0, 128, 2)
            comp = np.min(k1.K[i, :] + k1.K[:, j])
            errs.append(abs(comp - k2.K[i, j]))
        assert max(errs) <= 1e-3

    def test_two_torus_free_exact(self):
        sys_f2 = free_system(2)
        k = build_kernel(sys_f2, 16, 0.5)
        nodes = grid_function(2, 16, np.zeros(256)).nodes()
        diff = nodes[None, :, :] - nodes[:, None, :]
        lift = (diff + 0.5) % 1.0 - 0.5
        expected = np.einsum("ijd,ijd->ij", lift, lift) / (2 * 0.5)
        assert np.max(np.abs(k.K - expected)) <= 1e-9

    def test_two_torus_product_decouples(self):
        # kernel of the decoupled system is the outer sum of the 1-d kernels
        sys_p2 = product_system(1.0, 0.5)
        k2 = build_kernel(sys_p2, 16, 0.5, n_segments=16)
        ka = build_kernel(pendulum(), 16, 0.5, n_segments=16)
        kb = build_kernel(half_pendulum(), 16, 0.5, n_segments=16)
        outer = ka.K[:, None, :, None] + kb.K[None, :, None, :]
        outer = outer.reshape(256, 256)
        assert np.max(np.abs(k2.K - outer)) <= 1e-8


@pytest.fixture(scope="module")
def lo_kernel():
    return build_kernel(pendulum(), 64, 0.5)


class TestLaxOleinik:
    @pytest.fixture()
    def kernel(self, lo_kernel):
        return lo_kernel

    def test_constant_factors_out(self, kernel):
        base = np.zeros(64)
        shifted = lax_oleinik(kernel, base + 3.25)
        assert np.allclose(shifted, lax_oleinik(kernel, base) + 3.25)

    def test_monotone(self, kernel):
        rng = np.random.default_rng(4)
        u = rng.standard_normal(64)
        v = u + rng.uniform(0, 1, 64)
        assert np.all(lax_oleinik(kernel, u) <= lax_oleinik(kernel, v) + 1e-15)

    def test_commutes_with_constants(self, kernel):
        # exact up to float associativity: (u + a) + K vs (u + K) + a differ
        # by at most one ulp per entry
        rng = np.random.default_rng(5)
        for _ in range(10):
            u = rng.standard_normal(64)
            a = rng.standard_normal()
            assert np.allclose(
                lax_oleinik(kernel, u + a), lax_oleinik(kernel, u) + a, rtol=0, atol=1e-13
            )
            assert np.allclose(
                lax_oleinik_forward(kernel, u + a),
                lax_oleinik_forward(kernel, u) + a,
                rtol=0,
                atol=1e-13,
            )

    def test_semigroup_against_double_step(self):
        # matched segment length so the quadrature bias of the two kernels cancels
        sys_p = pendulum()
        k1 = build_kernel(sys_p, 256, 0.5, n_segments=48)
        k2 = build_kernel(sys_p, 256, 1.0, n_segments=96)
        u = np.cos(TWO_PI * np.arange(256) / 256) * 0.3
        twice = lax_oleinik(k1, lax_oleinik(k1, u))
        once = lax_oleinik(k2, u)
        assert np.max(np.abs(twice - once)) <= 2e-4


class TestWeakKAMSolve:
    def test_pendulum_critical_value_and_solution(self, pendulum_artifacts):
        _, _, sol, _ = pendulum_artifacts
        assert sol.c == pytest.approx(1.0, abs=1e-3)
        xs = np.arange(256) / 256
        ustar = (2 / np.pi) * (1 - np.abs(np.cos(np.pi * xs)))
        assert np.max(np.abs(sol.u.flat() - ustar)) <= 5e-3
        assert sol.residual <= 1e-9

    def test_free_system_constant(self):
        sol = weak_kam_solve(free_system(), 64, 0.5)
        assert sol.c == pytest.approx(0.0, abs=1e-12)
        assert np.ptp(sol.u.flat()) <= 1e-12

    def test_coarse_grid_still_converges(self):
        sol = weak_kam_solve(pendulum(), 16, 0.5)
        assert sol.c == pytest.approx(1.0, abs=5e-2)
        assert sol.residual <= 1e-9

    def test_supercritical_regime(self, shifted_artifacts):
        _, _, sol, _ = shifted_artifacts
        # rotation regime: c above the critical value of the unshifted system
        assert sol.c > 2.0
        assert sol.residual <= 1e-8


class TestConjugatePair:
    def test_pendulum_aubry_point(self, pendulum_artifacts):
        _, _, sol, pair = pendulum_artifacts
        dx = 1.0 / 256
        # argmin of the gap concentrates at the saddle x = 0
        lifted = (pair.I_set.xs[:, 0] + 0.5) % 1.0 - 0.5
        assert np.max(np.abs(lifted)) <= 2 * dx + 1e-12
        assert np.ptp(pair.gap.flat()) == pytest.approx(4 / np.pi, abs=5e-3)

    def test_free_system_zero_gap(self):
        sys_f = free_system()
        k = build_kernel(sys_f, 64, 0.5)
        sol = weak_kam_solve(sys_f, 64, 0.5, kernel=k)
        pair = conjugate_pair(sys_f, sol, kernel=k)
        assert np.max(pair.gap.flat()) <= 1e-10
        assert pair.I_set.m == 64

    def test_supercritical_whole_circle(self, shifted_artifacts):
        sys2, _, sol, pair = shifted_artifacts
        assert np.max(pair.gap.flat()) <= 5e-3
        # Aubry set is the whole circle: samples cover it densely
        assert pair.I_set.m >= 128
        xs = pair.I_set.xs[:, 0]
        assert np.max(np.diff(np.sort(xs))) <= 16.0 / 256
        # momenta lie on the invariant circle of the shifted system
        expected = np.sqrt(2 * (sol.c - np.cos(TWO_PI * xs))) - 2.0
        assert np.max(np.abs(pair.I_set.ps[:, 0] - expected)) <= 5e-3

    def test_w_below_u(self, shifted_artifacts):
        _, _, sol, pair = shifted_artifacts
        assert np.max(pair.w.flat() - sol.u.flat()) <= 1e-8

    def test_lipschitz_graph_bound(self, pendulum_artifacts, shifted_artifacts):
        # Corollary of the isotropic gradient bound: finite Lipschitz constant
        for artifacts in (pendulum_artifacts, shifted_artifacts):
            pair = artifacts[3]
            assert np.isfinite(pair.lipschitz)
            assert pair.lipschitz <= 10.0


class TestGridGradient:
    def test_kink_excluded(self):
        xs = np.arange(256) / 256
        vals = (2 / np.pi) * (1 - np.abs(np.cos(np.pi * xs)))
        g = grid_gradient(grid_function(1, 256, vals))
        # kink of |cos pi x| at x = 1/2 -> NaN there, smooth elsewhere
        assert np.isnan(g[128, 0])
        smooth = ~np.isnan(g[:, 0])
        assert np.sum(smooth) >= 250
        expected = 2 * np.sin(np.pi * xs) * np.sign(np.cos(np.pi * xs))
        assert np.max(np.abs(g[smooth, 0] - expected[smooth])) <= 1e-3


class TestActionHessian:
    def test_free_system_exact(self):
        sys_f = free_system()
        rep = action_hessian_check(sys_f, PhasePoint([0.2], [0.35]), 1.0)
        assert rep.rel_22 <= 1e-8
        assert rep.rel_11 <= 1e-8
        assert rep.fd_22[0, 0] == pytest.approx(1.0, abs=1e-8)
        assert rep.fd_11[0, 0] == pytest.approx(1.0, abs=1e-8)

    def test_pendulum_separatrix(self):
        sys_p = pendulum()
        z = PhasePoint([0.25], [2 * math.sin(math.pi * 0.25)])
        rep = action_hessian_check(sys_p, z, 1.0)
        assert rep.rel_22 <= 1e-3
        assert rep.rel_11 <= 1e-3

    def test_monotone_trend_toward_limit(self):
        sys_p = pendulum()
        z = PhasePoint([0.25], [2 * math.sin(math.pi * 0.25)])
        errs = []
        for t in (0.5, 1.0, 2.0):
            rep = action_hessian_check(sys_p, z, t)
            errs.append(abs(rep.fd_22[0, 0] - TWO_PI))
        assert errs[0] > errs[1] > errs[2]


class TestVerifyTheorem:
    def test_supercritical_all_directions_pass(self, shifted_artifacts):
        sys2, _, _, pair = shifted_artifacts
        rep = verify_theorem(
            sys2, pair, epsilon=1e-3, window=(1e-3, 1e-2),
            green_t_max=2.0, green_tail_tol=1.0,
        )
        assert not rep.vacuous
        assert rep.n_directions >= 2
        assert rep.all_pass
        assert rep.worst_margin >= -1e-3
        assert rep.all_pass_modified

    def test_adversarial_control_fails(self, shifted_artifacts):
        sys2, _, _, pair = shifted_artifacts
        rep = verify_theorem(
            sys2, pair, epsilon=1e-3, window=(1e-3, 1e-2),
            green_t_max=2.0, green_tail_tol=1.0, adversarial=True, seed=11,
        )
        assert any(not r.passed for r in rep.directions)

    def test_margins_monotone_in_epsilon(self, shifted_artifacts):
        sys2, _, _, pair = shifted_artifacts
        worst = []
        for eps in (1e-3, 1e-2, 5e-2):
            rep = verify_theorem(
                sys2, pair, epsilon=eps, window=(1e-3, 1e-2),
                green_t_max=2.0, green_tail_tol=1.0,
            )
            worst.append(rep.worst_margin)
        assert worst[0] <= worst[1] <= worst[2]

    def test_empty_window_vacuous(self, pendulum_artifacts):
        sys_p, _, _, pair = pendulum_artifacts
        rep = verify_theorem(
            sys_p, pair, epsilon=1e-3, window=(1e-6, 5e-6),
            green_t_max=2.0, green_tail_tol=1.0,
        )
        assert rep.vacuous
        assert rep.all_pass
        assert "vacuous" in rep.note

    def test_saddle_directions_hug_unstable_boundary(self, pendulum_artifacts):
        # c-shift 0: the argmin set is a handful of nodes along the unstable
        # manifold; chords stay inside the saddle cone
        sys_p, _, _, pair = pendulum_artifacts
        rep = verify_theorem(
            sys_p, pair, epsilon=1e-3, window=(1e-3, 2e-2),
            green_t_max=2.0, green_tail_tol=1.0,
        )
        if not rep.vacuous:
            assert rep.all_pass


class TestLocalSemiconcavity:
    def test_supercritical_passes_at_gentle_base(self, shifted_artifacts):
        sys2, _, _, pair = shifted_artifacts
        xs = pair.I_set.xs[:, 0]
        bi = int(np.argmin(np.abs(xs - 0.25)))
        rep = local_semiconcavity_check(sys2, pair, bi, T=2.0, epsilon=1e-2, radius=0.05)
        assert rep.passed
        assert rep.n_samples >= 10

    def test_tolerance_sensitivity_flips_to_violations(self, shifted_artifacts):
        # at the curvature peak the fattening must exceed the curvature spread
        sys2, _, _, pair = shifted_artifacts
        xs = pair.I_set.xs[:, 0]
        bi = int(np.argmin(np.minimum(xs, 1.0 - xs)))
        rep_small = local_semiconcavity_check(sys2, pair, bi, T=2.0, epsilon=1e-2, radius=0.05)
        rep_large = local_semiconcavity_check(sys2, pair, bi, T=2.0, epsilon=0.8, radius=0.05)
        assert not rep_small.passed
        assert rep_large.passed

    def test_free_system_constant_solution(self):
        sys_f = free_system()
        k = build_kernel(sys_f, 64, 0.5)
        sol = weak_kam_solve(sys_f, 64, 0.5, kernel=k)
        pair = conjugate_pair(sys_f, sol, kernel=k)
        rep = local_semiconcavity_check(sys_f, pair, 0, T=1.0, epsilon=1e-3, radius=0.1)
        assert rep.passed
