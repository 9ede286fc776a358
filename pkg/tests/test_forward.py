import numpy as np
import pytest

from opvol.errors import DimensionMismatchError, QuadratureError
from opvol.forward import ForwardCurveSpace, WeightSpec, forward_surface
from opvol.levy import ScalarTimesU, SubordinatorSpec, WishartCompoundPoisson
from opvol.lifted import LyapunovDrift, ZeroDrift
from opvol.oux import PriceModel
from opvol.vol import VolModel


@pytest.fixture(scope="module")
def space():
    return ForwardCurveSpace(WeightSpec(alpha=0.5), 12)


class TestSpaceConstruction:
    def test_weight_validation(self):
        with pytest.raises(ValueError):
            WeightSpec(alpha=-0.5)
        with pytest.raises(ValueError):
            WeightSpec(alpha=0.5, x_max=-1.0)

    def test_needs_two_modes(self):
        with pytest.raises(ValueError):
            ForwardCurveSpace(WeightSpec(), 1)

    def test_constant_mode_has_unit_norm(self, space):
        gram = space.gram_matrix()
        assert gram[0, 0] == pytest.approx(1.0, abs=1e-10)

    def test_constant_orthogonal_to_fluctuations(self, space):
        gram = space.gram_matrix()
        assert np.abs(gram[0, 1:]).max() <= 1e-10

    def test_gram_is_identity(self, space):
        assert space.gram_defect <= 1e-8

    def test_resolution_failure_raises(self):
        with pytest.raises(QuadratureError):
            ForwardCurveSpace(WeightSpec(alpha=0.5, x_max=3.0, resolution=128), 12)


class TestKernel:
    def test_at_origin(self, space):
        coeffs = space.kernel_coeffs(np.asarray(0.0))
        expected = np.zeros(space.n)
        expected[0] = 1.0
        assert np.allclose(coeffs, expected)

    def test_reproducing_property(self, space, rng):
        # (f, h_x) = f(x) via the independent quadrature evaluation route
        for _ in range(10):
            coeffs = rng.standard_normal(space.n)
            for x in rng.uniform(0.0, 4.0, size=10):
                paired = float(coeffs @ space.kernel_coeffs(np.asarray(x)))
                direct = space.eval_coeffs_quadrature(coeffs, float(x))
                assert abs(paired - direct) <= 1e-6

    def test_kernel_cauchy_at_long_maturities(self, space):
        # h_x converges as x grows since the inverse weight integrates
        gaps = [
            np.linalg.norm(
                space.kernel_coeffs(np.asarray(x + 1.0)) - space.kernel_coeffs(np.asarray(x))
            )
            for x in (2.0, 6.0, 12.0, 24.0)
        ]
        assert all(b < a for a, b in zip(gaps, gaps[1:]))
        assert gaps[-1] < 1e-2

    def test_norm_closed_form_is_upper_bound(self, space):
        # truncated pairing approaches |h_x|^2 = h_x(x) from below
        for x in (0.5, 1.0, 2.0):
            m = space.kernel_coeffs(np.asarray(x))
            assert float(m @ m) <= space.kernel_norm_sq(x) + 1e-12

    def test_norm_convergence_in_dimension(self):
        x = 1.0
        errs = []
        for n in (6, 12, 24):
            sp = ForwardCurveSpace(WeightSpec(alpha=0.5), n)
            m = sp.kernel_coeffs(np.asarray(x))
            errs.append(sp.kernel_norm_sq(x) - float(m @ m))
        assert errs[0] > errs[1] > errs[2] > 0


class TestShift:
    def test_time_zero_identity(self, space):
        assert np.abs(space.shift_matrix(0.0) - np.eye(space.n)).max() <= 1e-12

    def test_semigroup_law(self, space, rng):
        for _ in range(5):
            a, b = rng.uniform(0.0, 1.0, size=2)
            defect = np.linalg.norm(
                space.shift_matrix(a) @ space.shift_matrix(b) - space.shift_matrix(a + b)
            )
            assert defect <= 1e-4

    def test_adjoint_kernel_identity(self, space, rng):
        for _ in range(10):
            t = float(rng.uniform(0.1, 1.5))
            x = float(rng.uniform(0.0, 2.0))
            lhs = space.shift_matrix(t).T @ space.kernel_coeffs(np.asarray(x))
            rhs = space.kernel_coeffs(np.asarray(t + x))
            assert np.abs(lhs - rhs).max() <= 1e-3

    def test_adjoint_kernel_error_does_not_grow_in_dimension(self):
        pairs = [(0.3, 0.2), (0.7, 1.1), (1.2, 0.5)]
        errs = []
        for n in (6, 9, 12):
            sp = ForwardCurveSpace(WeightSpec(alpha=0.5), n)
            worst = max(
                np.abs(
                    sp.shift_matrix(t).T @ sp.kernel_coeffs(np.asarray(x))
                    - sp.kernel_coeffs(np.asarray(t + x))
                ).max()
                for t, x in pairs
            )
            errs.append(worst)
        # the truncation is exactly shift-invariant here, so the defect sits at
        # rounding level for every dimension; it must still never grow
        assert errs[1] <= errs[0] + 1e-12
        assert errs[2] <= errs[1] + 1e-12

    def test_shift_moves_evaluations(self, space, rng):
        coeffs = rng.standard_normal(space.n)
        moved = space.shift_matrix(0.7) @ coeffs
        for x in (0.0, 0.5, 1.5):
            lhs = float(space.eval_coeffs(moved, np.asarray(x)))
            rhs = float(space.eval_coeffs(coeffs, np.asarray(0.7 + x)))
            assert abs(lhs - rhs) <= 1e-10

    def test_batch_matches_scalar(self, space):
        ts = np.array([0.0, 0.4, 1.1])
        batch = space.shift_matrices(ts)
        for k, t in enumerate(ts):
            assert np.abs(batch[k] - space.shift_matrix(float(t))).max() <= 1e-14

    def test_semigroup_interface(self, space):
        sg = space.shift_semigroup()
        assert sg.dim == space.n
        assert sg.law_defect([(0.3, 0.4)]) <= 1e-6


class TestSigma2:
    def test_zero_state(self, space):
        q = 0.6 * np.eye(space.n)
        assert space.sigma2(np.zeros((space.n, space.n)), q, 1.0, 0.5, 0.25) == 0.0

    def test_identity_pair_approaches_kernel_norm(self):
        # with Y = Q = I the field equals the truncated kernel self-pairing,
        # which converges to the closed form 1 + (1 - e^{-a u})/a from below
        u = 1.25
        prev_gap = None
        for n in (6, 12, 24):
            sp = ForwardCurveSpace(WeightSpec(alpha=0.5), n)
            val = sp.sigma2(np.eye(n), np.eye(n), 1.0, 0.75, u - 0.25)
            gap = sp.kernel_norm_sq(u) - val
            assert gap > -1e-12
            if prev_gap is not None:
                assert gap < prev_gap
            prev_gap = gap

    def test_dual_route_agreement(self, space, rng):
        # commuting case: (M h)(u) = <Y_Q, h (x) h> for scalar Wiener covariance
        q_scale = 0.6
        q = q_scale * np.eye(space.n)
        a = rng.standard_normal((space.n, space.n))
        y = a @ a.T / space.n
        v1 = space.sigma2(y, q, 1.0, 0.4, 0.3)
        v2 = space.sigma2_commuting(q @ y, 1.0, 0.4, 0.3)
        assert abs(v1 - v2) <= 1e-9

    def test_nonnegative_on_sampled_paths(self, space, rng):
        vol = VolModel(
            0.3 * np.eye(space.n),
            ZeroDrift(space.n),
            WishartCompoundPoisson(1.0, 0.2 * np.eye(space.n)),
        )
        q = 0.6 * np.eye(space.n)
        path = vol.simulate(1.0, [0.25, 0.6, 1.0], rng)
        for s, y in zip(path.grid, path.states):
            for x in (0.0, 0.5, 1.5):
                assert space.sigma2(y, q, 1.0, float(s), x) >= -1e-9

    def test_requires_ordered_times(self, space):
        with pytest.raises(ValueError):
            space.sigma2(np.eye(space.n), np.eye(space.n), 0.5, 1.0, 0.0)

    def test_ambit_kernel_samples(self, space, rng):
        a = rng.standard_normal((space.n, space.n))
        y = a @ a.T / space.n
        grid, samples = space.ambit_kernel_samples(y, 1.0, 0.5, 0.25)
        assert grid.shape == samples.shape
        assert np.all(np.isfinite(samples))


def _forward_models(space, intensity=1.0):
    n = space.n
    vol = VolModel(
        np.diag([0.5 * 0.85**k for k in range(n)]),
        LyapunovDrift(np.diag([-0.3 - 0.02 * k for k in range(n)])),
        WishartCompoundPoisson(intensity, np.diag([0.4 * 0.8**k for k in range(n)])),
    )
    x0 = np.zeros(n)
    x0[:4] = [3.0, 0.5, -0.3, 0.15]
    pm = PriceModel(x0, space.shift_semigroup(), 0.6 * np.eye(n), vol)
    return vol, pm


class TestForwardSurface:
    def test_pure_transport_without_volatility(self, space, rng):
        n = space.n
        vol = VolModel(
            np.zeros((n, n)), ZeroDrift(n), ScalarTimesU(SubordinatorSpec(0.0, 0.0, None), np.zeros((n, n)))
        )
        x0 = np.zeros(n)
        x0[:3] = [2.0, 0.4, -0.2]
        pm = PriceModel(x0, space.shift_semigroup(), 0.5 * np.eye(n), vol)
        vp = vol.simulate(1.0, np.linspace(0.0, 1.0, 5), rng)
        xp = pm.simulate(vp, rng)
        surface = forward_surface(xp, space, np.linspace(0.0, 2.0, 9))
        assert np.abs(surface.values - surface.transport).max() <= 1e-9

    def test_initial_row_evaluates_initial_curve(self, space, rng):
        vol, pm = _forward_models(space)
        vp = vol.simulate(1.0, [0.0, 1.0], rng)
        xp = pm.simulate(vp, rng)
        surface = forward_surface(xp, space, np.array([0.0, 0.5, 1.0]))
        expected = [float(space.eval_coeffs(pm.x0, np.asarray(x))) for x in surface.maturities]
        assert np.allclose(surface.values[0], expected)

    def test_spot_is_first_coordinate(self, space, rng):
        vol, pm = _forward_models(space)
        vp = vol.simulate(1.0, [0.0, 0.5, 1.0], rng)
        xp = pm.simulate(vp, rng)
        surface = forward_surface(xp, space, np.array([0.0, 1.0]))
        assert np.allclose(surface.spot, xp.states[:, 0])

    def test_mc_mean_matches_transport(self, space, rng):
        # the noise term is a martingale: the mean surface is pure transport
        vol, pm = _forward_models(space)
        t = 1.0
        batch = vol.driver.sample_paths_batch(t, 3000, rng)
        xs = pm.terminal_samples_batch(t, batch, rng)
        x = 0.5
        vals = xs @ space.kernel_coeffs(np.asarray(x))
        se = vals.std(ddof=1) / np.sqrt(len(vals))
        target = float(space.eval_coeffs(pm.x0, np.asarray(t + x)))
        assert abs(vals.mean() - target) <= 4 * se

    def test_dimension_mismatch(self, space, rng):
        vol, pm = _forward_models(space)
        vp = vol.simulate(1.0, [0.0, 1.0], rng)
        xp = pm.simulate(vp, rng)
        other = ForwardCurveSpace(WeightSpec(alpha=0.5), 6)
        with pytest.raises(DimensionMismatchError):
            forward_surface(xp, other, np.array([0.0, 1.0]))

    def test_csv_exports(self, space, rng, tmp_path):
        vol, pm = _forward_models(space)
        vp = vol.simulate(1.0, [0.0, 1.0], rng)
        xp = pm.simulate(vp, rng)
        surface = forward_surface(xp, space, np.array([0.0, 0.5]))
        surface.to_csv(tmp_path / "surf.csv")
        surface.spot_to_csv(tmp_path / "spot.csv")
        assert (tmp_path / "surf.csv").read_text().splitlines()[0] == "time,maturity,value,transport"
        assert (tmp_path / "spot.csv").read_text().splitlines()[0] == "time,spot,transport"

    def test_transport_limit(self, space):
        x0 = np.zeros(space.n)
        x0[0] = 2.0
        x0[1] = 0.5
        xp_like = type("P", (), {"states": np.tile(x0, (2, 1)), "grid": np.array([0.0, 1.0])})
        surface = forward_surface(xp_like, space, np.array([0.0, 40.0]))
        assert surface.transport_limit == pytest.approx(2.0 + 0.5 / np.sqrt(0.5))
        assert surface.flatness_defect() <= 1e-6
