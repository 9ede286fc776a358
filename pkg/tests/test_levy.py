import numpy as np
import pytest
from scipy import stats

from opvol.errors import NotSelfAdjointError
from opvol.hs import hs_inner, hs_norm, sym_part
from opvol.levy import (
    ExponentialJumps,
    FixedJumps,
    GammaJumps,
    ScalarTimesU,
    SubordinatorSpec,
    WishartCompoundPoisson,
    verify_nondecreasing,
)

QZ = np.array([[0.5, 0.1, 0.05], [0.1, 0.4, 0.08], [0.05, 0.08, 0.3]])
U = np.array([[0.7, 0.2], [0.2, 0.5]])


def exp_driver(drift_rate=0.3, intensity=1.5, mean=0.5):
    return ScalarTimesU(SubordinatorSpec(drift_rate, intensity, ExponentialJumps(mean)), U)


class TestSampling:
    def test_empty_when_silent(self, rng):
        drv = ScalarTimesU(SubordinatorSpec(0.0, 0.0, None), U)
        path = drv.sample_path(2.0, rng)
        assert path.n_events == 0
        assert np.array_equal(path.value(2.0), np.zeros((2, 2)))

    def test_wishart_marks_are_rank_one(self, rng):
        drv = WishartCompoundPoisson(3.0, QZ)
        path = drv.sample_path(2.0, rng)
        assert path.n_events > 0
        for mark in path.marks:
            assert np.linalg.matrix_rank(mark, tol=1e-10) == 1

    def test_jump_count_poisson_moment(self, rng):
        drv = WishartCompoundPoisson(2.0, QZ)
        batch = drv.sample_paths_batch(1.5, 10_000, rng)
        lam = 2.0 * 1.5
        se = np.sqrt(lam / 10_000)
        assert abs(batch.counts.mean() - lam) <= 3 * se

    def test_times_sorted_within_paths(self, rng):
        batch = exp_driver().sample_paths_batch(2.0, 500, rng)
        for p in range(500):
            seg = batch.times[batch.offsets[p] : batch.offsets[p + 1]]
            assert np.all(np.diff(seg) >= 0)

    def test_batch_path_view_matches_value(self, rng):
        drv = exp_driver()
        batch = drv.sample_paths_batch(1.0, 20, rng)
        path = batch.path(3)
        assert path.value(1.0).shape == (2, 2)
        # rate part contributes linearly
        assert np.allclose(path.value(0.0), np.zeros((2, 2)))


class TestCumulant:
    def test_zero_operator(self):
        assert WishartCompoundPoisson(2.0, QZ).cumulant(np.zeros((3, 3))) == 0.0
        assert exp_driver().cumulant(np.zeros((2, 2))) == 0.0

    def test_wishart_scalar_closed_form(self):
        # one dimension: lambda ((1 - 2 i theta q)^{-1/2} - 1)
        lam, q, theta = 2.0, 0.7, 0.4
        drv = WishartCompoundPoisson(lam, np.array([[q]]))
        got = drv.cumulant(np.array([[theta]]))
        assert got == pytest.approx(lam * ((1 - 2j * theta * q) ** -0.5 - 1))

    def test_rejects_asymmetric(self):
        with pytest.raises(NotSelfAdjointError):
            WishartCompoundPoisson(1.0, QZ).cumulant(np.triu(np.ones((3, 3))))

    def test_hermitian_symmetry(self, rng):
        t = sym_part(rng.standard_normal((3, 3)))
        for drv in (WishartCompoundPoisson(2.0, QZ), exp_driver()):
            t_op = t[: drv.dim, : drv.dim]
            assert drv.cumulant(-t_op) == pytest.approx(np.conj(drv.cumulant(t_op)))

    @pytest.mark.parametrize(
        "law",
        [ExponentialJumps(0.5), GammaJumps(1.5, 0.4), FixedJumps(0.8)],
    )
    def test_scalar_times_u_mc(self, law, rng):
        drv = ScalarTimesU(SubordinatorSpec(0.2, 1.5, law), U)
        t_op = sym_part(np.array([[0.5, -0.2], [0.1, 0.3]]))
        batch = drv.sample_paths_batch(1.0, 100_000, rng)
        vals = np.zeros(100_000)
        path_ids = np.repeat(np.arange(100_000), batch.counts)
        proj = np.einsum("mij,ij->m", batch.marks, t_op)
        np.add.at(vals, path_ids, proj)
        vals += hs_inner(batch.drift_rate_part, t_op)
        phases = np.exp(1j * vals)
        emp = phases.mean()
        se = max(phases.real.std(ddof=1), phases.imag.std(ddof=1)) / np.sqrt(len(vals))
        analytic = np.exp(drv.cumulant(t_op))
        assert abs(analytic - emp) <= 3.5 * se + 1e-4

    def test_wishart_mc(self, rng):
        drv = WishartCompoundPoisson(2.0, QZ)
        t_op = sym_part(np.array([[0.3, 0.1, 0.0], [0.1, -0.2, 0.05], [0.0, 0.05, 0.4]]))
        batch = drv.sample_paths_batch(1.0, 100_000, rng)
        vals = np.zeros(100_000)
        path_ids = np.repeat(np.arange(100_000), batch.counts)
        np.add.at(vals, path_ids, np.einsum("mij,ij->m", batch.marks, t_op))
        phases = np.exp(1j * vals)
        emp = phases.mean()
        se = max(phases.real.std(ddof=1), phases.imag.std(ddof=1)) / np.sqrt(len(vals))
        assert abs(np.exp(drv.cumulant(t_op)) - emp) <= 3.5 * se + 1e-4

    def test_laplace_exponent_against_mc(self, rng):
        drv = WishartCompoundPoisson(2.0, QZ)
        g = -0.5 * QZ  # symmetric negative semidefinite
        batch = drv.sample_paths_batch(1.0, 200_000, rng)
        vals = np.zeros(200_000)
        path_ids = np.repeat(np.arange(200_000), batch.counts)
        np.add.at(vals, path_ids, np.einsum("mij,ij->m", batch.marks, g))
        weights = np.exp(vals)
        emp = weights.mean()
        se = weights.std(ddof=1) / np.sqrt(len(vals))
        assert abs(np.exp(drv.laplace_exponent(g)) - emp) <= 4 * se

    def test_laplace_domain_error(self):
        drv = WishartCompoundPoisson(1.0, np.eye(2))
        with pytest.raises(ValueError):
            drv.laplace_exponent(np.eye(2))  # 2 G Q has eigenvalue 2 >= 1


class TestMeanAndCovariance:
    def test_zero_driver_mean(self):
        drv = ScalarTimesU(SubordinatorSpec(0.0, 0.0, None), U)
        assert np.array_equal(drv.mean_rate(), np.zeros((2, 2)))

    def test_wishart_mean_wald_oracle(self, rng):
        drv = WishartCompoundPoisson(2.0, np.diag([1.0, 3.0]))
        assert np.allclose(drv.mean_rate(), np.diag([2.0, 6.0]))
        batch = drv.sample_paths_batch(1.0, 200_000, rng)
        total = batch.marks.sum(axis=0) / 200_000
        se = 4.5 * hs_norm(drv.mean_rate()) / np.sqrt(200_000)
        assert hs_norm(total - drv.mean_rate()) <= 4 * se + 0.05

    def test_scalar_times_u_mean(self):
        drv = exp_driver(drift_rate=0.3, intensity=1.5, mean=0.5)
        assert np.allclose(drv.mean_rate(), (0.3 + 1.5 * 0.5) * U)

    def test_mean_matches_cumulant_derivative(self):
        # <E[L(1)], T> equals d/dtheta Im Psi(theta T) at zero
        t_op = sym_part(np.array([[0.4, 0.1, 0.0], [0.1, -0.3, 0.2], [0.0, 0.2, 0.6]]))
        for drv in (WishartCompoundPoisson(2.0, QZ), exp_driver()):
            top = t_op[: drv.dim, : drv.dim]
            h = 1e-6
            deriv = (drv.cumulant(h * top).imag - drv.cumulant(-h * top).imag) / (2 * h)
            assert abs(deriv - hs_inner(drv.mean_rate(), top)) <= 1e-6

    def test_covariance_orthogonal_direction(self):
        drv = exp_driver()
        t_perp = np.array([[0.5, -0.7], [-0.7, -0.5]])
        t_perp -= hs_inner(U, t_perp) / hs_norm(U) ** 2 * U
        assert hs_norm(drv.covariance_apply(t_perp)) <= 1e-12

    def test_covariance_along_u(self):
        drv = exp_driver(drift_rate=0.0, intensity=1.5, mean=0.5)
        var = 1.5 * 2 * 0.5**2  # intensity * E[J^2]
        expected = var * hs_norm(U) ** 2 * U
        assert np.allclose(drv.covariance_apply(U), expected)

    def test_wishart_covariance_mc(self, rng):
        drv = WishartCompoundPoisson(2.0, QZ)
        t_op = sym_part(rng.standard_normal((3, 3)))
        s_op = sym_part(rng.standard_normal((3, 3)))
        batch = drv.sample_paths_batch(1.0, 200_000, rng)
        path_ids = np.repeat(np.arange(200_000), batch.counts)
        vt = np.zeros(200_000)
        vs = np.zeros(200_000)
        np.add.at(vt, path_ids, np.einsum("mij,ij->m", batch.marks, t_op))
        np.add.at(vs, path_ids, np.einsum("mij,ij->m", batch.marks, s_op))
        prods = (vt - vt.mean()) * (vs - vs.mean())
        emp = prods.mean()
        se = prods.std(ddof=1) / np.sqrt(len(vt))
        assert abs(hs_inner(drv.covariance_apply(t_op), s_op) - emp) <= 4 * se

    def test_trace_covariance_closed_form(self):
        drv = WishartCompoundPoisson(2.0, QZ)
        expected = 2.0 * (np.trace(QZ) ** 2 + 2 * np.trace(QZ @ QZ))
        assert drv.trace_covariance() == pytest.approx(expected)


class TestNonDecreasing:
    def test_empty_path(self, rng):
        drv = ScalarTimesU(SubordinatorSpec(0.0, 0.0, None), U)
        rep = verify_nondecreasing(drv.sample_path(1.0, rng), [np.ones(2)])
        assert rep.passed and rep.gaussian_part_is_zero

    def test_wishart_projections_are_squares(self, rng):
        drv = WishartCompoundPoisson(3.0, QZ)
        path = drv.sample_path(2.0, rng)
        f = rng.standard_normal(3)
        rep = verify_nondecreasing(path, [f])
        assert rep.passed and rep.min_projection >= 0.0

    def test_many_paths_no_violations(self, rng):
        drv = exp_driver()
        vectors = [rng.standard_normal(2) for _ in range(10)]
        for _ in range(200):
            assert verify_nondecreasing(drv.sample_path(1.0, rng), vectors).passed

    def test_projected_process_increments_exchangeable(self, rng):
        # L(t) paired with f (x) f is a real subordinator: increments over
        # disjoint equal windows share a distribution (two-sample check)
        drv = WishartCompoundPoisson(2.0, QZ)
        f = np.array([1.0, -0.5, 0.25])
        first, second = [], []
        batch = drv.sample_paths_batch(2.0, 4000, rng)
        path_ids = np.repeat(np.arange(4000), batch.counts)
        proj = np.einsum("mi,i->m", np.einsum("mij,j->mi", batch.marks, f), f)
        early = batch.times <= 1.0
        a = np.zeros(4000)
        b = np.zeros(4000)
        np.add.at(a, path_ids[early], proj[early])
        np.add.at(b, path_ids[~early], proj[~early])
        assert stats.ks_2samp(a, b).pvalue > 1e-3

    def test_gamma_law_of_projected_jumps(self, rng):
        # (Z, f)^2 is Gamma(1/2, 2 (Qz f, f)): moment match at desk scale
        drv = WishartCompoundPoisson(2.0, QZ)
        f = np.array([0.5, 1.0, -0.75])
        z = rng.standard_normal((200_000, 3)) @ drv.q_z_sqrt.T
        y = (z @ f) ** 2
        scale = float(f @ QZ @ f)
        assert abs(y.mean() - scale) / scale <= 0.02
        assert abs(y.var(ddof=1) - 2 * scale**2) / (2 * scale**2) <= 0.05


class TestSpecValidation:
    def test_subordinator_rejects_negative(self):
        with pytest.raises(ValueError):
            SubordinatorSpec(-0.1, 0.0, None)
        with pytest.raises(ValueError):
            SubordinatorSpec(0.0, 1.0, None)  # intensity without law

    def test_u_must_be_psd(self):
        with pytest.raises(Exception):
            ScalarTimesU(SubordinatorSpec(0.0, 0.0, None), np.array([[1.0, 0.0], [0.0, -1.0]]))

    def test_wishart_needs_positive_intensity(self):
        with pytest.raises(ValueError):
            WishartCompoundPoisson(0.0, QZ)

    def test_jump_law_moments(self):
        assert ExponentialJumps(0.5).second_moment() == pytest.approx(0.5)
        assert GammaJumps(2.0, 0.3).first_moment() == pytest.approx(0.6)
        assert FixedJumps(0.8).second_moment() == pytest.approx(0.64)
