"""Volatility-modulated OU process on the state space.

Conditional on a variance path, the process is Gaussian: each step

    X(t_{k+1}) = S(dt) X(t_k) + G_k,
    Cov(G_k)   = int S(t_{k+1}-s) M(s) S^T(t_{k+1}-s) ds,
    M(s)       = Y^{1/2}(s) Q Y^{1/2}(s),

with the integral split at jump times of the driver (Y flows smoothly in
between, so Gauss-Legendre converges fast on each piece) and Y evaluated at
exact mild-solution values at the quadrature nodes.  Sampling the step noise
through the PSD square root of this covariance is therefore exact in
distribution; there is no Euler bias.

The characteristic functional of X(t) has a closed affine form when the
Wiener covariance commutes with the volatility; it is evaluated here by
nested adaptive quadrature with the driver's log-Laplace exponent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CommutationError, PositivityViolationError
from .hs import DEFAULT_TOL, Tolerances, hs_inner, hs_norm, psd_sqrt, require_psd
from .levy import BatchDriverPaths, DriverPath, ScalarTimesU, WishartCompoundPoisson
from .lifted import gauss_legendre
from .vol import VolModel, VolPath, simpson_doubling

__all__ = [
    "StateSemigroup",
    "IdentitySemigroup",
    "DiagonalSemigroup",
    "PriceModel",
    "XPath",
    "CommutativityReport",
    "premultiply_path",
]


class StateSemigroup:
    """Provider of the state-space semigroup t -> S(t) as N x N matrices."""

    dim: int

    def at(self, t: float) -> np.ndarray:
        raise NotImplementedError

    def at_batch(self, ts) -> np.ndarray:
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        return np.stack([self.at(float(t)) for t in ts])

    def law_defect(self, pairs) -> float:
        """max ||S(a)S(b) - S(a+b)||_F over the given (a, b) pairs."""
        worst = 0.0
        for a, b in pairs:
            worst = max(worst, float(np.linalg.norm(self.at(a) @ self.at(b) - self.at(a + b))))
        return worst


class IdentitySemigroup(StateSemigroup):
    """Zero generator: S(t) = identity."""

    def __init__(self, dim: int):
        self.dim = dim
        self._eye = np.eye(dim)

    def at(self, t):
        return self._eye.copy()

    def at_batch(self, ts):
        ts = np.atleast_1d(ts)
        return np.broadcast_to(self._eye, (len(ts), self.dim, self.dim)).copy()


class DiagonalSemigroup(StateSemigroup):
    """Diagonal generator with the given rates: S(t) = diag(exp(rates * t))."""

    def __init__(self, rates):
        self.rates = np.asarray(rates, dtype=float)
        self.dim = len(self.rates)

    def at(self, t):
        return np.diag(np.exp(self.rates * t))

    def at_batch(self, ts):
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        out = np.zeros((len(ts), self.dim, self.dim))
        idx = np.arange(self.dim)
        out[:, idx, idx] = np.exp(np.multiply.outer(ts, self.rates))
        return out


@dataclass
class XPath:
    grid: np.ndarray
    states: np.ndarray  # (K, N)
    vol: VolPath

    def to_csv(self, path, projections=None) -> None:
        """Columns: time, state coordinates, then optional projections (X, f)."""
        import csv

        n = self.states.shape[1]
        projections = projections or []
        header = ["time"] + [f"x_{i}" for i in range(n)] + [label for label, _ in projections]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for t, x in zip(self.grid, self.states):
                row = [repr(float(t))] + [repr(float(v)) for v in x]
                row += [repr(float(x @ np.asarray(f))) for _, f in projections]
                w.writerow(row)


@dataclass
class CommutativityReport:
    passed: bool
    tol: float
    defects: dict

    @property
    def worst(self) -> float:
        return max(self.defects.values()) if self.defects else 0.0


def _rel_comm_defect(a: np.ndarray, b: np.ndarray) -> float:
    denom = hs_norm(a) * hs_norm(b)
    if denom == 0.0:
        return 0.0
    return float(np.linalg.norm(a @ b - b @ a) / denom)


def premultiply_path(path: DriverPath, q: np.ndarray, tol: float = 1e-9) -> DriverPath:
    """Driver path with every mark replaced by Q * mark (and the rate part too).

    Requires Q to commute with each mark, so the products stay PSD and the
    transformed path is again a driver path.
    """
    q = np.asarray(q, dtype=float)
    for which, m in (("rate", path.drift_rate_part), *(("mark", m) for m in path.marks)):
        defect = _rel_comm_defect(q, m)
        if defect > tol:
            raise CommutationError(f"Q does not commute with a {which} (defect {defect:.2e})")
    return DriverPath(
        horizon=path.horizon,
        times=path.times.copy(),
        marks=np.einsum("ij,mjk->mik", q, path.marks) if path.n_events else path.marks.copy(),
        drift_rate_part=q @ path.drift_rate_part,
    )


def _is_scaled_identity(q: np.ndarray):
    n = q.shape[0]
    c = float(q[0, 0])
    if np.array_equal(q, c * np.eye(n)):
        return c
    return None


def _psd_sqrt_batch(mats: np.ndarray, eps_psd: float) -> np.ndarray:
    w, v = np.linalg.eigh(0.5 * (mats + mats.transpose(0, 2, 1)))
    if float(w.min(initial=0.0)) < -eps_psd:
        raise PositivityViolationError(
            f"batch PSD square root: eigenvalue {w.min():.2e} below -{eps_psd:.2e}"
        )
    w = np.clip(w, 0.0, None)
    return np.matmul(v * np.sqrt(w)[:, None, :], v.transpose(0, 2, 1))


class PriceModel:
    """OU process with stochastic operator volatility and Wiener covariance Q."""

    def __init__(
        self,
        x0: np.ndarray,
        state_sg: StateSemigroup,
        q: np.ndarray,
        vol: VolModel,
        psi=None,
        tol: Tolerances = DEFAULT_TOL,
    ):
        self.tol = tol
        self.x0 = np.asarray(x0, dtype=float)
        self.state_sg = state_sg
        self.q = np.asarray(require_psd(q, tol), dtype=float)
        self.vol = vol
        self.psi = psi  # optional time-dependent damping: callable t -> scalar or matrix
        self.dim = len(self.x0)
        if state_sg.dim != self.dim or vol.dim != self.dim or self.q.shape[0] != self.dim:
            raise ValueError("state, semigroup, Q and volatility dimensions must agree")
        self._q_scale = _is_scaled_identity(self.q)
        self._q_half = psd_sqrt(self.q, tol)
        self._comm_report = None

    def with_samuelson(self, psi) -> "PriceModel":
        """Copy of this model with the step integrand damped by psi(t) on each side."""
        return PriceModel(self.x0, self.state_sg, self.q, self.vol, psi=psi, tol=self.tol)

    # -- volatility-weighted covariance integrals ---------------------------

    def _m_of(self, y: np.ndarray, s: float) -> np.ndarray:
        if self._q_scale is not None:
            m = self._q_scale * y  # Y^{1/2} (c I) Y^{1/2} = c Y exactly
        else:
            r = psd_sqrt(y, self.tol)
            m = r @ self.q @ r
        if self.psi is not None:
            p = self.psi(s)
            if not np.all(np.isfinite(p)):
                raise ValueError(f"damping must stay bounded on the grid (psi({s}) = {p})")
            if np.ndim(p) == 0:
                m = float(p) ** 2 * m
            else:
                p = np.asarray(p, dtype=float)
                m = p @ m @ p.T
        return m

    def windowed_covariance(self, vol_path: VolPath, a: float, b: float) -> np.ndarray:
        """int_a^b S(b-s) M(s) S^T(b-s) ds with pieces split at driver jumps."""
        if b < a:
            raise ValueError("window must have b >= a")
        if b == a:
            return np.zeros((self.dim, self.dim))
        times = vol_path.events.times
        inner = times[(times > a) & (times < b)]
        cuts = np.concatenate(([a], inner, [b]))
        n_nodes = 8
        prev = None
        for _ in range(10):
            xi, wi = gauss_legendre(n_nodes)
            total = np.zeros((self.dim, self.dim))
            for lo, hi in zip(cuts[:-1], cuts[1:]):
                if hi <= lo:
                    continue
                ss = lo + (hi - lo) * xi
                es = self.state_sg.at_batch(b - ss)
                for s, e, w in zip(ss, es, wi):
                    m = self._m_of(vol_path.value_at(float(s)), float(s))
                    total += (hi - lo) * w * (e @ m @ e.T)
            if prev is not None and hs_norm(total - prev) <= self.tol.eps_quad * (
                1.0 + hs_norm(total)
            ):
                break
            prev = total
            n_nodes *= 2
        cov = 0.5 * (total + total.T)
        if float(np.linalg.eigvalsh(cov)[0]) < -self.tol.eps_psd:
            raise PositivityViolationError("step covariance failed the PSD check")
        return cov

    def adjusted_return_cov(self, vol_path: VolPath, t: float, dt: float) -> np.ndarray:
        """Conditional covariance of X(t+dt) - S(dt) X(t) given the volatility path."""
        if t < 0 or t + dt > vol_path.events.horizon + 1e-12:
            raise ValueError("return window outside the simulated horizon")
        return self.windowed_covariance(vol_path, t, t + dt)

    # -- simulation ----------------------------------------------------------

    def simulate(self, vol_path: VolPath, rng: np.random.Generator) -> XPath:
        """Exact conditionally-Gaussian stepping along the volatility grid."""
        grid = vol_path.grid
        states = np.empty((len(grid), self.dim))
        x = self.x0.copy()
        if grid[0] != 0.0:
            raise ValueError("the volatility grid must start at time zero")
        states[0] = x
        for k in range(len(grid) - 1):
            a, b = float(grid[k]), float(grid[k + 1])
            cov = self.windowed_covariance(vol_path, a, b)
            noise = psd_sqrt(cov, self.tol) @ rng.standard_normal(self.dim)
            x = self.state_sg.at(b - a) @ x + noise
            states[k + 1] = x
        return XPath(grid=grid, states=states, vol=vol_path)

    # -- commutation ----------------------------------------------------------

    def commutativity_report(self, tol: float = 1e-9, refresh: bool = False) -> CommutativityReport:
        """Check the conditions under which the Wiener covariance commutes
        with the volatility pathwise: [Q, Y0], the driver building blocks
        (U, or Q_Z plus sampled marks), and the drift interchange identities.
        """
        if self._comm_report is not None and not refresh and self._comm_report.tol == tol:
            return self._comm_report
        q = self.q
        vol = self.vol
        defects = {"y0": _rel_comm_defect(q, vol.y0)}
        driver = vol.driver
        if isinstance(driver, ScalarTimesU):
            defects["u"] = _rel_comm_defect(q, driver.u_op)
        elif isinstance(driver, WishartCompoundPoisson):
            defects["qz"] = _rel_comm_defect(q, driver.q_z)
            rng = np.random.Generator(np.random.Philox(np.random.SeedSequence((0xC0117E, self.dim))))
            z = rng.standard_normal((64, self.dim)) @ driver.q_z_sqrt.T
            marks = np.einsum("mi,mj->mij", z, z)
            defects["marks"] = max(_rel_comm_defect(q, m) for m in marks)
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence((0xD21F7, self.dim))))
        worst_drift = 0.0
        for _ in range(5):
            t_probe = rng.standard_normal((self.dim, self.dim))
            t_probe = 0.5 * (t_probe + t_probe.T)
            scale = hs_norm(t_probe) * max(hs_norm(q), 1.0)
            lhs1 = vol.drift.apply(t_probe) @ q - vol.drift.apply(t_probe @ q)
            lhs2 = q @ vol.drift.apply(t_probe) - vol.drift.apply(q @ t_probe)
            worst_drift = max(worst_drift, hs_norm(lhs1) / scale, hs_norm(lhs2) / scale)
        defects["drift"] = worst_drift
        report = CommutativityReport(passed=max(defects.values()) <= tol, tol=tol, defects=defects)
        self._comm_report = report
        return report

    # -- characteristic functional --------------------------------------------

    def cf(self, t: float, f: np.ndarray, return_parts: bool = False):
        """E[exp(i (X(t), f))] under the commutation condition (then D = Q).

        Three factors: the transported phase of X0, the quadratic term in Y0,
        and the integrated driver Laplace exponent along the doubly-indexed
        semigroup orbit.  Refuses when the commutation check fails or a
        Samuelson damping is installed (no closed form in either case).
        """
        if self.psi is not None:
            raise CommutationError("no analytic characteristic function under Samuelson damping")
        report = self.commutativity_report()
        if not report.passed:
            raise CommutationError(
                f"commutation defects {report.defects} exceed tolerance {report.tol}"
            )
        f = np.asarray(f, dtype=float)
        drift = self.vol.drift
        d_half = self._q_half

        def rank_one(us):
            gs = np.einsum("tji,j->ti", self.state_sg.at_batch(us), f)  # S^*(u) f
            dg = gs @ d_half  # D^{1/2} symmetric
            return np.einsum("ti,tj->tij", dg, dg)

        phase = float(self.x0 @ (self.state_sg.at(t).T @ f))
        if t == 0.0:
            val = np.exp(1j * phase)
            return (val, phase, 0.0, 0.0) if return_parts else complex(val)

        def integrand_quad(ss):
            return drift.semigroup_batch(ss, rank_one(t - ss), adjoint=True)

        j2 = simpson_doubling(integrand_quad, 0.0, t, self.tol.eps_quad)
        quad_term = -0.5 * hs_inner(self.vol.y0, j2)

        def a_of(s):
            def inner(us):
                return drift.semigroup_batch(s - us, rank_one(us), adjoint=True)

            return simpson_doubling(inner, 0.0, s, self.tol.eps_quad)

        def integrand_levy(ss):
            return np.array(
                [
                    self.vol.driver.laplace_exponent(-0.5 * a_of(float(s))) if s > 0 else 0.0
                    for s in ss
                ]
            )

        levy_term = float(simpson_doubling(integrand_levy, 0.0, t, self.tol.eps_quad))
        val = np.exp(1j * phase + quad_term + levy_term)
        if return_parts:
            return complex(val), phase, float(quad_term), levy_term
        return complex(val)

    # -- vectorised terminal sampling -----------------------------------------

    def terminal_covariances_batch(self, t: float, batch: BatchDriverPaths) -> np.ndarray:
        """Conditional covariance of X(t) given each driver path in the batch."""
        n_paths = batch.n_paths
        n = self.dim
        vol = self.vol
        live = batch.times <= t
        path_ids = np.repeat(np.arange(n_paths), batch.counts)
        counts_live = np.bincount(path_ids[live], minlength=n_paths)
        covs = np.zeros((n_paths, n, n))
        rate = batch.drift_rate_part
        has_rate = bool(rate.any())

        for k in np.unique(counts_live):
            sel = np.nonzero(counts_live == k)[0]
            gather = batch.offsets[sel][:, None] + np.arange(k)[None, :] if k else None
            times_mat = batch.times[gather] if k else np.zeros((len(sel), 0))
            bounds = np.concatenate(
                [np.zeros((len(sel), 1)), times_mat, np.full((len(sel), 1), t)], axis=1
            )
            # anchors: exact state at each piece start
            anchors = [np.broadcast_to(vol.y0, (len(sel), n, n)).copy()]
            for j in range(k):
                dt_j = bounds[:, j + 1] - bounds[:, j]
                moved = vol.drift.semigroup_batch(dt_j, anchors[-1])
                if has_rate:
                    moved = moved + vol.drift.integrated_batch(dt_j, rate)
                anchors.append(moved + batch.marks[gather[:, j]])
            covs[sel] = self._pieces_quadrature(t, bounds, anchors, rate if has_rate else None)
        return covs

    def _pieces_quadrature(self, t, bounds, anchors, rate):
        b_paths = bounds.shape[0]
        n = self.dim
        n_nodes = 8
        prev = None
        for _ in range(10):
            xi, wi = gauss_legendre(n_nodes)
            total = np.zeros((b_paths, n, n))
            for j, anchor in enumerate(anchors):
                lo, hi = bounds[:, j], bounds[:, j + 1]
                width = hi - lo  # may be zero for coincident cuts
                ss = lo[:, None] + np.multiply.outer(width, xi)  # (B, G)
                lags = (ss - lo[:, None]).ravel()
                ys = self.vol.drift.semigroup_batch(
                    lags, np.repeat(anchor, n_nodes, axis=0)
                )
                if rate is not None:
                    ys = ys + self.vol.drift.integrated_batch(lags, rate)
                ms = self._m_batch(ys, ss.ravel())
                es = self.state_sg.at_batch((t - ss).ravel())
                contrib = np.matmul(np.matmul(es, ms), es.transpose(0, 2, 1)).reshape(
                    b_paths, n_nodes, n, n
                )
                total += (contrib * wi[None, :, None, None]).sum(axis=1) * width[:, None, None]
            if prev is not None:
                defect = np.abs(total - prev).max(initial=0.0)
                if defect <= self.tol.eps_quad * (1.0 + np.abs(total).max(initial=0.0)):
                    break
            prev = total
            n_nodes *= 2
        return 0.5 * (total + total.transpose(0, 2, 1))

    def _m_batch(self, ys: np.ndarray, ss: np.ndarray) -> np.ndarray:
        if self._q_scale is not None:
            ms = self._q_scale * ys
        else:
            roots = _psd_sqrt_batch(ys, self.tol.eps_psd)
            ms = np.matmul(np.matmul(roots, self.q), roots.transpose(0, 2, 1))
        if self.psi is not None:
            p = np.asarray(self.psi(ss), dtype=float)
            if p.ndim != 1:
                raise ValueError("batched sampling supports scalar-valued damping only")
            if not np.all(np.isfinite(p)):
                raise ValueError("damping must stay bounded on the grid")
            ms = ms * (p * p)[:, None, None]
        return ms

    def terminal_samples_batch(
        self, t: float, batch: BatchDriverPaths, rng: np.random.Generator
    ) -> np.ndarray:
        """Sample X(t) for every path: transported X0 plus exact Gaussian noise."""
        covs = self.terminal_covariances_batch(t, batch)
        roots = _psd_sqrt_batch(covs, self.tol.eps_psd)
        xi = rng.standard_normal((batch.n_paths, self.dim))
        base = self.state_sg.at(t) @ self.x0
        return base + np.einsum("pij,pj->pi", roots, xi)
