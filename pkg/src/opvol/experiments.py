"""Experiment runners: analytic-vs-Monte-Carlo verification with file outputs.

Each experiment splits its sampling work into fixed blocks of indices, gives
every block its own counter-based random stream, and reduces the per-block
moment sums in block order, so outputs are byte-identical for any worker
count.  Results land in the output directory as CSV (the contract), a JSON
manifest, and optional diagnostic figures.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .config import ResolvedConfig, config_from_token, merge_config, validate_config
from .errors import ConfigError
from .hs import psd_sqrt
from .levy import verify_nondecreasing
from .lifted import positivity_preservation_check
from .report import CfAccumulator, CheckRow, MomentAccumulator, RunManifest, write_rows_csv
from .rng import fixed_chunks, map_chunks, seed_derivation
from .vol import simpson_doubling

__all__ = ["DEFAULTS", "ExperimentResult", "run_experiment", "run_all", "default_config"]


# ---------------------------------------------------------------------------
# built-in desk-scale configurations

_GENERAL_3D = {
    "dimension": 3,
    "seed": 20240613,
    "horizon": 1.0,
    "time": 1.0,
    "y0": {"kind": "dense", "values": [[0.6, 0.1, 0.0], [0.1, 0.5, 0.05], [0.0, 0.05, 0.4]]},
    "drift": {
        "kind": "lyapunov",
        "matrix": {
            "kind": "dense",
            "values": [[-0.6, 0.15, 0.0], [0.05, -0.4, 0.1], [0.0, 0.1, -0.5]],
        },
    },
    "driver": {
        "kind": "wishart",
        "intensity": 2.0,
        "qz": {
            "kind": "dense",
            "values": [[0.5, 0.1, 0.05], [0.1, 0.4, 0.08], [0.05, 0.08, 0.3]],
        },
    },
    "q": {"kind": "dense", "values": [[0.8, 0.1, 0.0], [0.1, 0.7, 0.1], [0.0, 0.1, 0.9]]},
}

_DIAGONAL_3D = {
    "dimension": 3,
    "seed": 20240613,
    "horizon": 1.0,
    "time": 1.0,
    "y0": {"kind": "diagonal", "values": [0.6, 0.45, 0.3]},
    "drift": {"kind": "lyapunov", "matrix": {"kind": "diagonal", "values": [-0.5, -0.3, -0.4]}},
    "driver": {"kind": "wishart", "intensity": 2.0, "qz": {"kind": "diagonal", "values": [0.5, 0.35, 0.25]}},
    "q": {"kind": "scaled-identity", "scale": 0.8},
    "x0": [1.0, 0.5, -0.25],
    "state_semigroup": {"kind": "diagonal", "rates": [-0.2, -0.35, -0.5]},
}

_FWD_N = 12
_FWD_DECAY = [round(0.5 * 0.85**k, 6) for k in range(_FWD_N)]
_FWD_QZ = [round(0.4 * 0.8**k, 6) for k in range(_FWD_N)]

DEFAULTS = {
    "verify-vol-cf": merge_config(
        _GENERAL_3D,
        {
            "experiment": "verify-vol-cf",
            "paths": 100_000,
            "test_operators": 5,
            "thresholds": {"abs_floor": 0.01, "z_max": 3.0},
        },
    ),
    "verify-x-cf": merge_config(
        _DIAGONAL_3D,
        {
            "experiment": "verify-x-cf",
            "paths": 100_000,
            "test_vectors": 5,
            "thresholds": {"abs_floor": 0.01, "z_max": 3.0},
        },
    ),
    "verify-gamma-jumps": merge_config(
        _GENERAL_3D,
        {
            "experiment": "verify-gamma-jumps",
            "samples": 1_000_000,
            "test_vectors": 5,
            "thresholds": {"mean_rel": 0.02, "variance_rel": 0.05},
        },
    ),
    "verify-wishart-cf": merge_config(
        _GENERAL_3D,
        {
            "experiment": "verify-wishart-cf",
            "samples": 1_000_000,
            "test_operators": 10,
            "thresholds": {"z_max": 3.0, "abs_floor": 0.0},
        },
    ),
    "verify-trace": merge_config(
        _GENERAL_3D,
        {
            "experiment": "verify-trace",
            "paths": 100_000,
            "horizon": 2.0,
            "times": [0.5, 1.0, 2.0],
            "thresholds": {"trace_rel": 0.01},
        },
    ),
    "verify-returns": merge_config(
        _GENERAL_3D,
        {
            "experiment": "verify-returns",
            "samples": 1_000_000,
            "horizon": 1.0,
            "return_window": {"start": 0.25, "length": 0.5},
            "return_steps": 512,
            "test_vectors": 3,
            "state_semigroup": {"kind": "diagonal", "rates": [-0.2, -0.35, -0.5]},
            "x0": [1.0, 0.5, -0.25],
            "thresholds": {"variance_rel": 0.01, "skewness_abs": 0.02, "kurtosis_abs": 0.05},
        },
    ),
    "positivity-suite": merge_config(
        _GENERAL_3D,
        {
            "experiment": "positivity-suite",
            "paths": 500,
            "horizon": 2.0,
            "grid_points": 20,
            "test_vectors": 10,
            "thresholds": {"min_eigenvalue": 1e-9, "symmetry_defect": 1e-10},
        },
    ),
    "simulate-forward": {
        "experiment": "simulate-forward",
        "dimension": _FWD_N,
        "seed": 20240613,
        "horizon": 1.0,
        "time": 1.0,
        "paths": 100_000,
        "grid_points": 8,
        "forward": {"alpha": 0.5, "basis_size": _FWD_N, "maturities": [0.25 * k for k in range(13)]},
        "y0": {"kind": "diagonal", "values": _FWD_DECAY},
        "drift": {
            "kind": "lyapunov",
            "matrix": {"kind": "diagonal", "values": [-0.3 - 0.02 * k for k in range(_FWD_N)]},
        },
        "driver": {"kind": "wishart", "intensity": 1.0, "qz": {"kind": "diagonal", "values": _FWD_QZ}},
        "q": {"kind": "scaled-identity", "scale": 0.6},
        "x0": [3.0, 0.5, -0.3, 0.15] + [0.0] * (_FWD_N - 4),
        "state_semigroup": {"kind": "filipovic-shift"},
        "thresholds": {"spot_var_rel": 0.02},
    },
}


def default_config(name: str) -> dict:
    if name not in DEFAULTS:
        raise ConfigError(f"unknown experiment {name!r}; valid: {sorted(DEFAULTS)}")
    return merge_config(DEFAULTS[name], None)


@dataclass
class ExperimentResult:
    name: str
    passed: bool
    rows: list
    files: list = field(default_factory=list)
    elapsed: float = 0.0
    summary: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# chunk workers (module level so process pools can pickle the dispatch)

_CHUNK_SIZES = {"verify-returns": 8192, "simulate-forward": 4096}


def _chunk_args(name, token, total, chunk_size):
    return [(name, token, idx, start, stop) for idx, start, stop in fixed_chunks(total, chunk_size)]


def _run_chunk(args):
    name, token, idx, start, stop = args
    cfg = config_from_token(token)
    return _CHUNK_FNS[name](cfg, idx, stop - start)


def _chunk_vol_cf(cfg: ResolvedConfig, idx: int, n: int):
    vol = cfg.build_vol_model()
    ops = cfg.test_operators()
    t = cfg.number("time", positive=True)
    rng = seed_derivation(cfg.seed, idx, "driver")
    batch = vol.driver.sample_paths_batch(cfg.number("horizon", positive=True), n, rng)
    states = vol.states_from_events_batch(t, batch)
    phases = np.stack([np.einsum("pij,ij->p", states, op) for op in ops], axis=1)
    acc = CfAccumulator()
    acc.update(phases)
    return acc


def _chunk_x_cf(cfg: ResolvedConfig, idx: int, n: int):
    pm = cfg.build_price_model()
    vecs = cfg.test_vectors()
    t = cfg.number("time", positive=True)
    batch = pm.vol.driver.sample_paths_batch(
        cfg.number("horizon", positive=True), n, seed_derivation(cfg.seed, idx, "driver")
    )
    samples = pm.terminal_samples_batch(t, batch, seed_derivation(cfg.seed, idx, "wiener"))
    phases = samples @ np.stack(vecs, axis=1)
    acc = CfAccumulator()
    acc.update(phases)
    return acc


def _chunk_gamma(cfg: ResolvedConfig, idx: int, n: int):
    driver = cfg.build_driver()
    vecs = cfg.test_vectors()
    rng = seed_derivation(cfg.seed, idx, "marks")
    z = rng.standard_normal((n, cfg.dim)) @ driver.q_z_sqrt.T
    proj = np.stack([(z @ f) ** 2 for f in vecs], axis=1)
    acc = MomentAccumulator()
    acc.update(proj)
    return acc


def _chunk_wishart_cf(cfg: ResolvedConfig, idx: int, n: int):
    driver = cfg.build_driver()
    ops = cfg.test_operators()
    rng = seed_derivation(cfg.seed, idx, "marks")
    z = rng.standard_normal((n, cfg.dim)) @ driver.q_z_sqrt.T
    phases = np.stack([np.einsum("pi,ij,pj->p", z, op, z) for op in ops], axis=1)
    acc = CfAccumulator()
    acc.update(phases)
    return acc


def _chunk_trace(cfg: ResolvedConfig, idx: int, n: int):
    vol = cfg.build_vol_model()
    q_half = psd_sqrt(cfg.build_q(), cfg.tol)
    times = [float(t) for t in cfg.raw["times"]]
    rng = seed_derivation(cfg.seed, idx, "driver")
    batch = vol.driver.sample_paths_batch(cfg.number("horizon", positive=True), n, rng)
    qq = q_half @ q_half
    traces = np.stack(
        [np.einsum("pij,ij->p", vol.states_from_events_batch(t, batch), qq) for t in times],
        axis=1,
    )
    acc = MomentAccumulator(order=2)
    acc.update(traces)
    return acc


def _returns_setup(cfg: ResolvedConfig):
    """Frozen volatility path and the exact linear map of the conditional sampler."""
    pm = cfg.build_price_model()
    horizon = cfg.number("horizon", positive=True)
    window = cfg.raw.get("return_window", {})
    t0 = float(window.get("start", 0.25))
    dt = float(window.get("length", 0.5))
    if t0 < 0 or t0 + dt > horizon:
        raise ConfigError("return_window must sit inside the horizon")
    vol_path = pm.vol.simulate(horizon, [0.0, horizon], seed_derivation(cfg.seed, 0, "driver"))
    cov = pm.adjusted_return_cov(vol_path, t0, dt)
    # midpoint Ito-sum weights, split exactly at jump times: the independent
    # sampling route for R(t, dt) given this volatility path
    steps = int(cfg.raw.get("return_steps", 512))
    edges = np.linspace(t0, t0 + dt, steps + 1)
    jumps = vol_path.events.times
    inside = jumps[(jumps > t0) & (jumps < t0 + dt)]
    edges = np.unique(np.concatenate([edges, inside]))
    mids = 0.5 * (edges[:-1] + edges[1:])
    widths = np.diff(edges)
    q_half = psd_sqrt(pm.q, cfg.tol)
    blocks = []
    for s, h in zip(mids, widths):
        y_half = psd_sqrt(vol_path.value_at(float(s)), cfg.tol)
        e = pm.state_sg.at(t0 + dt - float(s))
        blocks.append((e @ y_half @ q_half) * np.sqrt(h))
    a_map = np.concatenate(blocks, axis=1)  # (N, N * pieces)
    vecs = cfg.test_vectors()
    b_map = np.stack([f @ a_map for f in vecs])  # (K, N * pieces)
    return pm, vol_path, cov, b_map, (t0, dt)


def _chunk_returns(cfg: ResolvedConfig, idx: int, n: int):
    _, _, _, b_map, _ = _returns_cached(cfg.token())
    rng = seed_derivation(cfg.seed, idx, "wiener")
    xi = rng.standard_normal((b_map.shape[1], n))
    proj = (b_map @ xi).T  # (n, K)
    acc = MomentAccumulator()
    acc.update(proj)
    return acc


_RETURNS_CACHE: dict = {}


def _returns_cached(token: str):
    if token not in _RETURNS_CACHE:
        _RETURNS_CACHE[token] = _returns_setup(config_from_token(token))
    return _RETURNS_CACHE[token]


def _chunk_positivity(cfg: ResolvedConfig, idx: int, n: int):
    vol = cfg.build_vol_model()
    horizon = cfg.number("horizon", positive=True)
    grid = np.linspace(horizon / cfg.raw.get("grid_points", 20), horizon, cfg.raw.get("grid_points", 20))
    rng = seed_derivation(cfg.seed, idx, "driver")
    batch = vol.driver.sample_paths_batch(horizon, n, rng)
    min_eig = np.inf
    max_asym = 0.0
    checked = 0
    for t in grid:
        states = vol.states_from_events_batch(float(t), batch)
        sym = 0.5 * (states + states.transpose(0, 2, 1))
        min_eig = min(min_eig, float(np.linalg.eigvalsh(sym)[:, 0].min()))
        max_asym = max(max_asym, float(np.abs(states - states.transpose(0, 2, 1)).max()))
        checked += len(states)
    return (min_eig, max_asym, checked)


def _forward_setup(cfg: ResolvedConfig):
    space = cfg.build_forward_space()
    if space.n != cfg.dim:
        raise ConfigError("simulate-forward: 'dimension' must equal forward.basis_size")
    vol = cfg.build_vol_model()
    pm = cfg.build_price_model(vol=vol, state_sg=space.shift_semigroup())
    return space, pm


_FORWARD_CACHE: dict = {}


def _forward_cached(token: str):
    if token not in _FORWARD_CACHE:
        _FORWARD_CACHE[token] = _forward_setup(config_from_token(token))
    return _FORWARD_CACHE[token]


def _chunk_forward(cfg: ResolvedConfig, idx: int, n: int):
    space, pm = _forward_cached(cfg.token())
    t = cfg.number("time", positive=True)
    batch = pm.vol.driver.sample_paths_batch(
        cfg.number("horizon", positive=True), n, seed_derivation(cfg.seed, idx, "driver")
    )
    samples = pm.terminal_samples_batch(t, batch, seed_derivation(cfg.seed, idx, "wiener"))
    noise = samples - pm.state_sg.at(t) @ pm.x0
    acc = MomentAccumulator()
    acc.update(noise[:, :1])  # spot coordinate: f(t, 0) - f0(t)
    return acc


_CHUNK_FNS = {
    "verify-vol-cf": _chunk_vol_cf,
    "verify-x-cf": _chunk_x_cf,
    "verify-gamma-jumps": _chunk_gamma,
    "verify-wishart-cf": _chunk_wishart_cf,
    "verify-trace": _chunk_trace,
    "verify-returns": _chunk_returns,
    "positivity-suite": _chunk_positivity,
    "simulate-forward": _chunk_forward,
}


def _reduce_accumulators(parts):
    acc = parts[0]
    for other in parts[1:]:
        acc = acc.merge(other)
    return acc


# ---------------------------------------------------------------------------
# experiment bodies


def _mc_reduce(cfg, name, total_key, workers):
    total = cfg.number(total_key, positive=True, integer=True)
    args = _chunk_args(name, cfg.token(), total, _CHUNK_SIZES.get(name, 16384))
    return _reduce_accumulators(map_chunks(_run_chunk, args, workers))


def _run_vol_cf(cfg: ResolvedConfig, workers: int):
    vol = cfg.build_vol_model()
    t = cfg.number("time", positive=True)
    acc = _mc_reduce(cfg, "verify-vol-cf", "paths", workers)
    floor = cfg.threshold("abs_floor", 0.01)
    z_max = cfg.threshold("z_max", 3.0)
    rows = []
    for k, op in enumerate(cfg.test_operators()):
        analytic = vol.cf(0.0, vol.y0, t, op)
        emp, se = acc.estimate(k)
        rows.append(CheckRow.complex_check(f"operator-{k}", analytic, emp, se, floor, z_max))
    return rows, {"paths": acc.n}


def _run_x_cf(cfg: ResolvedConfig, workers: int):
    pm = cfg.build_price_model()
    t = cfg.number("time", positive=True)
    acc = _mc_reduce(cfg, "verify-x-cf", "paths", workers)
    floor = cfg.threshold("abs_floor", 0.01)
    z_max = cfg.threshold("z_max", 3.0)
    rows = []
    for k, f in enumerate(cfg.test_vectors()):
        analytic = pm.cf(t, f)
        emp, se = acc.estimate(k)
        rows.append(CheckRow.complex_check(f"vector-{k}", analytic, emp, se, floor, z_max))
    return rows, {"paths": acc.n, "commutation": pm.commutativity_report().defects}


def _run_gamma(cfg: ResolvedConfig, workers: int):
    driver = cfg.build_driver()
    if not hasattr(driver, "q_z"):
        raise ConfigError("verify-gamma-jumps needs the wishart driver")
    acc = _mc_reduce(cfg, "verify-gamma-jumps", "samples", workers)
    mean_rel = cfg.threshold("mean_rel", 0.02)
    var_rel = cfg.threshold("variance_rel", 0.05)
    rows = []
    for k, f in enumerate(cfg.test_vectors()):
        scale = float(f @ driver.q_z @ f)  # Gamma(shape 1/2, scale 2 scale): mean = scale
        emp_mean, se_mean = acc.mean(k)
        rows.append(
            CheckRow.scalar_check(
                f"vector-{k}", "mean", scale, emp_mean, se_mean, mean_rel, relative=True
            )
        )
        rows.append(
            CheckRow.scalar_check(
                f"vector-{k}",
                "variance",
                2.0 * scale**2,
                acc.variance(k),
                acc.variance_se(k),
                var_rel,
                relative=True,
            )
        )
    return rows, {"samples": acc.n}


def _run_wishart_cf(cfg: ResolvedConfig, workers: int):
    driver = cfg.build_driver()
    acc = _mc_reduce(cfg, "verify-wishart-cf", "samples", workers)
    floor = cfg.threshold("abs_floor", 0.0)
    z_max = cfg.threshold("z_max", 3.0)
    rows = []
    for k, op in enumerate(cfg.test_operators()):
        analytic = driver._det_inv_sqrt(op).inv_sqrt  # single-mark CF
        emp, se = acc.estimate(k)
        rows.append(CheckRow.complex_check(f"operator-{k}", analytic, emp, se, floor, z_max))
    return rows, {"samples": acc.n}


def _run_trace(cfg: ResolvedConfig, workers: int):
    vol = cfg.build_vol_model()
    q = cfg.build_q()
    acc = _mc_reduce(cfg, "verify-trace", "paths", workers)
    rel = cfg.threshold("trace_rel", 0.01)
    rows = []
    for k, t in enumerate(cfg.raw["times"]):
        analytic = vol.expected_trace(q, float(t))
        emp, se = acc.mean(k)
        rows.append(CheckRow.scalar_check(f"t={t}", "mean", analytic, emp, se, rel, relative=True))
    return rows, {"paths": acc.n}


def _run_returns(cfg: ResolvedConfig, workers: int):
    pm, vol_path, cov, _, window = _returns_cached(cfg.token())
    acc = _mc_reduce(cfg, "verify-returns", "samples", workers)
    var_rel = cfg.threshold("variance_rel", 0.01)
    skew_abs = cfg.threshold("skewness_abs", 0.02)
    kurt_abs = cfg.threshold("kurtosis_abs", 0.05)
    n = acc.n
    rows = []
    for k, f in enumerate(cfg.test_vectors()):
        target = float(f @ cov @ f)
        rows.append(
            CheckRow.scalar_check(
                f"projection-{k}",
                "variance",
                target,
                acc.variance(k),
                acc.variance_se(k),
                var_rel,
                relative=True,
            )
        )
        rows.append(
            CheckRow.scalar_check(
                f"projection-{k}",
                "skewness",
                0.0,
                acc.skewness(k),
                float(np.sqrt(6.0 / n)),
                skew_abs,
            )
        )
        rows.append(
            CheckRow.scalar_check(
                f"projection-{k}",
                "excess-kurtosis",
                0.0,
                acc.excess_kurtosis(k),
                float(np.sqrt(24.0 / n)),
                kurt_abs,
            )
        )
    return rows, {"samples": acc.n, "window": window, "events": vol_path.events.n_events}


def _run_positivity(cfg: ResolvedConfig, workers: int):
    total = cfg.number("paths", positive=True, integer=True)
    args = _chunk_args("positivity-suite", cfg.token(), total, _CHUNK_SIZES.get("positivity-suite", 16384))
    parts = map_chunks(_run_chunk, args, workers)
    min_eig = min(p[0] for p in parts)
    max_asym = max(p[1] for p in parts)
    checked = sum(p[2] for p in parts)
    eig_thr = cfg.threshold("min_eigenvalue", 1e-9)
    sym_thr = cfg.threshold("symmetry_defect", 1e-10)
    rows = [
        CheckRow.lower_bound_check("states", "min-eigenvalue", min_eig, eig_thr),
        CheckRow.upper_bound_check("states", "symmetry-defect", max_asym, sym_thr),
    ]
    # semigroup positivity preservation and non-decreasing paths, theorem-backed
    vol = cfg.build_vol_model()
    rep = positivity_preservation_check(
        vol.drift, np.linspace(0.25, 2.0, 8), 200, seed_derivation(cfg.seed, 0, "probe"), cfg.tol
    )
    rows.append(
        CheckRow.lower_bound_check("semigroup-psd-cone", "min-eigenvalue", rep.min_eigenvalue, eig_thr)
    )
    rng = seed_derivation(cfg.seed, 1, "probe")
    vectors = [rng.standard_normal(cfg.dim) for _ in range(int(cfg.raw.get("test_vectors", 10)))]
    worst_proj = np.inf
    n_events = 0
    for i in range(100):
        path = vol.driver.sample_path(cfg.number("horizon", positive=True), rng)
        nd = verify_nondecreasing(path, vectors, cfg.tol)
        worst_proj = min(worst_proj, nd.min_projection)
        n_events += nd.events_checked
        if not nd.passed:
            worst_proj = min(worst_proj, -1.0)
    rows.append(
        CheckRow.lower_bound_check("driver-paths", "min-mark-projection", float(worst_proj), eig_thr)
    )
    return rows, {"states_checked": checked, "driver_events_checked": n_events}


def _run_forward(cfg: ResolvedConfig, workers: int, out_dir: Path, figures: bool):
    space, pm = _forward_cached(cfg.token())
    t = cfg.number("time", positive=True)
    horizon = cfg.number("horizon", positive=True)
    maturities = np.asarray(cfg.raw["forward"].get("maturities", [0.0, 0.5, 1.0]), dtype=float)
    files = []

    # showcase path: one full surface with its diagnostics
    grid = np.linspace(0.0, horizon, int(cfg.raw.get("grid_points", 8)) + 1)
    vol_path = pm.vol.simulate(horizon, grid, seed_derivation(cfg.seed, 0, "driver"))
    xpath = pm.simulate(vol_path, seed_derivation(cfg.seed, 0, "wiener"))
    from .forward import forward_surface

    surface = forward_surface(xpath, space, maturities)
    for fname, writer in (
        ("forward_surface.csv", surface.to_csv),
        ("spot_series.csv", surface.spot_to_csv),
        ("vol_path.csv", vol_path.to_csv),
    ):
        writer(out_dir / fname)
        files.append(out_dir / fname)
    xpath.to_csv(
        out_dir / "x_path.csv",
        projections=[("spot", space.kernel_coeffs(np.asarray(0.0)))],
    )
    files.append(out_dir / "x_path.csv")
    _write_sigma2_slices(out_dir / "sigma2_slices.csv", space, pm, vol_path, t, maturities)
    files.append(out_dir / "sigma2_slices.csv")
    _write_ambit_kernel(out_dir / "ambit_kernel.csv", space, vol_path, t)
    files.append(out_dir / "ambit_kernel.csv")
    if figures:
        try:
            from .figures import render_surface

            files.extend(render_surface(surface, out_dir))
        except Exception:
            pass

    # spot variance: MC over paths vs quadrature of the expected squared field;
    # the analytic route needs the commutation condition (then the field is
    # linear in the variance state and the expectation passes inside)
    if not pm.commutativity_report().passed:
        raise ConfigError(
            "simulate-forward: the spot-variance formula needs the Wiener covariance "
            "to commute with the volatility; use a scaled-identity q or a commuting driver"
        )
    acc = _mc_reduce(cfg, "simulate-forward", "paths", workers)

    def integrand(ss):
        vals = np.empty(len(ss))
        for i, s in enumerate(ss):
            m = space.kernel_coeffs(np.asarray(t - float(s)))
            mean_y = pm.vol.mean_state(float(s))
            damp = float(pm.psi(float(s))) ** 2 if pm.psi is not None else 1.0
            vals[i] = damp * float(m @ (pm.q @ mean_y @ m))
        return vals

    analytic_var = float(simpson_doubling(integrand, 0.0, t, cfg.tol.eps_quad))
    rel = cfg.threshold("spot_var_rel", 0.02)
    rows = [
        CheckRow.scalar_check(
            "spot-increment",
            "variance",
            analytic_var,
            acc.variance(0),
            acc.variance_se(0),
            rel,
            relative=True,
        )
    ]
    flat = CheckRow.scalar_check(
        "transport-limit",
        "diagnostic",
        surface.transport_limit,
        float(surface.transport[-1, -1]),
        0.0,
        float("inf"),
    )
    rows.append(flat)
    summary = {
        "paths": acc.n,
        "spot_variance_mc": acc.variance(0),
        "spot_variance_analytic": analytic_var,
        "transport_limit": surface.transport_limit,
        "flatness_defect": surface.flatness_defect(),
        "commutation": pm.commutativity_report().defects,
    }
    return rows, summary, files


def _write_ambit_kernel(path, space, vol_path, t):
    """Spatial integrand of the random-field form of the noise term.

    Samples of w(y) (Y^{1/2}(s) h_{x+t-s})'(y) at mid-horizon s: the same
    process seen as a space-time field; a diagnostic, not a second simulator.
    """
    import csv

    s = float(vol_path.grid[len(vol_path.grid) // 2])
    if s >= t:
        s = 0.5 * t
    y = vol_path.value_at(s)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["s", "x", "y", "integrand"])
        for x in (0.0, 0.5, 1.0):
            grid, samples = space.ambit_kernel_samples(y, t, s, x)
            keep = slice(0, len(grid), max(1, len(grid) // 400))
            for yy, val in zip(grid[keep], samples[keep]):
                w.writerow([repr(s), repr(x), repr(float(yy)), repr(float(val))])


def _write_sigma2_slices(path, space, pm, vol_path, t, maturities):
    """Squared volatility field on (s, x) slices, both evaluation routes."""
    import csv

    q = pm.q
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "s", "x", "sigma2", "sigma2_commuting"])
        for s in vol_path.grid:
            if s > t:
                continue
            y = vol_path.value_at(float(s))
            y_q = q @ y
            for x in maturities:
                v1 = space.sigma2(y, q, t, float(s), float(x))
                v2 = space.sigma2_commuting(y_q, t, float(s), float(x))
                w.writerow([repr(float(t)), repr(float(s)), repr(float(x)), repr(v1), repr(v2)])


# ---------------------------------------------------------------------------
# dispatch


def run_experiment(
    name: str,
    overrides: dict | None = None,
    out_dir=None,
    workers: int = 1,
    figures: bool = True,
) -> ExperimentResult:
    """Run one experiment; write CSV rows, figures and return the result."""
    cfg_dict = merge_config(default_config(name), overrides)
    cfg_dict["experiment"] = name
    cfg = validate_config(cfg_dict)
    out_dir = Path(out_dir if out_dir is not None else cfg.raw.get("out", "results"))
    out_dir.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    files = []
    if name == "verify-vol-cf":
        rows, summary = _run_vol_cf(cfg, workers)
    elif name == "verify-x-cf":
        rows, summary = _run_x_cf(cfg, workers)
    elif name == "verify-gamma-jumps":
        rows, summary = _run_gamma(cfg, workers)
    elif name == "verify-wishart-cf":
        rows, summary = _run_wishart_cf(cfg, workers)
    elif name == "verify-trace":
        rows, summary = _run_trace(cfg, workers)
    elif name == "verify-returns":
        rows, summary = _run_returns(cfg, workers)
    elif name == "positivity-suite":
        rows, summary = _run_positivity(cfg, workers)
    elif name == "simulate-forward":
        rows, summary, files = _run_forward(cfg, workers, out_dir, figures)
    else:
        raise ConfigError(f"unknown experiment {name!r}")
    csv_path = out_dir / f"{name.replace('-', '_')}.csv"
    write_rows_csv(csv_path, rows)
    files.insert(0, csv_path)
    elapsed = time.perf_counter() - start
    passed = all(r.passed for r in rows)
    if figures:
        try:
            from .figures import render_experiment

            files.extend(render_experiment(name, rows, out_dir))
        except Exception as exc:  # figures never gate the contract
            summary = dict(summary)
            summary["figure_error"] = repr(exc)
    return ExperimentResult(
        name=name, passed=passed, rows=rows, files=files, elapsed=elapsed, summary=summary
    )


def run_all(
    overrides: dict | None = None, out_dir=None, workers: int = 1, figures: bool = True
):
    """Run every experiment; returns (results, manifest)."""
    results = []
    seed = None
    for name in DEFAULTS:
        res = run_experiment(name, overrides, out_dir, workers, figures)
        results.append(res)
        if seed is None:
            seed = validate_config(merge_config(default_config(name), overrides)).seed
    manifest = RunManifest(
        version=__version__, seed=seed, workers=workers, config=overrides or {}
    )
    for res in results:
        manifest.add(res.name, res.passed, res.elapsed, res.files, res.summary)
    return results, manifest
