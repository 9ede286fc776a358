"""Experiment configuration: YAML schema, strict validation, model builders.

The schema is flat YAML with nested blocks for the matrix-valued pieces.
Unknown keys are rejected everywhere (anti-typo), every numeric field is
range-checked, and matrices are validated against the declared dimension and
their structural requirements (symmetry, positive semidefiniteness) before a
model object is built.  Drivers carry no Gaussian part by construction; a
config that asks for one is rejected up front.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import yaml

from .errors import ConfigError, NotPSDError, NotSelfAdjointError
from .forward import ForwardCurveSpace, WeightSpec
from .hs import Tolerances
from .levy import (
    ExponentialJumps,
    FixedJumps,
    GammaJumps,
    ScalarTimesU,
    SubordinatorSpec,
    WishartCompoundPoisson,
)
from .lifted import LyapunovDrift, SandwichDrift, ZeroDrift
from .oux import DiagonalSemigroup, IdentitySemigroup, PriceModel
from .vol import VolModel

__all__ = [
    "EXPERIMENTS",
    "load_config",
    "merge_config",
    "validate_config",
    "ResolvedConfig",
    "driver_to_config",
]

EXPERIMENTS = (
    "verify-vol-cf",
    "verify-x-cf",
    "verify-gamma-jumps",
    "verify-wishart-cf",
    "verify-trace",
    "verify-returns",
    "positivity-suite",
    "simulate-forward",
)

_TOP_KEYS = {
    "experiment",
    "dimension",
    "seed",
    "paths",
    "samples",
    "horizon",
    "time",
    "times",
    "grid_points",
    "workers",
    "out",
    "figures",
    "tolerances",
    "thresholds",
    "test_operators",
    "test_vectors",
    "y0",
    "q",
    "x0",
    "drift",
    "driver",
    "state_semigroup",
    "return_window",
    "return_steps",
    "forward",
    "samuelson_kappa",
}

_THRESHOLD_KEYS = {
    "abs_floor",
    "z_max",
    "mean_rel",
    "variance_rel",
    "trace_rel",
    "skewness_abs",
    "kurtosis_abs",
    "spot_var_rel",
    "min_eigenvalue",
    "symmetry_defect",
}


def _require_keys(block: dict, allowed: set, where: str) -> None:
    if not isinstance(block, dict):
        raise ConfigError(f"{where}: expected a mapping, got {type(block).__name__}")
    unknown = set(block) - allowed
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}; allowed are {sorted(allowed)}")


def _number(block, key, where, *, positive=False, nonnegative=False, integer=False, default=None):
    if key not in block:
        if default is not None:
            return default
        raise ConfigError(f"{where}: missing required key '{key}'")
    val = block[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ConfigError(f"{where}.{key}: expected a number, got {val!r}")
    if integer and int(val) != val:
        raise ConfigError(f"{where}.{key}: expected an integer, got {val!r}")
    if positive and val <= 0:
        raise ConfigError(f"{where}.{key}: must be > 0, got {val!r}")
    if nonnegative and val < 0:
        raise ConfigError(f"{where}.{key}: must be >= 0, got {val!r}")
    return int(val) if integer else float(val)


def _matrix(block, dim: int, where: str, *, psd=False, symmetric=False, tol: Tolerances) -> np.ndarray:
    _require_keys(block, {"kind", "scale", "values"}, where)
    kind = block.get("kind")
    if kind == "identity":
        mat = np.eye(dim)
    elif kind == "scaled-identity":
        mat = _number(block, "scale", where) * np.eye(dim)
    elif kind == "diagonal":
        vals = block.get("values")
        if not isinstance(vals, list) or len(vals) != dim:
            raise ConfigError(f"{where}: diagonal needs a list of {dim} values")
        mat = np.diag(np.asarray(vals, dtype=float))
    elif kind == "dense":
        vals = block.get("values")
        arr = np.asarray(vals, dtype=float) if vals is not None else None
        if arr is None or arr.shape != (dim, dim):
            raise ConfigError(f"{where}: dense needs a {dim}x{dim} list of lists")
        mat = arr
    else:
        raise ConfigError(
            f"{where}.kind: expected identity|scaled-identity|diagonal|dense, got {kind!r}"
        )
    try:
        if psd:
            from .hs import require_psd

            require_psd(mat, tol)
        elif symmetric:
            from .hs import require_self_adjoint

            require_self_adjoint(mat, tol)
    except (NotPSDError, NotSelfAdjointError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc
    return mat


def _vector(value, dim: int, where: str) -> np.ndarray:
    if not isinstance(value, list) or len(value) != dim:
        raise ConfigError(f"{where}: expected a list of {dim} numbers")
    return np.asarray(value, dtype=float)


def _build_drift(block, dim, tol, where="drift"):
    _require_keys(block, {"kind", "matrix"}, where)
    kind = block.get("kind")
    if kind == "zero":
        return ZeroDrift(dim)
    if kind not in ("sandwich", "lyapunov"):
        raise ConfigError(f"{where}.kind: expected zero|sandwich|lyapunov, got {kind!r}")
    if "matrix" not in block:
        raise ConfigError(f"{where}: {kind} drift needs a 'matrix' block")
    mat = _matrix(block["matrix"], dim, f"{where}.matrix", tol=tol)
    return SandwichDrift(mat) if kind == "sandwich" else LyapunovDrift(mat)


def _build_jump_law(block, where):
    _require_keys(block, {"kind", "mean", "shape", "scale", "size"}, where)
    kind = block.get("kind")
    try:
        if kind == "exponential":
            return ExponentialJumps(_number(block, "mean", where, positive=True))
        if kind == "gamma":
            return GammaJumps(
                _number(block, "shape", where, positive=True),
                _number(block, "scale", where, positive=True),
            )
        if kind == "deterministic":
            return FixedJumps(_number(block, "size", where, positive=True))
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from exc
    raise ConfigError(f"{where}.kind: expected exponential|gamma|deterministic, got {kind!r}")


def _build_driver(block, dim, tol, where="driver"):
    _require_keys(
        block,
        {"kind", "intensity", "qz", "drift_rate", "jump_intensity", "jump_law", "u", "gaussian_part"},
        where,
    )
    if block.get("gaussian_part") not in (None, 0, 0.0):
        raise ConfigError(
            f"{where}: drivers with a Gaussian part are not representable; "
            "non-decreasing paths force it to vanish on symmetric directions"
        )
    kind = block.get("kind")
    if kind == "wishart":
        if "qz" not in block:
            raise ConfigError(f"{where}: wishart driver needs 'qz'")
        qz = _matrix(block["qz"], dim, f"{where}.qz", psd=True, tol=tol)
        return WishartCompoundPoisson(_number(block, "intensity", where, positive=True), qz, tol)
    if kind == "scalar-times-u":
        if "u" not in block:
            raise ConfigError(f"{where}: scalar-times-u driver needs 'u'")
        u = _matrix(block["u"], dim, f"{where}.u", psd=True, tol=tol)
        law = _build_jump_law(block["jump_law"], f"{where}.jump_law") if "jump_law" in block else None
        try:
            sub = SubordinatorSpec(
                drift_rate=_number(block, "drift_rate", where, nonnegative=True, default=0.0),
                jump_intensity=_number(block, "jump_intensity", where, nonnegative=True, default=0.0),
                jump_law=law,
            )
        except ValueError as exc:
            raise ConfigError(f"{where}: {exc}") from exc
        return ScalarTimesU(sub, u, tol)
    raise ConfigError(f"{where}.kind: expected wishart|scalar-times-u, got {kind!r}")


def driver_to_config(driver) -> dict:
    """Serialise a driver back to its config block (round-trips with the builder)."""
    if isinstance(driver, WishartCompoundPoisson):
        return {
            "kind": "wishart",
            "intensity": driver.intensity,
            "qz": {"kind": "dense", "values": driver.q_z.tolist()},
        }
    if isinstance(driver, ScalarTimesU):
        law = driver.sub.jump_law
        law_block = None
        if isinstance(law, ExponentialJumps):
            law_block = {"kind": "exponential", "mean": law.mean}
        elif isinstance(law, GammaJumps):
            law_block = {"kind": "gamma", "shape": law.shape, "scale": law.scale}
        elif isinstance(law, FixedJumps):
            law_block = {"kind": "deterministic", "size": law.size}
        out = {
            "kind": "scalar-times-u",
            "drift_rate": driver.sub.drift_rate,
            "jump_intensity": driver.sub.jump_intensity,
            "u": {"kind": "dense", "values": driver.u_op.tolist()},
        }
        if law_block is not None:
            out["jump_law"] = law_block
        return out
    raise ConfigError(f"cannot serialise driver of type {type(driver).__name__}")


def _build_state_sg(block, dim, where="state_semigroup"):
    _require_keys(block, {"kind", "rates"}, where)
    kind = block.get("kind")
    if kind == "identity":
        return IdentitySemigroup(dim)
    if kind == "diagonal":
        rates = block.get("rates")
        if not isinstance(rates, list) or len(rates) != dim:
            raise ConfigError(f"{where}: diagonal semigroup needs {dim} rates")
        return DiagonalSemigroup(np.asarray(rates, dtype=float))
    if kind == "filipovic-shift":
        # bound to the forward space at build time
        return "filipovic-shift"
    raise ConfigError(f"{where}.kind: expected identity|diagonal|filipovic-shift, got {kind!r}")


def merge_config(base: dict, override: dict | None) -> dict:
    """Deep merge; override wins, nested dicts merge recursively."""
    if override is None:
        return json.loads(json.dumps(base))
    out = json.loads(json.dumps(base))
    for key, val in override.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = merge_config(out[key], val)
        else:
            out[key] = val
    return out


def load_config(path) -> dict:
    with open(path) as fh:
        data = yaml.safe_load(fh)
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError("config file must contain a YAML mapping")
    return data


def validate_config(cfg: dict) -> "ResolvedConfig":
    """Validate the merged config and return a resolved, model-building view."""
    _require_keys(cfg, _TOP_KEYS, "config")
    if "experiment" in cfg and cfg["experiment"] not in EXPERIMENTS:
        raise ConfigError(f"experiment: unknown name {cfg['experiment']!r}; valid: {EXPERIMENTS}")
    dim = _number(cfg, "dimension", "config", positive=True, integer=True)
    seed = _number(cfg, "seed", "config", nonnegative=True, integer=True)
    tol_block = cfg.get("tolerances", {})
    _require_keys(tol_block, {"sym", "psd", "quad", "series"}, "tolerances")
    try:
        tol = Tolerances(
            eps_sym=float(tol_block.get("sym", 1e-9)),
            eps_psd=float(tol_block.get("psd", 1e-9)),
            eps_quad=float(tol_block.get("quad", 1e-8)),
            eps_series=float(tol_block.get("series", 1e-12)),
        )
    except ValueError as exc:
        raise ConfigError(f"tolerances: {exc}") from exc
    thresholds = cfg.get("thresholds", {})
    _require_keys(thresholds, _THRESHOLD_KEYS, "thresholds")
    for key, val in thresholds.items():
        if isinstance(val, bool) or not isinstance(val, (int, float)):
            raise ConfigError(f"thresholds.{key}: expected a number")
    if "time" in cfg and "horizon" in cfg:
        if _number(cfg, "time", "config", positive=True) > _number(
            cfg, "horizon", "config", positive=True
        ):
            raise ConfigError("time: evaluation time cannot exceed the simulated horizon")
    if "times" in cfg:
        if not isinstance(cfg["times"], list) or not cfg["times"]:
            raise ConfigError("times: expected a non-empty list")
        if "horizon" in cfg and max(cfg["times"]) > cfg["horizon"]:
            raise ConfigError("times: evaluation times cannot exceed the simulated horizon")
    if "forward" in cfg:
        _require_keys(
            cfg["forward"],
            {"alpha", "basis_size", "maturities", "x_max", "resolution"},
            "forward",
        )
    if "return_window" in cfg:
        _require_keys(cfg["return_window"], {"start", "length"}, "return_window")
    return ResolvedConfig(raw=cfg, dim=dim, seed=seed, tol=tol)


@dataclass
class ResolvedConfig:
    """Validated config plus lazy builders for the model objects."""

    raw: dict
    dim: int
    seed: int
    tol: Tolerances

    def number(self, key, **kw):
        return _number(self.raw, key, "config", **kw)

    def threshold(self, key, default):
        return float(self.raw.get("thresholds", {}).get(key, default))

    def build_driver(self):
        if "driver" not in self.raw:
            raise ConfigError("config: missing 'driver' block")
        return _build_driver(self.raw["driver"], self.dim, self.tol)

    def build_vol_model(self) -> VolModel:
        if "y0" not in self.raw or "drift" not in self.raw:
            raise ConfigError("config: vol model needs 'y0' and 'drift'")
        y0 = _matrix(self.raw["y0"], self.dim, "y0", psd=True, tol=self.tol)
        drift = _build_drift(self.raw["drift"], self.dim, self.tol)
        try:
            return VolModel(y0, drift, self.build_driver(), self.tol)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def build_q(self) -> np.ndarray:
        if "q" not in self.raw:
            raise ConfigError("config: missing 'q' block")
        return _matrix(self.raw["q"], self.dim, "q", psd=True, tol=self.tol)

    def build_price_model(self, vol: VolModel | None = None, state_sg=None) -> PriceModel:
        vol = vol or self.build_vol_model()
        if state_sg is None:
            if "state_semigroup" not in self.raw:
                raise ConfigError("config: missing 'state_semigroup' block")
            state_sg = _build_state_sg(self.raw["state_semigroup"], self.dim)
            if state_sg == "filipovic-shift":
                raise ConfigError(
                    "state_semigroup: filipovic-shift requires the simulate-forward experiment"
                )
        if "x0" not in self.raw:
            raise ConfigError("config: missing 'x0'")
        x0 = _vector(self.raw["x0"], self.dim, "x0")
        psi = None
        if self.raw.get("samuelson_kappa") is not None:
            kappa = _number(self.raw, "samuelson_kappa", "config", nonnegative=True)
            psi = _exp_decay(kappa)
        try:
            return PriceModel(x0, state_sg, self.build_q(), vol, psi=psi, tol=self.tol)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def build_forward_space(self) -> ForwardCurveSpace:
        block = self.raw.get("forward", {})
        try:
            weight = WeightSpec(
                alpha=float(block.get("alpha", 0.5)),
                x_max=block.get("x_max"),
                resolution=block.get("resolution"),
            )
            return ForwardCurveSpace(weight, int(block.get("basis_size", 12)), self.tol)
        except ValueError as exc:
            raise ConfigError(f"forward: {exc}") from exc

    def test_operators(self, count_key="test_operators", default=5):
        """Deterministic self-adjoint probes scaled to O(1) pairings."""
        from .rng import seed_derivation

        count = int(self.raw.get(count_key, default))
        rng = seed_derivation(self.seed, 0, "operators")
        ops = []
        for _ in range(count):
            a = rng.standard_normal((self.dim, self.dim))
            ops.append(0.5 * (a + a.T) / self.dim)
        return ops

    def test_vectors(self, count_key="test_vectors", default=5):
        from .rng import seed_derivation

        count = int(self.raw.get(count_key, default))
        rng = seed_derivation(self.seed, 1, "operators")
        return [rng.standard_normal(self.dim) / np.sqrt(self.dim) for _ in range(count)]

    def token(self) -> str:
        """Canonical serialisation used to rebuild the config in worker processes."""
        return json.dumps(self.raw, sort_keys=True)


class _exp_decay:
    """Picklable exponential damping psi(t) = exp(-kappa t)."""

    def __init__(self, kappa: float):
        self.kappa = float(kappa)

    def __call__(self, t):
        return np.exp(-self.kappa * np.asarray(t, dtype=float))


@lru_cache(maxsize=32)
def config_from_token(token: str) -> ResolvedConfig:
    return validate_config(json.loads(token))
