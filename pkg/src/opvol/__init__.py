"""Operator-valued stochastic volatility engine.

A desk-scale numerical model of an OU-type variance process taking values in
the (truncated) space of Hilbert-Schmidt operators, driven by operator-valued
jump processes with non-decreasing paths, together with the vol-modulated OU
process it powers, a weighted forward-curve state space, and a Monte Carlo
verification harness for every analytic formula the model admits.
"""

from .errors import (
    CommutationError,
    ConfigError,
    DimensionMismatchError,
    NotPSDError,
    NotSelfAdjointError,
    OpVolError,
    PositivityViolationError,
    QuadratureError,
    SeriesCapError,
    SingularDeterminantError,
)
from .forward import ForwardCurveSpace, ForwardSurface, ShiftSemigroup, WeightSpec, forward_surface
from .hs import (
    DEFAULT_TOL,
    Tolerances,
    fredholm_det_shifted,
    hs_inner,
    hs_norm,
    psd_sqrt,
    sym_decompose,
    tensor_square,
    trace_sandwich,
)
from .levy import (
    BatchDriverPaths,
    DriverPath,
    ExponentialJumps,
    FixedJumps,
    GammaJumps,
    ScalarTimesU,
    SubordinatorSpec,
    WishartCompoundPoisson,
    verify_nondecreasing,
)
from .lifted import (
    LyapunovDrift,
    PositivityReport,
    SandwichDrift,
    ZeroDrift,
    positivity_preservation_check,
)
from .oux import (
    DiagonalSemigroup,
    IdentitySemigroup,
    PriceModel,
    StateSemigroup,
    XPath,
    premultiply_path,
)
from .vol import VolModel, VolPath

__version__ = "0.1.0"

__all__ = [
    "BatchDriverPaths",
    "CommutationError",
    "ConfigError",
    "DEFAULT_TOL",
    "DiagonalSemigroup",
    "DimensionMismatchError",
    "DriverPath",
    "ExponentialJumps",
    "FixedJumps",
    "ForwardCurveSpace",
    "ForwardSurface",
    "GammaJumps",
    "IdentitySemigroup",
    "LyapunovDrift",
    "NotPSDError",
    "NotSelfAdjointError",
    "OpVolError",
    "PositivityReport",
    "PositivityViolationError",
    "PriceModel",
    "QuadratureError",
    "SandwichDrift",
    "ScalarTimesU",
    "SeriesCapError",
    "ShiftSemigroup",
    "SingularDeterminantError",
    "StateSemigroup",
    "SubordinatorSpec",
    "Tolerances",
    "VolModel",
    "VolPath",
    "WeightSpec",
    "WishartCompoundPoisson",
    "XPath",
    "ZeroDrift",
    "fredholm_det_shifted",
    "forward_surface",
    "hs_inner",
    "hs_norm",
    "premultiply_path",
    "psd_sqrt",
    "positivity_preservation_check",
    "sym_decompose",
    "tensor_square",
    "trace_sandwich",
    "verify_nondecreasing",
]
