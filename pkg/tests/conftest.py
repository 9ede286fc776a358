import numpy as np
import pytest

from opvol import (
    DiagonalSemigroup,
    LyapunovDrift,
    PriceModel,
    VolModel,
    WishartCompoundPoisson,
)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


GENERAL_QZ = np.array([[0.5, 0.1, 0.05], [0.1, 0.4, 0.08], [0.05, 0.08, 0.3]])
GENERAL_Y0 = np.array([[0.6, 0.1, 0.0], [0.1, 0.5, 0.05], [0.0, 0.05, 0.4]])
GENERAL_C = np.array([[-0.6, 0.15, 0.0], [0.05, -0.4, 0.1], [0.0, 0.1, -0.5]])
GENERAL_Q = np.array([[0.8, 0.1, 0.0], [0.1, 0.7, 0.1], [0.0, 0.1, 0.9]])


@pytest.fixture
def general_vol():
    """Non-diagonal Lyapunov drift with a Wishart compound Poisson driver."""
    return VolModel(GENERAL_Y0, LyapunovDrift(GENERAL_C), WishartCompoundPoisson(2.0, GENERAL_QZ))


@pytest.fixture
def diagonal_price():
    """Simultaneously diagonal config with scalar Wiener covariance."""
    vol = VolModel(
        np.diag([0.6, 0.45, 0.3]),
        LyapunovDrift(np.diag([-0.5, -0.3, -0.4])),
        WishartCompoundPoisson(2.0, np.diag([0.5, 0.35, 0.25])),
    )
    return PriceModel(
        np.array([1.0, 0.5, -0.25]),
        DiagonalSemigroup([-0.2, -0.35, -0.5]),
        0.8 * np.eye(3),
        vol,
    )
