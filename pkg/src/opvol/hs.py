"""Finite-dimensional kernels for the truncated Hilbert-Schmidt operator space.

Vectors in the state space are length-N float arrays (coordinates in a fixed
orthonormal basis); operators are dense N x N float arrays with the Frobenius
inner product playing the role of the Hilbert-Schmidt pairing.  Everything
downstream (drifts, drivers, the variance process) builds on these kernels.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import (
    DimensionMismatchError,
    NotPSDError,
    NotSelfAdjointError,
    SingularDeterminantError,
)

__all__ = [
    "Tolerances",
    "DEFAULT_TOL",
    "hs_inner",
    "hs_norm",
    "tensor_square",
    "sym_part",
    "symmetry_defect",
    "require_self_adjoint",
    "min_symmetric_eig",
    "require_psd",
    "psd_sqrt",
    "FredholmDet",
    "fredholm_det_shifted",
    "det_factors_inv_sqrt",
    "SymDecomposition",
    "sym_decompose",
    "trace_sandwich",
]


@dataclass(frozen=True)
class Tolerances:
    """Numerical tolerances used by validation and quadrature routines.

    eps_sym   -- max entrywise asymmetry accepted as "self-adjoint"
    eps_psd   -- eigenvalues in [-eps_psd, 0) are clipped; below is an error
    eps_quad  -- relative stabilisation target for adaptive quadratures
    eps_series-- absolute tail bound for truncated operator power series
    """

    eps_sym: float = 1e-9
    eps_psd: float = 1e-9
    eps_quad: float = 1e-8
    eps_series: float = 1e-12

    def __post_init__(self):
        for name in ("eps_sym", "eps_psd", "eps_quad", "eps_series"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"tolerance {name} must be strictly positive")


DEFAULT_TOL = Tolerances()


def _require_square(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatchError(f"expected a square matrix, got shape {a.shape}")
    return a


def hs_inner(a: np.ndarray, b: np.ndarray) -> float:
    """Hilbert-Schmidt (Frobenius) inner product sum_ij A_ij B_ij."""
    a = _require_square(a)
    b = _require_square(b)
    if a.shape != b.shape:
        raise DimensionMismatchError(f"shape mismatch {a.shape} vs {b.shape}")
    return float(np.tensordot(a, b, axes=2))


def hs_norm(a: np.ndarray) -> float:
    """Hilbert-Schmidt (Frobenius) norm."""
    return float(np.linalg.norm(np.asarray(a)))


def tensor_square(f: np.ndarray) -> np.ndarray:
    """Rank-one operator f (x) f, i.e. the outer product f f^T.

    Self-adjoint, PSD, with HS norm equal to |f|^2.
    """
    f = np.asarray(f, dtype=float)
    if f.ndim != 1:
        raise DimensionMismatchError(f"expected a vector, got shape {f.shape}")
    return np.outer(f, f)


def sym_part(a: np.ndarray) -> np.ndarray:
    a = _require_square(a)
    return 0.5 * (a + a.T)


def symmetry_defect(a: np.ndarray) -> float:
    """max |A_ij - A_ji|."""
    a = _require_square(a)
    return float(np.abs(a - a.T).max(initial=0.0))


def require_self_adjoint(a: np.ndarray, tol: Tolerances = DEFAULT_TOL) -> np.ndarray:
    defect = symmetry_defect(a)
    if defect > tol.eps_sym:
        raise NotSelfAdjointError(f"symmetry defect {defect:.3e} exceeds {tol.eps_sym:.3e}")
    return np.asarray(a)


def min_symmetric_eig(a: np.ndarray) -> float:
    """Smallest eigenvalue of the symmetric part of ``a``."""
    return float(np.linalg.eigvalsh(sym_part(a))[0])


def require_psd(a: np.ndarray, tol: Tolerances = DEFAULT_TOL) -> np.ndarray:
    a = require_self_adjoint(a, tol)
    lam = min_symmetric_eig(a)
    if lam < -tol.eps_psd:
        raise NotPSDError(f"min eigenvalue {lam:.3e} below -{tol.eps_psd:.3e}")
    return a


def psd_sqrt(a: np.ndarray, tol: Tolerances = DEFAULT_TOL) -> np.ndarray:
    """Unique PSD square root via symmetric eigendecomposition.

    Eigenvalues in [-eps_psd, 0) are clipped to zero; anything below -eps_psd
    raises ``NotPSDError`` because positivity is a theorem of the model and a
    genuine violation signals a bug, not noise.
    """
    a = require_self_adjoint(a, tol)
    w, v = np.linalg.eigh(sym_part(a))
    if w[0] < -tol.eps_psd:
        raise NotPSDError(f"min eigenvalue {w[0]:.3e} below -{tol.eps_psd:.3e}")
    w = np.clip(w, 0.0, None)
    return (v * np.sqrt(w)) @ v.T


class FredholmDet(NamedTuple):
    value: complex
    inv_sqrt: complex


def det_factors_inv_sqrt(mu: np.ndarray) -> FredholmDet:
    """det(I - 2i diag(mu)) and its -1/2 power from eigenvalue factors.

    Each factor 1 - 2i*mu_k deforms continuously from 1 along theta*mu,
    theta in [0,1], without crossing the branch cut of the principal square
    root, so accumulating per-factor principal powers tracks the continuous
    branch of the product.
    """
    factors = 1.0 - 2.0j * np.asarray(mu)
    if np.any(np.abs(factors) < 1e-14):
        raise SingularDeterminantError("shifted determinant is singular")
    value = complex(np.prod(factors))
    inv_sqrt = complex(np.prod(1.0 / np.sqrt(factors)))
    return FredholmDet(value, inv_sqrt)


def fredholm_det_shifted(
    t_op: np.ndarray, q_z: np.ndarray, tol: Tolerances = DEFAULT_TOL
) -> FredholmDet:
    """det(I - 2i T Q) at the truncation dimension, with its -1/2 power.

    T must be self-adjoint (real symmetric, or complex symmetric for the
    analytically continued arguments used by the price-process functional);
    Q must be PSD.  The spectrum of T Q equals that of Q^{1/2} T Q^{1/2},
    which is computed instead for numerical symmetry.
    """
    t_op = np.asarray(t_op)
    q_half = psd_sqrt(q_z, tol)
    m = q_half @ t_op @ q_half
    if np.iscomplexobj(m):
        if np.abs(m - m.T).max(initial=0.0) > tol.eps_sym * (1.0 + np.abs(m).max(initial=0.0)):
            raise NotSelfAdjointError("complex argument must be symmetric")
        mu = np.linalg.eigvals(m)
    else:
        require_self_adjoint(m, tol)
        mu = np.linalg.eigvalsh(sym_part(m))
    return det_factors_inv_sqrt(mu)


class SymDecomposition(NamedTuple):
    """Coefficients of a symmetric operator in the e_k (x) e_l expansion.

    ``rank_one`` lists (coefficient, vector) pairs whose outer squares re-sum
    to the original matrix exactly: diagonal directions e_k plus mixed
    directions e_k + e_l, the symmetrised re-expansion of off-diagonal terms.
    """

    gamma: np.ndarray
    rank_one: list


def sym_decompose(a: np.ndarray, tol: Tolerances = DEFAULT_TOL) -> SymDecomposition:
    a = require_self_adjoint(a, tol)
    a = sym_part(np.asarray(a, dtype=float))
    n = a.shape[0]
    terms = []
    # e_k (x) e_l + e_l (x) e_k = (e_k+e_l)^{(x)2} - e_k^{(x)2} - e_l^{(x)2},
    # so each diagonal direction picks up -sum of the off-diagonal weights.
    for k in range(n):
        coeff = a[k, k] - (a[k, :].sum() - a[k, k])
        ek = np.zeros(n)
        ek[k] = 1.0
        terms.append((float(coeff), ek))
    for k in range(n):
        for l in range(k):
            if a[k, l] != 0.0:
                v = np.zeros(n)
                v[k] = 1.0
                v[l] = 1.0
                terms.append((float(a[k, l]), v))
    return SymDecomposition(gamma=a.copy(), rank_one=terms)


def reconstruct_sym(decomp: SymDecomposition) -> np.ndarray:
    """Re-sum the rank-one expansion; exact on symmetric inputs."""
    n = decomp.gamma.shape[0]
    out = np.zeros((n, n))
    for coeff, v in decomp.rank_one:
        out += coeff * np.outer(v, v)
    return out


def trace_sandwich(q_half: np.ndarray, y: np.ndarray) -> float:
    """tr(Q^{1/2} Y Q^{1/2}) = <Y, Q^{1/2} e_n (x) Q^{1/2} e_n> summed over the basis."""
    q_half = _require_square(q_half)
    y = _require_square(y)
    if q_half.shape != y.shape:
        raise DimensionMismatchError(f"shape mismatch {q_half.shape} vs {y.shape}")
    return float(np.trace(q_half @ y @ q_half))
