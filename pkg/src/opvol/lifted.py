"""Bounded drifts on the operator space and their uniformly continuous semigroups.

Two closed-form families are supported, both driven by an N x N matrix C:

* sandwich:  T -> C T C^T,   semigroup  sum_n t^n/n! C^n T (C^T)^n
* lyapunov:  T -> C T + T C^T,  semigroup  e^{tC} T e^{tC^T}

plus the zero drift.  Both families map symmetric operators to symmetric
operators and their semigroups preserve the PSD cone (they act as sandwiches).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from .errors import DimensionMismatchError, QuadratureError, SeriesCapError
from .hs import DEFAULT_TOL, Tolerances, hs_norm

__all__ = [
    "LiftedDrift",
    "SandwichDrift",
    "LyapunovDrift",
    "ZeroDrift",
    "MatrixExpFamily",
    "PositivityReport",
    "positivity_preservation_check",
]

_GL_CACHE: dict = {}


def gauss_legendre(n: int):
    """Nodes/weights on [0, 1], cached."""
    if n not in _GL_CACHE:
        x, w = np.polynomial.legendre.leggauss(n)
        _GL_CACHE[n] = (0.5 * (x + 1.0), 0.5 * w)
    return _GL_CACHE[n]


class MatrixExpFamily:
    """Batch evaluator for t -> e^{tC}.

    Uses the eigendecomposition of C when it is well conditioned (validated
    against the Pade exponential at construction), otherwise falls back to
    per-argument ``expm``.
    """

    def __init__(self, c: np.ndarray):
        self.c = np.asarray(c, dtype=float)
        self._eig = None
        try:
            w, v = np.linalg.eig(self.c)
            vinv = np.linalg.inv(v)
            for probe in (0.7, 2.0):
                approx = (v * np.exp(probe * w)) @ vinv
                exact = expm(probe * self.c)
                scale = 1.0 + np.abs(exact).max()
                if (
                    np.abs(approx.real - exact).max() > 1e-13 * scale
                    or np.abs(approx.imag).max() > 1e-13 * scale
                ):
                    return
            self._eig = (w, v, vinv)
        except np.linalg.LinAlgError:
            pass

    def at(self, ts) -> np.ndarray:
        """e^{t C} for an array of times; shape (len(ts), N, N)."""
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        if self._eig is not None:
            w, v, vinv = self._eig
            e = np.exp(np.multiply.outer(ts, w))
            return np.matmul(v[None, :, :] * e[:, None, :], vinv).real
        return np.stack([expm(t * self.c) for t in ts])


@dataclass(frozen=True)
class _DriftBase:
    def apply(self, t_mat: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def semigroup(self, t: float, t_mat: np.ndarray, adjoint: bool = False) -> np.ndarray:
        raise NotImplementedError

    def semigroup_batch(self, ts, t_mats, adjoint: bool = False) -> np.ndarray:
        """Apply S(ts[k]) (or its adjoint) to t_mats[k] for each k."""
        raise NotImplementedError

    def integrated(self, t: float, t_mat: np.ndarray, tol: Tolerances = DEFAULT_TOL) -> np.ndarray:
        """int_0^t S(s) T ds by composite Gauss-Legendre with node doubling."""
        if t < 0:
            raise ValueError("t must be nonnegative")
        t_mat = np.asarray(t_mat, dtype=float)
        if t == 0.0:
            return np.zeros_like(t_mat)
        nodes = 8
        prev = None
        for _ in range(12):
            x, w = gauss_legendre(nodes)
            vals = self.semigroup_batch(t * x, np.broadcast_to(t_mat, (nodes,) + t_mat.shape))
            est = t * np.tensordot(w, vals, axes=1)
            if prev is not None and hs_norm(est - prev) <= tol.eps_quad * (1.0 + hs_norm(est)):
                return est
            prev = est
            nodes *= 2
        raise QuadratureError("integrated semigroup did not stabilise under node doubling")

    def integrated_batch(self, ts, t_mat: np.ndarray) -> np.ndarray:
        """Closed-form int_0^{ts[k]} S(s) T ds for a fixed T, batched over times."""
        raise NotImplementedError

    def brute_lift(self, cap: int = 8) -> np.ndarray:
        """Matrix of the drift acting on row-major vectorised operators."""
        raise NotImplementedError

    def _check_dim(self, t_mat: np.ndarray) -> np.ndarray:
        t_mat = np.asarray(t_mat, dtype=float)
        if t_mat.shape[-2:] != (self.dim, self.dim):
            raise DimensionMismatchError(
                f"operator shape {t_mat.shape} does not match drift dimension {self.dim}"
            )
        return t_mat


@dataclass(frozen=True)
class ZeroDrift(_DriftBase):
    dim: int

    @property
    def op_norm_bound(self) -> float:
        return 0.0

    def apply(self, t_mat):
        return np.zeros_like(self._check_dim(t_mat))

    def semigroup(self, t, t_mat, adjoint=False):
        return self._check_dim(t_mat).copy()

    def semigroup_batch(self, ts, t_mats, adjoint=False):
        ts = np.atleast_1d(ts)
        return np.array(t_mats, dtype=float, copy=True)

    def integrated_batch(self, ts, t_mat):
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        return ts[:, None, None] * self._check_dim(t_mat)

    def brute_lift(self, cap: int = 8):
        return np.zeros((self.dim * self.dim, self.dim * self.dim))


@dataclass(frozen=True)
class SandwichDrift(_DriftBase):
    """T -> C T C^T with semigroup sum_n t^n/n! C^n T (C^T)^n."""

    c: np.ndarray
    series_cap: int = 128

    def __post_init__(self):
        object.__setattr__(self, "c", np.asarray(self.c, dtype=float))
        if self.c.ndim != 2 or self.c.shape[0] != self.c.shape[1]:
            raise DimensionMismatchError("C must be square")

    @property
    def dim(self) -> int:
        return self.c.shape[0]

    @property
    def op_norm_bound(self) -> float:
        # ||T -> C T C^T||_op <= ||C||_op^2
        return float(np.linalg.norm(self.c, 2) ** 2)

    def apply(self, t_mat):
        t_mat = self._check_dim(t_mat)
        return self.c @ t_mat @ self.c.T

    def _series_order(self, t: float, norm_t: float, eps: float) -> int:
        # tail: sum_{n>k} (t b)^n/n! ||T|| <= (t b)^{k+1}/(k+1)! e^{t b} ||T||,
        # checked in log space so huge arguments fail loudly instead of overflowing
        x = t * self.op_norm_bound
        if x == 0.0:
            return 0
        log_fixed = x + math.log(max(norm_t, 1e-300)) - math.log(eps)
        for k in range(self.series_cap):
            log_term = (k + 1) * math.log(x) - math.lgamma(k + 2)
            if log_term + log_fixed <= 0.0:
                return k + 1
        raise SeriesCapError(
            f"sandwich series tail bound not reachable at cap {self.series_cap} (t*b = {x:.3g})"
        )

    def _series_apply(self, t, t_mats, c, eps):
        # t scalar or (M,) broadcast against t_mats (..., N, N)
        t = np.asarray(t, dtype=float)
        norm_t = max(hs_norm(t_mats), 1e-300)
        order = self._series_order(float(np.max(t)) if t.ndim else float(t), norm_t, eps)
        out = np.array(t_mats, dtype=float, copy=True)
        term = np.array(t_mats, dtype=float, copy=True)
        scale = t[..., None, None] if t.ndim else t
        for n in range(1, order + 1):
            term = (scale / n) * (c @ term @ c.T)
            out += term
        return out

    def semigroup(self, t, t_mat, adjoint=False):
        if t < 0:
            raise ValueError("t must be nonnegative")
        t_mat = self._check_dim(t_mat)
        c = self.c.T if adjoint else self.c
        # split so t*||C||^2 <= 2 per stage: avoids cancellation in the series
        n_split = max(1, int(np.ceil(t * self.op_norm_bound / 2.0)))
        out = t_mat
        eps = DEFAULT_TOL.eps_series / n_split
        for _ in range(n_split):
            out = self._series_apply(t / n_split, out, c, eps)
        return out

    def semigroup_batch(self, ts, t_mats, adjoint=False):
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        t_mats = np.asarray(t_mats, dtype=float)
        c = self.c.T if adjoint else self.c
        tmax = float(ts.max(initial=0.0))
        n_split = max(1, int(np.ceil(tmax * self.op_norm_bound / 2.0)))
        out = np.array(t_mats, copy=True)
        eps = DEFAULT_TOL.eps_series / n_split
        for _ in range(n_split):
            out = self._series_apply(ts / n_split, out, c, eps)
        return out

    def integrated_batch(self, ts, t_mat):
        # term-wise: int_0^t s^n/n! ds = t^{n+1}/(n+1)!
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        t_mat = self._check_dim(t_mat)
        tmax = float(ts.max(initial=0.0))
        norm_t = max(hs_norm(t_mat), 1e-300)
        order = self._series_order(tmax, norm_t * max(tmax, 1.0), DEFAULT_TOL.eps_series)
        powers = np.array(t_mat, copy=True)
        out = ts[:, None, None] * powers
        fact = ts.copy()
        for n in range(1, order + 1):
            powers = self.c @ powers @ self.c.T
            fact = fact * ts / (n + 1)
            out += fact[:, None, None] * powers
        return out

    def brute_lift(self, cap: int = 8):
        if self.dim > cap:
            raise DimensionMismatchError(f"brute lift capped at N={cap}")
        return np.kron(self.c, self.c)


@dataclass(frozen=True)
class LyapunovDrift(_DriftBase):
    """T -> C T + T C^T with semigroup e^{tC} T e^{tC^T}."""

    c: np.ndarray
    _family: MatrixExpFamily = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "c", np.asarray(self.c, dtype=float))
        if self.c.ndim != 2 or self.c.shape[0] != self.c.shape[1]:
            raise DimensionMismatchError("C must be square")
        object.__setattr__(self, "_family", MatrixExpFamily(self.c))

    @property
    def dim(self) -> int:
        return self.c.shape[0]

    @property
    def op_norm_bound(self) -> float:
        return float(2.0 * np.linalg.norm(self.c, 2))

    def apply(self, t_mat):
        t_mat = self._check_dim(t_mat)
        return self.c @ t_mat + t_mat @ self.c.T

    def semigroup(self, t, t_mat, adjoint=False):
        if t < 0:
            raise ValueError("t must be nonnegative")
        t_mat = self._check_dim(t_mat)
        e = expm(t * self.c)  # Pade route: the accuracy reference for the batch path
        if adjoint:
            return e.T @ t_mat @ e
        return e @ t_mat @ e.T

    def semigroup_batch(self, ts, t_mats, adjoint=False):
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        t_mats = np.asarray(t_mats, dtype=float)
        e = self._family.at(ts)
        et = e.transpose(0, 2, 1)
        if adjoint:
            return np.matmul(np.matmul(et, t_mats), e)
        return np.matmul(np.matmul(e, t_mats), et)

    def integrated_batch(self, ts, t_mat):
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        t_mat = self._check_dim(t_mat)
        fam = self._family
        if fam._eig is None:
            return np.stack([self.integrated(t, t_mat) for t in ts])
        # entrywise in the eigenbasis: int_0^t e^{s(l_i+l_j)} ds
        w, v, vinv = fam._eig
        wm = vinv @ t_mat @ vinv.T
        s = np.add.outer(w, w)
        x = ts[:, None, None] * s
        small = np.abs(x) < 1e-4
        safe = np.where(small, 1.0, s)
        ph_large = (np.exp(np.where(small, 0.0, x)) - 1.0) / safe
        ph_small = ts[:, None, None] * (1.0 + x / 2.0 + x * x / 6.0 + x * x * x / 24.0)
        ph = np.where(small, ph_small, ph_large)
        return np.matmul(np.matmul(v, ph * wm), v.T).real

    def brute_lift(self, cap: int = 8):
        if self.dim > cap:
            raise DimensionMismatchError(f"brute lift capped at N={cap}")
        eye = np.eye(self.dim)
        return np.kron(self.c, eye) + np.kron(eye, self.c)


LiftedDrift = _DriftBase


@dataclass
class PositivityReport:
    checked: int
    violations: list
    min_eigenvalue: float

    @property
    def passed(self) -> bool:
        return not self.violations


def positivity_preservation_check(
    drift: LiftedDrift,
    t_grid,
    samples: int,
    rng: np.random.Generator,
    tol: Tolerances = DEFAULT_TOL,
) -> PositivityReport:
    """Sample random PSD operators and assert the semigroup keeps them PSD."""
    n = drift.dim
    violations = []
    worst = np.inf
    for k in range(samples):
        a = rng.standard_normal((n, n))
        psd = a @ a.T / n
        for t in np.atleast_1d(t_grid):
            lam = float(np.linalg.eigvalsh(drift.semigroup(float(t), psd))[0])
            worst = min(worst, lam)
            if lam < -tol.eps_psd:
                violations.append((float(t), k, lam))
    return PositivityReport(checked=samples * len(np.atleast_1d(t_grid)), violations=violations, min_eigenvalue=worst)
