"""Weighted forward-curve state space with exponential weight.

Curves f on [0, inf) carry the norm f(0)^2 + int w |f'|^2 with w(x) =
exp(alpha x).  The map f -> (f(0), w^{1/2} f') is an isometry onto
R + L^2, which gives an explicit orthonormal basis:

* basis element 1 is the constant curve 1;
* element k >= 2 vanishes at 0 and has derivative w^{-1/2} psi_{k-2}, where
  psi_j(x) = sqrt(alpha) e^{-alpha x/2} L_j(alpha x) are orthonormal Laguerre
  functions.

Point evaluation is represented by the kernel h_x(y) = 1 + (1 - e^{-alpha
(x^y)})/alpha whose basis coefficients are simply the basis values at x, so
evaluation of a coefficient vector and pairing with the kernel agree by
construction.  Right-shift matrix entries reduce to Gauss-Laguerre sums that
the quadrature integrates exactly (polynomial times the Laguerre weight).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError, QuadratureError
from .hs import DEFAULT_TOL, Tolerances, psd_sqrt, require_psd
from .lifted import gauss_legendre
from .oux import StateSemigroup

__all__ = ["WeightSpec", "ForwardCurveSpace", "ShiftSemigroup", "ForwardSurface", "forward_surface"]


@dataclass(frozen=True)
class WeightSpec:
    """Exponential weight w(x) = exp(alpha x); heavier alpha damps long maturities.

    ``x_max``/``resolution`` control the reference quadrature grid; left at
    None they are sized from the basis dimension (the Laguerre modes
    oscillate out to roughly 4N/alpha before their exponential tail starts).
    """

    alpha: float = 0.5
    x_max: float | None = None
    resolution: int | None = None

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError("alpha must be positive (the inverse weight must integrate)")
        if self.x_max is not None and self.x_max <= 0:
            raise ValueError("x_max must be positive")
        if self.resolution is not None and self.resolution < 16:
            raise ValueError("resolution too small")


def _laguerre_all(x: np.ndarray, nmax: int) -> np.ndarray:
    """L_0..L_nmax evaluated at x; shape (nmax+1,) + x.shape."""
    x = np.asarray(x, dtype=float)
    out = np.empty((nmax + 1,) + x.shape)
    out[0] = 1.0
    if nmax >= 1:
        out[1] = 1.0 - x
    for n in range(1, nmax):
        out[n + 1] = ((2 * n + 1 - x) * out[n] - n * out[n - 1]) / (n + 1)
    return out


class ForwardCurveSpace:
    """Truncated weighted curve space of dimension n (n >= 2)."""

    def __init__(self, weight: WeightSpec, n: int, tol: Tolerances = DEFAULT_TOL):
        if n < 2:
            raise ValueError("need at least the constant and one fluctuation mode")
        self.weight = weight
        self.n = n
        self.tol = tol
        a = weight.alpha
        # Gauss-Laguerre rule: exact for the polynomial integrands of degree
        # <= 2(n-2) appearing in shift-matrix entries.
        self._lag_x, self._lag_w = np.polynomial.laguerre.laggauss(max(2 * n, 16))
        # reference grid on [0, x_max] for independent quadrature routes
        x_max = weight.x_max if weight.x_max is not None else (4.0 * n + 28.0) / a
        n_panels = (
            weight.resolution // 8 if weight.resolution is not None else int(np.ceil(4.0 * a * x_max))
        )
        self.x_max = x_max
        panels = np.linspace(0.0, x_max, max(n_panels, 64) + 1)
        xi, wi = gauss_legendre(8)
        self._grid = (panels[:-1, None] + np.diff(panels)[:, None] * xi[None, :]).ravel()
        self._grid_w = (np.diff(panels)[:, None] * wi[None, :]).ravel()
        self._dbasis = self.basis_derivatives(self._grid)  # (n, len(grid))
        gram = self.gram_matrix()
        self.gram_defect = float(np.abs(gram - np.eye(n)).max())
        if self.gram_defect > 1e-6:
            raise QuadratureError(
                f"basis Gram defect {self.gram_defect:.2e} exceeds 1e-6; raise the resolution"
            )

    # -- basis ----------------------------------------------------------------

    def basis_values(self, x) -> np.ndarray:
        """Exact basis values; shape (n,) + shape(x).

        phi_1 = 1; phi_2 = (1 - e^{-a x})/sqrt(a); for k >= 3,
        phi_k = e^{-a x}(L_{k-3}(a x) - L_{k-2}(a x))/sqrt(a), the closed-form
        primitive of e^{-a x/2} psi_{k-2}.
        """
        x = np.asarray(x, dtype=float)
        a = self.weight.alpha
        out = np.empty((self.n,) + x.shape)
        out[0] = 1.0
        lag = _laguerre_all(a * x, max(self.n - 2, 0))
        decay = np.exp(-a * x)
        out[1] = (1.0 - decay) / np.sqrt(a)
        for k in range(3, self.n + 1):
            out[k - 1] = decay * (lag[k - 3] - lag[k - 2]) / np.sqrt(a)
        return out

    def basis_derivatives(self, x) -> np.ndarray:
        """phi_k'(x) = e^{-a x/2} psi_{k-2}(x) exactly (zero for the constant)."""
        x = np.asarray(x, dtype=float)
        a = self.weight.alpha
        out = np.zeros((self.n,) + x.shape)
        lag = _laguerre_all(a * x, max(self.n - 2, 0))
        damp = np.sqrt(a) * np.exp(-a * x)
        for k in range(2, self.n + 1):
            out[k - 1] = damp * lag[k - 2]
        return out

    def gram_matrix(self) -> np.ndarray:
        """Inner-product matrix of the basis by independent grid quadrature."""
        vals0 = self.basis_values(np.array(0.0))
        w = np.exp(self.weight.alpha * self._grid) * self._grid_w
        return np.outer(vals0, vals0) + np.einsum("ig,g,jg->ij", self._dbasis, w, self._dbasis)

    # -- point evaluation -------------------------------------------------------

    def kernel_coeffs(self, x) -> np.ndarray:
        """Coefficients of the evaluation kernel h_x: exactly the basis values at x."""
        return self.basis_values(x)

    def kernel_norm_sq(self, x) -> float:
        """|h_x|^2 = h_x(x) = 1 + (1 - e^{-alpha x})/alpha in closed form."""
        a = self.weight.alpha
        return float(1.0 + (1.0 - np.exp(-a * x)) / a)

    def eval_coeffs(self, coeffs, x):
        """f(x) for the curve with the given coefficients (exact basis route)."""
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.shape[-1] != self.n:
            raise DimensionMismatchError("coefficient length does not match the space")
        return coeffs @ self.basis_values(x)

    def eval_coeffs_quadrature(self, coeffs, x: float) -> float:
        """f(x) = f(0) + int_0^x f' by numeric quadrature of the derivatives.

        Independent of the closed-form primitives used by ``eval_coeffs``;
        the two routes agreeing checks the basis algebra.
        """
        coeffs = np.asarray(coeffs, dtype=float)
        f0 = float(coeffs[0])  # only the constant contributes at x = 0
        if x <= 0.0:
            return f0
        xi, wi = gauss_legendre(64)
        deriv = coeffs @ self.basis_derivatives(x * xi)
        return f0 + x * float(deriv @ wi)

    # -- shift semigroup ---------------------------------------------------------

    def shift_matrices(self, ts) -> np.ndarray:
        """Galerkin matrices of the right shift f -> f(. + t), batched over t.

        First row carries the basis values at t (the shifted curve at 0); the
        lower block is e^{-alpha t} times exact Gauss-Laguerre cross sums of
        shifted Laguerre polynomials.
        """
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        a = self.weight.alpha
        n = self.n
        out = np.zeros((len(ts), n, n))
        vals = self.basis_values(ts)  # (n, T)
        out[:, 0, :] = vals.T
        if n > 1:
            deg = n - 2
            lag_at_nodes = _laguerre_all(self._lag_x, deg)  # (deg+1, K)
            shifted = _laguerre_all(
                self._lag_x[None, :] + a * ts[:, None], deg
            )  # (deg+1, T, K)
            weighted = (self._lag_w[None, :] * lag_at_nodes).T  # (K, deg+1)
            cross = np.matmul(shifted.transpose(1, 0, 2), weighted)  # (T, m', n')
            out[:, 1:, 1:] = np.exp(-a * ts)[:, None, None] * cross.transpose(0, 2, 1)
        out[ts == 0.0] = np.eye(n)  # the semigroup starts at the identity exactly
        return out

    def shift_matrix(self, t: float) -> np.ndarray:
        return self.shift_matrices([t])[0]

    def shift_semigroup(self) -> "ShiftSemigroup":
        return ShiftSemigroup(self)

    # -- volatility field ----------------------------------------------------------

    def sigma2(self, y_state: np.ndarray, q: np.ndarray, t: float, s: float, x: float) -> float:
        """Squared volatility field: pair Y^{1/2} Q Y^{1/2} h_{x+t-s} with the kernel."""
        if s > t:
            raise ValueError("requires s <= t")
        m = self.kernel_coeffs(np.asarray(x + t - s))
        root = psd_sqrt(require_psd(y_state, self.tol), self.tol)
        return float(m @ (root @ q @ root @ m))

    def sigma2_commuting(self, y_q_state: np.ndarray, t: float, s: float, x: float) -> float:
        """Same field through the commuting route <Y_Q(s), h (x) h>."""
        if s > t:
            raise ValueError("requires s <= t")
        m = self.kernel_coeffs(np.asarray(x + t - s))
        return float(m @ (y_q_state @ m))

    def ambit_kernel_samples(self, y_state: np.ndarray, t: float, s: float, x: float):
        """Spatial integrand samples w(y) (Y^{1/2} h_{x+t-s})'(y) on the grid."""
        root = psd_sqrt(require_psd(y_state, self.tol), self.tol)
        g = root @ self.kernel_coeffs(np.asarray(x + t - s))
        deriv = g @ self._dbasis
        return self._grid, np.exp(self.weight.alpha * self._grid) * deriv


class ShiftSemigroup(StateSemigroup):
    """State semigroup backed by the curve-space shift matrices."""

    def __init__(self, space: ForwardCurveSpace):
        self.space = space
        self.dim = space.n

    def at(self, t):
        return self.space.shift_matrix(float(t))

    def at_batch(self, ts):
        return self.space.shift_matrices(ts)


@dataclass
class ForwardSurface:
    """Curve values on a (time, maturity) grid plus the spot slice."""

    times: np.ndarray
    maturities: np.ndarray
    values: np.ndarray  # (len(times), len(maturities))
    spot: np.ndarray  # f(t, 0)
    transport: np.ndarray  # f0(t + x): the noise-free surface
    transport_limit: float

    def flatness_defect(self) -> float:
        """How far the noise-free surface at the longest maturity sits from its limit."""
        return float(np.abs(self.transport[:, -1] - self.transport_limit).max())

    def to_csv(self, path) -> None:
        """Long format: time, maturity, value, transport."""
        import csv

        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["time", "maturity", "value", "transport"])
            for i, t in enumerate(self.times):
                for j, x in enumerate(self.maturities):
                    w.writerow(
                        [
                            repr(float(t)),
                            repr(float(x)),
                            repr(float(self.values[i, j])),
                            repr(float(self.transport[i, j])),
                        ]
                    )

    def spot_to_csv(self, path) -> None:
        import csv

        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["time", "spot", "transport"])
            for t, s, tr in zip(self.times, self.spot, self.transport[:, 0]):
                w.writerow([repr(float(t)), repr(float(s)), repr(float(tr))])


def forward_surface(xpath, space: ForwardCurveSpace, maturities) -> ForwardSurface:
    """Evaluate a simulated coefficient path as a forward surface f(t, x).

    The noise-free transport f0(t + x) is evaluated exactly from the initial
    curve, so the difference surface isolates the stochastic integral term.
    """
    maturities = np.asarray(maturities, dtype=float)
    if xpath.states.shape[1] != space.n:
        raise DimensionMismatchError("path and space dimensions differ")
    kernels = space.basis_values(maturities)  # (n, X)
    values = xpath.states @ kernels
    x0 = xpath.states[0]
    transport = np.stack(
        [space.eval_coeffs(x0, t + maturities) for t in xpath.grid]
    )
    # phi_k -> 0 for k >= 3 and phi_2 -> 1/sqrt(alpha): the curve level at infinity
    limit = float(x0[0] + x0[1] / np.sqrt(space.weight.alpha))
    spot = values[:, 0] if maturities[0] == 0.0 else xpath.states @ space.basis_values(0.0)
    return ForwardSurface(
        times=np.asarray(xpath.grid, dtype=float),
        maturities=maturities,
        values=values,
        spot=spot,
        transport=transport,
        transport_limit=limit,
    )
