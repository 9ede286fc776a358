"""Comparison rows, streaming moment accumulators and CSV output.

Every analytic-vs-Monte-Carlo check is reported as a row carrying the
analytic value, the empirical estimate, its standard error and the z-score;
pass thresholds come from the experiment configuration and are echoed into
the CSV, never hard-coded in the report.  Complex quantities are written as
separate real/imaginary columns.  Floats are serialised with ``repr`` so
identical doubles give identical bytes.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "empirical_cf",
    "CfAccumulator",
    "MomentAccumulator",
    "CheckRow",
    "write_rows_csv",
    "RunManifest",
]


def empirical_cf(samples):
    """Mean of exp(i * sample) with per-component standard errors.

    Returns (complex estimate, (se_re, se_im)).  The estimate has modulus at
    most one by construction.
    """
    samples = np.asarray(samples, dtype=float)
    if samples.size < 2:
        raise ValueError("need at least two samples")
    ph_re = np.cos(samples)
    ph_im = np.sin(samples)
    n = samples.size
    est = complex(ph_re.mean(), ph_im.mean())
    se = (ph_re.std(ddof=1) / np.sqrt(n), ph_im.std(ddof=1) / np.sqrt(n))
    return est, se


@dataclass
class CfAccumulator:
    """Streaming sums for the empirical characteristic function of K cases."""

    n: int = 0
    sum_re: np.ndarray | None = None
    sum_im: np.ndarray | None = None
    sum_re2: np.ndarray | None = None
    sum_im2: np.ndarray | None = None

    def update(self, phases: np.ndarray) -> None:
        """``phases``: (n_samples, K) real phase angles."""
        re = np.cos(phases)
        im = np.sin(phases)
        parts = (re.sum(axis=0), im.sum(axis=0), (re * re).sum(axis=0), (im * im).sum(axis=0))
        if self.sum_re is None:
            self.sum_re, self.sum_im, self.sum_re2, self.sum_im2 = parts
        else:
            self.sum_re += parts[0]
            self.sum_im += parts[1]
            self.sum_re2 += parts[2]
            self.sum_im2 += parts[3]
        self.n += phases.shape[0]

    def merge(self, other: "CfAccumulator") -> "CfAccumulator":
        if self.sum_re is None:
            return other
        if other.sum_re is None:
            return self
        self.sum_re += other.sum_re
        self.sum_im += other.sum_im
        self.sum_re2 += other.sum_re2
        self.sum_im2 += other.sum_im2
        self.n += other.n
        return self

    def estimate(self, k: int):
        n = self.n
        mean_re = self.sum_re[k] / n
        mean_im = self.sum_im[k] / n
        var_re = max(self.sum_re2[k] / n - mean_re**2, 0.0) * n / (n - 1)
        var_im = max(self.sum_im2[k] / n - mean_im**2, 0.0) * n / (n - 1)
        return complex(mean_re, mean_im), (np.sqrt(var_re / n), np.sqrt(var_im / n))


@dataclass
class MomentAccumulator:
    """Streaming raw moments up to order four for K scalar statistics."""

    order: int = 4
    n: int = 0
    sums: np.ndarray | None = None  # (order, K)

    def update(self, values: np.ndarray) -> None:
        """``values``: (n_samples, K)."""
        parts = np.stack([(values**p).sum(axis=0) for p in range(1, self.order + 1)])
        if self.sums is None:
            self.sums = parts
        else:
            self.sums += parts
        self.n += values.shape[0]

    def merge(self, other: "MomentAccumulator") -> "MomentAccumulator":
        if self.sums is None:
            return other
        if other.sums is None:
            return self
        self.sums += other.sums
        self.n += other.n
        return self

    def mean(self, k: int):
        m = self.sums[0][k] / self.n
        var = self.variance(k)
        return m, np.sqrt(var / self.n)

    def variance(self, k: int) -> float:
        n = self.n
        m1 = self.sums[0][k] / n
        m2 = self.sums[1][k] / n
        return max(m2 - m1 * m1, 0.0) * n / (n - 1)

    def variance_se(self, k: int) -> float:
        # Var(s^2) ~ (mu4 - sigma^4)/n via central moments
        n = self.n
        m = [self.sums[p][k] / n for p in range(4)]
        mu = m[0]
        c2 = m[1] - mu**2
        c4 = m[3] - 4 * mu * m[2] + 6 * mu**2 * m[1] - 3 * mu**4
        return float(np.sqrt(max(c4 - c2 * c2, 0.0) / n))

    def skewness(self, k: int) -> float:
        n = self.n
        m = [self.sums[p][k] / n for p in range(3)]
        mu = m[0]
        c2 = m[1] - mu**2
        c3 = m[2] - 3 * mu * m[1] + 2 * mu**3
        return float(c3 / c2**1.5)

    def excess_kurtosis(self, k: int) -> float:
        n = self.n
        m = [self.sums[p][k] / n for p in range(4)]
        mu = m[0]
        c2 = m[1] - mu**2
        c4 = m[3] - 4 * mu * m[2] + 6 * mu**2 * m[1] - 3 * mu**4
        return float(c4 / c2**2 - 3.0)


@dataclass
class CheckRow:
    """One analytic-vs-empirical comparison with its configured tolerance."""

    case: str
    kind: str  # e.g. "cf", "mean", "variance", "bound"
    analytic_re: float
    analytic_im: float
    empirical_re: float
    empirical_im: float
    se_re: float
    se_im: float
    z: float
    error: float
    tol: float
    passed: bool

    HEADER = [
        "case",
        "kind",
        "analytic_re",
        "analytic_im",
        "empirical_re",
        "empirical_im",
        "se_re",
        "se_im",
        "z",
        "error",
        "tol",
        "passed",
    ]

    @classmethod
    def complex_check(cls, case, analytic, empirical, se, abs_floor, z_max):
        """Componentwise |analytic - empirical| <= max(abs_floor, z_max * SE)."""
        err_re = abs(analytic.real - empirical.real)
        err_im = abs(analytic.imag - empirical.imag)
        z = max(
            err_re / se[0] if se[0] > 0 else 0.0,
            err_im / se[1] if se[1] > 0 else 0.0,
        )
        tol_re = max(abs_floor, z_max * se[0])
        tol_im = max(abs_floor, z_max * se[1])
        return cls(
            case=case,
            kind="cf",
            analytic_re=float(analytic.real),
            analytic_im=float(analytic.imag),
            empirical_re=float(empirical.real),
            empirical_im=float(empirical.imag),
            se_re=float(se[0]),
            se_im=float(se[1]),
            z=float(z),
            error=float(max(err_re, err_im)),
            tol=float(max(tol_re, tol_im)),
            passed=bool(err_re <= tol_re and err_im <= tol_im),
        )

    @classmethod
    def lower_bound_check(cls, case, kind, empirical, bound):
        """One-sided: passes when empirical >= -bound (violation magnitude is the error)."""
        violation = max(0.0, -float(empirical))
        return cls(
            case=case,
            kind=kind,
            analytic_re=0.0,
            analytic_im=0.0,
            empirical_re=float(empirical),
            empirical_im=0.0,
            se_re=0.0,
            se_im=0.0,
            z=0.0,
            error=violation,
            tol=float(bound),
            passed=bool(violation <= bound),
        )

    @classmethod
    def upper_bound_check(cls, case, kind, empirical, bound):
        """One-sided: passes when 0 <= empirical <= bound."""
        return cls(
            case=case,
            kind=kind,
            analytic_re=0.0,
            analytic_im=0.0,
            empirical_re=float(empirical),
            empirical_im=0.0,
            se_re=0.0,
            se_im=0.0,
            z=0.0,
            error=float(empirical),
            tol=float(bound),
            passed=bool(empirical <= bound),
        )

    @classmethod
    def scalar_check(cls, case, kind, analytic, empirical, se, tol, *, relative=False):
        err = abs(analytic - empirical)
        denom = abs(analytic) if relative and analytic != 0 else 1.0
        return cls(
            case=case,
            kind=kind,
            analytic_re=float(analytic),
            analytic_im=0.0,
            empirical_re=float(empirical),
            empirical_im=0.0,
            se_re=float(se),
            se_im=0.0,
            z=float(err / se) if se > 0 else 0.0,
            error=float(err / denom),
            tol=float(tol),
            passed=bool(err / denom <= tol),
        )

    def row(self):
        return [
            self.case,
            self.kind,
            repr(self.analytic_re),
            repr(self.analytic_im),
            repr(self.empirical_re),
            repr(self.empirical_im),
            repr(self.se_re),
            repr(self.se_im),
            repr(self.z),
            repr(self.error),
            repr(self.tol),
            str(self.passed),
        ]


def write_rows_csv(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CheckRow.HEADER)
        for r in rows:
            w.writerow(r.row())


@dataclass
class RunManifest:
    """Reproducibility record for a harness run."""

    version: str
    seed: int
    workers: int
    config: dict
    results: list = field(default_factory=list)

    def add(self, name, passed, elapsed, files, summary) -> None:
        self.results.append(
            {
                "experiment": name,
                "passed": bool(passed),
                "elapsed_s": round(float(elapsed), 3),
                "files": [str(f) for f in files],
                "summary": summary,
            }
        )

    @property
    def all_passed(self) -> bool:
        return all(r["passed"] for r in self.results)

    def write(self, path) -> None:
        payload = {
            "version": self.version,
            "seed": self.seed,
            "workers": self.workers,
            "all_passed": self.all_passed,
            "config": self.config,
            "results": self.results,
        }
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
