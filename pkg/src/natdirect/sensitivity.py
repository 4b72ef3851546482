"""One-sided test of a risk-ratio direct effect against a grid of total-effect values.

For each candidate total-effect risk ratio ``psi_rr`` the statistic

    t = (log psi_hat - log psi_rr) / se(log psi_hat)

tests H0: RR-NDE <= psi_rr against H1: RR-NDE > psi_rr; the p-value is
``1 - Phi(t)``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .estimators import EstimateResult


@dataclass
class SensitivityResult:
    grid: np.ndarray
    t: np.ndarray
    p: np.ndarray
    estimate: float
    log_se: float
    reference: float = math.nan

    def rows(self):
        return [{"psi_rr": float(g), "t": float(t), "p": float(p)}
                for g, t, p in zip(self.grid, self.t, self.p)]

    def write_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=("psi_rr", "t", "p"), lineterminator="\r\n")
            writer.writeheader()
            for row in self.rows():
                writer.writerow({k: repr(v) for k, v in row.items()})


def default_grid(lo: float, hi: float, points: int = 41) -> np.ndarray:
    """Log-uniform grid over [0.8 lo, 1.25 hi]."""
    if not 0 < lo <= hi:
        raise ValueError("need 0 < lo <= hi")
    return np.geomspace(0.8 * lo, 1.25 * hi, points)


def sensitivity_curve(rr_nde, psi_rr_grid, log_se=None, reference: float = math.nan) -> SensitivityResult:
    """Test statistics and one-sided p-values across ``psi_rr_grid``.

    ``rr_nde`` is a risk-ratio :class:`EstimateResult`, or a bare estimate
    together with ``log_se``.
    """
    if isinstance(rr_nde, EstimateResult):
        if rr_nde.estimand != "rr_nde" or rr_nde.log_se is None:
            raise ValueError("sensitivity analysis needs a risk-ratio estimate with a log-scale se")
        psi, se = rr_nde.psi, rr_nde.log_se
    else:
        if log_se is None:
            raise ValueError("log_se is required with a bare estimate")
        psi, se = float(rr_nde), float(log_se)
    if not psi > 0 or not se > 0:
        raise ValueError("estimate and log-scale se must be positive")
    grid = np.atleast_1d(np.asarray(psi_rr_grid, dtype=float))
    if grid.size == 0:
        raise ValueError("empty sensitivity grid")
    if np.any(~np.isfinite(grid)) or np.any(grid <= 0):
        raise ValueError("sensitivity grid values must be positive")
    t = (math.log(psi) - np.log(grid)) / se
    # ndtr(-t) rather than 1 - ndtr(t): keeps precision in the upper tail
    return SensitivityResult(grid, t, ndtr(-t), psi, se, reference)
