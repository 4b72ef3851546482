"""Weighted GLM solvers (logistic and Gaussian) with offset support.

Every nuisance regression and every targeting step in the package goes
through :func:`fit_logistic` or :func:`fit_linear`. Both are plain IRLS /
normal-equation solvers on small dense designs; no model selection happens
here.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.special import expit as _expit

P_MIN = 1e-6
IRLS_TOL = 1e-8
IRLS_MAX_ITER = 100
JITTER_SCALE = 1e-8
# information matrices worse than this are treated as singular
COND_LIMIT = 1e12


def expit(x):
    return _expit(x)


def clip(p, p_min: float = P_MIN):
    return np.clip(p, p_min, 1.0 - p_min)


def logit(p, p_min: float = P_MIN):
    """Log-odds of ``p`` after clipping to ``[p_min, 1 - p_min]``."""
    p = clip(np.asarray(p, dtype=float), p_min)
    return np.log(p) - np.log1p(-p)


@dataclass(frozen=True)
class DesignMatrix:
    """Dense regressor matrix with column labels.

    Behaves like an ndarray wherever numpy expects one.
    """

    values: np.ndarray
    column_names: tuple = ()

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if v.ndim != 2 or v.shape[0] < 1:
            raise ValueError("design matrix must be 2-d with at least one row")
        if not np.all(np.isfinite(v)):
            raise ValueError("design matrix has non-finite entries")
        names = tuple(self.column_names) or tuple(f"x{j}" for j in range(v.shape[1]))
        if len(names) != v.shape[1]:
            raise ValueError("column_names length does not match the number of columns")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "column_names", names)

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)

    @classmethod
    def build(cls, columns: dict, intercept: bool = True) -> "DesignMatrix":
        """Stack named 1-d columns, optionally prefixed by an all-ones column."""
        names, cols = [], []
        n = None
        for name, col in columns.items():
            col = np.asarray(col, dtype=float)
            n = col.shape[0]
            names.append(name)
            cols.append(col)
        if n is None:
            raise ValueError("no columns given")
        if intercept:
            names.insert(0, "(intercept)")
            cols.insert(0, np.ones(n))
        return cls(np.column_stack(cols), tuple(names))


@dataclass
class GlmFit:
    coefficients: np.ndarray
    converged: bool
    iterations: int
    family: str
    jittered: bool = False
    column_names: tuple = field(default=())


def _as_matrix(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    return x


def _check_inputs(x, y, weights, offset):
    x = _as_matrix(x)
    n = x.shape[0]
    y = np.asarray(y, dtype=float).ravel()
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float).ravel()
    o = np.zeros(n) if offset is None else np.asarray(offset, dtype=float).ravel()
    if y.shape[0] != n or w.shape[0] != n or o.shape[0] != n:
        raise ValueError("x, y, weights and offset must have the same number of rows")
    for name, arr in (("x", x), ("y", y), ("weights", w), ("offset", o)):
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"non-finite values in {name}")
    if np.any(w < 0) or w.sum() <= 0:
        raise ValueError("weights must be nonnegative with a positive sum")
    return x, y, w, o


def _penalty_matrix(p: int, penalty: float, intercept_col: Optional[int]) -> np.ndarray:
    pen = np.full(p, float(penalty))
    if intercept_col is not None:
        pen[intercept_col] = 0.0
    return np.diag(pen)


def _intercept_column(x: np.ndarray) -> Optional[int]:
    for j in range(x.shape[1]):
        if np.all(x[:, j] == 1.0):
            return j
    return None


def _solve(info: np.ndarray, rhs: np.ndarray):
    """Solve ``info @ b = rhs``; returns (solution, jittered) or (None, True)."""
    try:
        if np.linalg.cond(info) < COND_LIMIT:
            return np.linalg.solve(info, rhs), False
    except np.linalg.LinAlgError:
        pass
    p = info.shape[0]
    lam = JITTER_SCALE * max(np.trace(info), 1e-300) / p
    jittered = info + lam * np.eye(p)
    try:
        if np.linalg.cond(jittered) < 1.0 / np.finfo(float).eps:
            return np.linalg.solve(jittered, rhs), True
    except np.linalg.LinAlgError:
        pass
    return None, True


def _neg_loglik(y, w, eta, beta, pen):
    # sum w * [log(1 + e^eta) - y*eta], stable form
    val = np.sum(w * (np.logaddexp(0.0, eta) - y * eta))
    return val + 0.5 * beta @ pen @ beta


def fit_logistic(
    x,
    y,
    weights=None,
    offset=None,
    penalty: float = 0.0,
    tol: float = IRLS_TOL,
    max_iter: int = IRLS_MAX_ITER,
    start: Optional[np.ndarray] = None,
) -> GlmFit:
    """Weighted (optionally ridge-penalized) logistic regression by IRLS.

    Responses may be fractional in ``[0, 1]``. ``penalty`` is a ridge term on
    every coefficient except an all-ones intercept column. Convergence means
    the largest absolute coefficient change fell below ``tol``; a singular
    information matrix gets one jittered retry and otherwise ends the
    iterations with ``converged=False``.
    """
    names = tuple(getattr(x, "column_names", ()))
    x, y, w, o = _check_inputs(x, y, weights, offset)
    if np.any(y < 0) or np.any(y > 1):
        raise ValueError("logistic responses must lie in [0, 1]")
    p = x.shape[1]
    pen = _penalty_matrix(p, penalty, _intercept_column(x))
    beta = np.zeros(p) if start is None else np.asarray(start, dtype=float).copy()
    eta = x @ beta + o
    obj = _neg_loglik(y, w, eta, beta, pen)
    converged = False
    jittered_any = False
    it = 0
    for it in range(1, max_iter + 1):
        mu = _expit(eta)
        var = mu * (1.0 - mu)
        info = (x * (w * var)[:, None]).T @ x + pen
        grad = x.T @ (w * (y - mu)) - pen @ beta
        step, jit = _solve(info, grad)
        jittered_any |= jit
        if step is None:
            break
        # step halving guards against overshoot on near-separated data
        for _ in range(30):
            new_beta = beta + step
            new_eta = x @ new_beta + o
            new_obj = _neg_loglik(y, w, new_eta, new_beta, pen)
            if new_obj <= obj + 1e-12 * max(1.0, abs(obj)):
                break
            step = step / 2.0
        change = np.max(np.abs(new_beta - beta))
        beta, eta, obj = new_beta, new_eta, new_obj
        if change < tol:
            converged = True
            break
    return GlmFit(beta, converged, it, "logistic", jittered_any, names)


def predict_logistic(fit: GlmFit, x, offset=None, p_min: float = P_MIN) -> np.ndarray:
    if fit.family != "logistic":
        raise ValueError("predict_logistic needs a logistic fit")
    x = _as_matrix(x)
    if x.shape[1] != fit.coefficients.shape[0]:
        raise ValueError("design has %d columns, fit has %d coefficients"
                         % (x.shape[1], fit.coefficients.shape[0]))
    eta = x @ fit.coefficients
    if offset is not None:
        eta = eta + np.asarray(offset, dtype=float)
    return clip(_expit(eta), p_min)


def fit_linear(x, y, weights=None, penalty: float = 0.0) -> GlmFit:
    """Weighted least squares via the normal equations (ridge-jitter fallback)."""
    names = tuple(getattr(x, "column_names", ()))
    x, y, w, _ = _check_inputs(x, y, weights, None)
    p = x.shape[1]
    pen = _penalty_matrix(p, penalty, _intercept_column(x))
    info = (x * w[:, None]).T @ x + pen
    rhs = x.T @ (w * y)
    beta, jit = _solve(info, rhs)
    if beta is None:
        return GlmFit(np.zeros(p), False, 1, "gaussian", True, names)
    return GlmFit(beta, True, 1, "gaussian", jit, names)


def predict_linear(fit: GlmFit, x) -> np.ndarray:
    if fit.family != "gaussian":
        raise ValueError("predict_linear needs a gaussian fit")
    x = _as_matrix(x)
    if x.shape[1] != fit.coefficients.shape[0]:
        raise ValueError("design/coefficient dimension mismatch")
    return x @ fit.coefficients


def weighted_score(fit: GlmFit, x, y, weights=None, offset=None) -> np.ndarray:
    """Per-coordinate logistic score ``sum_i w_i x_i (y_i - p_i)`` (unclipped)."""
    x, y, w, o = _check_inputs(x, y, weights, offset)
    mu = _expit(x @ fit.coefficients + o)
    return x.T @ (w * (y - mu))


def clipped_count(p: Sequence[float], p_min: float = P_MIN) -> int:
    """Number of entries sitting on a clipping bound."""
    p = np.asarray(p)
    return int(np.sum((p <= p_min) | (p >= 1.0 - p_min)))
