"""Nuisance regressions for the NDE estimators.

Each fit follows the two-phase rules of the cross-fitted algorithms:
exposure propensity on all training rows without weights; the
mediator-augmented propensity and the outcome regression on phase-two rows
with inverse sampling weights; the pseudo-outcome regression on phase-two
control rows *without* weights; the conditional-EIF regression on
phase-two rows.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from itertools import combinations
from typing import Mapping, Optional

import numpy as np

from .data import Dataset
from .numerics import (
    P_MIN,
    clip,
    fit_linear,
    fit_logistic,
)

PSEUDO_MARGIN = 0.01
NDE_CONTRAST = (-1.0, 1.0)  # coefficients on Q(W,0,Z) and Q(W,1,Z)


class NuisanceError(ValueError):
    pass


@dataclass(frozen=True)
class LearnerSpec:
    """Regression recipe for one nuisance function.

    ``family`` is ``"glm"`` (unpenalized), ``"ridge_glm"`` (ridge with
    ``ridge_lambda`` on standardized features) or ``"cv_select"`` (pick the
    candidate with the smallest ``cv_folds``-fold cross-validated loss).
    ``degree=2`` adds squares of non-binary features and pairwise products.
    ``drop`` removes whole regressor blocks (``"w"``, ``"z"``, ...), which is
    how deliberately misspecified fits are requested.
    """

    family: str = "glm"
    ridge_lambda: float = 0.0
    candidates: tuple = ()
    degree: int = 1
    drop: tuple = ()
    cv_folds: int = 5

    def __post_init__(self):
        if self.family not in ("glm", "ridge_glm", "cv_select"):
            raise ValueError(f"unknown learner family {self.family!r}")
        if self.ridge_lambda < 0:
            raise ValueError("ridge_lambda must be nonnegative")
        if self.family == "cv_select" and len(self.candidates) < 2:
            raise ValueError("cv_select needs at least two candidates")
        if self.degree not in (1, 2):
            raise ValueError("degree must be 1 or 2")
        object.__setattr__(self, "drop", tuple(self.drop))
        object.__setattr__(self, "candidates", tuple(
            c if isinstance(c, LearnerSpec) else LearnerSpec(**c) for c in self.candidates))

    def to_dict(self) -> dict:
        out = {"family": self.family, "ridge_lambda": self.ridge_lambda,
               "degree": self.degree, "drop": list(self.drop), "cv_folds": self.cv_folds}
        if self.candidates:
            out["candidates"] = [c.to_dict() for c in self.candidates]
        return out


def _expand(blocks: Mapping[str, np.ndarray], spec: LearnerSpec):
    cols, names = [], []
    for key, arr in blocks.items():
        if key in spec.drop:
            continue
        arr = np.asarray(arr, dtype=float)
        if arr.ndim == 1:
            arr = arr[:, None]
        for j in range(arr.shape[1]):
            cols.append(arr[:, j])
            names.append(f"{key}{j}" if arr.shape[1] > 1 else key)
    if spec.degree == 2 and cols:
        base = list(zip(names, cols))
        for name, col in base:
            if not np.all(np.isin(col[np.isfinite(col)], (0.0, 1.0))):
                cols.append(col * col)
                names.append(f"{name}^2")
        for (n1, c1), (n2, c2) in combinations(base, 2):
            cols.append(c1 * c2)
            names.append(f"{n1}*{n2}")
    if not cols:
        n = len(next(iter(blocks.values())))
        return np.empty((n, 0)), []
    return np.column_stack(cols), names


@dataclass
class FittedLearner:
    """A fitted GLM plus the feature recipe needed to predict on new rows."""

    spec: LearnerSpec
    link: str
    coefficients: np.ndarray
    center: np.ndarray
    scale: np.ndarray
    keep: np.ndarray
    converged: bool = True
    chosen: Optional[LearnerSpec] = None

    def _design(self, blocks):
        x, _ = _expand(blocks, self.chosen or self.spec)
        x = (x[:, self.keep] - self.center) / self.scale
        return np.column_stack([np.ones(x.shape[0]), x])

    def linear_predictor(self, blocks) -> np.ndarray:
        return self._design(blocks) @ self.coefficients

    def predict(self, blocks, p_min: float = P_MIN) -> np.ndarray:
        eta = self.linear_predictor(blocks)
        if self.link == "logit":
            return clip(1.0 / (1.0 + np.exp(-eta)), p_min)
        return eta


def _fit_single(spec: LearnerSpec, blocks, target, weights, link) -> FittedLearner:
    x, _ = _expand(blocks, spec)
    w = np.ones(len(target)) if weights is None else np.asarray(weights, dtype=float)
    sw = w.sum()
    center = (w @ x) / sw if x.shape[1] else np.zeros(0)
    sd = np.sqrt((w @ (x - center) ** 2) / sw) if x.shape[1] else np.zeros(0)
    keep = sd > 1e-12
    center, scale = center[keep], sd[keep]
    xs = (x[:, keep] - center) / scale
    design = np.column_stack([np.ones(xs.shape[0]), xs])
    penalty = spec.ridge_lambda * sw if spec.family == "ridge_glm" else 0.0
    if link == "logit":
        fit = fit_logistic(design, target, w, penalty=penalty)
    else:
        fit = fit_linear(design, target, w, penalty=penalty)
    return FittedLearner(spec, link, fit.coefficients, center, scale, keep, fit.converged)


def _cv_loss(spec, blocks, target, weights, link, folds) -> float:
    total = 0.0
    w = np.ones(len(target)) if weights is None else np.asarray(weights, dtype=float)
    for f in np.unique(folds):
        tr, va = folds != f, folds == f
        sub = {k: np.asarray(v)[tr] for k, v in blocks.items()}
        learner = _fit_single(spec, sub, target[tr], w[tr], link)
        pred = learner.predict({k: np.asarray(v)[va] for k, v in blocks.items()})
        t = target[va]
        if link == "logit":
            loss = -(t * np.log(pred) + (1 - t) * np.log1p(-pred))
        else:
            loss = (t - pred) ** 2
        total += float(w[va] @ loss)
    return total / w.sum()


def fit_learner(spec: LearnerSpec, blocks: Mapping[str, np.ndarray], target, weights=None,
                link: str = "logit") -> FittedLearner:
    """Fit ``spec`` to ``target`` on the regressor ``blocks``."""
    target = np.asarray(target, dtype=float)
    if spec.family != "cv_select":
        return _fit_single(spec, blocks, target, weights, link)
    n = target.shape[0]
    v = min(spec.cv_folds, n)
    folds = np.random.default_rng(0).permutation(np.arange(n) % v)
    losses = [_cv_loss(c, blocks, target, weights, link, folds) for c in spec.candidates]
    best = spec.candidates[int(np.argmin(losses))]
    learner = fit_learner(best, blocks, target, weights, link)
    learner.chosen = learner.chosen or best
    learner.spec = spec
    return learner


@dataclass
class PseudoOutcomeFit:
    """Regression of the pseudo-outcome on W, carried on a bounded scale.

    The raw pseudo-outcome is mapped affinely into (0, 1) using its training
    range widened by ``margin`` on each side; ``predict`` inverts the map.
    """

    learner: FittedLearner
    lo: float
    hi: float

    def to_bounded(self, x):
        return (np.asarray(x, dtype=float) - self.lo) / (self.hi - self.lo)

    def from_bounded(self, x):
        return self.lo + (self.hi - self.lo) * np.asarray(x, dtype=float)

    def predict_bounded(self, w) -> np.ndarray:
        return clip(self.learner.predict({"w": w}))

    def predict(self, w) -> np.ndarray:
        return self.from_bounded(self.predict_bounded(w))


@dataclass
class NuisanceFits:
    """Fitted nuisance functions for one training split.

    ``v_y`` and ``d_eif`` are specific to the contrast being estimated; the
    propensities and outcome regression are shared between contrasts.
    """

    g_a_w: FittedLearner
    g_a_wz: FittedLearner
    q_bar: FittedLearner
    v_y: Optional[PseudoOutcomeFit] = None
    d_eif: Optional[FittedLearner] = None
    contrast: tuple = NDE_CONTRAST

    def prop(self, w) -> np.ndarray:
        return self.g_a_w.predict({"w": w})

    def prop_med(self, w, z) -> np.ndarray:
        return self.g_a_wz.predict({"w": w, "z": z})

    def outcome(self, w, a, z) -> np.ndarray:
        a = np.broadcast_to(np.asarray(a, dtype=float), (np.asarray(w).shape[0],))
        pred = self.q_bar.predict({"w": w, "a": a, "z": z})
        return clip(pred)

    def outcome_logit(self, w, a, z) -> np.ndarray:
        q = self.outcome(w, a, z)
        return np.log(q) - np.log1p(-q)

    def pseudo(self, w) -> np.ndarray:
        if self.v_y is None:
            raise NuisanceError("pseudo-outcome regression not fitted")
        return self.v_y.predict(w)

    def cond_eif(self, w, a, y) -> np.ndarray:
        n = np.asarray(w).shape[0]
        if self.d_eif is None:
            return np.zeros(n)
        return self.d_eif.predict(_deif_blocks(w, a, y))

    def with_contrast(self, contrast, v_y=None, d_eif=None) -> "NuisanceFits":
        return replace(self, contrast=tuple(contrast), v_y=v_y, d_eif=d_eif)


def _deif_blocks(w, a, y):
    a = np.asarray(a, dtype=float)
    y = np.asarray(y, dtype=float)
    return {"w": w, "a": a, "y": y, "ay": a * y}


def _phase_two(train: Dataset):
    m = train.r == 1
    if not np.any(m):
        raise NuisanceError("no phase-two (r=1) records in the training data")
    return m


def fit_propensity(train: Dataset, spec: LearnerSpec = LearnerSpec()) -> FittedLearner:
    """P(A=1 | W) from every training record, unweighted."""
    if train.a.min() == train.a.max():
        raise NuisanceError("training data contain a single exposure arm")
    return fit_learner(spec, {"w": train.w}, train.a, None, "logit")


def fit_propensity_with_mediator(train: Dataset, spec: LearnerSpec = LearnerSpec()) -> FittedLearner:
    """P(A=1 | W, Z) from phase-two rows weighted by 1/g_R."""
    m = _phase_two(train)
    a = train.a[m]
    if a.min() == a.max():
        raise NuisanceError("phase-two training rows contain a single exposure arm")
    return fit_learner(spec, {"w": train.w[m], "z": train.z[m]}, a, 1.0 / train.g_r[m], "logit")


def fit_outcome_regression(train: Dataset, spec: LearnerSpec = LearnerSpec()) -> FittedLearner:
    """E[Y | W, A, Z] on the unit-scaled outcome from weighted phase-two rows.

    Logistic for binary outcomes, linear for continuous ones; predictions are
    clipped into the open unit interval by :meth:`NuisanceFits.outcome`.
    """
    m = _phase_two(train)
    link = "logit" if train.binary_outcome else "identity"
    blocks = {"w": train.w[m], "a": train.a[m].astype(float), "z": train.z[m]}
    return fit_learner(spec, blocks, train.y[m], 1.0 / train.g_r[m], link)


def pseudo_outcome(nuis, w, z, contrast=NDE_CONTRAST) -> np.ndarray:
    """sum_a c_a * Q(W, a, Z) for the contrast coefficients ``(c_0, c_1)``."""
    c0, c1 = contrast
    out = np.zeros(np.asarray(w).shape[0])
    if c0:
        out = out + c0 * nuis.outcome(w, 0.0, z)
    if c1:
        out = out + c1 * nuis.outcome(w, 1.0, z)
    return out


def fit_pseudo_outcome(train: Dataset, q_bar, a_star: int = 0,
                       spec: LearnerSpec = LearnerSpec(), contrast=NDE_CONTRAST,
                       margin: float = PSEUDO_MARGIN) -> PseudoOutcomeFit:
    """Regress the pseudo-outcome on W among phase-two rows with A = a_star.

    ``q_bar`` is anything with an ``outcome(w, a, z)`` method. No sampling
    weights are used here.
    """
    m = (train.r == 1) & (train.a == a_star)
    if not np.any(m):
        raise NuisanceError("no phase-two rows with A = a_star in the training data")
    target = pseudo_outcome(q_bar, train.w[m], train.z[m], contrast)
    lo, hi = float(target.min()), float(target.max())
    width = hi - lo
    if width < 1e-12:
        width = max(abs(lo), 1.0) * 1e-3
        lo, hi = lo - width / 2, hi + width / 2
    else:
        lo, hi = lo - margin * width, hi + margin * width
    bounded = (target - lo) / (hi - lo)
    learner = fit_learner(spec, {"w": train.w[m]}, bounded, None, "identity")
    return PseudoOutcomeFit(learner, lo, hi)


def fit_conditional_eif(train: Dataset, eif_values, spec: LearnerSpec = LearnerSpec()) -> FittedLearner:
    """Linear regression of phase-two EIF values on (W, A, Y, A*Y).

    ``eif_values`` has one entry per phase-two training row, in row order.
    """
    m = _phase_two(train)
    eif_values = np.asarray(eif_values, dtype=float)
    if eif_values.shape[0] != int(m.sum()):
        raise NuisanceError("need one EIF value per phase-two training row")
    blocks = _deif_blocks(train.w[m], train.a[m], train.y[m])
    return fit_learner(spec, blocks, eif_values, None, "identity")


def density_ratio(nuis, w, z) -> np.ndarray:
    """g_Z(z | w, 0) / g_Z(z | w, 1) through the propensity odds ratio.

    By Bayes' rule this equals
    ``[(1 - P(A=1|w,z)) / P(A=1|w,z)] * [P(A=1|w) / (1 - P(A=1|w))]``.
    """
    g = nuis.prop(w)
    gz = nuis.prop_med(w, z)
    return (1.0 - gz) / gz * g / (1.0 - g)


def fit_shared(train: Dataset, learners: Mapping[str, LearnerSpec]) -> NuisanceFits:
    """Fit the contrast-independent nuisances (steps a-c) on a training split."""
    return NuisanceFits(
        g_a_w=fit_propensity(train, learners.get("g_a_w", LearnerSpec())),
        g_a_wz=fit_propensity_with_mediator(train, learners.get("g_a_wz", LearnerSpec())),
        q_bar=fit_outcome_regression(train, learners.get("q_bar", LearnerSpec())),
    )
