"""One-step and targeted (TML) estimators of the natural direct effect.

All estimators work on a linear contrast of the two component functionals

    psi_a = E[ E[ Q(W, a, Z) | W, A=0 ] ],   a in {0, 1},

written as coefficients ``(c_0, c_1)``: the NDE is ``(-1, 1)``, the
risk-ratio numerator ``(0, 1)`` and its denominator ``(1, 0)``. For a
contrast the efficient influence function is

    D* = H(A, W, Z) (Y - Q(W, A, Z))
         + I(A=0)/(1 - g_A(W)) (sum_a c_a Q(W, a, Z) - v(W))
         + v(W) - psi,

    H  = c_1 I(A=1)/g_A(W) * g_Z(Z|W,0)/g_Z(Z|W,1) + c_0 I(A=0)/(1 - g_A(W)),

and under two-phase sampling of Z it is mapped to the full-data influence
function ``R/g_R D* - d(W,A,Y)/g_R (R - g_R)`` with ``d = E[D* | R=1, W, A, Y]``.
Everything is computed on the unit-scaled outcome and mapped back at the end.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping, Optional

import numpy as np
from scipy.stats import norm

from .data import Dataset, DataValidationError, FoldAssignment, ObservedRecord, ScalingInfo, make_folds
from .numerics import P_MIN, clip, clipped_count, expit, fit_logistic, logit
from .nuisance import (
    NDE_CONTRAST,
    LearnerSpec,
    NuisanceError,
    NuisanceFits,
    density_ratio,
    fit_conditional_eif,
    fit_pseudo_outcome,
    fit_shared,
    pseudo_outcome,
)

NUMERATOR = (0.0, 1.0)
DENOMINATOR = (1.0, 0.0)
NUISANCE_KEYS = ("g_a_w", "g_a_wz", "q_bar", "v_y", "d_eif")


class EstimationError(RuntimeError):
    """Estimation could not produce a valid result."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


@dataclass
class EstimatorConfig:
    """Settings shared by every estimator entry point.

    ``folds=1`` fits and evaluates on the full sample (no cross-fitting).
    ``tau_score=None`` uses sd(EIF) / (sqrt(n_k) log n_k) per validation fold.
    ``two_phase_mode`` is ``"estimated"`` (conditional-EIF correction) or
    ``"obs_weights"`` (inverse sampling weights only). TMLE ``targeting`` is
    ``"per_fold"`` (fluctuate within each validation fold and average the
    fold estimates) or ``"pooled"`` (one fluctuation over all out-of-fold
    predictions, steadier when folds are small).
    """

    estimator: str = "onestep"
    folds: int = 5
    learners: Mapping[str, LearnerSpec] = field(default_factory=dict)
    tau_score: Optional[float] = None
    max_iter: int = 25
    level: float = 0.95
    seed: int = 0
    two_phase_mode: str = "estimated"
    margin: float = 0.01
    targeting: str = "per_fold"

    def __post_init__(self):
        if self.estimator not in ("onestep", "tmle"):
            raise ValueError(f"unknown estimator {self.estimator!r}")
        if not 1 <= self.folds <= 20:
            raise ValueError("folds must be between 1 and 20")
        if self.tau_score is not None and self.tau_score <= 0:
            raise ValueError("tau_score must be positive")
        if not 0 < self.level < 1:
            raise ValueError("level must lie in (0, 1)")
        if self.two_phase_mode not in ("estimated", "obs_weights"):
            raise ValueError(f"unknown two-phase mode {self.two_phase_mode!r}")
        if self.targeting not in ("per_fold", "pooled"):
            raise ValueError(f"unknown targeting scheme {self.targeting!r}")
        unknown = set(self.learners) - set(NUISANCE_KEYS)
        if unknown:
            raise ValueError(f"unknown nuisance names {sorted(unknown)}")
        self.learners = {k: (v if isinstance(v, LearnerSpec) else LearnerSpec(**v))
                         for k, v in self.learners.items()}

    def learner(self, key: str) -> LearnerSpec:
        return self.learners.get(key, LearnerSpec())

    def to_dict(self) -> dict:
        return {
            "estimator": self.estimator, "folds": self.folds,
            "learners": {k: v.to_dict() for k, v in self.learners.items()},
            "tau_score": self.tau_score, "max_iter": self.max_iter, "level": self.level,
            "seed": self.seed, "two_phase_mode": self.two_phase_mode, "margin": self.margin,
            "targeting": self.targeting,
        }


@dataclass
class EstimateResult:
    """Point estimate with EIF-based inference.

    For ``estimand == "rr_nde"`` the interval is ``exp(log psi +/- z log_se)``
    and ``se`` is the delta-method standard error on the ratio scale.
    """

    psi: float
    se: float
    ci_lo: float
    ci_hi: float
    level: float
    eif_values: np.ndarray
    estimand: str = "nde"
    log_se: Optional[float] = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def converged(self) -> bool:
        return bool(self.diagnostics.get("converged", True))

    def summary(self) -> dict:
        out = {"estimand": self.estimand, "psi": self.psi, "se": self.se,
               "ci_lo": self.ci_lo, "ci_hi": self.ci_hi, "level": self.level}
        if self.log_se is not None:
            out["log_se"] = self.log_se
        return out


def wald_ci(psi: float, se: float, level: float = 0.95):
    if not se > 0:
        raise ValueError("standard error must be positive")
    if not 0 < level < 1:
        raise ValueError("level must lie in (0, 1)")
    z = norm.ppf(0.5 + level / 2.0)
    return float(psi - z * se), float(psi + z * se)


# --------------------------------------------------------------------------
# influence functions


def clever_covariates(nuis, w, z, contrast=NDE_CONTRAST):
    """(H at A=0, H at A=1) on phase-two rows."""
    c0, c1 = contrast
    g = nuis.prop(w)
    h1 = c1 / g * density_ratio(nuis, w, z) if c1 else np.zeros_like(g)
    h0 = c0 / (1.0 - g) if c0 else np.zeros_like(g)
    return h0, h1


def eif_terms(nuis, w, a, z, y, psi: float, contrast=NDE_CONTRAST,
              psi_z: Optional[np.ndarray] = None) -> dict:
    """Split EIF ``D_Y + D_Z + D_W - psi`` for rows with measured mediators.

    ``psi_z`` overrides the fitted pseudo-outcome regression ``v(W)``.
    """
    a = np.asarray(a, dtype=float)
    y = np.asarray(y, dtype=float)
    g = nuis.prop(w)
    h0, h1 = clever_covariates(nuis, w, z, contrast)
    h = np.where(a == 1, h1, h0)
    q_obs = nuis.outcome(w, a, z)
    v = nuis.pseudo(w) if psi_z is None else np.broadcast_to(np.asarray(psi_z, dtype=float), g.shape)
    pseudo = pseudo_outcome(nuis, w, z, contrast)
    d_y = h * (y - q_obs)
    d_z = (a == 0) / (1.0 - g) * (pseudo - v)
    d_w = v - psi
    return {"d_y": d_y, "d_z": d_z, "d_w": d_w, "total": d_y + d_z + d_w}


def eif_nde(record: ObservedRecord, nuis, psi_z_fn: Optional[Callable] = None, psi: float = 0.0,
            scaling: ScalingInfo = ScalingInfo(), contrast=NDE_CONTRAST) -> float:
    """EIF of the NDE at one record with a measured mediator.

    The record's outcome is mapped to the unit scale with ``scaling``;
    ``psi_z_fn(w)`` replaces the fitted pseudo-outcome regression if given.
    """
    if record.z is None:
        raise ValueError("eif_nde needs a record with a measured mediator")
    w = np.asarray(record.w, dtype=float)[None, :]
    z = np.asarray(record.z, dtype=float)[None, :]
    y = scaling.to_unit([record.y])
    psi_z = None if psi_z_fn is None else np.atleast_1d(psi_z_fn(w))
    return float(eif_terms(nuis, w, [record.a], z, y, psi, contrast, psi_z)["total"][0])


def eif_fulldata(eif_star, d_eif, g_r, r):
    """Two-phase mapping ``R/g_R D* - d/g_R (R - g_R)``; D* is ignored where R=0."""
    eif_star = np.asarray(eif_star, dtype=float)
    r = np.asarray(r, dtype=float)
    g_r = np.asarray(g_r, dtype=float)
    d_eif = np.asarray(d_eif, dtype=float)
    weighted = np.where(r == 1, np.nan_to_num(eif_star) / g_r, 0.0)
    out = weighted - d_eif / g_r * (r - g_r)
    return out if out.ndim else float(out)


# --------------------------------------------------------------------------
# per-fold machinery


@dataclass
class _FoldFit:
    nuis: NuisanceFits
    plugin: float


def _fit_contrast(train: Dataset, shared: NuisanceFits, contrast, config: EstimatorConfig) -> _FoldFit:
    v = fit_pseudo_outcome(train, shared, 0, config.learner("v_y"), contrast, config.margin)
    nuis = shared.with_contrast(contrast, v_y=v)
    plugin = float(np.mean(v.predict(train.w)))
    if config.two_phase_mode == "estimated":
        m = train.r == 1
        dstar = eif_terms(nuis, train.w[m], train.a[m], train.z[m], train.y[m], plugin, contrast)["total"]
        nuis.d_eif = fit_conditional_eif(train, dstar, config.learner("d_eif"))
    return _FoldFit(nuis, plugin)


def _fulldata_eif(valid: Dataset, nuis: NuisanceFits, psi: float, contrast, g_r=None):
    m = valid.r == 1
    dstar = np.zeros(valid.n)
    if np.any(m):
        dstar[m] = eif_terms(nuis, valid.w[m], valid.a[m], valid.z[m], valid.y[m], psi, contrast)["total"]
    g_r = valid.g_r if g_r is None else g_r
    d = nuis.cond_eif(valid.w, valid.a, valid.y)
    return eif_fulldata(dstar, d, g_r, valid.r)


def _onestep_fold(valid: Dataset, ff: _FoldFit, contrast):
    centered = _fulldata_eif(valid, ff.nuis, ff.plugin, contrast)
    uncentered = centered + ff.plugin
    diag = {
        "plugin": ff.plugin,
        "mean_eif": float(np.mean(centered)),
        "fold_estimate": float(np.mean(uncentered)),
    }
    diag["onestep_identity_gap"] = abs(diag["fold_estimate"] - (diag["plugin"] + diag["mean_eif"]))
    return uncentered, diag


@dataclass
class _TargetInputs:
    """Initial nuisance values on a set of validation rows, ready for targeting.

    Arrays prefixed ``m_`` are restricted to phase-two rows (``r == 1``).
    """

    m: np.ndarray
    g: np.ndarray
    d: np.ndarray
    g_r: np.ndarray
    r: np.ndarray
    v: np.ndarray
    initial_eif: np.ndarray
    m_a: np.ndarray
    m_y: np.ndarray
    m_h0: np.ndarray
    m_h1: np.ndarray
    m_lq0: np.ndarray
    m_lq1: np.ndarray

    @classmethod
    def concat(cls, parts, order) -> "_TargetInputs":
        """Stack per-fold inputs; ``order`` lists each part's original row indices."""
        idx = np.concatenate(order)
        inv = np.empty_like(idx)
        inv[idx] = np.arange(idx.size)
        full = {k: np.concatenate([getattr(p, k) for p in parts])[inv]
                for k in ("m", "g", "d", "g_r", "r", "v", "initial_eif")}
        # phase-two arrays follow the row order of the phase-two subset
        m_rows = np.concatenate([o[p.m] for p, o in zip(parts, order)])
        m_inv = np.argsort(m_rows, kind="stable")
        sub = {k: np.concatenate([getattr(p, k) for p in parts])[m_inv]
               for k in ("m_a", "m_y", "m_h0", "m_h1", "m_lq0", "m_lq1")}
        return cls(**full, **sub)


def _target_inputs(valid: Dataset, ff: _FoldFit, contrast) -> _TargetInputs:
    nuis = ff.nuis
    m = valid.r == 1
    w_m, z_m = valid.w[m], valid.z[m]
    h0, h1 = clever_covariates(nuis, w_m, z_m, contrast)
    return _TargetInputs(
        m=m, g=nuis.prop(valid.w), d=nuis.cond_eif(valid.w, valid.a, valid.y),
        g_r=valid.g_r.astype(float), r=valid.r.astype(float), v=nuis.pseudo(valid.w),
        initial_eif=_fulldata_eif(valid, nuis, ff.plugin, contrast),
        m_a=valid.a[m].astype(float), m_y=valid.y[m], m_h0=h0, m_h1=h1,
        m_lq0=nuis.outcome_logit(w_m, 0.0, z_m), m_lq1=nuis.outcome_logit(w_m, 1.0, z_m),
    )


def _target(inp: _TargetInputs, contrast, config: EstimatorConfig):
    """TMLE targeting on one block of rows; returns (estimate, full-data EIF, diagnostics)."""
    n_k = inp.g.shape[0]
    m, y_m = inp.m, inp.m_y
    g_m = inp.g[m]
    h0, h1 = inp.m_h0, inp.m_h1
    lq0, lq1 = inp.m_lq0.copy(), inp.m_lq1.copy()
    is1 = inp.m_a == 1
    k1, k0 = h1 * g_m, h0 * (1.0 - g_m)
    cov_y = np.where(is1, k1, k0)
    wt_y = np.where(is1, 1.0 / g_m, 1.0 / (1.0 - g_m))
    d, r = inp.d, inp.r
    g_r = inp.g_r.copy()
    fluct_r = (g_r < 1.0) & np.any(d != 0)

    if config.tau_score is not None:
        tau = config.tau_score
    else:
        tau = float(np.std(inp.initial_eif)) / (math.sqrt(n_k) * math.log(max(n_k, 3)))
        tau = max(tau, 1e-10)

    def scores():
        h = np.where(is1, h1, h0)
        q = expit(np.where(is1, lq1, lq0))
        s_y = float(np.sum(h * (y_m - q) / g_r[m]) / n_k)
        s_r = float(np.mean(d / g_r * (r - g_r)))
        return s_y, s_r

    converged = False
    iterations = 0
    for iterations in range(1, config.max_iter + 1):
        if np.any(fluct_r):
            rows = g_r < 1.0
            cov = (d / g_r)[rows]
            if np.any(cov != 0):
                fit = fit_logistic(cov[:, None], r[rows], offset=logit(g_r[rows]))
                g_r[rows] = np.clip(expit(logit(g_r[rows]) + fit.coefficients[0] * cov), 1e-8, 1.0)
        # 1/g_A(W, A) sits in the weights rather than the covariate; the
        # score is unchanged and the fit is better conditioned
        if np.any(m) and np.any(cov_y != 0):
            fit = fit_logistic(cov_y[:, None], y_m, weights=wt_y / g_r[m],
                               offset=np.where(is1, lq1, lq0))
            eps = fit.coefficients[0]
            lq1 = lq1 + eps * k1
            lq0 = lq0 + eps * k0
        s_y, s_r = scores()
        if abs(s_y) <= tau and abs(s_r) <= tau:
            converged = True
            break

    q1, q0 = clip(expit(lq1)), clip(expit(lq0))
    c0, c1 = contrast
    pseudo_m = c0 * q0 + c1 * q1
    # bounded scale for the pseudo-outcome fluctuation, wide enough that
    # neither the initial regression nor the targeted pseudo-outcomes clip
    lo = min(float(inp.v.min()), float(pseudo_m.min(initial=np.inf)))
    hi = max(float(inp.v.max()), float(pseudo_m.max(initial=-np.inf)))
    pad = config.margin * (hi - lo) if hi > lo else max(abs(lo), 1.0) * 1e-3
    lo, hi = lo - pad, hi + pad
    vb = clip((inp.v - lo) / (hi - lo))
    weights = (inp.m_a == 0) / (1.0 - g_m) / g_r[m]
    if np.any(weights > 0):
        target = np.clip((pseudo_m - lo) / (hi - lo), 0.0, 1.0)
        fit = fit_logistic(np.ones((int(m.sum()), 1)), target, weights=weights, offset=logit(vb[m]))
        vb = clip(expit(logit(vb) + fit.coefficients[0]))
    v_star = lo + (hi - lo) * vb
    psi_k = float(np.mean(v_star))

    dstar = np.zeros(n_k)
    h_obs = np.where(is1, h1, h0)
    q_obs = np.where(is1, q1, q0)
    d_y = h_obs * (y_m - q_obs)
    d_z = (inp.m_a == 0) / (1.0 - g_m) * (pseudo_m - v_star[m])
    dstar[m] = d_y + d_z + v_star[m] - psi_k
    eif = eif_fulldata(dstar, d, g_r, r)
    s_y, s_r = scores()
    diag = {
        "fold_estimate": psi_k,
        "targeting_iterations": iterations,
        "converged": converged,
        "tau_score": tau,
        "score_y": s_y,
        "score_z": float(np.sum(d_z / g_r[m]) / n_k),
        "score_r": s_r,
        "score_w": float(np.mean(v_star - psi_k)),
    }
    return psi_k, eif, diag, v_star


def _check_folds(data: Dataset, folds: FoldAssignment):
    for k in range(folds.k):
        tr, va = folds.indices(k)
        if not np.any(data.a[va] == 0):
            raise NuisanceError(f"validation fold {k} has no A=0 records")
        for arm in (0, 1):
            if not np.any(data.a[tr] == arm):
                raise NuisanceError(f"training split {k} lacks exposure arm {arm}")
            if not np.any((data.a[tr] == arm) & (data.r[tr] == 1)):
                raise NuisanceError(f"training split {k} lacks phase-two rows with A={arm}")


def _splits(data: Dataset, config: EstimatorConfig, seed: int):
    if config.folds == 1:
        idx = np.arange(data.n)
        return [(idx, idx)], None
    folds = make_folds(data, config.folds, seed)
    _check_folds(data, folds)
    return [folds.indices(k) for k in range(folds.k)], folds


def _crossfit(data: Dataset, config: EstimatorConfig, contrasts):
    """Run the configured estimator for each contrast; returns per-contrast results.

    Each entry holds the point estimate, the centered EIF (unit scale, one
    value per record) and per-fold diagnostics. Propensities and outcome
    regression are shared between contrasts within a fold.
    """
    last = None
    for attempt in range(2):
        try:
            return _crossfit_once(data, config, contrasts, config.seed + attempt)
        except NuisanceError as exc:
            last = exc
    raise EstimationError(f"fold construction failed twice: {last}")


def _crossfit_once(data, config, contrasts, seed):
    splits, _ = _splits(data, config, seed)
    n = data.n
    out = {c: {"eif": np.zeros(n), "folds": [], "fold_estimates": []} for c in contrasts}
    clip_counts = 0
    for tr_idx, va_idx in splits:
        train, valid = data.subset(tr_idx), data.subset(va_idx)
        shared = fit_shared(train, config.learners)
        m = valid.r == 1
        clip_counts += clipped_count(shared.prop(valid.w))
        if np.any(m):
            clip_counts += clipped_count(shared.prop_med(valid.w[m], valid.z[m]))
        for c in contrasts:
            ff = _fit_contrast(train, shared, c, config)
            if config.estimator == "onestep":
                vals, diag = _onestep_fold(valid, ff, c)
                out[c]["eif"][va_idx] = vals
                out[c]["fold_estimates"].append(diag["fold_estimate"])
                out[c]["folds"].append(diag)
            elif config.targeting == "per_fold":
                psi_k, eif, diag, _ = _target(_target_inputs(valid, ff, c), c, config)
                diag["plugin"] = ff.plugin
                out[c]["eif"][va_idx] = eif
                out[c]["fold_estimates"].append(psi_k)
                out[c]["folds"].append(diag)
            else:
                out[c].setdefault("inputs", []).append(_target_inputs(valid, ff, c))
                out[c].setdefault("order", []).append(va_idx)
    if config.estimator == "tmle" and config.targeting == "pooled":
        for c in contrasts:
            res = out[c]
            order = res.pop("order")
            inp = _TargetInputs.concat(res.pop("inputs"), order)
            # one fluctuation fitted on all validation rows, then the
            # targeted plug-in is still averaged fold by fold
            _, eif, diag, v_star = _target(inp, c, config)
            res["fold_estimates"] = [float(np.mean(v_star[idx])) for idx in order]
            shift = float(np.mean(v_star)) - float(np.mean(res["fold_estimates"]))
            res["eif"] = eif + shift
            diag["fold_estimate"] = float(np.mean(res["fold_estimates"]))
            res["folds"].append(diag)
    for c in contrasts:
        res = out[c]
        if not np.all(np.isfinite(res["eif"])):
            raise EstimationError("non-finite influence function values",
                                  {"folds": res["folds"]})
        if config.estimator == "onestep":
            # uncentered EIF: estimate is its grand mean
            res["psi"] = float(np.mean(res["eif"]))
            res["eif"] = res["eif"] - res["psi"]
        else:
            res["psi"] = float(np.mean(res["fold_estimates"]))
        res["clip_counts"] = clip_counts
        res["fold_seed"] = seed
    return out


def _diagnostics(data, config, res, extra=None):
    folds = res["folds"]
    diag = {
        "estimator": config.estimator,
        "folds": len(folds),
        "two_phase": data.two_phase,
        "two_phase_mode": config.two_phase_mode,
        "fold_seed": res["fold_seed"],
        "fold_estimates": list(res["fold_estimates"]),
        "per_fold": folds,
        "clipping_activations": res["clip_counts"],
    }
    if config.estimator == "tmle":
        diag["targeting_iterations"] = [f["targeting_iterations"] for f in folds]
        diag["final_scores"] = [{k: f[k] for k in ("score_y", "score_z", "score_r", "score_w")}
                                for f in folds]
        diag["converged"] = all(f["converged"] for f in folds)
    if extra:
        diag.update(extra)
    return diag


def _sd(eif):
    return float(np.std(eif)) / math.sqrt(len(eif))


def estimate_nde(dataset: Dataset, config: EstimatorConfig) -> EstimateResult:
    """Cross-fitted NDE on the original outcome scale with the configured estimator."""
    res = _crossfit(dataset, config, [NDE_CONTRAST])[NDE_CONTRAST]
    width = dataset.scaling.width
    psi = res["psi"] * width
    eif = res["eif"] * width
    se = _sd(eif)
    if not se > 0:
        raise EstimationError("degenerate influence function (zero variance)")
    lo, hi = wald_ci(psi, se, config.level)
    diag = _diagnostics(dataset, config, res, {"psi_unit_scale": res["psi"]})
    # per-fold entries stay on the unit scale; the fold summary follows psi
    diag["fold_estimates"] = [f * width for f in diag["fold_estimates"]]
    return EstimateResult(psi, se, lo, hi, config.level, eif, "nde", None, diag)


def estimate_onestep(dataset: Dataset, config: Optional[EstimatorConfig] = None) -> EstimateResult:
    config = replace(config or EstimatorConfig(), estimator="onestep")
    return estimate_nde(dataset, config)


def estimate_tmle(dataset: Dataset, config: Optional[EstimatorConfig] = None) -> EstimateResult:
    config = replace(config or EstimatorConfig(), estimator="tmle")
    return estimate_nde(dataset, config)


def estimate_rr_nde(dataset: Dataset, config: Optional[EstimatorConfig] = None) -> EstimateResult:
    """Risk-ratio NDE ``psi_1 / psi_0`` with a log-scale delta-method interval."""
    config = config or EstimatorConfig()
    if not dataset.binary_outcome:
        raise DataValidationError("the risk-ratio NDE needs a binary outcome")
    out = _crossfit(dataset, config, [NUMERATOR, DENOMINATOR])
    num, den = out[NUMERATOR], out[DENOMINATOR]
    psi1, psi0 = num["psi"], den["psi"]
    if psi0 <= P_MIN:
        raise EstimationError("denominator risk numerically zero")
    if psi1 <= P_MIN:
        raise EstimationError("numerator risk numerically zero")
    rr = psi1 / psi0
    log_eif = num["eif"] / psi1 - den["eif"] / psi0
    log_se = _sd(log_eif)
    if not log_se > 0:
        raise EstimationError("degenerate influence function (zero variance)")
    z = norm.ppf(0.5 + config.level / 2.0)
    lo, hi = math.exp(math.log(rr) - z * log_se), math.exp(math.log(rr) + z * log_se)
    diag = _diagnostics(dataset, config, num, {
        "psi_numerator": psi1, "psi_denominator": psi0,
        "denominator_folds": den["folds"],
        "denominator_fold_estimates": list(den["fold_estimates"]),
    })
    if config.estimator == "tmle":
        diag["converged"] = diag["converged"] and all(f["converged"] for f in den["folds"])
        diag["final_scores_denominator"] = [
            {k: f[k] for k in ("score_y", "score_z", "score_r", "score_w")} for f in den["folds"]]
    return EstimateResult(rr, rr * log_se, lo, hi, config.level, rr * log_eif, "rr_nde", log_se, diag)


def estimate_twophase_variants(dataset: Dataset, config: EstimatorConfig, mode: str,
                               rr: bool = False) -> EstimateResult:
    """Two-phase estimator with the conditional-EIF correction (``"estimated"``)
    or with sampling weights only (``"obs_weights"``)."""
    mode = {"estimated_deif": "estimated", "obs_weights_only": "obs_weights"}.get(mode, mode)
    config = replace(config, two_phase_mode=mode)
    return estimate_rr_nde(dataset, config) if rr else estimate_nde(dataset, config)


def estimate(dataset: Dataset, config: EstimatorConfig, rr: bool = False) -> EstimateResult:
    return estimate_rr_nde(dataset, config) if rr else estimate_nde(dataset, config)
