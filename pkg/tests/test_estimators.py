import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from exact_law import ExactNuisance, support
from natdirect.data import DataValidationError, Dataset, ObservedRecord
from natdirect.estimators import (
    DENOMINATOR,
    NUMERATOR,
    EstimationError,
    EstimatorConfig,
    eif_fulldata,
    eif_nde,
    eif_terms,
    estimate,
    estimate_onestep,
    estimate_rr_nde,
    estimate_tmle,
    estimate_twophase_variants,
    wald_ci,
)
from natdirect.nuisance import NDE_CONTRAST, LearnerSpec
from natdirect.oracle import identified_components, random_law

CONTRASTS = {"nde": NDE_CONTRAST, "numerator": NUMERATOR, "denominator": DENOMINATOR}


def _target(law, contrast):
    psi0, psi1 = identified_components(law)
    return contrast[0] * psi0 + contrast[1] * psi1


def test_eif_mean_zero_two_by_two():
    # binary W and binary Z: the smallest nontrivial law
    law = random_law(np.random.default_rng(5), n_w=2, n_v=2, n_z=2)
    for contrast in CONTRASTS.values():
        nuis = ExactNuisance(law, contrast)
        w, a, z, y, p = support(law)
        psi = _target(law, contrast)
        d = eif_terms(nuis, w, a, z, y, psi, contrast)
        assert abs(p @ d["total"]) < 1e-12
        # each piece is mean zero on its own at the true law
        for part in ("d_y", "d_z", "d_w"):
            assert abs(p @ d[part]) < 1e-12


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31), n_w=st.integers(1, 4), n_z=st.integers(2, 4),
       which=st.sampled_from(sorted(CONTRASTS)), delta=st.floats(-0.5, 0.5))
def test_eif_mean_zero_random_laws(seed, n_w, n_z, which, delta):
    law = random_law(np.random.default_rng(seed), n_w=n_w, n_z=n_z)
    contrast = CONTRASTS[which]
    nuis = ExactNuisance(law, contrast)
    w, a, z, y, p = support(law)
    psi = _target(law, contrast)
    assert abs(p @ eif_terms(nuis, w, a, z, y, psi, contrast)["total"]) < 1e-12
    # shifting psi moves the mean by exactly -delta
    shifted = p @ eif_terms(nuis, w, a, z, y, psi + delta, contrast)["total"]
    assert shifted == pytest.approx(-delta, abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31))
def test_fulldata_eif_mean_zero_any_correction(seed):
    rng = np.random.default_rng(seed)
    law = random_law(rng)
    nuis = ExactNuisance(law)
    w, a, z, y, p = support(law)
    dstar = eif_terms(nuis, w, a, z, y, _target(law, NDE_CONTRAST))["total"]
    g_r = rng.uniform(0.2, 1.0, p.size)
    d = rng.standard_normal(p.size)
    total = 0.0
    for r in (0.0, 1.0):
        pr = g_r if r else 1.0 - g_r
        total += (p * pr) @ eif_fulldata(dstar, d, g_r, np.full(p.size, r))
    assert abs(total) < 1e-12


def test_fulldata_eif_identities():
    dstar = np.array([0.3, -1.2, 2.0])
    assert np.array_equal(eif_fulldata(dstar, np.zeros(3), np.ones(3), np.ones(3)), dstar)
    # unmeasured rows contribute only the correction, whatever D* holds there
    out = eif_fulldata([np.nan, 1.0], [0.4, 0.4], [0.5, 0.5], [0, 1])
    assert out[0] == pytest.approx(0.4) and out[1] == pytest.approx(2.0 - 0.4)
    assert eif_fulldata(1.0, 0.0, 1.0, 1) == 1.0


def test_eif_nde_matches_vector_form():
    law = random_law(np.random.default_rng(9))
    nuis = ExactNuisance(law)
    w, a, z, y, _ = support(law)
    psi = _target(law, NDE_CONTRAST)
    vec = eif_terms(nuis, w, a, z, y, psi)["total"]
    for i in (0, 7, 30):
        rec = ObservedRecord((w[i, 0],), int(a[i]), 1, (z[i, 0],), float(y[i]))
        assert eif_nde(rec, nuis, psi=psi) == pytest.approx(vec[i], abs=1e-14)
    with pytest.raises(ValueError):
        eif_nde(ObservedRecord((0.0,), 0, 0, None, 0.0, 0.5), nuis)


def test_wald_quantiles():
    lo, hi = wald_ci(0.0, 1.0, 0.95)
    assert hi == pytest.approx(1.959964, abs=1e-6) and lo == -hi
    assert wald_ci(0.0, 1.0, 0.90)[1] == pytest.approx(1.644854, abs=1e-6)
    with pytest.raises(ValueError):
        wald_ci(0.0, 0.0)


@pytest.mark.parametrize("estimator", ["onestep", "tmle"])
def test_nde_estimate_basics(conf_data, estimator):
    res = estimate(conf_data, EstimatorConfig(estimator, seed=2))
    assert abs(res.psi - 3.0) < 4 * res.se
    assert res.ci_lo <= res.psi <= res.ci_hi and res.se > 0
    assert res.eif_values.shape == (conf_data.n,)
    assert abs(res.eif_values.mean()) < 1e-10
    assert res.se == pytest.approx(res.eif_values.std() / math.sqrt(conf_data.n))
    assert res.diagnostics["folds"] == 5 and res.converged


def test_onestep_identity_per_fold(conf_data):
    res = estimate_onestep(conf_data, EstimatorConfig(seed=4))
    for f in res.diagnostics["per_fold"]:
        assert f["onestep_identity_gap"] <= 1e-12
    assert np.mean(res.diagnostics["fold_estimates"]) == pytest.approx(res.psi, abs=0.05)


@pytest.mark.parametrize("targeting", ["per_fold", "pooled"])
def test_tmle_scores_solved(conf_data, targeting):
    res = estimate_tmle(conf_data, EstimatorConfig(targeting=targeting, seed=3))
    for f in res.diagnostics["per_fold"]:
        assert abs(f["score_y"]) <= f["tau_score"]
        assert abs(f["score_z"]) <= f["tau_score"]
        assert abs(f["score_w"]) < 1e-12
    assert len(res.diagnostics["fold_estimates"]) == 5


def test_tmle_binary_plugin_in_range(tp_data):
    complete = tp_data.subset(np.flatnonzero(tp_data.r == 1))
    data = Dataset.from_arrays(complete.w, complete.a, complete.z, complete.y)
    res = estimate_tmle(data, EstimatorConfig(seed=1))
    assert -1.0 <= res.psi <= 1.0


def test_fold_count_stability(conf_data):
    est = [estimate_onestep(conf_data, EstimatorConfig(folds=k, seed=8)) for k in (5, 10)]
    assert abs(est[0].psi - est[1].psi) < est[0].se
    assert est[1].diagnostics["folds"] == 10
    single = estimate_onestep(conf_data, EstimatorConfig(folds=1))
    assert abs(single.psi - est[0].psi) < est[0].se


@pytest.mark.parametrize("estimator", ["onestep", "tmle"])
@pytest.mark.parametrize("rr", [False, True])
def test_twophase_reduction(tp_data, estimator, rr):
    # with every mediator measured (g_R = 1) both two-phase modes are the complete-data path
    complete = tp_data.subset(np.flatnonzero(tp_data.r == 1))
    data = Dataset.from_arrays(complete.w, complete.a, complete.z, complete.y)
    cfg = EstimatorConfig(estimator, seed=6)
    a = estimate_twophase_variants(data, cfg, "estimated", rr=rr)
    b = estimate_twophase_variants(data, cfg, "obs_weights_only", rr=rr)
    assert not data.two_phase
    assert abs(a.psi - b.psi) < 1e-10 and abs(a.se - b.se) < 1e-10


def test_rr_estimate(tp_data):
    res = estimate_rr_nde(tp_data, EstimatorConfig(seed=5))
    assert res.estimand == "rr_nde" and res.psi > 0
    z = 1.959963984540054
    assert math.log(res.ci_lo) == pytest.approx(math.log(res.psi) - z * res.log_se)
    assert math.log(res.ci_hi) == pytest.approx(math.log(res.psi) + z * res.log_se)
    assert res.se == pytest.approx(res.psi * res.log_se)
    d = res.diagnostics
    assert res.psi == pytest.approx(d["psi_numerator"] / d["psi_denominator"])


def test_rr_needs_binary_outcome(conf_data):
    with pytest.raises(DataValidationError):
        estimate_rr_nde(conf_data)


def test_tmle_rr_converges(tp_data):
    res = estimate_rr_nde(tp_data, EstimatorConfig("tmle", targeting="pooled", seed=5))
    assert res.converged
    assert 0.3 < res.psi < 2.0


def test_learner_config_passes_through(conf_data):
    cfg = EstimatorConfig(learners={"q_bar": {"drop": ["z"]}}, seed=1)
    assert cfg.learner("q_bar") == LearnerSpec(drop=("z",))
    assert cfg.learner("g_a_w") == LearnerSpec()
    assert estimate_onestep(conf_data, cfg).psi != estimate_onestep(conf_data, EstimatorConfig(seed=1)).psi


def test_config_validation():
    for bad in ({"estimator": "aipw"}, {"folds": 0}, {"folds": 21}, {"tau_score": 0.0},
                {"level": 1.0}, {"two_phase_mode": "ipw"}, {"targeting": "global"},
                {"learners": {"g_z": {}}}):
        with pytest.raises(ValueError):
            EstimatorConfig(**bad)


def test_degenerate_fold_construction_fails(rng):
    n = 12
    a = np.r_[0, np.ones(n - 1)]
    data = Dataset.from_arrays(rng.standard_normal((n, 1)), a, rng.standard_normal(n),
                               rng.standard_normal(n))
    with pytest.raises(EstimationError):
        estimate_onestep(data, EstimatorConfig(folds=5))
