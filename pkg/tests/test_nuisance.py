import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from exact_law import ExactNuisance
from natdirect.data import Dataset
from natdirect.nuisance import (
    LearnerSpec,
    NuisanceError,
    density_ratio,
    fit_conditional_eif,
    fit_learner,
    fit_outcome_regression,
    fit_propensity,
    fit_propensity_with_mediator,
    fit_pseudo_outcome,
    fit_shared,
)
from natdirect.oracle import observed_tables, random_law

SPECS = [LearnerSpec(), LearnerSpec("ridge_glm", ridge_lambda=0.05), LearnerSpec(degree=2)]


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31), c=st.floats(0.01, 100.0), which=st.integers(0, 2),
       link=st.sampled_from(["logit", "identity"]))
def test_weight_scale_invariance(seed, c, which, link):
    rng = np.random.default_rng(seed)
    n = 200
    blocks = {"w": rng.standard_normal((n, 2)), "z": rng.standard_normal(n)}
    lin = blocks["w"] @ [0.8, -0.5] + 0.3 * blocks["z"]
    target = (rng.uniform(size=n) < 1 / (1 + np.exp(-lin))).astype(float) if link == "logit" else lin
    target = target + (0 if link == "logit" else rng.standard_normal(n))
    wts = rng.uniform(1.0, 5.0, n)
    base = fit_learner(SPECS[which], blocks, target, wts, link).predict(blocks)
    scaled = fit_learner(SPECS[which], blocks, target, c * wts, link).predict(blocks)
    assert np.max(np.abs(base - scaled)) < 1e-10


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31), n_z=st.integers(2, 5))
def test_density_ratio_bayes_identity(seed, n_z):
    law = random_law(np.random.default_rng(seed), n_z=n_z)
    _, _, g_z, _ = observed_tables(law)
    nuis = ExactNuisance(law)
    wi, zi = np.meshgrid(np.arange(g_z.shape[0]), np.arange(n_z), indexing="ij")
    w, z = wi.reshape(-1, 1).astype(float), zi.reshape(-1, 1).astype(float)
    direct = g_z[wi, 0, zi] / g_z[wi, 1, zi]
    assert np.max(np.abs(density_ratio(nuis, w, z) - direct.ravel())) < 1e-12


@pytest.mark.parametrize("margin", [0.0, 0.05, 0.3])
def test_pseudo_outcome_margin_invariance(conf_data, margin):
    shared = fit_shared(conf_data, {})
    ref = fit_pseudo_outcome(conf_data, shared, margin=0.01).predict(conf_data.w)
    out = fit_pseudo_outcome(conf_data, shared, margin=margin).predict(conf_data.w)
    assert np.max(np.abs(ref - out)) < 1e-8


def test_pseudo_outcome_bounded_scale(conf_data):
    shared = fit_shared(conf_data, {})
    v = fit_pseudo_outcome(conf_data, shared)
    x = np.linspace(-1, 1, 7)
    assert np.allclose(v.from_bounded(v.to_bounded(x)), x)
    assert v.lo < v.hi


def test_twophase_fits_use_phase_two_rows(tp_data):
    g = fit_propensity(tp_data)
    gz = fit_propensity_with_mediator(tp_data)
    q = fit_outcome_regression(tp_data)
    m = tp_data.r == 1
    p = g.predict({"w": tp_data.w})
    assert p.shape == (tp_data.n,) and np.all((p > 0) & (p < 1))
    assert np.all(np.isfinite(gz.predict({"w": tp_data.w[m], "z": tp_data.z[m]})))
    assert q.link == "logit"
    d = fit_conditional_eif(tp_data, np.ones(int(m.sum())))
    assert np.allclose(d.predict({"w": tp_data.w, "a": tp_data.a, "y": tp_data.y,
                                  "ay": tp_data.a * tp_data.y}), 1.0)
    with pytest.raises(NuisanceError):
        fit_conditional_eif(tp_data, np.ones(3))


def test_drop_and_degree(rng):
    n = 300
    blocks = {"w": rng.standard_normal((n, 2)), "z": rng.uniform(size=n)}
    y = rng.standard_normal(n)
    full = fit_learner(LearnerSpec(degree=2), blocks, y, link="identity")
    assert full.coefficients.size == 1 + 3 + 3 + 3
    dropped = fit_learner(LearnerSpec(drop=("z",)), blocks, y, link="identity")
    assert dropped.coefficients.size == 3


def test_cv_select_prefers_true_structure(rng):
    n = 600
    x = rng.standard_normal(n)
    y = x**2 + 0.3 * rng.standard_normal(n)
    spec = LearnerSpec("cv_select", candidates=(LearnerSpec(), LearnerSpec(degree=2)))
    fit = fit_learner(spec, {"w": x}, y, link="identity")
    assert fit.chosen == LearnerSpec(degree=2)
    assert fit.spec == spec


def test_learner_spec_validation():
    with pytest.raises(ValueError):
        LearnerSpec("forest")
    with pytest.raises(ValueError):
        LearnerSpec("cv_select", candidates=(LearnerSpec(),))
    with pytest.raises(ValueError):
        LearnerSpec(degree=3)
    with pytest.raises(ValueError):
        LearnerSpec("ridge_glm", ridge_lambda=-1)
    spec = LearnerSpec("cv_select", candidates=({"degree": 2}, {"family": "glm"}))
    assert LearnerSpec(**{**spec.to_dict(), "candidates": spec.to_dict()["candidates"]}) == spec


def test_single_arm_training_rejected(rng):
    n = 20
    data = Dataset.from_arrays(rng.standard_normal((n, 1)), np.r_[0, np.ones(n - 1)],
                               rng.standard_normal(n), rng.standard_normal(n))
    with pytest.raises(NuisanceError):
        fit_pseudo_outcome(data.subset(np.arange(1, n)), fit_shared(data, {}))
