import math

import numpy as np
import pytest
from scipy.stats import poisson

from natdirect.estimators import EstimatorConfig
from natdirect.sim import (
    KINDS,
    DgpSpec,
    MetricsTable,
    SimCell,
    confounding_eif_variance,
    metrics,
    rr_z,
    run_replicates,
    simulate,
    simulate_confounding,
    simulate_twophase,
    twophase_truth,
)

BIG = 10**6


def _strip_runtime(rows):
    return [{k: v for k, v in r.items() if "runtime" not in k} for r in rows]


def test_confounding_marginals():
    data, v = simulate_confounding(DgpSpec(n=BIG, seed=1), return_hidden=True)
    w1, w2 = data.w.T
    assert np.all((w1 > -1) & (w1 < 1))
    assert abs(w1.mean()) < 4 / math.sqrt(3 * BIG)
    assert abs(w2.mean()) < 4 / math.sqrt(BIG) and abs(w2.var() - 1) < 0.01
    assert abs(v.mean()) < 4 / math.sqrt(BIG)
    assert set(np.unique(data.z[:, 0])) == {0.0, 1.0}


def test_twophase_marginals():
    spec = DgpSpec("twophase_study", n=BIG, eta=0.25, seed=2)
    data, v = simulate_twophase(spec, return_hidden=True)
    w1, w2, w3 = data.w.T
    p3 = poisson.sf(30, 30.0)
    assert abs(w3.mean() - p3) < 4 * math.sqrt(p3 * (1 - p3) / BIG)
    for col in (w1, w2):
        assert abs(col.mean() - 0.3) < 4 * math.sqrt(0.21 / BIG)
    levels, counts = np.unique(v, return_counts=True)
    assert np.allclose(levels, np.arange(1, 9) / 10)
    assert abs(counts[0] / BIG - 0.05 / 0.7) < 0.002
    cases = data.y == 1
    assert np.all(data.r[cases] == 1)
    assert abs(data.r[~cases].mean() - 0.25) < 0.003


def test_simulation_deterministic():
    for kind in KINDS:
        a = simulate(DgpSpec(kind, n=300, seed=9))
        b = simulate(DgpSpec(kind, n=300, seed=9))
        c = simulate(DgpSpec(kind, n=300, seed=10))
        assert np.array_equal(a.y, b.y) and np.array_equal(a.w, b.w)
        assert not np.array_equal(a.w, c.w)


def test_rr_z_behaviour():
    lo = rr_z(1.0, 2 * 10**5, seed=3)
    hi = rr_z(3.0, 2 * 10**5, seed=3)
    assert 1.0 < lo < hi
    flipped = rr_z(3.0, 2 * 10**5, seed=3, upper=(0.0, 0.25), lower=(0.75, 1.0))
    assert flipped * hi == pytest.approx(1.0, abs=0.02)
    with pytest.warns(RuntimeWarning):
        rr_z(1.0, 1000)


def test_twophase_truth_methods_agree():
    quad = twophase_truth("quadrature")
    mc = twophase_truth("monte_carlo", draws=2 * 10**6, seed=5)
    assert quad["rr"] == pytest.approx(quad["psi1"] / quad["psi0"])
    assert abs(quad["rr"] - mc["rr"]) < 0.003
    with pytest.raises(ValueError):
        twophase_truth("exact")


def test_efficiency_bound_grows_with_confounding():
    b0 = confounding_eif_variance(0.0, draws=50_000)
    b2 = confounding_eif_variance(2.0, draws=50_000)
    assert 12.0 < b0 < 15.5 and b2 > b0


def test_metrics_hand_computed():
    row = metrics([1.0, 2.0, 3.0], truth=1.5, n=100, sigma2_eff=2.0,
                  ci=[(0, 2), (1.6, 3), (1, 4)])
    assert row["bias"] == pytest.approx(0.5)
    assert row["abs_scaled_bias"] == pytest.approx(5.0)
    assert row["variance"] == pytest.approx(1.0)
    assert row["mse"] == pytest.approx((0.25 + 0.25 + 2.25) / 3)
    assert row["normalized_mse"] == pytest.approx(100 * row["mse"] / 2.0)
    assert row["coverage"] == pytest.approx(2 / 3)
    single = metrics([2.0], 1.0, 10)
    assert math.isnan(single["variance"]) and math.isnan(single["normalized_mse"])
    assert metrics([], 1.0, 10)["replicates"] == 0


def _grid():
    cfg = EstimatorConfig(folds=3)
    return [SimCell(DgpSpec(n=200, gamma=g), EstimatorConfig(est, folds=3))
            for g in (0.0, 1.0) for est in ("onestep", "tmle")] + [
        SimCell(DgpSpec("twophase_study", n=600, eta=0.5), cfg, rr=True)]


def test_run_replicates_deterministic_and_paired():
    t1 = run_replicates(_grid(), 3, base_seed=40)
    t2 = run_replicates(_grid(), 3, base_seed=40)
    assert len(t1) == 5 and len(t1.replicates) == 15
    assert _strip_runtime(t1.rows) == _strip_runtime(t2.rows)
    assert _strip_runtime(t1.replicates) == _strip_runtime(t2.replicates)
    row = t1.lookup(scenario="gamma=1", estimator="tmle")[0]
    assert row["replicates"] == 3 and row["failures"] == 0 and 0 <= row["coverage"] <= 1
    seeds = {r["seed"] for r in t1.replicates}
    assert seeds == {40, 41, 42}


def test_run_replicates_parallel_matches_serial():
    serial = run_replicates(_grid()[:2], 2, base_seed=7)
    parallel = run_replicates(_grid()[:2], 2, base_seed=7, threads=2)
    assert _strip_runtime(serial.replicates) == _strip_runtime(parallel.replicates)


def test_empty_and_csv(tmp_path):
    assert len(run_replicates(_grid(), 0)) == 0
    table = run_replicates(_grid()[:1], 2, base_seed=1)
    paths = table.write_csv(tmp_path / "a")
    again = table.write_csv(tmp_path / "b")
    for p, q in zip(paths, again):
        with open(p, "rb") as f1, open(q, "rb") as f2:
            assert f1.read() == f2.read()
    header = open(paths[0], encoding="utf-8").readline().strip().split(",")
    assert header[:4] == ["kind", "scenario", "n", "estimator"] and "mean_runtime" not in header
    timed = table.write_csv(tmp_path / "c", timing=True)
    assert "mean_runtime" in open(timed[0], encoding="utf-8").readline()
    assert isinstance(MetricsTable().notes, dict)


def test_spec_validation():
    assert DgpSpec(2).kind == "twophase_study"
    for bad in ({"kind": "study3"}, {"n": 1}, {"eta": 0.0}, {"eta": 1.5}):
        with pytest.raises(ValueError):
            DgpSpec(**bad)
    assert DgpSpec(gamma=2).scenario == "gamma=2"
    assert DgpSpec(2, eta=0.25).scenario == "eta=0.25"
