"""Simulation designs, closed-form truths and replicate-study metrics.

Two data-generating processes are provided:

``confounding_study``
    A hidden N(0,1) confounder V of exposure and a binary mediator, with
    confounding strength ``gamma`` and a Gaussian outcome whose exposure
    coefficient (the NDE) is 3.
``twophase_study``
    A vaccine-trial-like design with a discrete hidden V, a Gaussian
    mediator, a binary outcome and case-cohort measurement of the mediator
    (all cases, a Bernoulli(``eta``) subcohort of controls).
"""

from __future__ import annotations

import csv
import math
import os
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np
from scipy.special import expit
from scipy.stats import norm, poisson

from .data import Dataset
from .estimators import EstimateResult, EstimatorConfig, EstimationError, estimate

KINDS = ("confounding_study", "twophase_study")
CONFOUNDING_NDE = 3.0

# twophase design: V takes the tenths 0.1..0.8 after rounding a U(0.1, 0.8) draw
V_LEVELS = np.round(np.arange(1, 9) / 10.0, 1)
V_PROBS = np.array([0.05] + [0.1] * 6 + [0.05]) / 0.7
# W3 = I(Poisson(30) + 20 > 50)
P_W3 = float(poisson.sf(30, 30.0))
P_W1 = P_W2 = 0.3

_GH_X, _GH_W = np.polynomial.hermite_e.hermegauss(60)
_GH_W = _GH_W / _GH_W.sum()


@dataclass(frozen=True)
class DgpSpec:
    kind: str = "confounding_study"
    n: int = 1000
    gamma: float = 0.0
    eta: float = 1.0
    seed: int = 0

    def __post_init__(self):
        kind = {1: KINDS[0], 2: KINDS[1], "1": KINDS[0], "2": KINDS[1]}.get(self.kind, self.kind)
        if kind not in KINDS:
            raise ValueError(f"unknown simulation kind {self.kind!r}")
        object.__setattr__(self, "kind", kind)
        if self.n < 2:
            raise ValueError("n must be at least 2")
        if not 0 < self.eta <= 1:
            raise ValueError("eta must lie in (0, 1]")

    @property
    def scenario(self) -> str:
        return f"gamma={self.gamma:g}" if self.kind == KINDS[0] else f"eta={self.eta:g}"

    def with_seed(self, seed: int) -> "DgpSpec":
        return DgpSpec(self.kind, self.n, self.gamma, self.eta, seed)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "n": self.n, "gamma": self.gamma, "eta": self.eta, "seed": self.seed}


# --------------------------------------------------------------------------
# confounding study


def _conf_prop_a(w1, w2, v):
    return expit(w1 + w2 + v)


def _conf_prop_z(w1, w2, v, a, gamma):
    return expit(w1 + w2 + gamma * v + 3.0 * a)


def simulate_confounding(spec: DgpSpec, return_hidden: bool = False):
    """Draw a confounding-study dataset; optionally also return the hidden V."""
    rng = np.random.default_rng(spec.seed)
    n = spec.n
    w1 = rng.uniform(-1.0, 1.0, n)
    w2 = rng.standard_normal(n)
    v = rng.standard_normal(n)
    a = (rng.uniform(size=n) < _conf_prop_a(w1, w2, v)).astype(float)
    z = (rng.uniform(size=n) < _conf_prop_z(w1, w2, v, a, spec.gamma)).astype(float)
    y = 3.0 * a + w1 + w2 + z + rng.standard_normal(n)
    data = Dataset.from_arrays(np.column_stack([w1, w2]), a, z, y,
                               column_roles={"w1": "covariate", "w2": "covariate"})
    return (data, v) if return_hidden else data


def rr_z(gamma: float, mc_draws: int = 10**7, seed: int = 0,
         upper=(0.75, 1.0), lower=(0.0, 0.25), chunk: int = 10**6) -> float:
    """Mediator risk ratio between the top and bottom quartile bands of V.

    Monte Carlo estimate of ``P(Z=1 | V in upper band) / P(Z=1 | V in lower band)``
    in the confounding study, with W drawn from its law and the exposure
    integrated over its conditional law given (W, V). Bands are given as
    quantile ranges of V; swapping them gives the reciprocal.
    """
    if mc_draws < 10**5:
        warnings.warn("rr_z with fewer than 1e5 draws is noisy", RuntimeWarning)
    rng = np.random.default_rng(seed)

    def band_risk(band, draws):
        total, done = 0.0, 0
        while done < draws:
            m = min(chunk, draws - done)
            u = rng.uniform(band[0], band[1], m)
            v = norm.ppf(u)
            w = rng.uniform(-1.0, 1.0, m) + rng.standard_normal(m)
            pa = _conf_prop_a(w, 0.0, v)
            pz = pa * _conf_prop_z(w, 0.0, v, 1.0, gamma) + (1 - pa) * _conf_prop_z(w, 0.0, v, 0.0, gamma)
            total += pz.sum()
            done += m
        return total / draws

    half = max(mc_draws // 2, 1)
    return band_risk(upper, half) / band_risk(lower, half)


def _conf_mediator_law(w1, w2, gamma):
    """P(A=1|W), P(Z=1|W,A=0), P(Z=1|W,A=1) with V integrated out (observed law)."""
    v = _GH_X[None, :]
    pa = _conf_prop_a(w1[:, None], w2[:, None], v)
    g = pa @ _GH_W
    out = []
    for a, wa in ((0.0, 1 - pa), (1.0, pa)):
        pz = _conf_prop_z(w1[:, None], w2[:, None], v, a, gamma)
        out.append((wa * pz) @ _GH_W / (wa @ _GH_W))
    return g, out[0], out[1]


def confounding_eif_variance(gamma: float = 0.0, draws: int = 200_000, seed: int = 12345) -> float:
    """Variance of the NDE influence function at the true law (outcome scale).

    Uses exact nuisances: the outcome regression is 3A + W1 + W2 + Z, so the
    pseudo-outcome is constant and the EIF reduces to H (Y - Q) with unit
    residual variance, giving ``E[H^2]``; W is integrated by Monte Carlo.
    """
    rng = np.random.default_rng(seed)
    w1 = rng.uniform(-1.0, 1.0, draws)
    w2 = rng.standard_normal(draws)
    g, pz0, pz1 = _conf_mediator_law(w1, w2, gamma)
    total = np.zeros(draws)
    for z in (0.0, 1.0):
        f0 = pz0 if z else 1 - pz0
        f1 = pz1 if z else 1 - pz1
        ratio = f0 / f1
        total += g * f1 * (ratio / g) ** 2 + (1 - g) * f0 / (1 - g) ** 2
    return float(total.mean())


# --------------------------------------------------------------------------
# two-phase study


def _tp_prop_a(w1, w2, w3, v):
    return expit(-0.5 + 0.5 * w1 - 0.5 * w2 + 0.2 * w3 + 0.2 * v)


def _tp_mean_z(w1, w2, w3, v, a):
    return 5.661 + 0.3 * w1 - 0.7 * w2 - 0.5 * w3 + 0.3 * v - a


def _tp_outcome(w1, w2, w3, a, z):
    return expit(2.5 * w1 + 0.3 * w2 + 0.4 * w3 - 0.5 * a + 0.2 * z)


def simulate_twophase(spec: DgpSpec, return_hidden: bool = False):
    """Draw a case-cohort dataset: every case and a Bernoulli(eta) subcohort of controls."""
    rng = np.random.default_rng(spec.seed)
    n = spec.n
    v = np.round(rng.uniform(0.1, 0.8, n), 1)
    w1 = (rng.uniform(size=n) < P_W1).astype(float)
    w2 = (rng.uniform(size=n) < P_W2).astype(float)
    w3 = (rng.poisson(30.0, n) + 20 > 50).astype(float)
    a = (rng.uniform(size=n) < _tp_prop_a(w1, w2, w3, v)).astype(float)
    z = _tp_mean_z(w1, w2, w3, v, a) + rng.standard_normal(n)
    y = (rng.uniform(size=n) < _tp_outcome(w1, w2, w3, a, z)).astype(float)
    sub = rng.uniform(size=n) < spec.eta
    r = np.where(y == 1, 1.0, sub.astype(float))
    prob = np.where(y == 1, 1.0, spec.eta)
    z = np.where(r == 1, z, np.nan)
    data = Dataset.from_arrays(np.column_stack([w1, w2, w3]), a, z, y, r, prob,
                               column_roles={"w1": "covariate", "w2": "covariate", "w3": "covariate"})
    return (data, v) if return_hidden else data


def _tp_w_support():
    cells = []
    for w1 in (0.0, 1.0):
        for w2 in (0.0, 1.0):
            for w3 in (0.0, 1.0):
                p = ((P_W1 if w1 else 1 - P_W1) * (P_W2 if w2 else 1 - P_W2)
                     * (P_W3 if w3 else 1 - P_W3))
                cells.append((w1, w2, w3, p))
    return cells


def _tp_v_given(w1, w2, w3, a):
    pa = _tp_prop_a(w1, w2, w3, V_LEVELS)
    joint = V_PROBS * (pa if a else 1 - pa)
    return joint / joint.sum()


def _tp_components(w1, w2, w3):
    """(psi_0(w), psi_1(w)) = E[Q(w, a, Z) | w, A=0] by Gauss-Hermite over Z."""
    pv = _tp_v_given(w1, w2, w3, 0)
    out = []
    for a in (0.0, 1.0):
        mu = _tp_mean_z(w1, w2, w3, V_LEVELS, 0.0)
        q = _tp_outcome(w1, w2, w3, a, mu[:, None] + _GH_X[None, :]) @ _GH_W
        out.append(float(pv @ q))
    return out


def twophase_truth(method: str = "quadrature", draws: int = 10**7, seed: int = 2024,
                   chunk: int = 10**6) -> dict:
    """True RR-NDE of the two-phase design and its two risk components.

    ``"quadrature"`` sums over the discrete (W, V) support with Gauss-Hermite
    integration over Z. ``"monte_carlo"`` is the G-computation check: draw
    W and V, draw Z from its law under A=0, average E[Y | W, a, Z].
    """
    if method == "quadrature":
        psi0 = psi1 = 0.0
        for w1, w2, w3, p in _tp_w_support():
            c0, c1 = _tp_components(w1, w2, w3)
            psi0 += p * c0
            psi1 += p * c1
    elif method == "monte_carlo":
        rng = np.random.default_rng(seed)
        s0 = s1 = 0.0
        done = 0
        while done < draws:
            m = min(chunk, draws - done)
            v = np.round(rng.uniform(0.1, 0.8, m), 1)
            w1 = (rng.uniform(size=m) < P_W1).astype(float)
            w2 = (rng.uniform(size=m) < P_W2).astype(float)
            w3 = (rng.poisson(30.0, m) + 20 > 50).astype(float)
            # mediator under the observed A=0 law: V | W, A=0 via rejection on A
            keep = rng.uniform(size=m) >= _tp_prop_a(w1, w2, w3, v)
            w1, w2, w3, v = w1[keep], w2[keep], w3[keep], v[keep]
            # reweight W back to its marginal: P(A=0 | W) differs across W cells
            z = _tp_mean_z(w1, w2, w3, v, 0.0) + rng.standard_normal(v.shape[0])
            wt = _tp_w_reweight(w1, w2, w3)
            s0 += float(np.sum(wt * _tp_outcome(w1, w2, w3, 0.0, z)))
            s1 += float(np.sum(wt * _tp_outcome(w1, w2, w3, 1.0, z)))
            done += m
        psi0, psi1 = s0 / draws, s1 / draws
    else:
        raise ValueError(f"unknown method {method!r}")
    return {"psi0": psi0, "psi1": psi1, "rr": psi1 / psi0}


def _tp_w_reweight(w1, w2, w3):
    # 1 / P(A=0 | W), so that averaging over accepted rows restores p(W)
    out = np.empty(w1.shape[0])
    for c1, c2, c3, _ in _tp_w_support():
        pa0 = float(V_PROBS @ (1 - _tp_prop_a(c1, c2, c3, V_LEVELS)))
        m = (w1 == c1) & (w2 == c2) & (w3 == c3)
        out[m] = 1.0 / pa0
    return out


@lru_cache(maxsize=None)
def twophase_rr_truth() -> float:
    return twophase_truth("quadrature")["rr"]


def twophase_eif_variance(draws: int = 400_000, seed: int = 12345) -> float:
    """Variance of the RR-NDE influence function at the true law without subsampling."""
    rng = np.random.default_rng(seed)
    data, _ = simulate_twophase(DgpSpec(KINDS[1], draws, eta=1.0, seed=seed), return_hidden=True)
    w1, w2, w3 = data.w.T
    a, z, y = data.a.astype(float), data.z[:, 0], data.y
    truth = twophase_truth()
    psi = {0: truth["psi0"], 1: truth["psi1"]}
    g = np.empty(draws)
    f0 = np.empty(draws)
    f1 = np.empty(draws)
    comp = {0: np.empty(draws), 1: np.empty(draws)}
    for c1, c2, c3, _ in _tp_w_support():
        m = (w1 == c1) & (w2 == c2) & (w3 == c3)
        pa = _tp_prop_a(c1, c2, c3, V_LEVELS)
        g[m] = V_PROBS @ pa
        for a_val, f in ((0, f0), (1, f1)):
            pv = _tp_v_given(c1, c2, c3, a_val)
            mu = _tp_mean_z(c1, c2, c3, V_LEVELS, float(a_val))
            f[m] = norm.pdf(z[m][:, None] - mu[None, :]) @ pv
        k0, k1 = _tp_components(c1, c2, c3)
        comp[0][m], comp[1][m] = k0, k1
    ratio = f0 / f1
    q = {k: _tp_outcome(w1, w2, w3, float(k), z) for k in (0, 1)}
    q_obs = np.where(a == 1, q[1], q[0])
    d = {}
    for k in (0, 1):
        h = (a == 1) / g * ratio if k == 1 else (a == 0) / (1 - g)
        d[k] = h * (y - q_obs) + (a == 0) / (1 - g) * (q[k] - comp[k]) + comp[k] - psi[k]
    rr = psi[1] / psi[0]
    del rng
    return float(np.var(rr * (d[1] / psi[1] - d[0] / psi[0])))


@lru_cache(maxsize=None)
def efficiency_bound(kind: str) -> float:
    """Reference EIF variance: gamma=0 for the confounding study, eta=1 for two-phase."""
    kind = DgpSpec(kind).kind
    return confounding_eif_variance(0.0) if kind == KINDS[0] else twophase_eif_variance()


def truth_for(spec: DgpSpec) -> float:
    return CONFOUNDING_NDE if spec.kind == KINDS[0] else twophase_rr_truth()


def simulate(spec: DgpSpec):
    return simulate_confounding(spec) if spec.kind == KINDS[0] else simulate_twophase(spec)


# --------------------------------------------------------------------------
# metrics and replicate runner

METRIC_NOTES = {
    "abs_scaled_bias": "sqrt(n) * |mean(estimate) - truth|",
    "normalized_mse": "n * mean((estimate - truth)^2) / reference EIF variance "
                      "(gamma=0 for the confounding study, eta=1 for the two-phase study)",
    "variance": "sample variance of estimates (ddof=1)",
}


def metrics(estimates, truth: float, n: int, sigma2_eff: Optional[float] = None,
            ci=None) -> dict:
    """Summary metrics for one cell.

    ``estimates`` holds floats or :class:`EstimateResult` objects; for
    results the intervals are taken from them, otherwise from ``ci``
    (a sequence of (lo, hi) pairs) when given.
    """
    psi = []
    bounds = []
    for e in estimates:
        if isinstance(e, EstimateResult):
            psi.append(e.psi)
            bounds.append((e.ci_lo, e.ci_hi))
        else:
            psi.append(float(e))
    if ci is not None:
        bounds = [tuple(b) for b in ci]
    psi = np.asarray(psi, dtype=float)
    k = psi.shape[0]
    row = {"replicates": k}
    if k == 0:
        row.update(bias=math.nan, abs_scaled_bias=math.nan, variance=math.nan,
                   mse=math.nan, normalized_mse=math.nan, coverage=math.nan)
        return row
    bias = float(psi.mean() - truth)
    mse = float(np.mean((psi - truth) ** 2))
    row["bias"] = bias
    row["abs_scaled_bias"] = math.sqrt(n) * abs(bias)
    row["variance"] = float(psi.var(ddof=1)) if k > 1 else math.nan
    row["mse"] = mse
    row["normalized_mse"] = n * mse / sigma2_eff if sigma2_eff else math.nan
    if bounds:
        b = np.asarray(bounds, dtype=float)
        row["coverage"] = float(np.mean((b[:, 0] <= truth) & (truth <= b[:, 1])))
    else:
        row["coverage"] = math.nan
    return row


@dataclass(frozen=True)
class SimCell:
    """One estimator applied to one design; ``label`` names the estimator column."""

    dgp: DgpSpec
    config: EstimatorConfig
    label: str = ""
    rr: bool = False

    def name(self) -> str:
        if self.label:
            return self.label
        mode = "" if self.config.two_phase_mode == "estimated" else "_obs_weights"
        return self.config.estimator + mode


REPLICATE_FIELDS = ("kind", "scenario", "n", "estimator", "replicate", "seed", "psi", "se",
                    "ci_lo", "ci_hi", "covered", "converged", "runtime", "error")
SUMMARY_FIELDS = ("kind", "scenario", "n", "estimator", "truth", "replicates", "failures",
                  "bias", "abs_scaled_bias", "variance", "mse", "normalized_mse", "coverage",
                  "mean_runtime")


@dataclass
class MetricsTable:
    rows: list = field(default_factory=list)
    replicates: list = field(default_factory=list)
    notes: dict = field(default_factory=lambda: dict(METRIC_NOTES))

    def __len__(self):
        return len(self.rows)

    def lookup(self, **keys) -> list:
        return [r for r in self.rows if all(r.get(k) == v for k, v in keys.items())]

    def write_csv(self, directory, prefix: str = "", timing: bool = False) -> tuple:
        """Write ``summary.csv`` and ``replicates.csv``.

        Wall-clock columns are left out unless ``timing`` is set, so reruns
        with the same seed give byte-identical files.
        """
        os.makedirs(directory, exist_ok=True)
        paths = []
        for name, fields, rows in (("summary", SUMMARY_FIELDS, self.rows),
                                   ("replicates", REPLICATE_FIELDS, self.replicates)):
            if not timing:
                fields = tuple(f for f in fields if "runtime" not in f)
            path = os.path.join(directory, f"{prefix}{name}.csv")
            with open(path, "w", newline="", encoding="utf-8") as fh:
                writer = csv.DictWriter(fh, fieldnames=fields, extrasaction="ignore",
                                        lineterminator="\r\n")
                writer.writeheader()
                for r in rows:
                    writer.writerow({k: _fmt(r.get(k)) for k in fields})
            paths.append(path)
        return tuple(paths)


def _fmt(x):
    if isinstance(x, float):
        return repr(x)
    return "" if x is None else x


def _run_group(args):
    dgp, cells, replicate, seed = args
    data = simulate(dgp.with_seed(seed))
    truth = truth_for(dgp)
    out = []
    for cell in cells:
        rec = {"kind": dgp.kind, "scenario": dgp.scenario, "n": dgp.n, "estimator": cell.name(),
               "replicate": replicate, "seed": seed, "error": ""}
        cfg = EstimatorConfig(**{**cell.config.__dict__, "seed": seed})
        t0 = time.perf_counter()
        try:
            res = estimate(data, cfg, rr=cell.rr)
            rec.update(psi=res.psi, se=res.se, ci_lo=res.ci_lo, ci_hi=res.ci_hi,
                       covered=int(res.ci_lo <= truth <= res.ci_hi), converged=int(res.converged))
        except (EstimationError, ValueError) as exc:
            rec["error"] = f"{type(exc).__name__}: {exc}"
        rec["runtime"] = time.perf_counter() - t0
        out.append(rec)
    return out


def _dgp_key(d: DgpSpec):
    return (d.kind, d.n, d.gamma, d.eta)


def run_replicates(grid: Sequence[SimCell], replicates: int, base_seed: int = 0,
                   threads: int = 1, progress=None, sigma2_eff: Optional[dict] = None) -> MetricsTable:
    """Run every cell on ``replicates`` datasets and summarise.

    Cells sharing a design reuse the same simulated datasets (replicate
    ``i`` uses seed ``base_seed + i``), so comparisons between estimators
    are paired. Failed replicates are recorded and excluded from metrics.
    """
    if replicates <= 0:
        return MetricsTable()
    groups: dict = {}
    for cell in grid:
        groups.setdefault(_dgp_key(cell.dgp), (cell.dgp, []))[1].append(cell)
    tasks = [(dgp, cells, i, base_seed + i) for dgp, cells in groups.values() for i in range(replicates)]
    records = []
    if threads > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            for i, recs in enumerate(pool.map(_run_group, tasks, chunksize=4)):
                records.extend(recs)
                if progress:
                    progress(i + 1, len(tasks))
    else:
        for i, task in enumerate(tasks):
            records.extend(_run_group(task))
            if progress:
                progress(i + 1, len(tasks))
    records.sort(key=lambda r: (r["kind"], r["scenario"], r["n"], r["estimator"], r["replicate"]))

    table = MetricsTable(replicates=records)
    for dgp, cells in groups.values():
        truth = truth_for(dgp)
        bound = (sigma2_eff or {}).get(dgp.kind)
        if bound is None and replicates > 0:
            bound = efficiency_bound(dgp.kind)
        for cell in cells:
            recs = [r for r in records if _dgp_key_rec(r) == (dgp.kind, dgp.scenario, dgp.n)
                    and r["estimator"] == cell.name()]
            ok = [r for r in recs if not r["error"]]
            row = {"kind": dgp.kind, "scenario": dgp.scenario, "n": dgp.n,
                   "estimator": cell.name(), "truth": truth, "failures": len(recs) - len(ok)}
            row.update(metrics([r["psi"] for r in ok], truth, dgp.n, bound,
                               ci=[(r["ci_lo"], r["ci_hi"]) for r in ok] or None))
            row["mean_runtime"] = float(np.mean([r["runtime"] for r in recs])) if recs else math.nan
            table.rows.append(row)
    return table


def _dgp_key_rec(r):
    return (r["kind"], r["scenario"], r["n"])
