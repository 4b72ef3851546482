"""Command-line front end: ``natdirect {estimate,simulate,sensitivity,oracle-check}``.

Settings come from an optional TOML file (``--config``) and are overridden
by flags. Exit status: 0 success, 2 configuration error, 3 data validation
error, 4 estimation failure.
"""

from __future__ import annotations

import argparse
import itertools
import json
import logging
import math
import os
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from ._toml import load_toml
from .data import DataValidationError, ROLES, load_csv
from .estimators import EstimationError, EstimatorConfig, estimate
from .nuisance import LearnerSpec

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_ESTIMATION = 0, 2, 3, 4
SUBCOMMANDS = ("estimate", "simulate", "sensitivity", "oracle-check")
THREADS_ENV = "NDE_ENGINE_THREADS"

log = logging.getLogger("natdirect")


class ConfigError(ValueError):
    pass


@dataclass
class SimulationGrid:
    kind: str = "confounding_study"
    n: list = field(default_factory=lambda: [400])
    gamma: list = field(default_factory=lambda: [0.0])
    eta: list = field(default_factory=lambda: [1.0])
    replicates: int = 10
    estimators: list = field(default_factory=lambda: ["onestep", "tmle"])
    two_phase_modes: list = field(default_factory=lambda: ["estimated", "obs_weights"])


@dataclass
class RunConfig:
    subcommand: str
    input: Optional[str] = None
    output: Optional[str] = None
    column_roles: dict = field(default_factory=dict)
    estimator: EstimatorConfig = field(default_factory=EstimatorConfig)
    rr: bool = False
    simulation: SimulationGrid = field(default_factory=SimulationGrid)
    sensitivity: dict = field(default_factory=dict)
    oracle: dict = field(default_factory=dict)
    seed: Optional[int] = None
    threads: int = 1

    def validate(self):
        if self.subcommand not in SUBCOMMANDS:
            raise ConfigError(f"unknown subcommand {self.subcommand!r}")
        if self.threads < 1:
            raise ConfigError("threads must be at least 1")
        if self.subcommand == "estimate":
            if not self.input:
                raise ConfigError("estimate needs an input file")
            if not Path(self.input).is_file():
                raise ConfigError(f"input file not found: {self.input}")
            if not self.column_roles:
                raise ConfigError("estimate needs column roles")
            bad = {c: r for c, r in self.column_roles.items() if r not in ROLES}
            if bad:
                raise ConfigError(f"unknown column roles {bad}")
        if self.subcommand == "simulate":
            if self.seed is None:
                raise ConfigError("simulate needs a seed")
            from .sim import KINDS

            if self.simulation.kind not in KINDS:
                raise ConfigError(f"unknown simulation kind {self.simulation.kind!r}")
            if self.simulation.replicates < 0:
                raise ConfigError("replicates must be nonnegative")
        if self.subcommand == "sensitivity":
            s = self.sensitivity
            if "grid" in s and len(s["grid"]) == 0:
                raise ConfigError("empty sensitivity grid")
            if "grid" not in s and "range" not in s:
                raise ConfigError("sensitivity needs a grid or a range")
            if self.input is None and not {"estimate", "log_se"} <= set(s):
                raise ConfigError("sensitivity needs an estimate and log_se, or an input result file")
        if self.subcommand == "oracle-check":
            law = self.oracle.get("law_file")
            if law and not Path(law).is_file():
                raise ConfigError(f"law file not found: {law}")
        return self

    def to_dict(self) -> dict:
        return {
            "subcommand": self.subcommand, "input": self.input, "output": self.output,
            "column_roles": dict(self.column_roles), "estimator": self.estimator.to_dict(),
            "rr": self.rr, "simulation": dict(self.simulation.__dict__),
            "sensitivity": dict(self.sensitivity), "oracle": dict(self.oracle),
            "seed": self.seed, "threads": self.threads,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        d = dict(d)
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown configuration keys {sorted(unknown)}")
        try:
            est = dict(d.pop("estimator", {}) or {})
            learners = {k: _learner(v) for k, v in (est.pop("learners", {}) or {}).items()}
            d["estimator"] = EstimatorConfig(learners=learners, **est)
            sim = dict(d.pop("simulation", {}) or {})
            for key in ("n", "gamma", "eta", "estimators", "two_phase_modes"):
                if key in sim and not isinstance(sim[key], list):
                    sim[key] = [sim[key]]
            d["simulation"] = SimulationGrid(**sim)
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None
        except ValueError as exc:
            raise ConfigError(str(exc)) from None


def _learner(v) -> LearnerSpec:
    v = dict(v)
    if "candidates" in v:
        v["candidates"] = tuple(_learner(c) for c in v["candidates"])
    if "drop" in v:
        v["drop"] = tuple(v["drop"])
    return LearnerSpec(**v)


# --------------------------------------------------------------------------
# argument handling


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="natdirect", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="TOML configuration file")
        p.add_argument("--input", help="input CSV (estimate) or result JSON (sensitivity)")
        p.add_argument("--output", help="output directory")
        p.add_argument("--seed", type=int)
        p.add_argument("--estimator", choices=("onestep", "tmle"))
        p.add_argument("--folds", type=int)
        p.add_argument("--rr", action="store_true", default=None, help="risk-ratio estimand")
        p.add_argument("--two-phase-mode", choices=("estimated", "obs-weights"))
        p.add_argument("--threads", type=int)
        p.add_argument("--ci-level", type=float)
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def resolve_config(args) -> RunConfig:
    raw = {}
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise ConfigError(f"config file not found: {args.config}")
        try:
            raw = load_toml(path)
        except Exception as exc:  # tomli raises its own decode error type
            raise ConfigError(f"cannot parse {args.config}: {exc}") from None
        base = path.parent
        for key in ("input", "output"):
            if raw.get(key):
                raw[key] = str((base / raw[key]).resolve()) if not Path(raw[key]).is_absolute() else raw[key]
        law = (raw.get("oracle") or {}).get("law_file")
        if law and not Path(law).is_absolute():
            raw["oracle"]["law_file"] = str((base / law).resolve())
    raw["subcommand"] = args.subcommand
    if "columns" in raw:
        raw["column_roles"] = raw.pop("columns")
    cfg = RunConfig.from_dict(raw)
    est = cfg.estimator
    overrides = {}
    if args.estimator:
        overrides["estimator"] = args.estimator
    if args.folds is not None:
        overrides["folds"] = args.folds
    if args.two_phase_mode:
        overrides["two_phase_mode"] = args.two_phase_mode.replace("-", "_")
    if args.ci_level is not None:
        overrides["level"] = args.ci_level
    if args.seed is not None:
        cfg.seed = args.seed
    if cfg.seed is not None:
        overrides["seed"] = cfg.seed
    try:
        cfg.estimator = replace(est, **overrides)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if args.input:
        cfg.input = args.input
    if args.output:
        cfg.output = args.output
    if args.rr:
        cfg.rr = True
    if args.threads is not None:
        cfg.threads = args.threads
    elif "threads" not in raw and os.environ.get(THREADS_ENV):
        try:
            cfg.threads = int(os.environ[THREADS_ENV])
        except ValueError:
            raise ConfigError(f"{THREADS_ENV} must be an integer") from None
    return cfg.validate()


def _json_default(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"not serializable: {type(x).__name__}")


def _write_json(doc, path: Optional[str], name: str):
    text = json.dumps(doc, indent=2, sort_keys=True, default=_json_default)
    if path:
        Path(path).mkdir(parents=True, exist_ok=True)
        (Path(path) / name).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)


# --------------------------------------------------------------------------
# subcommands


def cmd_estimate(cfg: RunConfig) -> int:
    try:
        data = load_csv(cfg.input, cfg.column_roles)
    except DataValidationError as exc:
        log.error("data error: %s", exc)
        return EXIT_DATA
    except ValueError as exc:
        log.error("configuration error: %s", exc)
        return EXIT_CONFIG
    try:
        res = estimate(data, cfg.estimator, rr=cfg.rr)
    except DataValidationError as exc:
        log.error("data error: %s", exc)
        return EXIT_DATA
    except EstimationError as exc:
        log.error("estimation failed: %s", exc)
        _write_json({"error": str(exc), "diagnostics": exc.diagnostics, "version": __version__,
                     "config": cfg.to_dict()}, cfg.output, "result.json")
        return EXIT_ESTIMATION
    diag = res.diagnostics
    doc = {
        **res.summary(),
        "estimator": cfg.estimator.estimator,
        "folds": diag["folds"],
        "n": data.n,
        "two_phase": diag["two_phase"],
        "targeting": {k: diag[k] for k in ("targeting_iterations", "final_scores", "converged") if k in diag},
        "clipping_activations": diag["clipping_activations"],
        "fold_estimates": diag["fold_estimates"],
        "version": __version__,
        "config": cfg.to_dict(),
    }
    _write_json(doc, cfg.output, "result.json")
    return EXIT_OK


def _sim_grid(cfg: RunConfig):
    from .sim import KINDS, DgpSpec, SimCell

    g = cfg.simulation
    cells = []
    if g.kind == KINDS[0]:
        for n, gamma, est in itertools.product(g.n, g.gamma, g.estimators):
            cells.append(SimCell(DgpSpec(g.kind, int(n), gamma=float(gamma)),
                                 replace(cfg.estimator, estimator=est)))
    else:
        for n, eta, est, mode in itertools.product(g.n, g.eta, g.estimators, g.two_phase_modes):
            cells.append(SimCell(DgpSpec(g.kind, int(n), eta=float(eta)),
                                 replace(cfg.estimator, estimator=est, two_phase_mode=mode), rr=True))
    return cells


def cmd_simulate(cfg: RunConfig) -> int:
    from . import sim

    try:
        grid = _sim_grid(cfg)
    except ValueError as exc:
        log.error("configuration error: %s", exc)
        return EXIT_CONFIG

    def progress(done, total):
        if done == total or done % max(total // 20, 1) == 0:
            log.info("replicate tasks %d/%d", done, total)

    table = sim.run_replicates(grid, cfg.simulation.replicates, base_seed=cfg.seed,
                               threads=cfg.threads, progress=progress)
    out = cfg.output or "."
    sim_paths = table.write_csv(out)
    meta = {"metric_definitions": table.notes, "version": __version__, "config": cfg.to_dict(),
            "timing": [{k: r[k] for k in ("scenario", "n", "estimator", "mean_runtime")} for r in table.rows]}
    if cfg.simulation.kind == sim.KINDS[0]:
        meta["truth"] = sim.CONFOUNDING_NDE
        meta["rr_z"] = {
            "convention": "P(Z=1 | V in top quartile band) / P(Z=1 | V in bottom quartile band), "
                          "W and A integrated over their laws",
            "draws": 10**6,
            "values": {f"{g:g}": sim.rr_z(float(g), 10**6, seed=cfg.seed) for g in cfg.simulation.gamma},
        }
    elif cfg.simulation.replicates > 0:
        meta["truth"] = sim.twophase_truth()
    _write_json(meta, out, "metadata.json")
    for p in sim_paths:
        log.info("wrote %s", p)
    return EXIT_OK


def cmd_sensitivity(cfg: RunConfig) -> int:
    from .sensitivity import default_grid, sensitivity_curve

    s = cfg.sensitivity
    if cfg.input:
        try:
            doc = json.loads(Path(cfg.input).read_text(encoding="utf-8"))
            psi, log_se = float(doc["psi"]), float(doc["log_se"])
        except (OSError, ValueError, KeyError, TypeError) as exc:
            log.error("cannot read a risk-ratio result from %s: %s", cfg.input, exc)
            return EXIT_DATA
    else:
        psi, log_se = float(s["estimate"]), float(s["log_se"])
    try:
        if "grid" in s:
            grid = np.asarray(s["grid"], dtype=float)
        else:
            lo, hi = s["range"]
            grid = default_grid(float(lo), float(hi), int(s.get("points", 41)))
        res = sensitivity_curve(psi, grid, log_se=log_se, reference=float(s.get("reference", math.nan)))
    except ValueError as exc:
        log.error("configuration error: %s", exc)
        return EXIT_CONFIG
    out = Path(cfg.output or ".")
    out.mkdir(parents=True, exist_ok=True)
    res.write_csv(out / "sensitivity.csv")
    log.info("wrote %s", out / "sensitivity.csv")
    return EXIT_OK


def cmd_oracle_check(cfg: RunConfig) -> int:
    from .oracle import identified_functional, load_law, oracle_suite, true_nde

    o = cfg.oracle
    res = oracle_suite(int(o.get("laws", 100)), int(o.get("violations", 20)), seed=cfg.seed or 0)
    n_viol = len(res["violation_gaps"])
    ok_conf = res["conforming_max_gap"] < 1e-10
    ok_viol = res["violations_detected"] >= math.ceil(0.95 * n_viol)
    print(f"{'PASS' if ok_conf else 'FAIL'} conforming laws: max gap {res['conforming_max_gap']:.3e}")
    print(f"{'PASS' if ok_viol else 'FAIL'} violation laws: {res['violations_detected']}/{n_viol} "
          f"gaps above {res['threshold']:g}")
    status = EXIT_OK if ok_conf and ok_viol else EXIT_ESTIMATION
    if o.get("law_file"):
        try:
            law = load_law(o["law_file"])
        except ValueError as exc:
            log.error("bad law file: %s", exc)
            return EXIT_DATA
        gap = abs(identified_functional(law) - true_nde(law))
        label = "expected-fail (direct V->Y path)" if law.v_to_y else "conforming"
        print(f"law file {o['law_file']}: gap {gap:.3e} [{label}]")
    if cfg.output:
        _write_json({**res, "version": __version__}, cfg.output, "oracle.json")
    return status


COMMANDS = {"estimate": cmd_estimate, "simulate": cmd_simulate,
            "sensitivity": cmd_sensitivity, "oracle-check": cmd_oracle_check}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = resolve_config(args)
    except ConfigError as exc:
        log.error("configuration error: %s", exc)
        return EXIT_CONFIG
    return COMMANDS[cfg.subcommand](cfg)


if __name__ == "__main__":
    sys.exit(main())
