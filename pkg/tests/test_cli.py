import json

import pytest

from natdirect import __version__
from natdirect.cli import (
    EXIT_CONFIG,
    EXIT_DATA,
    EXIT_OK,
    RunConfig,
    build_parser,
    main,
    resolve_config,
)
from natdirect.data import write_csv
from natdirect.sim import DgpSpec, simulate

ROLES = """
[columns]
w1 = "covariate"
w2 = "covariate"
a = "exposure"
z1 = "mediator"
y = "outcome"
r = "phase_two"
sampling_prob = "sampling_prob"
"""


@pytest.fixture(scope="module")
def files(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    write_csv(simulate(DgpSpec(n=500, gamma=1.0, seed=4)), root / "conf.csv")
    tp = simulate(DgpSpec("twophase_study", n=1500, eta=0.5, seed=4))
    write_csv(tp, root / "tp.csv")
    (root / "conf.toml").write_text('input = "conf.csv"\n' + ROLES)
    (root / "tp.toml").write_text('input = "tp.csv"\n' + ROLES.replace('w2 = "covariate"',
                                                                      'w2 = "covariate"\nw3 = "covariate"'))
    return root


def test_estimate_writes_result(files, tmp_path):
    code = main(["estimate", "--config", str(files / "conf.toml"), "--output", str(tmp_path),
                 "--estimator", "tmle", "--folds", "4", "--seed", "3"])
    assert code == EXIT_OK
    doc = json.loads((tmp_path / "result.json").read_text())
    assert doc["estimand"] == "nde" and doc["folds"] == 4 and doc["version"] == __version__
    assert doc["ci_lo"] <= doc["psi"] <= doc["ci_hi"] and abs(doc["psi"] - 3.0) < 1.0
    assert len(doc["targeting"]["targeting_iterations"]) == 4
    assert doc["config"]["estimator"]["estimator"] == "tmle"


def test_config_echo_roundtrip(files, tmp_path):
    main(["estimate", "--config", str(files / "tp.toml"), "--output", str(tmp_path), "--rr",
          "--two-phase-mode", "obs-weights", "--ci-level", "0.9", "--seed", "8"])
    doc = json.loads((tmp_path / "result.json").read_text())
    assert doc["estimand"] == "rr_nde" and doc["level"] == 0.9 and doc["log_se"] > 0
    cfg = RunConfig.from_dict(doc["config"])
    assert cfg.to_dict() == doc["config"]
    assert cfg.estimator.two_phase_mode == "obs_weights" and cfg.rr and cfg.seed == 8
    assert RunConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg


def test_estimate_exit_codes(files, tmp_path):
    assert main(["estimate", "--config", str(files / "conf.toml"), "--rr"]) == EXIT_DATA
    bad = tmp_path / "bad.toml"
    bad.write_text(f'input = "{files / "conf.csv"}"\n' + ROLES.replace('"mediator"', '"mediatr"'))
    assert main(["estimate", "--config", str(bad)]) == EXIT_CONFIG
    assert main(["estimate", "--config", str(tmp_path / "missing.toml")]) == EXIT_CONFIG
    assert main(["estimate", "--config", str(files / "conf.toml"), "--folds", "40"]) == EXIT_CONFIG
    broken = tmp_path / "broken.toml"
    broken.write_text("input = [unclosed\n")
    assert main(["estimate", "--config", str(broken)]) == EXIT_CONFIG
    csv = tmp_path / "x.csv"
    csv.write_text("w1,w2,a,z1,y,r,sampling_prob\n0,0,0,,1.0,1,1\n0,0,1,1,2.0,1,1\n")
    cfg = tmp_path / "x.toml"
    cfg.write_text(f'input = "{csv}"\n' + ROLES)
    assert main(["estimate", "--config", str(cfg)]) == EXIT_DATA


def test_simulate_byte_identical(tmp_path):
    cfg = tmp_path / "sim.toml"
    cfg.write_text('[simulation]\nkind = "confounding_study"\nn = [150]\ngamma = [0, 2]\nreplicates = 2\n')
    outs = []
    for name, threads in (("a", "1"), ("b", "2")):
        assert main(["simulate", "--config", str(cfg), "--seed", "5", "--threads", threads,
                     "--output", str(tmp_path / name)]) == EXIT_OK
        outs.append(tmp_path / name)
    for f in ("summary.csv", "replicates.csv"):
        assert (outs[0] / f).read_bytes() == (outs[1] / f).read_bytes()
    assert len((outs[0] / "summary.csv").read_text().splitlines()) == 1 + 4
    meta = json.loads((outs[0] / "metadata.json").read_text())
    assert "abs_scaled_bias" in meta["metric_definitions"] and set(meta["rr_z"]["values"]) == {"0", "2"}


def test_simulate_config_errors(tmp_path):
    cfg = tmp_path / "sim.toml"
    cfg.write_text('[simulation]\nkind = "confounding_study"\nreplicates = 1\n')
    assert main(["simulate", "--config", str(cfg)]) == EXIT_CONFIG
    cfg.write_text('[simulation]\nkind = "case_control"\n')
    assert main(["simulate", "--config", str(cfg), "--seed", "1"]) == EXIT_CONFIG
    cfg.write_text('[simulation]\nkind = "confounding_study"\nwidth = 3\n')
    assert main(["simulate", "--config", str(cfg), "--seed", "1"]) == EXIT_CONFIG


def test_sensitivity(tmp_path, files):
    cfg = tmp_path / "s.toml"
    cfg.write_text("[sensitivity]\nestimate = 0.570\nlog_se = 0.7487\ngrid = [0.5, 0.613, 0.7]\n")
    assert main(["sensitivity", "--config", str(cfg), "--output", str(tmp_path)]) == EXIT_OK
    rows = (tmp_path / "sensitivity.csv").read_text().splitlines()
    assert rows[0] == "psi_rr,t,p" and len(rows) == 4
    t = float(rows[2].split(",")[1])
    assert t == pytest.approx(-0.097, abs=0.001)
    cfg.write_text("[sensitivity]\nestimate = 0.570\nlog_se = 0.7487\ngrid = []\n")
    assert main(["sensitivity", "--config", str(cfg)]) == EXIT_CONFIG
    cfg.write_text("[sensitivity]\nrange = [0.4, 0.9]\n")
    assert main(["sensitivity", "--config", str(cfg)]) == EXIT_CONFIG
    # a result document from `estimate --rr` can feed the curve directly
    est = tmp_path / "est"
    main(["estimate", "--config", str(files / "tp.toml"), "--rr", "--output", str(est)])
    assert main(["sensitivity", "--config", str(cfg), "--input", str(est / "result.json"),
                 "--output", str(tmp_path / "s2")]) == EXIT_OK
    assert len((tmp_path / "s2" / "sensitivity.csv").read_text().splitlines()) == 42


def test_oracle_check(tmp_path, capsys):
    cfg = tmp_path / "o.toml"
    cfg.write_text("[oracle]\nlaws = 20\nviolations = 5\n")
    assert main(["oracle-check", "--config", str(cfg), "--output", str(tmp_path)]) == EXIT_OK
    out = capsys.readouterr().out
    assert out.count("PASS") == 2 and "max gap" in out
    assert json.loads((tmp_path / "oracle.json").read_text())["violations_detected"] == 5


def test_threads_env_default(monkeypatch, files):
    monkeypatch.setenv("NDE_ENGINE_THREADS", "3")
    args = build_parser().parse_args(["estimate", "--config", str(files / "conf.toml")])
    assert resolve_config(args).threads == 3
    args = build_parser().parse_args(["estimate", "--config", str(files / "conf.toml"), "--threads", "2"])
    assert resolve_config(args).threads == 2


def test_parser_rejects_unknown():
    with pytest.raises(SystemExit):
        build_parser().parse_args(["estimate", "--estimator", "ipw"])
    with pytest.raises(SystemExit):
        build_parser().parse_args(["bootstrap"])
