import csv
import json

import numpy as np
import pytest
from scipy import stats

from glfpinn.cli import EXIT_CONFIG, EXIT_DIVERGED, EXIT_OK, DemoConfig, main, parse_manifest, sampler_demo
from glfpinn.config import ConfigError, RunConfig, load_config

SMALL = {
    "network": {"depth": 2, "width": 8},
    "optimizer": {"adam_steps": 3, "lbfgs_steps": 3},
    "n_interior": 50,
    "n_condition": 10,
    "outer_rounds": 1,
}


def write_json(path, data):
    path.write_text(json.dumps(data))
    return str(path)


def read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_malformed_json_reports_position(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"problem": "burgers",\n  "seeds": [0,]\n}')
    assert main(["run", "--config", str(bad)]) == EXIT_CONFIG
    err = capsys.readouterr().err
    assert "line 2" in err and "column" in err


def test_unknown_keys_are_rejected(tmp_path, capsys):
    assert main(["run", "--config", write_json(tmp_path / "c.json", {"problem": "burgers", "lr": 1})]) == EXIT_CONFIG
    assert "unknown key(s) lr" in capsys.readouterr().err
    cfg = write_json(tmp_path / "d.json", {"problem": "burgers", "sampler": {"name": "glf", "alpha2": 1}})
    assert main(["run", "--config", cfg]) == EXIT_CONFIG
    assert main(["run", "--config", str(tmp_path / "missing.json")]) == EXIT_CONFIG
    assert main(["reference", "--problem", "heat"]) == EXIT_CONFIG


def test_glf_m_resolves_candidate_count(tmp_path):
    cfg = load_config(write_json(tmp_path / "m.json", {"problem": "burgers", "sampler": {"name": "glf-m"}}))
    assert cfg.resolved().n_interior == 2000 and cfg.resolved().sampler.m_per_anchor == 50


def test_run_writes_artifacts(tmp_path):
    cfg = write_json(tmp_path / "c.json", {"problem": "laplace-polar", **SMALL, "seeds": [0, 1]})
    out = tmp_path / "out"
    assert main(["run", "--config", cfg, "--out", str(out), "--seed", "1", "--threads", "1"]) == EXIT_OK
    record = json.loads((out / "record.json").read_text())
    assert [s["seed"] for s in record["seeds"]] == [1]
    assert RunConfig.from_dict(record["config"]).seeds == (1,)
    for name in ("loss.csv", "error.csv", "points_round_0.csv", "points_round_1.csv"):
        assert (out / "seed_1" / name).exists()
    errors = read_csv(out / "seed_1" / "error.csv")
    assert [int(r["round"]) for r in errors] == [0, 1]


def test_run_divergence_exit_status(tmp_path):
    data = {"problem": "laplace-polar", **SMALL, "seeds": [0]}
    data["optimizer"] = {"adam_steps": 3, "lbfgs_steps": 0, "lr": 1e300}
    with np.errstate(all="ignore"):
        assert main(["run", "--config", write_json(tmp_path / "c.json", data), "--out", str(tmp_path / "o")]) == EXIT_DIVERGED


def test_manifest_validation():
    good = {"problems": ["laplace-polar"], "samplers": ["glf"], "seeds": [0, 1], "base": SMALL}
    assert len(parse_manifest(good).configs) == 2
    for bad in (
        {**good, "extra": 1},
        {**good, "seeds": [0, 0]},
        {**good, "base": {**SMALL, "problem": "burgers"}},
        {**good, "parallelism": 0},
        {**good, "samplers": []},
        {**good, "version": 2},
    ):
        with pytest.raises(ConfigError):
            parse_manifest(bad)


def test_sweep_summary(tmp_path):
    manifest = {
        "problems": ["laplace-polar"],
        "samplers": ["glf", "rad"],
        "seeds": [0],
        "base": SMALL,
        "output_root": str(tmp_path / "sweep"),
    }
    assert main(["sweep", "--config", write_json(tmp_path / "m.json", manifest), "--threads", "1"]) == EXIT_OK
    rows = read_csv(tmp_path / "sweep" / "summary.csv")
    assert [(r["problem"], r["sampler"]) for r in rows] == [("laplace-polar", "glf"), ("laplace-polar", "rad")]
    assert all(float(r["l2_std"]) == 0 and int(r["n_seeds"]) == 1 for r in rows)
    assert int(rows[0]["extra_residual_evals"]) == 0
    assert int(rows[1]["extra_residual_evals"]) == 100_000
    assert len(read_csv(tmp_path / "sweep" / "runs.csv")) == 2


def test_sampler_demo_row_counts(tmp_path):
    assert main(["sampler-demo", "--out", str(tmp_path), "--seed", "3"]) == EXIT_OK
    n, m = 500, 3
    counts = {}
    for stage in ("stage1_anchors", "stage2_candidates", "stage3_inherited", "stage4_resampled"):
        counts[stage] = len(read_csv(tmp_path / f"round_1_{stage}.csv"))
    assert counts == {"stage1_anchors": n, "stage2_candidates": n * m, "stage3_inherited": n * m, "stage4_resampled": n}
    cand = np.loadtxt(tmp_path / "round_1_stage2_candidates.csv", delimiter=",", skiprows=1)
    assert np.all((cand[:, 0] >= 0) & (cand[:, 0] <= 1))
    assert np.array_equal(cand[:, 1], np.repeat(np.arange(n), m))


def test_sampler_demo_spike_concentrates(tmp_path):
    sampler_demo(DemoConfig(n_anchors=2000, rounds=3, seed=0), tmp_path)
    a = np.loadtxt(tmp_path / "round_1_stage1_anchors.csv", delimiter=",", skiprows=1)[:, 0]
    b = np.loadtxt(tmp_path / "round_3_stage4_resampled.csv", delimiter=",", skiprows=1)
    near = lambda x: np.mean(np.abs(x - 0.5) < 0.05)
    assert near(b) > 2 * near(a)


def test_sampler_demo_constant_field_is_unbiased(tmp_path):
    # with a flat residual every candidate is equally likely, so given the pool
    # the resampled points are iid uniform draws from the candidates
    sampler_demo(DemoConfig(field="constant", n_anchors=2000, seed=1), tmp_path)
    cand = np.loadtxt(tmp_path / "round_1_stage2_candidates.csv", delimiter=",", skiprows=1)[:, 0]
    new = np.loadtxt(tmp_path / "round_1_stage4_resampled.csv", delimiter=",", skiprows=1)
    edges = np.linspace(0, 1, 21)
    expected = np.histogram(cand, edges)[0] / len(cand) * len(new)
    observed = np.histogram(new, edges)[0]
    assert stats.chisquare(observed, expected).pvalue > 0.01


def test_sampler_demo_rejects_unknown_field(tmp_path):
    cfg = write_json(tmp_path / "d.json", {"field": "wave"})
    assert main(["sampler-demo", "--config", cfg, "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    cfg = write_json(tmp_path / "e.json", {"sampler": {"alpha": -1}})
    assert main(["sampler-demo", "--config", cfg, "--out", str(tmp_path / "o")]) == EXIT_CONFIG


def test_reference_command(tmp_path):
    assert main(["reference", "--problem", "laplace-polar", "--out", str(tmp_path)]) == EXIT_OK
    files = sorted(p.name for p in tmp_path.iterdir())
    assert len(files) == 2 and any(f.endswith(".json") for f in files)


def test_shipped_demo_configs_parse():
    from pathlib import Path

    from glfpinn.cli import load_manifest, parse_demo_config
    from glfpinn.config import parse_json

    root = Path(__file__).resolve().parent.parent / "demos" / "configs"
    assert load_config(root / "laplace_glf.json").resolved().network.width == 20
    assert len(load_manifest(root / "burgers_sweep.json").configs) == 6
    assert parse_demo_config(parse_json((root / "spike_demo.json").read_text())).rounds == 3
