import json

import numpy as np
import pytest

from forced_rom.bundle import load_surrogate
from forced_rom.cli import main
from forced_rom.data import burgers_step, load_dataset

STACK = {"state_groups": [[["x"], 4]], "forcing_groups": [[["u"], 2]]}
TRAIN = {"batch_size": 16, "lr": 0.01, "max_epochs": 3}


def _write(path, doc):
    path.write_text(json.dumps(doc))
    return str(path)


def _same_tree(a, b):
    names = sorted(p.name for p in a.iterdir())
    assert names == sorted(p.name for p in b.iterdir())
    for n in names:
        assert (a / n).read_bytes() == (b / n).read_bytes()


@pytest.fixture
def linear_bundle(tmp_path):
    cfg = _write(tmp_path / "gen.json", {"generator": "linear", "params": {"n_x": 6, "n_u": 2, "n_t": 200}})
    assert main(["generate", "--config", cfg, "--seed", "7", "--out", str(tmp_path / "data")]) == 0
    return tmp_path / "data"


def _run(tmp_path, data, name="r", family="PODLR", **extra):
    doc = {"name": name, "family": family, "dataset": {"path": str(data)}, "stack": STACK, "train": TRAIN}
    doc.update(extra)
    return _write(tmp_path / f"{name}.json", doc)


def test_generate_is_deterministic(tmp_path, linear_bundle):
    cfg = str(tmp_path / "gen.json")
    assert main(["generate", "--config", cfg, "--seed", "7", "--out", str(tmp_path / "again")]) == 0
    _same_tree(linear_bundle, tmp_path / "again")
    assert main(["generate", "--config", cfg, "--seed", "7", "--out", str(linear_bundle)]) == 2
    assert main(["generate", "--config", cfg, "--seed", "7", "--out", str(linear_bundle), "--force"]) == 0


def test_generate_rejects_bad_specs(tmp_path):
    small = _write(tmp_path / "g.json", {"generator": "linear", "params": {"n_x": 6, "n_u": 2, "n_t": 20}})
    assert main(["generate", "--config", small, "--out", str(tmp_path / "d")]) == 2
    typo = _write(tmp_path / "t.json", {"generator": "linear", "params": {"n_x": 6, "n_u": 2, "nt": 200}})
    assert main(["generate", "--config", typo, "--out", str(tmp_path / "d")]) == 2
    assert not (tmp_path / "d").exists()


def test_generated_burgers_bundle_is_resteppable(tmp_path):
    params = {"n_cells": 32, "n_t": 60, "dt": 1e-3, "viscosity": 0.02}
    cfg = _write(tmp_path / "b.json", {"generator": "burgers", "params": params})
    assert main(["generate", "--config", cfg, "--seed", "3", "--out", str(tmp_path / "b")]) == 0
    d, _ = load_dataset(tmp_path / "b")
    x, u = d.block("velocity").values, d.block("inflow").values[0]
    for k in range(x.shape[1] - 1):
        np.testing.assert_allclose(burgers_step(x[:, k], u[k], 1 / 32, 1e-3, 0.02), x[:, k + 1], rtol=0, atol=1e-12)


def test_train_podlr_zero_epochs_and_deterministic(tmp_path, linear_bundle):
    cfg = _run(tmp_path, linear_bundle)
    assert main(["train", "--config", cfg, "--out", str(tmp_path / "a")]) == 0
    assert main(["train", "--config", cfg, "--out", str(tmp_path / "b")]) == 0
    assert json.loads((tmp_path / "a" / "scores.json").read_text())["epochs"] == 0
    _same_tree(tmp_path / "a" / "surrogate", tmp_path / "b" / "surrogate")
    assert (tmp_path / "a" / "scores.json").read_bytes() == (tmp_path / "b" / "scores.json").read_bytes()
    assert main(["train", "--config", cfg, "--out", str(tmp_path / "a")]) == 2
    saved = json.loads((tmp_path / "a" / "run_config.json").read_text())
    assert saved["train"]["early_stop_patience"] == 20 and saved["stack"]["norm_mode"] == "zscore"


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_train_divergence_exits_3(tmp_path):
    gen = _write(tmp_path / "g.json", {"generator": "linear",
                                       "params": {"n_x": 6, "n_u": 2, "n_t": 200, "spectral_radius": 1.05,
                                                  "allow_unstable": True}})
    cfg = _run(tmp_path, "unused", family="PODLRt")
    doc = json.loads(open(cfg).read())
    doc["dataset"] = json.loads(open(gen).read())
    doc["train"] = {"batch_size": 16, "lr": 1e300, "max_epochs": 20}
    assert main(["train", "--config", _write(tmp_path / "div.json", doc), "--out", str(tmp_path / "o")]) == 3


def test_unknown_config_key_exits_2(tmp_path, linear_bundle):
    cfg = _run(tmp_path, linear_bundle, extras={"x": 1})
    assert main(["train", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
    cfg = _run(tmp_path, linear_bundle, name="t", train={"learning_rate": 0.1})
    assert main(["train", "--config", cfg, "--out", str(tmp_path / "o")]) == 2


def _trained(tmp_path, data, family="PODLR"):
    assert main(["train", "--config", _run(tmp_path, data, family=family), "--out", str(tmp_path / "run")]) == 0
    return tmp_path / "run" / "surrogate"


def test_rollout_and_evaluate(tmp_path, linear_bundle):
    bundle = _trained(tmp_path, linear_bundle)
    pred = tmp_path / "pred"
    assert main(["rollout", "--bundle", str(bundle), "--data", str(linear_bundle), "--horizon", "20",
                 "--out", str(pred)]) == 0
    p, _ = load_dataset(pred)
    d, _ = load_dataset(linear_bundle)
    assert p.n_time == 20 and p.t0_index == d.val_end + 1
    timing = json.loads((tmp_path / "pred.timing.json").read_text())
    assert timing["steps_per_second"] > 0 and "environment" in timing
    out = tmp_path / "eval"
    assert main(["evaluate", "--pred", str(pred), "--truth", str(linear_bundle), "--csv", "--out", str(out)]) == 0
    report = json.loads((out / "report.json").read_text())
    assert report["steps"] == 20 and set(report["variables"]) == {"x"}
    assert len((out / "elements.csv").read_text().strip().splitlines()) == 7


def test_rollout_bundle_matches_in_memory(tmp_path, linear_bundle):
    from forced_rom.pipeline import forecast

    bundle = _trained(tmp_path, linear_bundle, family="LKAE")
    assert main(["rollout", "--bundle", str(bundle), "--data", str(linear_bundle), "--out",
                 str(tmp_path / "p")]) == 0
    d, _ = load_dataset(linear_bundle)
    res, _ = forecast(load_surrogate(bundle), d, d.val_end)
    p, _ = load_dataset(tmp_path / "p")
    assert np.array_equal(p.block("x").values, res.predictions["x"])


def test_rollout_dimension_mismatch_exits_2(tmp_path, linear_bundle):
    bundle = _trained(tmp_path, linear_bundle)
    gen = _write(tmp_path / "g8.json", {"generator": "linear", "params": {"n_x": 8, "n_u": 2, "n_t": 200}})
    assert main(["generate", "--config", gen, "--out", str(tmp_path / "d8")]) == 0
    assert main(["rollout", "--bundle", str(bundle), "--data", str(tmp_path / "d8"), "--out",
                 str(tmp_path / "p")]) == 2


def test_evaluate_misaligned_exits_4(tmp_path, linear_bundle):
    bundle = _trained(tmp_path, linear_bundle)
    assert main(["rollout", "--bundle", str(bundle), "--data", str(linear_bundle), "--out",
                 str(tmp_path / "p")]) == 0
    gen = _write(tmp_path / "short.json", {"generator": "linear", "params": {"n_x": 6, "n_u": 2, "n_t": 100}})
    assert main(["generate", "--config", gen, "--seed", "7", "--out", str(tmp_path / "short")]) == 0
    assert main(["evaluate", "--pred", str(tmp_path / "p"), "--truth", str(tmp_path / "short"),
                 "--out", str(tmp_path / "e")]) == 4


def test_compare_identical_configs_and_duplicates(tmp_path, linear_bundle):
    run = {"family": "PODLRt", "dataset": {"path": str(linear_bundle)}, "stack": STACK, "train": TRAIN}
    cfg = _write(tmp_path / "cmp.json", {"runs": [dict(run, name="a"), dict(run, name="b")]})
    assert main(["compare", "--config", cfg, "--out", str(tmp_path / "c")]) == 0
    rows = json.loads((tmp_path / "c" / "comparison.json").read_text())["rows"]
    strip = lambda r: {k: v for k, v in r.items() if k != "label" and "seconds" not in k and k != "steps_per_second"}  # noqa: E731
    assert strip(rows[0]) == strip(rows[1]) and rows[0]["status"] == "ok"
    assert "rel_rmse" in (tmp_path / "c" / "comparison.txt").read_text()
    dup = _write(tmp_path / "dup.json", {"runs": [dict(run, name="a", family="PODLR"),
                                                  dict(run, name="a", family="PODLR")]})
    assert main(["compare", "--config", dup, "--out", str(tmp_path / "d")]) == 2
    one = _write(tmp_path / "one.json", {"runs": [dict(run, name="a")]})
    assert main(["compare", "--config", one, "--out", str(tmp_path / "d")]) == 2


def test_compare_rows_match_individual_runs(tmp_path, linear_bundle):
    from forced_rom.config import parse_run
    from forced_rom.pipeline import run_experiment

    runs = [{"name": f, "family": f, "dataset": {"path": str(linear_bundle)}, "stack": STACK, "train": TRAIN}
            for f in ("PODLR", "PODLRt", "LKAE")]
    assert main(["compare", "--config", _write(tmp_path / "c.json", {"runs": runs}), "--out", str(tmp_path / "c")]) == 0
    rows = json.loads((tmp_path / "c" / "comparison.json").read_text())["rows"]
    for doc, row in zip(runs, rows):
        _, ref = run_experiment(parse_run(doc))
        assert row["rel_rmse"] == ref["rel_rmse"] and row["epochs"] == ref["epochs"]


def test_grid_scores_on_validation(tmp_path, linear_bundle):
    base = {"name": "g", "family": "PODLRt", "dataset": {"path": str(linear_bundle)}, "stack": STACK, "train": TRAIN}
    cfg = _write(tmp_path / "grid.json", {"base": base, "axes": {"train.lr": [0.01, 0.001]}})
    assert main(["grid", "--config", cfg, "--out", str(tmp_path / "g")]) == 0
    doc = json.loads((tmp_path / "g" / "comparison.json").read_text())
    assert doc["scored_on"] == "validation" and [r["values"]["train.lr"] for r in doc["rows"]] == [0.01, 0.001]
    assert doc["best"] in ("g-000", "g-001")
    bad = _write(tmp_path / "bad.json", {"base": base, "axes": {"train.lr": []}})
    assert main(["grid", "--config", bad, "--out", str(tmp_path / "h")]) == 2
