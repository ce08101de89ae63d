"""End-user command behavior, file outputs, and exit codes."""

import csv
import json

import pytest

from comprisk.cli import main
from comprisk.labeler import COMPLICATION_ORDER

TASKS = ["elevated_troponin", "elevated_ddimer"]


def read_csv(path):
    with open(path, newline="") as handle:
        return list(csv.reader(handle))


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    data = root / "cohort.jsonl"
    assert main(["synth", "--out", str(data), "--n", "260", "--seed", "6"]) == 0

    cfg = root / "config.json"
    cfg.write_text(json.dumps({
        "families": ["lr"],
        "complications": TASKS,
        "n_search": 2,
        "n_bootstrap": 50,
    }))
    models = root / "models"
    rc = main([
        "train", "--input", str(data), "--config", str(cfg),
        "--out", str(models), "--seed", "5",
    ])
    assert rc == 0
    return root, data, cfg, models


def test_synth_writes_the_requested_cohort(tmp_path, capsys):
    out = tmp_path / "c.jsonl"
    assert main(["synth", "--out", str(out), "--n", "12", "--seed", "3"]) == 0
    lines = out.read_text().strip().split("\n")
    assert len(lines) == 12
    assert "wrote 12 encounters" in capsys.readouterr().out
    ids = [json.loads(l)["encounter_id"] for l in lines]
    assert len(set(ids)) == 12


def test_synth_rejects_bad_parameters(tmp_path, capsys):
    out = str(tmp_path / "c.jsonl")
    assert main(["synth", "--out", out, "--prevalence", "1.5"]) == 1
    assert main(["synth", "--out", out, "--planted", "sepsis"]) == 1
    assert "usage error" in capsys.readouterr().err


def test_label_writes_label_and_screen_tables(tmp_path, workspace):
    _, data, _, _ = workspace
    out = tmp_path / "labels"
    assert main(["label", "--input", str(data), "--out", str(out)]) == 0

    rows = read_csv(out / "labels.csv")
    assert rows[0][0] == "encounter_id"
    assert len(rows[0]) == 1 + 3 * 7
    assert rows[0][1] == "elevated_troponin_occurred"
    assert len(rows) == 1 + 260
    for row in rows[1:]:
        for occurred, within in zip(row[1::3], row[3::3]):
            assert occurred in ("0", "1") and within in ("0", "1")

    screened = read_csv(out / "screen_exclusions.csv")
    assert screened[0] == ["encounter_id", "reason"]
    assert len(screened) > 1  # the generator plants minors
    assert not (out / "parse_errors.txt").exists()


def test_malformed_lines_go_to_the_side_channel(tmp_path, workspace):
    _, data, _, _ = workspace
    noisy = tmp_path / "noisy.jsonl"
    noisy.write_text(
        data.read_text()
        + "this is not json\n"
        + json.dumps({"encounter_id": "bad1", "admission_time": "2020-04-02T08:00",
                      "age": 50, "sex": "male",
                      "observations": [{"code": "mystery", "value": 1.0,
                                        "time": "2020-04-02T09:00"}]})
        + "\n"
    )
    out = tmp_path / "labels"
    assert main(["label", "--input", str(noisy), "--out", str(out)]) == 0
    side = (out / "parse_errors.txt").read_text().strip().split("\n")
    assert len(side) == 2
    assert len(read_csv(out / "labels.csv")) == 1 + 260


def test_train_outputs(workspace):
    _, _, cfg, models = workspace
    for comp in TASKS:
        payload = json.loads((models / "ensembles" / f"ensemble_{comp}.json").read_text())
        assert payload["complication"] == comp
        assert payload["family"] == "lr"
        assert len(payload["members"]) == 6

    summary = read_csv(models / "validation_summary.csv")
    assert summary[0] == ["complication", "family", "mean_val_auroc", "mean_val_auprc", "selected"]
    assert [r[0] for r in summary[1:]] == TASKS
    assert all(r[1] == "lr" and r[4] == "1" for r in summary[1:])

    exclusions = read_csv(models / "task_exclusions.csv")
    assert exclusions[0] == ["complication", "reason", "encounter_id"]
    reasons = {r[1] for r in exclusions[1:]}
    assert reasons <= {"preexisting_ckd", "onset_within_24h"}
    assert any(r[1] == "onset_within_24h" for r in exclusions[1:])

    manifest = json.loads((models / "manifest.json").read_text())
    assert manifest["command"] == "train"
    assert manifest["config"]["master_seed"] == 5  # --seed overrides the config file
    assert manifest["config"]["families"] == ["lr"]
    counts = manifest["counts"]
    assert counts["parsed"] == 260 and counts["parse_errors"] == 0
    assert counts["parsed"] == counts["screened_out"] + counts["train_rows"] + counts["test_rows"]
    assert len(manifest["config_hash"]) == 16


def test_train_reruns_are_byte_identical(tmp_path, workspace):
    _, data, cfg, models = workspace
    again = tmp_path / "models2"
    rc = main([
        "train", "--input", str(data), "--config", str(cfg),
        "--out", str(again), "--seed", "5",
    ])
    assert rc == 0
    for comp in TASKS:
        name = f"ensembles/ensemble_{comp}.json"
        assert (again / name).read_bytes() == (models / name).read_bytes()


def test_parallel_training_matches_serial(tmp_path, workspace):
    _, data, cfg, models = workspace
    parallel = tmp_path / "models_jobs"
    rc = main([
        "train", "--input", str(data), "--config", str(cfg),
        "--out", str(parallel), "--seed", "5", "--jobs", "2",
    ])
    assert rc == 0
    for comp in TASKS:
        name = f"ensembles/ensemble_{comp}.json"
        assert (parallel / name).read_bytes() == (models / name).read_bytes()


def test_evaluate_outputs(tmp_path, workspace):
    _, data, cfg, models = workspace
    out = tmp_path / "eval"
    rc = main([
        "evaluate", "--input", str(data), "--config", str(cfg),
        "--models", str(models), "--out", str(out), "--seed", "5",
    ])
    assert rc == 0

    summary = read_csv(out / "evaluation_summary.csv")
    assert [r[0] for r in summary[1:]] == TASKS
    for comp in TASKS:
        report = json.loads((out / f"evaluation_{comp}.json").read_text())
        if "skipped" in report:
            continue
        assert 0.0 <= report["auroc"]["ci_low"] <= report["auroc"]["point"] <= report["auroc"]["ci_high"] <= 1.0
        assert report["auprc"]["n_bootstrap"] == 50
        assert {"calibration_slope", "calibration_intercept", "prevalence", "n"} <= set(report)
        roc = read_csv(out / f"roc_{comp}.csv")
        assert roc[0] == ["fpr", "tpr"] and roc[1] == ["0.0000000000", "0.0000000000"]
        assert read_csv(out / f"pr_{comp}.csv")[0] == ["recall", "precision"]
        rel = read_csv(out / f"reliability_{comp}.csv")
        assert rel[0] == ["mean_predicted", "event_rate", "count"]
        assert sum(int(r[2]) for r in rel[1:]) == int(report["n"])


def test_predict_outputs_with_na_for_early_onsets(tmp_path, workspace):
    _, data, cfg, models = workspace
    out = tmp_path / "risks.csv"
    rc = main([
        "predict", "--input", str(data), "--config", str(cfg),
        "--models", str(models), "--out", str(out),
    ])
    assert rc == 0
    rows = read_csv(out)
    assert rows[0] == ["encounter_id"] + TASKS
    assert len(rows) == 1 + 260
    saw_na = False
    for row in rows[1:]:
        for cell in row[1:]:
            if cell == "NA":
                saw_na = True
            else:
                assert 0.0 <= float(cell) <= 1.0
    assert saw_na

    percent = tmp_path / "risks_pct.csv"
    rc = main([
        "predict", "--input", str(data), "--config", str(cfg),
        "--models", str(models), "--out", str(percent), "--percent",
    ])
    assert rc == 0
    pct_rows = read_csv(percent)
    for plain, pct in zip(rows[1:], pct_rows[1:]):
        for a, b in zip(plain[1:], pct[1:]):
            if a == "NA":
                assert b == "NA"
            else:
                # plain risks carry 6 decimals, percents 2; the two roundings
                # of the same underlying value can differ by up to 0.00505
                assert float(b) == pytest.approx(100.0 * float(a), abs=0.0051)


def test_predict_column_order_follows_the_fixed_complication_order(tmp_path, workspace):
    _, data, cfg, models = workspace
    out = tmp_path / "r.csv"
    main(["predict", "--input", str(data), "--config", str(cfg),
          "--models", str(models), "--out", str(out)])
    header = read_csv(out)[0][1:]
    order = [c.value for c in COMPLICATION_ORDER if c.value in header]
    assert header == order


def test_exit_codes(tmp_path, workspace, capsys):
    _, data, cfg, models = workspace
    # missing input file
    assert main(["label", "--input", str(tmp_path / "nope.jsonl"),
                 "--out", str(tmp_path / "o")]) == 2
    # input with no valid encounters
    empty = tmp_path / "empty.jsonl"
    empty.write_text("not json\n")
    assert main(["label", "--input", str(empty), "--out", str(tmp_path / "o2")]) == 2
    # malformed config
    bad_cfg = tmp_path / "bad.json"
    bad_cfg.write_text("{\"families\": [\"svm\"]}")
    assert main(["train", "--input", str(data), "--config", str(bad_cfg),
                 "--out", str(tmp_path / "o3")]) == 1
    # unknown config key
    bad_cfg.write_text("{\"verbose\": true}")
    assert main(["label", "--input", str(data), "--config", str(bad_cfg),
                 "--out", str(tmp_path / "o4")]) == 1
    # models directory without ensembles
    assert main(["evaluate", "--input", str(data), "--config", str(cfg),
                 "--models", str(tmp_path), "--out", str(tmp_path / "o5")]) == 2
    # region absent from the cohort
    region_cfg = tmp_path / "region.json"
    region_cfg.write_text(json.dumps({"region": "west", "families": ["lr"],
                                      "complications": TASKS, "n_search": 2}))
    assert main(["evaluate", "--input", str(data), "--config", str(region_cfg),
                 "--models", str(models), "--out", str(tmp_path / "o6")]) == 2
    # unknown subcommand and missing required flag
    assert main(["transmogrify"]) == 1
    assert main(["label", "--out", str(tmp_path / "o7")]) == 1
    capsys.readouterr()
