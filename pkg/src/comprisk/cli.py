"""Command-line interface.

Commands:
  synth     write a deterministic synthetic cohort as line-delimited JSON
  label     label complications for every parsed encounter
  train     fit per-complication ensembles on the dated training split
  evaluate  score saved ensembles on the held-out split
  predict   per-encounter risks from saved ensembles

Exit codes: 0 success, 1 usage error, 2 data error, 3 internal error.
Malformed input lines never abort a run; they are counted and written to
a side-channel file next to the outputs.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import math
import sys
import traceback
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .cohort import (
    Encounter,
    apply_cohort_exclusions,
    parse_encounters_path,
    split_train_test,
)
from .config import RunConfig
from .features import assert_no_label_leakage, feature_matrix
from .labeler import COMPLICATION_ORDER, Complication, label_cohort
from .metrics import (
    auprc,
    auroc,
    bootstrap_ci,
    calibration_intercept,
    calibration_slope,
    pr_points,
    reliability_curve,
    roc_points,
)
from .pipeline import (
    TaskTrainingResult,
    build_task_dataset,
    derive_seed,
    ensemble_from_dict,
    ensemble_to_dict,
    train_task,
)
from .reportnlp import Lexicon
from .synth import SyntheticSpec, generate_cohort, write_jsonl


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="comprisk", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p_synth = sub.add_parser("synth", help="generate a synthetic cohort")
    p_synth.add_argument("--out", required=True, help="output JSONL path")
    p_synth.add_argument("--n", type=int, default=3000, help="number of encounters")
    p_synth.add_argument("--seed", type=int, default=0)
    p_synth.add_argument(
        "--planted", default=Complication.ELEVATED_TROPONIN.value,
        choices=[c.value for c in COMPLICATION_ORDER],
        help="complication generated with feature-driven risk",
    )
    p_synth.add_argument(
        "--null", default=Complication.ELEVATED_DDIMER.value,
        choices=[c.value for c in COMPLICATION_ORDER],
        help="complication generated independently of features",
    )
    p_synth.add_argument("--prevalence", type=float, default=0.3)
    p_synth.add_argument("--null-rate", type=float, default=0.25)
    p_synth.add_argument("--within-24h", type=float, default=0.15)

    for name, helptext in (
        ("label", "label complications for each encounter"),
        ("train", "train per-complication ensembles"),
        ("evaluate", "evaluate saved ensembles on the held-out split"),
        ("predict", "write per-encounter risks"),
    ):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--input", required=True, help="encounter JSONL path")
        p.add_argument("--config", help="JSON config path")
        if name in ("train", "evaluate"):
            p.add_argument("--seed", type=int, help="override master seed")
        if name == "train":
            p.add_argument("--jobs", type=int, help="parallel task workers")
        if name in ("evaluate", "predict"):
            p.add_argument("--models", required=True, help="training output directory")
        if name == "predict":
            p.add_argument("--out", required=True, help="output CSV path")
            p.add_argument("--percent", action="store_true", help="risks as percentages")
        else:
            p.add_argument("--out", required=True, help="output directory")
    return parser


def _load_config(args) -> RunConfig:
    try:
        config = RunConfig.from_path(args.config) if args.config else RunConfig()
        overrides = {}
        if getattr(args, "seed", None) is not None:
            overrides["master_seed"] = args.seed
        if getattr(args, "jobs", None) is not None:
            overrides["jobs"] = args.jobs
        if overrides:
            config = dataclasses.replace(config, **overrides)
        return config
    except (OSError, ValueError, json.JSONDecodeError) as exc:
        raise UsageError(f"bad config: {exc}") from exc


def _load_lexicon(config: RunConfig) -> Lexicon:
    if config.lexicon_path is None:
        return Lexicon.default()
    try:
        return Lexicon.from_path(config.lexicon_path)
    except (OSError, ValueError) as exc:
        raise UsageError(f"bad lexicon: {exc}") from exc


def _parse_input(path, out_dir: Path | None):
    try:
        result = parse_encounters_path(path)
    except OSError as exc:
        raise DataError(f"cannot read input: {exc}") from exc
    if out_dir is not None and result.errors:
        with open(out_dir / "parse_errors.txt", "w", encoding="utf-8") as handle:
            for err in result.errors:
                handle.write(err.render() + "\n")
    if not result.encounters:
        raise DataError("no valid encounters in input")
    return result


def _ensure_dir(path_str: str) -> Path:
    path = Path(path_str)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _fmt(x: float, nd: int = 6) -> str:
    return f"{x:.{nd}f}"


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        writer.writerows(rows)


# -- synth -----------------------------------------------------------------


def _cmd_synth(args) -> int:
    try:
        spec = SyntheticSpec(
            n_encounters=args.n,
            seed=args.seed,
            planted=Complication(args.planted),
            null=Complication(args.null),
            planted_prevalence=args.prevalence,
            null_rate=args.null_rate,
            within_24h_fraction=args.within_24h,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    records, _ = generate_cohort(spec)
    write_jsonl(records, args.out)
    print(f"wrote {len(records)} encounters to {args.out}")
    return 0


# -- label -----------------------------------------------------------------


def _labels_rows(encounters, labels_by_id) -> tuple[list[str], list[list]]:
    header = ["encounter_id"]
    for comp in COMPLICATION_ORDER:
        header += [f"{comp.value}_occurred", f"{comp.value}_first_time", f"{comp.value}_within_24h"]
    rows = []
    for enc in encounters:
        row: list = [enc.encounter_id]
        for comp in COMPLICATION_ORDER:
            label = labels_by_id[enc.encounter_id][comp]
            row += [
                int(label.occurred),
                "" if label.first_time is None else label.first_time,
                int(label.within_24h),
            ]
        rows.append(row)
    return header, rows


def _cmd_label(args) -> int:
    config = _load_config(args)
    lexicon = _load_lexicon(config)
    out_dir = _ensure_dir(args.out)
    parsed = _parse_input(args.input, out_dir)

    labels = label_cohort(parsed.encounters, lexicon)
    header, rows = _labels_rows(parsed.encounters, labels)
    _write_csv(out_dir / "labels.csv", header, rows)

    _, screened = apply_cohort_exclusions(parsed.encounters)
    _write_csv(
        out_dir / "screen_exclusions.csv",
        ["encounter_id", "reason"],
        [[enc.encounter_id, reason] for enc, reason in screened],
    )
    print(f"labeled {len(parsed.encounters)} encounters ({len(parsed.errors)} bad lines)")
    return 0


# -- shared cohort assembly ---------------------------------------------------


def _assemble_split(parsed, config: RunConfig) -> tuple[list[Encounter], list[Encounter], list]:
    """Screens then the dated region split; returns (train, test, screened)."""
    eligible, screened = apply_cohort_exclusions(parsed.encounters)
    splits = split_train_test(eligible, config.cutoff_date())
    regions = sorted(splits)
    if config.region is not None:
        if config.region not in splits:
            raise DataError(f"region '{config.region}' absent from input")
        regions = [config.region]
    train: list[Encounter] = []
    test: list[Encounter] = []
    for region in regions:
        train.extend(splits[region].train)
        test.extend(splits[region].test)
    return train, test, screened


# -- train -----------------------------------------------------------------


def _train_task_worker(payload):
    task, families, master_seed, k, n_search = payload
    return task.complication.value, train_task(task, families, master_seed, k, n_search)


def _cmd_train(args) -> int:
    config = _load_config(args)
    lexicon = _load_lexicon(config)
    out_dir = _ensure_dir(args.out)
    parsed = _parse_input(args.input, out_dir)
    train_rows, test_rows, screened = _assemble_split(parsed, config)
    if not train_rows:
        raise DataError("training split is empty")

    labels = label_cohort(train_rows, lexicon)
    values, mask = feature_matrix(train_rows, labels)

    complications = config.complication_enums()
    payloads = []
    for comp in complications:
        task = build_task_dataset(comp, train_rows, labels, values, mask)
        payloads.append((task, list(config.families), config.master_seed, config.k_folds, config.n_search))

    results: dict[str, TaskTrainingResult] = {}
    if config.jobs > 1:
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            for comp_value, result in pool.map(_train_task_worker, payloads):
                results[comp_value] = result
    else:
        for payload in payloads:
            comp_value, result = _train_task_worker(payload)
            results[comp_value] = result

    ensembles_dir = out_dir / "ensembles"
    ensembles_dir.mkdir(exist_ok=True)
    summary_rows = []
    exclusion_rows = []
    for comp in complications:
        result = results[comp.value]
        with open(ensembles_dir / f"ensemble_{comp.value}.json", "w", encoding="utf-8") as handle:
            json.dump(ensemble_to_dict(result.ensemble), handle, sort_keys=True)
        for fam in result.family_table:
            summary_rows.append(
                [
                    comp.value,
                    fam.family,
                    _fmt(fam.mean_auroc),
                    _fmt(fam.mean_auprc),
                    int(fam.family == result.ensemble.family),
                ]
            )
        for reason in sorted(result.excluded):
            for enc_id in result.excluded[reason]:
                exclusion_rows.append([comp.value, reason, enc_id])

    _write_csv(
        out_dir / "validation_summary.csv",
        ["complication", "family", "mean_val_auroc", "mean_val_auprc", "selected"],
        summary_rows,
    )
    _write_csv(
        out_dir / "task_exclusions.csv",
        ["complication", "reason", "encounter_id"],
        exclusion_rows,
    )
    _write_csv(
        out_dir / "screen_exclusions.csv",
        ["encounter_id", "reason"],
        [[enc.encounter_id, reason] for enc, reason in screened],
    )
    manifest = {
        "command": "train",
        "package_version": __version__,
        "config": config.to_dict(),
        "config_hash": config.stable_hash(),
        "counts": {
            "parsed": len(parsed.encounters),
            "parse_errors": len(parsed.errors),
            "screened_out": len(screened),
            "train_rows": len(train_rows),
            "test_rows": len(test_rows),
        },
    }
    with open(out_dir / "manifest.json", "w", encoding="utf-8") as handle:
        json.dump(manifest, handle, sort_keys=True, indent=2)
    print(f"trained {len(complications)} ensembles on {len(train_rows)} encounters")
    return 0


# -- evaluate -----------------------------------------------------------------


def _load_ensembles(models_dir: str) -> dict[Complication, object]:
    root = Path(models_dir) / "ensembles"
    if not root.is_dir():
        raise DataError(f"no ensembles directory under {models_dir}")
    out = {}
    for path in sorted(root.glob("ensemble_*.json")):
        with open(path, "r", encoding="utf-8") as handle:
            ensemble = ensemble_from_dict(json.load(handle))
        out[ensemble.complication] = ensemble
    if not out:
        raise DataError(f"no ensembles found under {models_dir}")
    return out


def _cmd_evaluate(args) -> int:
    config = _load_config(args)
    lexicon = _load_lexicon(config)
    out_dir = _ensure_dir(args.out)
    parsed = _parse_input(args.input, out_dir)
    _, test_rows, _ = _assemble_split(parsed, config)
    if not test_rows:
        raise DataError("held-out split is empty")
    ensembles = _load_ensembles(args.models)

    labels = label_cohort(test_rows, lexicon)
    values, mask = feature_matrix(test_rows, labels)

    summary_rows = []
    for comp in COMPLICATION_ORDER:
        if comp not in ensembles:
            continue
        task = build_task_dataset(comp, test_rows, labels, values, mask, require_positives=False)
        report_path = out_dir / f"evaluation_{comp.value}.json"
        y = task.y
        if task.n_rows == 0 or y.min() == y.max():
            report = {
                "complication": comp.value,
                "skipped": "held-out rows do not contain both outcome classes",
                "n": task.n_rows,
            }
            with open(report_path, "w", encoding="utf-8") as handle:
                json.dump(report, handle, sort_keys=True, indent=2)
            summary_rows.append([comp.value, task.n_rows, "", "", "", "", "", "", "", ""])
            continue

        scores = np.atleast_1d(ensembles[comp].predict_risk(task.values, task.mask))
        seed = derive_seed(config.master_seed, comp.value, "bootstrap")
        auroc_ci = bootstrap_ci(auroc, y, scores, config.n_bootstrap, seed)
        auprc_ci = bootstrap_ci(auprc, y, scores, config.n_bootstrap, seed)
        slope = calibration_slope(y, scores)
        intercept = calibration_intercept(y, scores)

        report = {
            "complication": comp.value,
            "family": ensembles[comp].family,
            "n": int(y.size),
            "prevalence": float(y.mean()),
            "auroc": auroc_ci.to_dict(),
            "auprc": auprc_ci.to_dict(),
            "calibration_slope": slope,
            "calibration_intercept": intercept,
        }
        with open(report_path, "w", encoding="utf-8") as handle:
            json.dump(report, handle, sort_keys=True, indent=2)

        _write_csv(
            out_dir / f"roc_{comp.value}.csv",
            ["fpr", "tpr"],
            [[_fmt(a, 10), _fmt(b, 10)] for a, b in roc_points(y, scores)],
        )
        _write_csv(
            out_dir / f"pr_{comp.value}.csv",
            ["recall", "precision"],
            [[_fmt(a, 10), _fmt(b, 10)] for a, b in pr_points(y, scores)],
        )
        _write_csv(
            out_dir / f"reliability_{comp.value}.csv",
            ["mean_predicted", "event_rate", "count"],
            [
                [_fmt(b.mean_predicted, 10), _fmt(b.event_rate, 10), b.count]
                for b in reliability_curve(y, scores)
            ],
        )
        summary_rows.append(
            [
                comp.value,
                int(y.size),
                _fmt(float(y.mean())),
                _fmt(auroc_ci.point),
                _fmt(auroc_ci.ci_low),
                _fmt(auroc_ci.ci_high),
                _fmt(auprc_ci.point),
                _fmt(auprc_ci.ci_low),
                _fmt(auprc_ci.ci_high),
                _fmt(slope),
            ]
        )

    _write_csv(
        out_dir / "evaluation_summary.csv",
        [
            "complication", "n", "prevalence",
            "auroc", "auroc_ci_low", "auroc_ci_high",
            "auprc", "auprc_ci_low", "auprc_ci_high",
            "calibration_slope",
        ],
        summary_rows,
    )
    print(f"evaluated {len(summary_rows)} complications on {len(test_rows)} encounters")
    return 0


# -- predict -----------------------------------------------------------------


def _cmd_predict(args) -> int:
    config = _load_config(args)
    lexicon = _load_lexicon(config)
    parsed = _parse_input(args.input, None)
    ensembles = _load_ensembles(args.models)

    encounters = parsed.encounters
    labels = label_cohort(encounters, lexicon)
    values, mask = feature_matrix(encounters, labels)

    comps = [c for c in COMPLICATION_ORDER if c in ensembles]
    risk_columns = {}
    for comp in comps:
        risks = np.atleast_1d(ensembles[comp].predict_risk(values, mask))
        for i, enc in enumerate(encounters):
            if labels[enc.encounter_id][comp].within_24h:
                risks[i] = np.nan
        risk_columns[comp] = risks

    rows = []
    for i, enc in enumerate(encounters):
        row: list = [enc.encounter_id]
        for comp in comps:
            risk = risk_columns[comp][i]
            if math.isnan(risk):
                row.append("NA")
            elif args.percent:
                row.append(f"{100.0 * risk:.2f}")
            else:
                row.append(_fmt(risk))
        rows.append(row)

    out_path = Path(args.out)
    if out_path.parent != Path(""):
        out_path.parent.mkdir(parents=True, exist_ok=True)
    _write_csv(out_path, ["encounter_id"] + [c.value for c in comps], rows)
    print(f"wrote risks for {len(encounters)} encounters to {args.out}")
    return 0


# -- entry -----------------------------------------------------------------


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        assert_no_label_leakage()
        args = parser.parse_args(argv)
        handler = {
            "synth": _cmd_synth,
            "label": _cmd_label,
            "train": _cmd_train,
            "evaluate": _cmd_evaluate,
            "predict": _cmd_predict,
        }[args.command]
        return handler(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except Exception:
        traceback.print_exc()
        return 3


if __name__ == "__main__":
    sys.exit(main())
