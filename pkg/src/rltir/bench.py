"""Experiment runner: enrollment, streaming identification, and reports.

A run replays the split protocol's merged stream through a registry in
one of three modes: ``rltir-oracle`` (ground truth answers every feedback
request instantly), ``rltir-interactive`` (requests wait for a human via
the service layer; unused here), and ``nofeed`` (the gate is forced to
1.0, reproducing the static base model). Metrics are reported per
classifier, pooled, and as per-window series over the global stream,
repeated over reseeded repetitions.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .data import (DatasetInstance, cmu_shaped_synthetic, load_cmu_csv,
                   load_generic_csv, make_split, synthetic_dataset)
from .feedback import SOURCE_ORACLE
from .metrics import UndefinedMetricError, confusion, roc_auc
from .pipeline import PipelineConfig, UserRegistry

REPORT_SCHEMA = "rltir-report/1"

MODES = ("rltir-oracle", "rltir-interactive", "nofeed")
WINDOW_SIZE = 200  # stream instances per iteration window


class UsageError(ValueError):
    """Invalid run configuration (unknown mode, missing dataset, ...)."""


@dataclass
class BenchConfig:
    mode: str = "rltir-oracle"
    dataset: str | None = None          # csv path; None selects synthetic data
    data_format: str = "cmu"            # or "generic"
    label_column: str = "label"         # generic format only
    enrolled_fraction: float = 1.0
    reps: int = 5
    seed: int = 0
    window: int = WINDOW_SIZE
    expect_cmu_shape: bool = False
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)

    def __post_init__(self):
        if self.mode not in MODES:
            raise UsageError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.reps < 1:
            raise UsageError("reps must be >= 1")


def load_instances(config: BenchConfig) -> list[DatasetInstance]:
    if config.dataset is None:
        return cmu_shaped_synthetic(seed=config.seed)
    if config.data_format == "cmu":
        return load_cmu_csv(config.dataset, expect_cmu_shape=config.expect_cmu_shape)
    if config.data_format == "generic":
        return load_generic_csv(config.dataset, label_column=config.label_column)
    raise UsageError(f"unknown dataset format {config.data_format!r}")


class _StreamOracle:
    """Oracle feedback: answers with the label of the instance in flight."""

    def __init__(self):
        self.current_label: int | None = None

    def resolve(self, event):
        return self.current_label, SOURCE_ORACLE


def run_single_rep(instances, config: BenchConfig, seed: int,
                   audit_sink=None) -> dict:
    """One enrollment + streaming pass; returns that rep's metrics block."""
    pipeline_cfg = config.pipeline
    if config.mode == "nofeed":
        pipeline_cfg = replace(pipeline_cfg, gate=1.0)

    plan = make_split(instances, enrolled_fraction=config.enrolled_fraction,
                      seed=seed)
    registry = UserRegistry(pipeline_cfg, seed=seed, audit_sink=audit_sink)
    oracle = _StreamOracle() if config.mode != "nofeed" else None

    t_train = 0.0
    records = []  # (user, y, verdict, label, fed_back)
    t0 = time.perf_counter()
    for event in plan.merged_stream():
        if event[0] == "enroll":
            user_id = event[1]
            split = plan.users[user_id]
            genuine = np.stack([i.features for i in split.train_genuine])
            impostor = (np.stack([i.features for i in split.train_impostor])
                        if split.train_impostor else np.empty((0, genuine.shape[1])))
            t1 = time.perf_counter()
            registry.enroll(user_id, genuine, impostor)
            t_train += time.perf_counter() - t1
            continue
        item, last = event[1], event[2]
        if oracle is not None:
            oracle.current_label = item.label
        outcome = registry.identify(item.claimed_user, item.instance.features,
                                    oracle, end_of_stream=last)
        records.append((item.claimed_user, outcome.y_final(), outcome.verdict_final,
                        item.label, outcome.feedback is not None
                        and outcome.feedback.f is not None))
    t_total = time.perf_counter() - t0

    return {
        "n_instances": len(records),
        "aggregate": _metrics_block([r[1] for r in records], [r[2] for r in records],
                                    [r[3] for r in records]),
        "per_classifier": _per_classifier(records),
        "series": _window_series(records, config.window),
        "feedback_count": sum(r[4] for r in records),
        "feedback_proportion": (sum(r[4] for r in records) / len(records)
                                if records else 0.0),
        "timing": {"train_s": t_train, "test_s": t_total - t_train},
    }


def _metrics_block(scores, verdicts, labels) -> dict:
    block = confusion(verdicts, labels).as_dict()
    try:
        block["auc"] = roc_auc(scores, labels)
    except UndefinedMetricError:
        block["auc"] = None
    return block


def _per_classifier(records) -> dict:
    by_user: dict[str, list] = {}
    for user, y, verdict, label, _ in records:
        by_user.setdefault(user, []).append((y, verdict, label))
    return {
        user: _metrics_block([r[0] for r in rows], [r[1] for r in rows],
                             [r[2] for r in rows])
        for user, rows in sorted(by_user.items())
    }


def _window_series(records, window: int) -> list[dict]:
    series = []
    for start in range(0, len(records), window):
        chunk = records[start:start + window]
        if len(chunk) < 2:
            continue
        block = _metrics_block([r[1] for r in chunk], [r[2] for r in chunk],
                               [r[3] for r in chunk])
        series.append({
            "window": len(series),
            "auc": block["auc"],
            "fnr": block["fnr"],
            "fpr": block["fpr"],
            "feedback_count": sum(r[4] for r in chunk),
        })
    return series


def run_experiment(config: BenchConfig, report_path: str | None = None,
                   series_path: str | None = None, audit_path: str | None = None) -> dict:
    """Repeat the streaming experiment and aggregate a versioned report."""
    instances = load_instances(config)
    rep_seeds = [config.seed + i for i in range(config.reps)]

    audit_fh = open(audit_path, "w", encoding="utf-8") if audit_path else None
    sink = (lambda o: audit_fh.write(o.to_json_line() + "\n")) if audit_fh else None
    try:
        reps = [run_single_rep(instances, config, seed, audit_sink=sink)
                for seed in rep_seeds]
    finally:
        if audit_fh:
            audit_fh.close()

    def mean_of(path_get):
        values = [path_get(r) for r in reps]
        values = [v for v in values if v is not None]
        return float(np.mean(values)) if values else None

    report = {
        "schema": REPORT_SCHEMA,
        "config": {
            "mode": config.mode,
            "dataset": config.dataset or "synthetic",
            "data_format": config.data_format,
            "enrolled_fraction": config.enrolled_fraction,
            "reps": config.reps,
            "seed": config.seed,
            "window": config.window,
            "pipeline": config.pipeline.as_dict(),
        },
        "reps": reps,
        "mean": {
            "auc": mean_of(lambda r: r["aggregate"]["auc"]),
            "f1": mean_of(lambda r: r["aggregate"]["f1"]),
            "precision": mean_of(lambda r: r["aggregate"]["precision"]),
            "recall": mean_of(lambda r: r["aggregate"]["recall"]),
            "fnr": mean_of(lambda r: r["aggregate"]["fnr"]),
            "fpr": mean_of(lambda r: r["aggregate"]["fpr"]),
            "feedback_proportion": mean_of(lambda r: r["feedback_proportion"]),
        },
    }
    if report_path:
        write_report(report, report_path)
    if series_path:
        write_series_csv(report, series_path)
    return report


def report_without_timing(report: dict) -> dict:
    """Deep copy with the wall-clock blocks removed (determinism checks)."""
    clean = json.loads(json.dumps(report))
    for rep in clean.get("reps", []):
        rep.pop("timing", None)
    return clean


def write_report(report: dict, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, sort_keys=True, indent=1)
        fh.write("\n")


def write_series_csv(report: dict, path: str) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["rep", "window", "auc", "fnr", "fpr", "feedback_count"])
        for rep_index, rep in enumerate(report["reps"]):
            for row in rep["series"]:
                writer.writerow([rep_index, row["window"],
                                 "" if row["auc"] is None else f"{row['auc']:.6f}",
                                 f"{row['fnr']:.6f}", f"{row['fpr']:.6f}",
                                 row["feedback_count"]])


def run_sweep(config: BenchConfig, max_depths, tree_counts,
              report_path: str | None = None) -> dict:
    """Grid AUC over (MaxDepth, M) pairs, mirroring the depth/count study."""
    cells = []
    for max_depth in max_depths:
        for trees in tree_counts:
            cell_pipeline = replace(config.pipeline, max_depth=max_depth,
                                    trees=trees,
                                    terminal_depth=min(config.pipeline.terminal_depth,
                                                       max_depth))
            cell_cfg = replace(config, pipeline=cell_pipeline)
            report = run_experiment(cell_cfg)
            cells.append({
                "max_depth": max_depth,
                "trees": trees,
                "auc": report["mean"]["auc"],
                "f1": report["mean"]["f1"],
                "feedback_proportion": report["mean"]["feedback_proportion"],
            })
    sweep = {"schema": REPORT_SCHEMA, "sweep": cells,
             "config": {"mode": config.mode, "reps": config.reps,
                        "seed": config.seed}}
    if report_path:
        write_report(sweep, report_path)
    return sweep
