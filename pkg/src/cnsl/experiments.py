"""Prediction directories and the experiment grid (metric, runtime and PR@100 tables).

A prediction directory holds ``predictions.json`` (method, dataset path and
label, test sample indices, settings), one ``pred_{i}.csv`` per test sample
with columns ``node_index,score,seed``, and ``timings.json`` with wall-clock
times. Everything except the timings is a deterministic function of the
inputs and seeds.
"""
from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataset import read_vector, sample_path
from .metrics import MetricsRow, PredictionRecord, average_rows, compute_metrics

log = logging.getLogger(__name__)

INDEX = "predictions.json"
TIMINGS = "timings.json"
METRIC_COLUMNS = ("PR", "RE", "F1", "AUC")


def pred_path(directory, i: int) -> Path:
    return Path(directory) / f"pred_{i}.csv"


def write_predictions(directory, method: str, dataset_dir, label: str, indices, scores, seeds,
                      wall_time_train: float = 0.0, wall_time_infer=None, extra: dict | None = None) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    indices = [int(i) for i in indices]
    for i, sc, sd in zip(indices, scores, seeds):
        lines = ["node_index,score,seed"]
        lines += [f"{j},{float(a)!r},{int(b)}" for j, (a, b) in enumerate(zip(sc, sd))]
        pred_path(d, i).write_text("\n".join(lines) + "\n", encoding="utf-8")
    info = {"method": method, "dataset": str(dataset_dir), "dataset_label": label, "test_indices": indices}
    info.update(extra or {})
    (d / INDEX).write_text(json.dumps(info, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    timings = {"wall_time_train": float(wall_time_train),
               "wall_time_infer": [float(t) for t in (wall_time_infer or [0.0] * len(indices))]}
    (d / TIMINGS).write_text(json.dumps(timings, indent=2) + "\n", encoding="utf-8")
    return d


def read_prediction_csv(path) -> tuple[np.ndarray, np.ndarray]:
    with open(path, encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    scores = np.array([float(r["score"]) for r in rows])
    seeds = np.array([float(r["seed"]) for r in rows])
    return scores, seeds


@dataclass
class PredictionSet:
    method: str
    label: str
    records: list[PredictionRecord] = field(default_factory=list)
    wall_time_train: float = 0.0
    info: dict = field(default_factory=dict)


def load_predictions(directory) -> PredictionSet:
    d = Path(directory)
    index = d / INDEX
    if not index.is_file():
        raise FileNotFoundError(f"{d}: no {INDEX}; nothing to evaluate")
    info = json.loads(index.read_text(encoding="utf-8"))
    if not info["test_indices"]:
        raise ValueError(f"{d}: prediction set is empty; nothing to evaluate")
    timing_path = d / TIMINGS
    if timing_path.is_file():
        timings = json.loads(timing_path.read_text(encoding="utf-8"))
    else:
        log.warning("%s: no %s; runtimes reported as 0", d, TIMINGS)
        timings = {"wall_time_train": 0.0, "wall_time_infer": [0.0] * len(info["test_indices"])}
    dataset = Path(info["dataset"])
    out = PredictionSet(info["method"], info["dataset_label"], [], timings["wall_time_train"], info)
    for i, t_inf in zip(info["test_indices"], timings["wall_time_infer"]):
        scores, seeds = read_prediction_csv(pred_path(d, i))
        truth = read_vector(sample_path(dataset, i, "x_s"), size=scores.size)
        out.records.append(PredictionRecord(scores, seeds, truth, out.wall_time_train, t_inf))
    return out


def _fmt(v) -> str:
    return "" if v is None else f"{v:.3f}"


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def markdown_table(rows: list[MetricsRow], datasets: list[str], methods: list[str]) -> str:
    """Methods as rows, one PR/RE/F1/AUC column group per dataset."""
    by = {(r.dataset, r.method): r for r in rows}
    head = "| Method | " + " | ".join(f"{d} {c}" for d in datasets for c in METRIC_COLUMNS) + " |"
    sep = "|---|" + "---|" * (len(datasets) * len(METRIC_COLUMNS))
    lines = [head, sep]
    for m in methods:
        cells = []
        for d in datasets:
            r = by.get((d, m))
            cells += [_fmt(getattr(r, c)) if r else "n/a" for c in METRIC_COLUMNS]
        lines.append(f"| {m} | " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


def run_experiment_grid(prediction_dirs, out_dir, seeds: dict | None = None) -> list[MetricsRow]:
    """Evaluate every prediction directory and write the grid tables to ``out_dir``.

    Directories that are missing or unreadable are listed in ``missing.txt``
    and skipped.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows, spreads, runtime, missing = [], [], [], []
    datasets, methods = [], []
    for pdir in prediction_dirs:
        try:
            ps = load_predictions(pdir)
        except (OSError, ValueError, KeyError) as exc:
            log.warning("skipping %s: %s", pdir, exc)
            missing.append(f"{pdir}: {exc}")
            continue
        per_case = [compute_metrics(r, ps.label, ps.method) for r in ps.records]
        row, spread = average_rows(per_case, ps.label, ps.method)
        rows.append(row)
        spreads.append(spread)
        infer = [r.wall_time_infer for r in ps.records]
        runtime.append((ps.label, ps.method, ps.wall_time_train, float(np.mean(infer)), float(np.sum(infer))))
        if ps.label not in datasets:
            datasets.append(ps.label)
        if ps.method not in methods:
            methods.append(ps.method)
    if not rows and not missing:
        raise ValueError("nothing to evaluate")
    metric_rows = []
    for r, s in zip(rows, spreads):
        metric_rows.append([r.dataset, r.method, _fmt(r.PR), _fmt(r.RE), _fmt(r.F1), _fmt(r.AUC),
                            _fmt(r.PR_at_100), _fmt(s["PR_sd"]), _fmt(s["RE_sd"]), _fmt(s["F1_sd"]),
                            _fmt(s["AUC_sd"]), s["n_cases"]])
    (out / "metrics.csv").write_text(_csv_text(
        ["dataset", "method", "PR", "RE", "F1", "AUC", "PR_at_100", "PR_sd", "RE_sd", "F1_sd", "AUC_sd",
         "n_cases"], metric_rows), encoding="utf-8")
    md = markdown_table(rows, datasets, methods)
    if missing:
        md += "\nMissing artifacts:\n\n" + "".join(f"- {m}\n" for m in missing)
    (out / "metrics.md").write_text(md, encoding="utf-8")
    (out / "runtime.csv").write_text(_csv_text(
        ["dataset", "method", "train_seconds", "infer_seconds_mean", "infer_seconds_total"],
        [(d, m, f"{a:.3f}", f"{b:.3f}", f"{c:.3f}") for d, m, a, b, c in runtime]), encoding="utf-8")
    (out / "pr_at_100.csv").write_text(_csv_text(
        ["dataset", "method", "PR_at_100"], [(r.dataset, r.method, _fmt(r.PR_at_100)) for r in rows]),
        encoding="utf-8")
    (out / "missing.txt").write_text("".join(m + "\n" for m in missing), encoding="utf-8")
    if seeds is not None:
        (out / "seeds.json").write_text(json.dumps(seeds, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return rows
