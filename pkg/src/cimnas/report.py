"""CSV and plot-data emission from a run directory's logs.

Everything here reads the JSONL logs only; nothing is retrained or
re-evaluated, so the outputs are a pure function of the logs.

``history.csv`` columns::

    phase, episode, feasible, reward, alpha, alpha_var, error_var,
    latency_ns, energy_pj, area_um2, edp_pj_ns, throughput_tops,
    efficiency_tops_per_w, device_index, layers, error

``error_var`` is ``1 - alpha_var`` (the y axis of the accuracy/hardware
scatter plots). ``pareto_<metric>.csv`` holds the nondominated records for
(max ``alpha_var``, min ``<metric>``) with the same columns.
"""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path
from typing import Sequence

from .cost import HardwareMetrics
from .data import DataError
from .pipeline import HistoryRecord, SearchHistory, pareto_front
from .space import Candidate

__all__ = [
    "COLUMNS",
    "PLOT_METRICS",
    "load_run",
    "records_csv",
    "parse_objectives",
    "write_pareto",
    "write_report",
]

METRIC_KEYS = tuple(HardwareMetrics.__dataclass_fields__)
COLUMNS = ("phase", "episode", "feasible", "reward", "alpha", "alpha_var", "error_var") + METRIC_KEYS + (
    "device_index", "layers", "error")
PLOT_METRICS = {"latency": "latency_ns", "energy": "energy_pj", "area": "area_um2"}
LOGS = ("history.jsonl", "rnas.jsonl")


def load_run(run_dir) -> list[HistoryRecord]:
    """All episode records of a run (search phase first, then refinement)."""
    run_dir = Path(run_dir)
    if not run_dir.is_dir():
        raise DataError(f"{run_dir}: not a directory")
    records = []
    for name in LOGS:
        records += SearchHistory.load(run_dir / name).records
    if not records:
        raise DataError(f"{run_dir}: no history records")
    return records


def _layers(record: HistoryRecord) -> str:
    rows = Candidate.from_dict(record.candidate).table()
    return ";".join("/".join("-" if v is None else str(v) for v in row) for row in rows)


def _row(record: HistoryRecord) -> list:
    m = record.metrics or {}
    return [record.phase, record.episode, int(record.error is None), repr(record.reward), repr(record.alpha),
            repr(record.alpha_var), repr(1.0 - record.alpha_var)] + [
        repr(m[k]) if k in m else "" for k in METRIC_KEYS] + [
        record.candidate["device_index"], _layers(record), record.error or ""]


def records_csv(records: Sequence[HistoryRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for r in records:
        w.writerow(_row(r))
    return buf.getvalue()


def parse_objectives(specs: Sequence[str]) -> list[tuple[str, str]]:
    """``["alpha_var:max", "latency_ns:min"]`` -> pairs; short metric names are accepted."""
    out = []
    valid = {"alpha", "alpha_var", "reward"} | set(METRIC_KEYS)
    for spec in specs:
        key, _, sense = spec.partition(":")
        key = PLOT_METRICS.get(key, key)
        if key not in valid:
            raise ValueError(f"unknown objective {key!r}; choose from {sorted(valid)}")
        if sense not in ("max", "min"):
            raise ValueError(f"objective {spec!r}: give a direction, e.g. {key}:max")
        out.append((key, sense))
    return out


def _phase_records(records, phase: str | None):
    return [r for r in records if phase is None or r.phase == phase]


def write_pareto(run_dir, objectives: Sequence[tuple[str, str]], out=None, phase: str | None = None) -> Path:
    records = _phase_records(load_run(run_dir), phase)
    front = pareto_front(records, objectives)
    tag = "_".join(k for k, _ in objectives)
    out = Path(out) if out else Path(run_dir) / "report" / f"pareto_{tag}.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(records_csv(front))
    return out


def write_report(run_dir) -> dict:
    """Regenerate ``<run_dir>/report`` from the logs; returns the summary written to ``summary.json``."""
    run_dir = Path(run_dir)
    records = load_run(run_dir)
    out = run_dir / "report"
    out.mkdir(exist_ok=True)
    (out / "history.csv").write_text(records_csv(records))
    phases = sorted({r.phase for r in records})
    summary = {"records": len(records), "phases": {}}
    for phase in phases:
        part = _phase_records(records, phase)
        feasible = [r for r in part if r.error is None]
        entry = {"records": len(part), "feasible": len(feasible)}
        if feasible:
            best = min(feasible, key=lambda r: (-r.reward, r.episode))
            entry["best"] = {"episode": best.episode, "reward": best.reward, "alpha": best.alpha,
                             "alpha_var": best.alpha_var, "metrics": best.metrics, "candidate": best.candidate}
        for name, key in PLOT_METRICS.items():
            front = pareto_front(part, [("alpha_var", "max"), (key, "min")])
            (out / f"pareto_{phase}_{name}.csv").write_text(records_csv(front))
            entry[f"pareto_{name}"] = [r.episode for r in front]
        summary["phases"][phase] = entry
    finetune = run_dir / "finetune.jsonl"
    if finetune.exists():
        rows = [json.loads(line) for line in finetune.read_text().splitlines() if line.strip()]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("episode", "alpha_before", "alpha_var_before", "alpha", "alpha_var", "epochs"))
        for row in rows:
            w.writerow([row["episode"], repr(row["alpha_before"]), repr(row["alpha_var_before"]),
                        repr(row["alpha"]), repr(row["alpha_var"]), row["epochs"]])
        (out / "finetune.csv").write_text(buf.getvalue())
        summary["finetuned"] = len(rows)
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return summary
