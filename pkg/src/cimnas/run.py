"""Drive a configured run end to end inside a run directory.

Layout of ``cfg.out``::

    config.json      resolved configuration snapshot
    seed.json        master seed
    history.jsonl    search-phase episodes, one JSON record per line
    timings.jsonl    wall-clock sidecar (kept out of the history log)
    finetune.jsonl   top-k fine-tuning results ("full" mode)
    rnas.jsonl       quantization refinement episodes
    checkpoints/     controller checkpoints
    report/          CSV exports (see ``cimnas.report``)
"""

from __future__ import annotations

import json
import logging
from pathlib import Path

from .config import RunConfig, dump_config, load_config
from .data import Dataset, ingest_cifar10, synth_dataset
from .pipeline import (ChildEvaluator, SearchHistory, SyntheticEvaluator, best_record, episode_seeds,
                       fine_tune_top_k, replay, run_ptbnas, run_rnas)
from .report import write_report
from .space import Candidate, candidate_from_table

__all__ = ["build_dataset", "build_evaluator", "execute", "replay_episode"]

log = logging.getLogger(__name__)

TAG_INCOMING = 0


def build_dataset(cfg: RunConfig) -> Dataset | None:
    ds = cfg.dataset
    if ds.source == "proxy":
        return None
    if ds.source == "cifar10":
        return ingest_cifar10(ds.path, ds.train_subset, ds.test_subset, cfg.seed)
    return synth_dataset(ds.classes, ds.samples, ds.image_shape, ds.separation, seed=cfg.seed,
                         pixel_scale=ds.pixel_scale, background=ds.background)


def build_evaluator(cfg: RunConfig, dataset: Dataset | None = None):
    devices = cfg.device_library()
    if cfg.dataset.source == "proxy":
        return SyntheticEvaluator(devices, cfg.dataset.input_shape, tech=cfg.technology)
    dataset = build_dataset(cfg) if dataset is None else dataset
    p = cfg.phase
    return ChildEvaluator(dataset, devices, p.child_epochs, p.child_learning_rate, p.child_batch_size,
                          p.noise_trials, noise_aware=cfg.mode in ("ptbnas", "full"), tech=cfg.technology)


def execute(cfg: RunConfig, resume: bool = False) -> dict:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    dump_config(cfg, out / "config.json")
    (out / "seed.json").write_text(json.dumps({"seed": cfg.seed}) + "\n")
    space = cfg.build_space()
    evaluator = build_evaluator(cfg)
    p = cfg.phase
    if cfg.mode == "rnas":
        cand = candidate_from_table(cfg.candidate, space.classes)
        log.info("training the incoming candidate")
        net = evaluator.train_candidate(cand, episode_seeds(cfg.seed, TAG_INCOMING, 0))
        run_rnas(cand, net, evaluator, space, p, cfg.seed, cfg.reward, out)
        return write_report(out)
    search_mode = "ptbnas" if cfg.mode == "full" else cfg.mode
    history = run_ptbnas(space, evaluator, p, cfg.seed, search_mode, cfg.reward, out, cfg.workers, resume)
    if cfg.mode == "full":
        if not any(r.error is None for r in history):
            log.warning("no feasible candidate found; skipping fine-tuning and refinement")
            return write_report(out)
        tuned = fine_tune_top_k(history, p.top_k, p.fine_tune_epochs, evaluator, out)
        pick = min(tuned, key=lambda t: (-t.alpha_var, t.record.episode))
        run_rnas(pick.candidate, pick.net, evaluator, space, p, cfg.seed, cfg.reward, out)
    return write_report(out)


def replay_episode(run_dir, episode: int) -> dict:
    """Re-run one search-phase episode from the run's config and its logged seeds."""
    run_dir = Path(run_dir)
    cfg = load_config(run_dir / "config.json", environ={})
    history = SearchHistory.load(run_dir / "history.jsonl")
    matches = [r for r in history if r.episode == episode]
    if not matches:
        raise KeyError(f"no search-phase episode {episode} in {run_dir}")
    record = matches[0]
    ev = replay(record, build_evaluator(cfg))
    metrics = None if ev.metrics is None else ev.metrics.to_dict()
    return {
        "episode": episode,
        "candidate": record.candidate,
        "logged": {"alpha": record.alpha, "alpha_var": record.alpha_var, "metrics": record.metrics,
                   "error": record.error},
        "replayed": {"alpha": ev.alpha, "alpha_var": ev.alpha_var, "metrics": metrics, "error": ev.error},
        "match": (record.alpha, record.alpha_var, record.metrics, record.error)
                 == (ev.alpha, ev.alpha_var, metrics, ev.error),
    }
