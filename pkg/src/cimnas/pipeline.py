"""Optimizer selector and the two-phase search pipeline.

Phase one samples full candidates, trains each child (with device noise when
the mode asks for it) and feeds the accuracy under variation back to the
controller. Phase two freezes architecture and device of a trained candidate
and searches its quantization against the hardware cost model, re-using the
trained weights instead of retraining.

Everything random is derived from one master seed:

* child ``k`` of a phase gets ``SeedSequence([master, phase_tag, k])`` for its
  init, training and evaluation seeds (logged with the record);
* controller batch ``j`` samples from ``default_rng([master, 100 + phase_tag, j])``.

A resumed run therefore continues exactly as the uninterrupted one would.
"""

from __future__ import annotations

import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Iterable, Protocol, Sequence

import numpy as np

from . import controller as ctl
from .cost import FULL_PRECISION, CostModelError, HardwareMetrics, SynapticArray, TechnologyParams, evaluate_hardware
from .devices import DeviceLibrary, layer_sigmas, weight_noise_sigma
from .nn import NoiseSpec, ShapeError, TrainConfig, TrainingError, build_network, evaluate_accuracy, train
from .quant import QuantizationError
from .space import Candidate, SearchSpace, SearchSpaceError, decode, encode

__all__ = [
    "ModeError",
    "SelectorSwitches",
    "PipelineMode",
    "MODES",
    "MODE_NAMES",
    "select_mode",
    "restrict_space",
    "PhaseConfig",
    "EpisodeSeeds",
    "episode_seeds",
    "Evaluation",
    "ChildEvaluator",
    "SyntheticEvaluator",
    "HistoryRecord",
    "SearchHistory",
    "run_ptbnas",
    "replay",
    "FineTuned",
    "fine_tune_top_k",
    "run_rnas",
    "pareto_front",
    "best_record",
]

log = logging.getLogger(__name__)

TAG_SEARCH, TAG_RNAS = 1, 2


class ModeError(ValueError):
    pass


@dataclass(frozen=True)
class SelectorSwitches:
    SA: int  # architecture
    SQ: int  # quantization
    SD: int  # device variation
    SC: int  # circuit / cost model

    def as_tuple(self) -> tuple:
        return (int(self.SA), int(self.SQ), int(self.SD), int(self.SC))


@dataclass(frozen=True)
class PipelineMode:
    name: str
    switches: SelectorSwitches
    search_kinds: frozenset
    noise_aware: bool
    cost_in_reward: bool


MODES = {
    (1, 0, 0, 0): ("nas", {"arch"}),
    (1, 1, 0, 0): ("quantnas", {"arch", "quant"}),
    (1, 1, 1, 0): ("ptbnas", {"arch", "quant", "device"}),
    (0, 1, 0, 1): ("rnas", {"quant"}),
}
_BY_NAME = {name: key for key, (name, _) in MODES.items()}
MODE_NAMES = tuple(sorted(_BY_NAME))


def select_mode(sw: SelectorSwitches | str) -> PipelineMode:
    if isinstance(sw, str):
        if sw not in _BY_NAME:
            raise ModeError(f"unknown mode {sw!r}; legal modes are {sorted(_BY_NAME)}")
        sw = SelectorSwitches(*_BY_NAME[sw])
    key = sw.as_tuple()
    if key not in MODES:
        legal = ", ".join(f"{k}={n}" for k, (n, _) in MODES.items())
        raise ModeError(f"switches (SA,SQ,SD,SC)={key} unsupported; legal: {legal}")
    name, kinds = MODES[key]
    return PipelineMode(name, sw, frozenset(kinds), noise_aware=bool(sw.SD), cost_in_reward=bool(sw.SC))


def restrict_space(space: SearchSpace, mode: PipelineMode, candidate: Candidate | None = None) -> SearchSpace:
    """Disable the decision steps the mode does not search.

    Architecture and device are pinned to ``candidate`` when given, else to
    their first choice. Without quantization search the space is full precision.
    """
    if "quant" not in mode.search_kinds and space.quantized:
        space = space.full_precision()
    pinned = [k for k in ("arch", "device") if k not in mode.search_kinds]
    if candidate is not None:
        return space.fixed(candidate, pinned)
    decisions = tuple(replace(d, choices=d.choices[:1]) if d.kind in pinned else d for d in space.decisions)
    return replace(space, decisions=decisions)


@dataclass(frozen=True)
class PhaseConfig:
    episodes: int = 500
    child_epochs: int = 30
    top_k: int = 40
    fine_tune_epochs: int = 200
    rnas_steps: int = 100
    update_rate: float = 0.2  # baseline EMA decay
    learning_rate: float = 0.01  # controller policy step
    batch_size: int = 5  # episodes per controller update
    gamma: float = 1.0
    hidden_size: int = 64
    beta: float = 0.5
    noise_trials: int = 20
    child_learning_rate: float = 0.05
    child_batch_size: int = 32
    phase1_hardware: bool = False
    rnas_noise_aware: bool = True

    def __post_init__(self):
        for name in ("episodes", "child_epochs", "top_k", "fine_tune_epochs", "rnas_steps",
                     "batch_size", "hidden_size", "noise_trials", "child_batch_size"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        for name in ("learning_rate", "child_learning_rate"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not 0.0 <= self.update_rate <= 1.0:
            raise ValueError("update_rate must be in [0, 1]")
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must be in (0, 1]")
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError("beta must be in [0, 1]")


@dataclass(frozen=True)
class EpisodeSeeds:
    init: int
    train: int
    eval: int
    extra: int


def episode_seeds(master: int, tag: int, episode: int) -> EpisodeSeeds:
    state = np.random.SeedSequence([master, tag, episode]).generate_state(4)
    return EpisodeSeeds(*(int(s) for s in state))


# -- evaluators --------------------------------------------------------------

@dataclass
class Evaluation:
    alpha: float
    alpha_var: float
    metrics: HardwareMetrics | None = None
    error: str | None = None


class Evaluator(Protocol):
    def evaluate(self, candidate: Candidate, seeds: EpisodeSeeds) -> Evaluation: ...


_INFEASIBLE = (ShapeError, QuantizationError, TrainingError, CostModelError, SearchSpaceError)


@dataclass
class ChildEvaluator:
    """Trains and scores child networks on a dataset."""

    dataset: object
    devices: DeviceLibrary
    epochs: int = 30
    learning_rate: float = 0.05
    batch_size: int = 32
    noise_trials: int = 20
    noise_aware: bool = True
    tech: TechnologyParams | None = field(default_factory=TechnologyParams)
    array: SynapticArray = field(default_factory=SynapticArray)

    @property
    def input_shape(self) -> tuple:
        return tuple(self.dataset.image_shape)

    def noise(self, candidate: Candidate) -> NoiseSpec:
        device = self.devices[candidate.device_index]
        scheme = candidate.scheme()
        n = len(candidate.arch.layers) + 1
        if scheme is None:
            sigmas = (weight_noise_sigma(device, FULL_PRECISION[1]),) * n
        else:
            sigmas = layer_sigmas(device, scheme.qw)
        return NoiseSpec(per_layer_sigma=sigmas)

    def train_candidate(self, candidate: Candidate, seeds: EpisodeSeeds, extra_epochs: int = 0):
        net = build_network(candidate.arch, self.input_shape, seeds.init)
        scheme = candidate.scheme()
        noise = self.noise(candidate) if self.noise_aware else None
        cfg = TrainConfig(self.learning_rate, self.epochs, self.batch_size, seeds.train)
        net, _ = train(net, self.dataset, cfg, scheme, noise)
        if extra_epochs:
            net, _ = train(net, self.dataset, replace(cfg, epochs=extra_epochs, rng_seed=seeds.extra), scheme, noise)
        return net

    def score(self, net, candidate: Candidate, eval_seed: int) -> tuple[float, float]:
        scheme = candidate.scheme()
        alpha = evaluate_accuracy(net, self.dataset, scheme)
        alpha_var = evaluate_accuracy(net, self.dataset, scheme, self.noise(candidate), self.noise_trials,
                                      np.random.default_rng(eval_seed))
        return alpha, alpha_var

    def hardware(self, candidate: Candidate) -> HardwareMetrics | None:
        if self.tech is None:
            return None
        _, metrics = evaluate_hardware(candidate.arch, candidate.scheme(), self.devices[candidate.device_index],
                                       self.tech, self.array, self.input_shape)
        return metrics

    def evaluate(self, candidate: Candidate, seeds: EpisodeSeeds) -> Evaluation:
        try:
            metrics = self.hardware(candidate)
            net = self.train_candidate(candidate, seeds)
            alpha, alpha_var = self.score(net, candidate, seeds.eval)
        except _INFEASIBLE as exc:
            return Evaluation(0.0, 0.0, None, f"{type(exc).__name__}: {exc}")
        return Evaluation(alpha, alpha_var, metrics)


@dataclass
class SyntheticEvaluator:
    """Training-free stand-in for a child evaluator.

    ``alpha = ceiling * (1 - exp(-weights / capacity)) * prod_l (1 - 2**-wbits_l) * (1 - 2**-abits_l)``
    and ``alpha_var = alpha * max(0, 1 - mean layer sigma)``. Hardware metrics
    come from the real cost model. Deterministic and seed independent.
    """

    devices: DeviceLibrary
    input_shape: tuple = (1, 8, 8)
    capacity: float = 2000.0
    ceiling: float = 0.95
    tech: TechnologyParams = field(default_factory=TechnologyParams)
    array: SynapticArray = field(default_factory=SynapticArray)

    def train_candidate(self, candidate: Candidate, seeds: EpisodeSeeds | None = None, extra_epochs: int = 0):
        return None

    def score(self, net, candidate: Candidate, eval_seed: int | None = None) -> tuple[float, float]:
        ev = self.evaluate(candidate)
        if ev.error is not None:
            raise CostModelError(ev.error)
        return ev.alpha, ev.alpha_var

    def hardware(self, candidate: Candidate) -> HardwareMetrics:
        return evaluate_hardware(candidate.arch, candidate.scheme(), self.devices[candidate.device_index],
                                 self.tech, self.array, self.input_shape)[1]

    def evaluate(self, candidate: Candidate, seeds: EpisodeSeeds | None = None) -> Evaluation:
        try:
            net = build_network(candidate.arch, self.input_shape, 0)
            scheme = candidate.scheme()
            _, metrics = evaluate_hardware(candidate.arch, scheme, self.devices[candidate.device_index],
                                           self.tech, self.array, self.input_shape)
        except _INFEASIBLE as exc:
            return Evaluation(0.0, 0.0, None, f"{type(exc).__name__}: {exc}")
        weights = sum(w.size for w in net.weights)
        alpha = self.ceiling * (1.0 - math.exp(-weights / self.capacity))
        if scheme is not None:
            for qw, qa in zip(scheme.qw, scheme.qa):
                alpha *= (1.0 - 2.0 ** -qw.bits) * (1.0 - 2.0 ** -qa.bits)
            sig = float(np.mean(layer_sigmas(self.devices[candidate.device_index], scheme.qw)))
        else:
            sig = 0.0
        return Evaluation(alpha, alpha * max(0.0, 1.0 - sig), metrics)


# -- history -----------------------------------------------------------------

@dataclass
class HistoryRecord:
    episode: int
    phase: str
    actions: list
    candidate: dict
    alpha: float
    alpha_var: float
    metrics: dict | None
    reward: float
    seeds: dict
    error: str | None = None

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, line: str) -> "HistoryRecord":
        return cls(**json.loads(line))

    def value(self, key: str) -> float | None:
        if key in ("alpha", "alpha_var", "reward"):
            return getattr(self, key)
        if self.metrics is None:
            return None
        return self.metrics.get(key)


class SearchHistory:
    """Append-only episode log, mirrored line by line to ``path`` when given.

    Wall-clock timings go to a ``timings.jsonl`` sidecar so the log itself is
    a pure function of the configuration and seed.
    """

    def __init__(self, path: Path | None = None, records: Iterable[HistoryRecord] = ()):
        self.path = None if path is None else Path(path)
        self.records: list[HistoryRecord] = list(records)
        self.controller: ctl.ControllerState | None = None

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __getitem__(self, i) -> HistoryRecord:
        return self.records[i]

    @property
    def timings_path(self) -> Path | None:
        return None if self.path is None else self.path.with_name("timings.jsonl")

    def append(self, record: HistoryRecord, elapsed: float | None = None) -> None:
        if self.records and record.episode <= self.records[-1].episode:
            raise ValueError(f"episode {record.episode} after {self.records[-1].episode}")
        self.records.append(record)
        if self.path is not None:
            with open(self.path, "a") as fh:
                fh.write(record.to_json() + "\n")
            if elapsed is not None:
                with open(self.timings_path, "a") as fh:
                    fh.write(json.dumps({"phase": record.phase, "episode": record.episode,
                                         "finished": time.time(), "elapsed_s": elapsed}) + "\n")

    def rewrite(self) -> None:
        if self.path is not None:
            tmp = self.path.with_suffix(".tmp")
            tmp.write_text("".join(r.to_json() + "\n" for r in self.records))
            os.replace(tmp, self.path)

    @classmethod
    def load(cls, path) -> "SearchHistory":
        path = Path(path)
        records = []
        lines = path.read_text().splitlines() if path.exists() else []
        for n, line in enumerate(lines):
            if not line.strip():
                continue
            try:
                records.append(HistoryRecord.from_json(line))
            except (json.JSONDecodeError, TypeError):
                if n < len(lines) - 1:
                    raise
                log.warning("%s: dropping torn final line", path)
        return cls(path, records)


def _record(episode: int, phase: str, actions, candidate: Candidate, ev: Evaluation, reward: float,
            seeds: EpisodeSeeds) -> HistoryRecord:
    return HistoryRecord(episode, phase, [int(a) for a in actions], candidate.to_dict(), ev.alpha, ev.alpha_var,
                         None if ev.metrics is None else ev.metrics.to_dict(), reward, asdict(seeds), ev.error)


def _reward(ev: Evaluation, mode: PipelineMode, reward_cfg: ctl.RewardConfig, use_hardware: bool) -> float:
    if ev.error is not None:
        return 0.0
    alpha = ev.alpha_var if mode.noise_aware else ev.alpha
    if not use_hardware:
        return alpha
    return ctl.compute_reward(alpha, ev.metrics, reward_cfg)


# -- workers -----------------------------------------------------------------

_WORKER_EVALUATOR = None


def _init_worker(evaluator) -> None:
    global _WORKER_EVALUATOR
    _WORKER_EVALUATOR = evaluator


def _work(job):
    candidate, seeds = job
    start = time.perf_counter()
    return _WORKER_EVALUATOR.evaluate(candidate, seeds), time.perf_counter() - start


def _evaluate_all(evaluator, jobs: list, pool) -> list:
    if pool is None:
        out = []
        for candidate, seeds in jobs:
            start = time.perf_counter()
            out.append((evaluator.evaluate(candidate, seeds), time.perf_counter() - start))
        return out
    return list(pool.map(_work, jobs))


# -- phase one ---------------------------------------------------------------

def _checkpoint(path: Path, state: ctl.ControllerState, done: int) -> None:
    tmp = path.with_name(path.name + ".tmp")
    ctl.save_checkpoint(tmp, state, {"episodes_done": done})
    os.replace(tmp, path)


def run_ptbnas(space: SearchSpace, evaluator, cfg: PhaseConfig, seed: int, mode: PipelineMode | str = "ptbnas",
               reward_cfg: ctl.RewardConfig | None = None, run_dir=None, workers: int = 1,
               resume: bool = False) -> SearchHistory:
    """Controller-driven search over ``space`` under ``mode``; returns the episode history.

    With ``run_dir`` the history is appended to ``history.jsonl`` as it grows
    and the controller is checkpointed after every update; ``resume`` picks up
    from the last checkpoint.
    """
    mode = select_mode(mode) if isinstance(mode, str) else mode
    if mode.name == "rnas":
        raise ModeError("rnas needs a trained candidate; use run_rnas")
    space = restrict_space(space, mode)
    reward_cfg = reward_cfg or ctl.RewardConfig(beta=cfg.beta)
    use_hw = cfg.phase1_hardware and reward_cfg.beta < 1.0
    state = ctl.init_controller(space.choice_counts, seed=seed, hidden_size=cfg.hidden_size,
                                learning_rate=cfg.learning_rate, baseline_decay=cfg.update_rate, gamma=cfg.gamma)
    history = SearchHistory()
    ckpt = None
    done = 0
    if run_dir is not None:
        run_dir = Path(run_dir)
        (run_dir / "checkpoints").mkdir(parents=True, exist_ok=True)
        ckpt = run_dir / "checkpoints" / "controller.npz"
        path = run_dir / "history.jsonl"
        if resume and ckpt.exists():
            state, extra = ctl.load_checkpoint(ckpt)
            done = int(extra["episodes_done"])
            history = SearchHistory.load(path)
            history.records = history.records[:done]
            history.rewrite()
        else:
            path.unlink(missing_ok=True)
            history = SearchHistory(path)
            history.timings_path.unlink(missing_ok=True)
    pool = ProcessPoolExecutor(workers, initializer=_init_worker, initargs=(evaluator,)) if workers > 1 else None
    try:
        while done < cfg.episodes:
            batch = done // cfg.batch_size
            rng = np.random.default_rng([seed, 100 + TAG_SEARCH, batch])
            ids = range(done, min(done + cfg.batch_size, cfg.episodes))
            episodes = [ctl.sample_episode(state, rng) for _ in ids]
            jobs = [(decode(ep.actions, space), episode_seeds(seed, TAG_SEARCH, k)) for ep, k in zip(episodes, ids)]
            results = _evaluate_all(evaluator, jobs, pool)
            for k, ep, (cand, seeds), (ev, elapsed) in zip(ids, episodes, jobs, results):
                ep.reward = _reward(ev, mode, reward_cfg, use_hw)
                ep.metrics = None if ev.metrics is None else ev.metrics.to_dict()
                history.append(_record(k, mode.name, ep.actions, cand, ev, ep.reward, seeds), elapsed)
                if ev.error:
                    log.info("episode %d infeasible: %s", k, ev.error)
            state = ctl.update(state, episodes)
            done = ids[-1] + 1
            if ckpt is not None:
                _checkpoint(ckpt, state, done)
    finally:
        if pool is not None:
            pool.shutdown()
    history.controller = state
    return history


def replay(record: HistoryRecord, evaluator) -> Evaluation:
    """Re-run one logged episode from its seeds."""
    return evaluator.evaluate(Candidate.from_dict(record.candidate), EpisodeSeeds(**record.seeds))


def best_record(history: Iterable[HistoryRecord], key: str = "reward") -> HistoryRecord:
    """Highest ``key`` among feasible records; earliest episode wins ties."""
    feasible = [r for r in history if r.error is None]
    if not feasible:
        raise ValueError("history has no feasible record")
    return min(feasible, key=lambda r: (-r.value(key), r.episode))


# -- fine-tuning -------------------------------------------------------------

@dataclass
class FineTuned:
    record: HistoryRecord
    candidate: Candidate
    net: object
    alpha: float
    alpha_var: float


def fine_tune_top_k(history: Iterable[HistoryRecord], k: int, epochs: int, evaluator: ChildEvaluator,
                    run_dir=None) -> list[FineTuned]:
    """Retrain the ``k`` best records (by accuracy under variation) for ``epochs`` more epochs.

    Each child is first rebuilt by replaying its logged training, then trained
    further, then scored with its logged evaluation seed.
    """
    feasible = [r for r in history if r.error is None]
    if not feasible and not list(history):
        raise ValueError("fine-tuning needs at least one record")
    top = sorted(feasible, key=lambda r: (-r.alpha_var, r.episode))[:k]
    out = []
    path = None
    if run_dir is not None:
        path = Path(run_dir) / "finetune.jsonl"
        path.unlink(missing_ok=True)
    for r in top:
        cand = Candidate.from_dict(r.candidate)
        seeds = EpisodeSeeds(**r.seeds)
        net = evaluator.train_candidate(cand, seeds, extra_epochs=epochs)
        alpha, alpha_var = evaluator.score(net, cand, seeds.eval)
        out.append(FineTuned(r, cand, net, alpha, alpha_var))
        if path is not None:
            with open(path, "a") as fh:
                fh.write(json.dumps({"episode": r.episode, "alpha_before": r.alpha, "alpha_var_before": r.alpha_var,
                                     "alpha": alpha, "alpha_var": alpha_var, "epochs": epochs,
                                     "candidate": r.candidate}, sort_keys=True, separators=(",", ":")) + "\n")
    return out


# -- phase two ---------------------------------------------------------------

def run_rnas(candidate: Candidate, net, evaluator: ChildEvaluator, space: SearchSpace, cfg: PhaseConfig,
             seed: int, reward_cfg: ctl.RewardConfig | None = None, run_dir=None) -> SearchHistory:
    """Quantization refinement of a trained candidate against the cost model.

    Record 0 scores the incoming quantization; ``cfg.rnas_steps`` sampled
    quantizations follow, with a controller update every ``cfg.batch_size``.
    All evaluations share one noise seed, so the reward is a deterministic
    function of the quantization.
    """
    mode = select_mode("rnas")
    sub = restrict_space(space, mode, candidate)
    reward_cfg = reward_cfg or ctl.RewardConfig(beta=cfg.beta)
    seeds = episode_seeds(seed, TAG_RNAS, 0)
    state = ctl.init_controller(sub.choice_counts, seed=seed + 1, hidden_size=cfg.hidden_size,
                                learning_rate=cfg.learning_rate, baseline_decay=cfg.update_rate, gamma=cfg.gamma)
    history = SearchHistory()
    if run_dir is not None:
        path = Path(run_dir) / "rnas.jsonl"
        path.unlink(missing_ok=True)
        history = SearchHistory(path)
    cache: dict = {}

    def assess(cand: Candidate) -> tuple[Evaluation, float]:
        if cand.bits not in cache:
            try:
                metrics = evaluator.hardware(cand)
                alpha, alpha_var = evaluator.score(net, cand, seeds.eval)
                ev = Evaluation(alpha, alpha_var, metrics)
            except _INFEASIBLE as exc:
                ev = Evaluation(0.0, 0.0, None, f"{type(exc).__name__}: {exc}")
            if ev.error is None:
                acc = ev.alpha_var if cfg.rnas_noise_aware else ev.alpha
                reward = ctl.compute_reward(acc, ev.metrics, reward_cfg)
            else:
                reward = 0.0
            cache[cand.bits] = (ev, reward)
        return cache[cand.bits]

    start = time.perf_counter()
    ev, reward = assess(candidate)
    history.append(_record(0, "rnas", encode(candidate, sub), candidate, ev, reward, seeds),
                   time.perf_counter() - start)
    done = 0
    while done < cfg.rnas_steps:
        rng = np.random.default_rng([seed, 100 + TAG_RNAS, done // cfg.batch_size])
        n = min(cfg.batch_size, cfg.rnas_steps - done)
        episodes = [ctl.sample_episode(state, rng) for _ in range(n)]
        for ep in episodes:
            start = time.perf_counter()
            cand = decode(ep.actions, sub)
            ev, ep.reward = assess(cand)
            done += 1
            history.append(_record(done, "rnas", ep.actions, cand, ev, ep.reward, seeds), time.perf_counter() - start)
        state = ctl.update(state, episodes)
    history.controller = state
    return history


# -- Pareto ------------------------------------------------------------------

def pareto_front(records: Sequence[HistoryRecord], objectives: Sequence[tuple[str, str]]) -> list[HistoryRecord]:
    """Nondominated records under ``objectives`` (``(key, "max" | "min")`` pairs), in episode order.

    Records lacking a value for some objective are ignored. Sorting by the
    signed objective vector means a record can only be dominated by one that
    precedes it, and checking against the running front suffices.
    """
    if not objectives:
        raise ValueError("need at least one objective")
    signs = []
    for key, sense in objectives:
        if sense not in ("max", "min"):
            raise ValueError(f"objective {key}: sense must be 'max' or 'min', got {sense!r}")
        signs.append(1.0 if sense == "max" else -1.0)
    points = []
    for i, r in enumerate(records):
        vals = [r.value(k) for k, _ in objectives]
        if any(v is None for v in vals):
            continue
        points.append((tuple(s * v for s, v in zip(signs, vals)), i))
    points.sort(key=lambda p: p[0], reverse=True)
    front: list[tuple[tuple, int]] = []
    for vec, i in points:
        dominated = any(all(f >= v for f, v in zip(fv, vec)) and fv != vec for fv, _ in front)
        if not dominated:
            front.append((vec, i))
    keep = sorted(i for _, i in front)
    return sorted((records[i] for i in keep), key=lambda r: r.episode)
