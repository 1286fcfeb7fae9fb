"""Recurrent REINFORCE controller and the composite reward.

The policy is a single GRU cell unrolled over the decision steps. Step ``t``
reads the embedding of the previous action (a learned start vector at
``t = 0``) and emits logits through its own output head, sized to that
step's choice count. Heads start at zero, so the initial policy is uniform.

Policy update (plain gradient ascent)::

    grad = 1/m * sum_k sum_t gamma**(T - t) * dlog pi(a_t | a_<t) * (R_k - b)

followed by ``b <- (1 - decay) * b + decay * mean(R)``. With ``warm_start``
the baseline is set to the first batch's mean reward before that batch's
gradient is taken, so early advantages are not all positive.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

__all__ = [
    "RewardConfig",
    "RewardError",
    "ControllerState",
    "EpisodeRecord",
    "init_controller",
    "step_distributions",
    "sample_episode",
    "greedy_actions",
    "sequence_log_prob",
    "surrogate",
    "policy_gradient",
    "update",
    "baseline_update",
    "compute_reward",
    "hardware_score",
    "save_checkpoint",
    "load_checkpoint",
    "CHECKPOINT_VERSION",
]

log = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1
_GRU = ("Wz", "Wr", "Wn", "Uz", "Ur", "Un", "bz", "br", "bn", "bhn")


class RewardError(ValueError):
    pass


@dataclass(frozen=True)
class RewardConfig:
    beta: float = 0.5
    weights: tuple = (1 / 3, 1 / 3, 1 / 3)  # latency, energy, area
    refs: tuple = (1e6, 1e7, 1e7)  # ns, pJ, um^2

    def __post_init__(self):
        if not 0.0 <= self.beta <= 1.0:
            raise RewardError(f"beta {self.beta} outside [0, 1]")
        if len(self.weights) != 3 or any(w < 0 for w in self.weights):
            raise RewardError("need three non-negative metric weights")
        if abs(sum(self.weights) - 1.0) > 1e-9:
            raise RewardError(f"metric weights sum to {sum(self.weights)}, not 1")
        if len(self.refs) != 3 or any(r <= 0 for r in self.refs):
            raise RewardError("need three positive reference values")

    @classmethod
    def single(cls, metric: str, ref: float, beta: float = 0.5) -> "RewardConfig":
        """Bi-objective preset: accuracy plus one of latency/energy/area."""
        idx = ("latency", "energy", "area").index(metric)
        weights = [0.0, 0.0, 0.0]
        weights[idx] = 1.0
        refs = [1.0, 1.0, 1.0]
        refs[idx] = ref
        return cls(beta, tuple(weights), tuple(refs))


def hardware_score(metrics, cfg: RewardConfig) -> float:
    """Higher-is-better merge of latency, energy and area."""
    values = (metrics.latency_ns, metrics.energy_pj, metrics.area_um2)
    return sum(w * max(0.0, 1.0 - v / r) for w, v, r in zip(cfg.weights, values, cfg.refs))


def compute_reward(alpha: float, metrics, cfg: RewardConfig) -> float:
    if not 0.0 <= alpha <= 1.0:
        raise RewardError(f"accuracy {alpha} outside [0, 1]")
    if cfg.beta == 1.0:
        return alpha
    if metrics is None:
        raise RewardError("hardware metrics are required when beta < 1")
    return cfg.beta * alpha + (1.0 - cfg.beta) * hardware_score(metrics, cfg)


@dataclass(frozen=True)
class ControllerState:
    params: dict
    choice_counts: tuple
    hidden_size: int = 64
    embed_size: int = 64
    learning_rate: float = 0.01
    baseline_decay: float = 0.2
    gamma: float = 1.0
    baseline: float = 0.0
    updates: int = 0
    warm_start: bool = True

    def copy(self) -> "ControllerState":
        return replace(self, params=_copy_params(self.params))


@dataclass
class EpisodeRecord:
    actions: tuple
    log_probs: tuple
    reward: float | None = None
    metrics: dict | None = None

    @property
    def log_prob(self) -> float:
        return float(sum(self.log_probs))


def _copy_params(params: dict) -> dict:
    return {k: ([a.copy() for a in v] if isinstance(v, list) else v.copy()) for k, v in params.items()}


def init_controller(choice_counts: Sequence[int], seed: int = 0, hidden_size: int = 64,
                    embed_size: int | None = None, learning_rate: float = 0.01,
                    baseline_decay: float = 0.2, gamma: float = 1.0, init_scale: float = 0.1,
                    warm_start: bool = True) -> ControllerState:
    if not choice_counts or any(n < 1 for n in choice_counts):
        raise ValueError("every step needs at least one choice")
    if not 0.0 < gamma <= 1.0:
        raise ValueError("gamma must be in (0, 1]")
    e = hidden_size if embed_size is None else embed_size
    h = hidden_size
    rng = np.random.default_rng(seed)
    u = lambda *shape: rng.uniform(-init_scale, init_scale, size=shape)
    params = {
        "start": u(e),
        "emb": [u(n, e) for n in choice_counts],
        "Wz": u(h, e), "Wr": u(h, e), "Wn": u(h, e),
        "Uz": u(h, h), "Ur": u(h, h), "Un": u(h, h),
        "bz": np.zeros(h), "br": np.zeros(h), "bn": np.zeros(h), "bhn": np.zeros(h),
        "Wo": [np.zeros((n, h)) for n in choice_counts],
        "bo": [np.zeros(n) for n in choice_counts],
    }
    return ControllerState(params, tuple(int(n) for n in choice_counts), h, e,
                           learning_rate, baseline_decay, gamma, warm_start=warm_start)


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def _softmax(z):
    z = z - z.max()
    p = np.exp(z)
    return p / p.sum()


def _gru(p: dict, x: np.ndarray, h: np.ndarray):
    z = _sigmoid(p["Wz"] @ x + p["Uz"] @ h + p["bz"])
    r = _sigmoid(p["Wr"] @ x + p["Ur"] @ h + p["br"])
    hn = p["Un"] @ h + p["bhn"]
    n = np.tanh(p["Wn"] @ x + p["bn"] + r * hn)
    return (1.0 - z) * n + z * h, (x, h, z, r, n, hn)


def _rollout(state: ControllerState, actions: Sequence[int] | None, rng=None, greedy=False):
    """Run the policy; either follow ``actions`` or choose them. Returns actions, probs, caches."""
    p = state.params
    h = np.zeros(state.hidden_size)
    x = p["start"]
    chosen, probs, caches = [], [], []
    for t, n in enumerate(state.choice_counts):
        h, cache = _gru(p, x, h)
        pt = _softmax(p["Wo"][t] @ h + p["bo"][t])
        if actions is not None:
            a = int(actions[t])
        elif greedy:
            a = int(np.argmax(pt))
        else:
            a = int(min(np.searchsorted(np.cumsum(pt), rng.random(), side="right"), n - 1))
        chosen.append(a)
        probs.append(pt)
        caches.append((cache, h))
        x = p["emb"][t][a]
    return tuple(chosen), probs, caches


def step_distributions(state: ControllerState, actions: Sequence[int]) -> list[np.ndarray]:
    """Per-step action distributions along a given action prefix."""
    return _rollout(state, actions)[1]


def sample_episode(state: ControllerState, rng: np.random.Generator) -> EpisodeRecord:
    actions, probs, _ = _rollout(state, None, rng)
    return EpisodeRecord(actions, tuple(float(np.log(pt[a])) for pt, a in zip(probs, actions)))


def greedy_actions(state: ControllerState) -> tuple:
    return _rollout(state, None, greedy=True)[0]


def sequence_log_prob(state: ControllerState, actions: Sequence[int]) -> float:
    probs = step_distributions(state, actions)
    return float(sum(np.log(pt[a]) for pt, a in zip(probs, actions)))


def _discounts(state: ControllerState) -> np.ndarray:
    T = len(state.choice_counts)
    return state.gamma ** (T - np.arange(1, T + 1))


def surrogate(state: ControllerState, episodes: Sequence[EpisodeRecord]) -> float:
    """``1/m * sum_k sum_t gamma**(T-t) * log pi(a_t) * (R_k - b)``; its gradient is the update direction."""
    disc = _discounts(state)
    total = 0.0
    for ep in episodes:
        probs = step_distributions(state, ep.actions)
        lp = np.array([np.log(pt[a]) for pt, a in zip(probs, ep.actions)])
        total += float(disc @ lp) * (ep.reward - state.baseline)
    return total / len(episodes)


def _zeros_like(params: dict) -> dict:
    return {k: ([np.zeros_like(a) for a in v] if isinstance(v, list) else np.zeros_like(v))
            for k, v in params.items()}


def policy_gradient(state: ControllerState, episodes: Sequence[EpisodeRecord]) -> dict:
    """Analytic gradient of :func:`surrogate` by backpropagation through time."""
    p = state.params
    g = _zeros_like(p)
    disc = _discounts(state)
    m = len(episodes)
    for ep in episodes:
        adv = (ep.reward - state.baseline) / m
        if adv == 0.0:
            continue
        actions = ep.actions
        _, probs, caches = _rollout(state, actions)
        dh = np.zeros(state.hidden_size)
        for t in reversed(range(len(actions))):
            (x, h_prev, z, r, n, hn), h = caches[t]
            dlogits = -probs[t] * (disc[t] * adv)
            dlogits[actions[t]] += disc[t] * adv
            g["Wo"][t] += np.outer(dlogits, h)
            g["bo"][t] += dlogits
            dh = dh + p["Wo"][t].T @ dlogits
            dn = dh * (1.0 - z)
            dz = dh * (h_prev - n)
            dh_prev = dh * z
            dan = dn * (1.0 - n * n)
            g["Wn"] += np.outer(dan, x)
            g["bn"] += dan
            dr = dan * hn
            dhn = dan * r
            g["Un"] += np.outer(dhn, h_prev)
            g["bhn"] += dhn
            dh_prev += p["Un"].T @ dhn
            dx = p["Wn"].T @ dan
            daz = dz * z * (1.0 - z)
            g["Wz"] += np.outer(daz, x)
            g["Uz"] += np.outer(daz, h_prev)
            g["bz"] += daz
            dh_prev += p["Uz"].T @ daz
            dx += p["Wz"].T @ daz
            dar = dr * r * (1.0 - r)
            g["Wr"] += np.outer(dar, x)
            g["Ur"] += np.outer(dar, h_prev)
            g["br"] += dar
            dh_prev += p["Ur"].T @ dar
            dx += p["Wr"].T @ dar
            if t == 0:
                g["start"] += dx
            else:
                g["emb"][t - 1][actions[t - 1]] += dx
            dh = dh_prev
    return g


def _finite(g: dict) -> bool:
    for v in g.values():
        for a in (v if isinstance(v, list) else [v]):
            if not np.all(np.isfinite(a)):
                return False
    return True


def baseline_update(state: ControllerState, batch_mean_reward: float) -> ControllerState:
    d = state.baseline_decay
    return replace(state, baseline=(1.0 - d) * state.baseline + d * batch_mean_reward)


def update(state: ControllerState, episodes: Sequence[EpisodeRecord]) -> ControllerState:
    """One policy-gradient ascent step on a batch of rewarded episodes, then the baseline EMA."""
    if not episodes:
        raise ValueError("update needs at least one episode")
    if any(ep.reward is None for ep in episodes):
        raise ValueError("every episode needs a reward before the update")
    mean_reward = float(np.mean([ep.reward for ep in episodes]))
    before = state
    if state.warm_start and state.updates == 0:
        state = replace(state, baseline=mean_reward)
    g = policy_gradient(state, episodes)
    if not (_finite(g) and math.isfinite(mean_reward)):
        # leave both the policy and the baseline alone so b stays finite
        log.warning("non-finite policy gradient at update %d; step skipped", state.updates)
        return before.copy()
    params = _copy_params(state.params)
    lr = state.learning_rate
    for k, v in g.items():
        if isinstance(v, list):
            for a, ga in zip(params[k], v):
                a += lr * ga
        else:
            params[k] += lr * v
    new = replace(state, params=params, updates=state.updates + 1)
    return baseline_update(new, mean_reward)


def save_checkpoint(path, state: ControllerState, extra: dict | None = None) -> None:
    arrays = {"_version": np.array(CHECKPOINT_VERSION),
              "_choice_counts": np.array(state.choice_counts, dtype=np.int64),
              "_scalars": np.array([state.hidden_size, state.embed_size, state.learning_rate,
                                    state.baseline_decay, state.gamma, state.baseline, state.updates,
                                    float(state.warm_start)],
                                   dtype=np.float64)}
    for k, v in state.params.items():
        if isinstance(v, list):
            for i, a in enumerate(v):
                arrays[f"{k}.{i}"] = a
        else:
            arrays[k] = v
    for k, v in (extra or {}).items():
        arrays[f"_extra.{k}"] = np.asarray(v)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_checkpoint(path) -> tuple[ControllerState, dict]:
    with np.load(path) as z:
        version = int(z["_version"])
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"checkpoint version {version}, expected {CHECKPOINT_VERSION}")
        counts = tuple(int(n) for n in z["_choice_counts"])
        hs, es, lr, decay, gamma, b, ups, warm = z["_scalars"]
        params = {k: z[k].copy() for k in ("start",) + _GRU}
        params["emb"] = [z[f"emb.{i}"].copy() for i in range(len(counts))]
        params["Wo"] = [z[f"Wo.{i}"].copy() for i in range(len(counts))]
        params["bo"] = [z[f"bo.{i}"].copy() for i in range(len(counts))]
        extra = {k[len("_extra."):]: z[k] for k in z.files if k.startswith("_extra.")}
    state = ControllerState(params, counts, int(hs), int(es), float(lr), float(decay), float(gamma),
                            float(b), int(ups), bool(warm))
    return state, extra
