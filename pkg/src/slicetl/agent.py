"""Per-cell TD3 agent with replay buffer and neighbor-load coordination.

Each agent owns six networks (actor, twin critics, and their targets).
Actions live on the probability simplex; exploration and target-policy
smoothing both perturb pre-softmax logits so every emitted action stays
simplex-valid by construction.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from . import nn
from .env import PartitionAction, SliceMetrics
from .errors import (
    DimensionError,
    DomainError,
    EmptySetError,
    NumericError,
)

BUFFER_VERSION = 1


@dataclass(frozen=True)
class Message:
    """Per-slice load broadcast by one cell to its neighbors."""

    sender: int
    per_slice_load: np.ndarray

    def __post_init__(self) -> None:
        loads = np.asarray(self.per_slice_load, dtype=np.float64)
        object.__setattr__(self, "per_slice_load", loads)
        if np.any(loads < 0) or np.any(loads > 1):
            raise DomainError(f"message loads must lie in [0, 1], got {loads}")


def extract_neighbor_features(messages: Sequence[Message], n_slices: int) -> np.ndarray:
    """Mean per-slice neighbor load; zero vector for an isolated cell."""

    if not messages:
        return np.zeros(n_slices)
    loads = np.stack([m.per_slice_load for m in messages])
    if loads.shape[1] != n_slices:
        raise DimensionError("inconsistent slice count across messages")
    return loads.mean(axis=0)


@dataclass(frozen=True)
class Normalizers:
    """Feature scales for state assembly."""

    throughput: float  # typically the cell's max slice throughput target
    max_ues: int

    def __post_init__(self) -> None:
        if self.throughput <= 0 or self.max_ues <= 0:
            raise DomainError("normalizers must be positive")


def assemble_state(
    metrics: Sequence[SliceMetrics],
    neighbor_features: np.ndarray,
    normalizers: Normalizers,
) -> np.ndarray:
    """Local state [throughput, load, ues | mean neighbor load], length 4N."""

    n = len(metrics)
    if len(neighbor_features) != n:
        raise DimensionError("neighbor feature length must equal slice count")
    tp = np.array([m.throughput for m in metrics]) / normalizers.throughput
    load = np.array([m.load for m in metrics])
    ues = np.array([m.ue_count for m in metrics]) / normalizers.max_ues
    return np.concatenate([tp, load, ues, np.asarray(neighbor_features, dtype=np.float64)])


@dataclass(frozen=True)
class Transition:
    state: np.ndarray
    action: np.ndarray
    reward: float
    next_state: np.ndarray
    origin: int  # agent id that experienced this transition


class ReplayBuffer:
    """Bounded transition store with seeded uniform sampling.

    Eviction is oldest-first, except that foreign (transferred) transitions
    are evicted before the owner's once the owner has contributed at least
    ``evict_threshold`` of its own.
    """

    def __init__(
        self,
        capacity: int,
        seed: int,
        owner: int,
        evict_threshold: int = 32,
    ) -> None:
        if capacity < 1:
            raise DomainError("buffer capacity must be >= 1")
        self.capacity = capacity
        self.owner = owner
        self.evict_threshold = evict_threshold
        self._rng = np.random.default_rng(seed)
        self._items: list[Transition] = []
        self._own_count = 0

    def __len__(self) -> int:
        return len(self._items)

    def __iter__(self):
        return iter(self._items)

    def origin_counts(self) -> dict[int, int]:
        counts: dict[int, int] = {}
        for tr in self._items:
            counts[tr.origin] = counts.get(tr.origin, 0) + 1
        return counts

    def add(self, transition: Transition) -> None:
        if len(self._items) >= self.capacity:
            self._evict()
        self._items.append(transition)
        if transition.origin == self.owner:
            self._own_count += 1

    def _evict(self) -> None:
        if self._own_count >= self.evict_threshold:
            for i, tr in enumerate(self._items):
                if tr.origin != self.owner:
                    del self._items[i]
                    return
        victim = self._items.pop(0)
        if victim.origin == self.owner:
            self._own_count -= 1

    def sample(self, batch_size: int) -> list[Transition]:
        if not self._items:
            raise EmptySetError("cannot sample from an empty replay buffer")
        idx = self._rng.integers(0, len(self._items), size=batch_size)
        return [self._items[i] for i in idx]

    def export(self, path) -> None:
        """Persist as npz with a fixed field order and version tag."""

        np.savez(
            path,
            version=np.array(BUFFER_VERSION),
            owner=np.array(self.owner),
            states=np.stack([t.state for t in self._items])
            if self._items else np.zeros((0, 0)),
            actions=np.stack([t.action for t in self._items])
            if self._items else np.zeros((0, 0)),
            rewards=np.array([t.reward for t in self._items]),
            next_states=np.stack([t.next_state for t in self._items])
            if self._items else np.zeros((0, 0)),
            origins=np.array([t.origin for t in self._items], dtype=np.int64),
        )

    @classmethod
    def load(
        cls, path, capacity: int, seed: int, evict_threshold: int = 32
    ) -> "ReplayBuffer":
        with np.load(path, allow_pickle=False) as data:
            if int(data["version"]) != BUFFER_VERSION:
                raise DomainError(f"unsupported buffer version {data['version']}")
            buf = cls(capacity, seed, int(data["owner"]), evict_threshold)
            for s, a, r, s2, o in zip(
                data["states"], data["actions"], data["rewards"],
                data["next_states"], data["origins"],
            ):
                buf.add(Transition(s, a, float(r), s2, int(o)))
        return buf


@dataclass(frozen=True)
class Td3Config:
    gamma: float = 0.1
    actor_lr: float = 5e-4
    critic_lr: float = 1e-3
    batch_size: int = 32
    policy_delay: int = 2
    target_noise: float = 0.1  # logit-space std for target smoothing
    noise_clip: float = 0.2
    tau: float = 0.005
    buffer_capacity: int = 20_000
    explore_noise: float = 0.3  # logit-space std at the start of training
    explore_noise_final: float = 0.05  # std after linear decay
    updates_per_step: int = 8  # gradient updates per environment slot
    actor_hidden: tuple[int, int] = (48, 24)
    critic_hidden: tuple[int, int] = (64, 24)


class Td3Agent:
    """TD3 learner for one cell's resource partitioning."""

    def __init__(self, cell_id: int, n_slices: int, config: Td3Config, seed: int):
        self.cell_id = cell_id
        self.n_slices = n_slices
        self.config = config
        state_dim = 4 * n_slices
        ss = np.random.SeedSequence(seed)
        init_rng, self.explore_rng, buffer_seed = (
            np.random.default_rng(ss.spawn(1)[0]),
            np.random.default_rng(ss.spawn(1)[0]),
            ss.spawn(1)[0].generate_state(1)[0],
        )
        actor_sizes = [state_dim, *config.actor_hidden, n_slices]
        critic_sizes = [state_dim + n_slices, *config.critic_hidden, 1]
        self.actor = nn.init_mlp(actor_sizes, "softmax", init_rng)
        self.q1 = nn.init_mlp(critic_sizes, "identity", init_rng)
        self.q2 = nn.init_mlp(critic_sizes, "identity", init_rng)
        self.target_actor = self.actor.copy()
        self.target_q1 = self.q1.copy()
        self.target_q2 = self.q2.copy()
        self.actor_adam = nn.AdamState.for_params(self.actor)
        self.q1_adam = nn.AdamState.for_params(self.q1)
        self.q2_adam = nn.AdamState.for_params(self.q2)
        self.buffer = ReplayBuffer(
            config.buffer_capacity, int(buffer_seed), owner=cell_id,
            evict_threshold=config.batch_size,
        )
        self.step_count = 0
        self.train_calls = 0
        self.frozen_actor_layers = 0

    def networks(self) -> dict[str, nn.Mlp]:
        return {
            "actor": self.actor, "q1": self.q1, "q2": self.q2,
            "target_actor": self.target_actor,
            "target_q1": self.target_q1, "target_q2": self.target_q2,
        }


def select_action(
    agent: Td3Agent,
    state: np.ndarray,
    explore: bool = False,
    rng: np.random.Generator | None = None,
    noise_scale: float | None = None,
) -> PartitionAction:
    """Deterministic actor output, optionally with logit-space Gaussian noise."""

    state = np.asarray(state, dtype=np.float64)
    if state.shape != (agent.actor.in_dim,):
        raise DimensionError(
            f"state length {state.shape} does not match actor input "
            f"{agent.actor.in_dim}"
        )
    logits = nn.mlp_logits(agent.actor, state)
    if explore:
        rng = rng if rng is not None else agent.explore_rng
        scale = agent.config.explore_noise if noise_scale is None else noise_scale
        logits = logits + scale * rng.standard_normal(logits.shape)
    return PartitionAction(nn.softmax(logits))


def soft_update(target: nn.Mlp, online: nn.Mlp, tau: float) -> nn.Mlp:
    """In-place Polyak averaging: target <- tau * online + (1 - tau) * target."""

    if not (0.0 <= tau <= 1.0):
        raise DomainError(f"tau must lie in [0, 1], got {tau}")
    if target.sizes != online.sizes:
        raise DimensionError("target/online shapes differ")
    for tw, ow in zip(target.weights, online.weights):
        tw *= 1.0 - tau
        tw += tau * ow
    for tb, ob in zip(target.biases, online.biases):
        tb *= 1.0 - tau
        tb += tau * ob
    return target


def _batch_arrays(batch: Sequence[Transition]):
    s = np.stack([t.state for t in batch])
    a = np.stack([t.action for t in batch])
    r = np.array([t.reward for t in batch])
    s2 = np.stack([t.next_state for t in batch])
    return s, a, r, s2


def train_step(
    agent: Td3Agent, batch: Sequence[Transition]
) -> tuple[float, float, float | None]:
    """One TD3 update from a batch; returns (q1 loss, q2 loss, actor loss).

    The actor (and the target nets) update only every ``policy_delay``-th
    call; on other calls the third element is None.
    """

    if len(batch) < 1:
        raise EmptySetError("training batch must contain at least one transition")
    cfg = agent.config
    s, a, r, s2 = _batch_arrays(batch)
    b = len(batch)

    # Target action with clipped logit noise, then the pessimistic target.
    logits2 = nn.mlp_logits(agent.target_actor, s2)
    noise = np.clip(
        cfg.target_noise * agent.explore_rng.standard_normal(logits2.shape),
        -cfg.noise_clip, cfg.noise_clip,
    )
    a2 = nn.softmax(logits2 + noise)
    q1_t, _ = nn.mlp_forward(agent.target_q1, np.hstack([s2, a2]))
    q2_t, _ = nn.mlp_forward(agent.target_q2, np.hstack([s2, a2]))
    y = r + cfg.gamma * np.minimum(q1_t[:, 0], q2_t[:, 0])
    if not np.all(np.isfinite(y)):
        raise NumericError("non-finite critic target; step aborted")

    sa = np.hstack([s, a])
    losses = []
    updates = []
    for critic, adam in ((agent.q1, agent.q1_adam), (agent.q2, agent.q2_adam)):
        q, cache = nn.mlp_forward(critic, sa)
        err = q[:, 0] - y
        loss = float(np.mean(err * err))
        if not math.isfinite(loss):
            raise NumericError("non-finite critic loss; step aborted")
        grads, _ = nn.mlp_backward(critic, cache, (2.0 * err / b)[:, None])
        updates.append((adam, critic, grads))
        losses.append(loss)
    for adam, critic, grads in updates:
        nn.adam_step(adam, critic, grads, cfg.critic_lr)

    agent.train_calls += 1
    actor_loss = None
    if agent.train_calls % cfg.policy_delay == 0:
        pi, actor_cache = nn.mlp_forward(agent.actor, s)
        q, q_cache = nn.mlp_forward(agent.q1, np.hstack([s, pi]))
        actor_loss = float(-np.mean(q))
        if not math.isfinite(actor_loss):
            raise NumericError("non-finite actor loss; step aborted")
        _, dinput = nn.mlp_backward(
            agent.q1, q_cache, np.full((b, 1), -1.0 / b)
        )
        da = dinput[:, s.shape[1]:]
        actor_grads, _ = nn.mlp_backward(agent.actor, actor_cache, da)
        nn.adam_step(
            agent.actor_adam, agent.actor, actor_grads, cfg.actor_lr,
            skip_layers=frozenset(range(agent.frozen_actor_layers)),
        )
        soft_update(agent.target_actor, agent.actor, cfg.tau)
        soft_update(agent.target_q1, agent.q1, cfg.tau)
        soft_update(agent.target_q2, agent.q2, cfg.tau)
    return losses[0], losses[1], actor_loss


# ---------------------------------------------------------------------------
# Agent persistence.
# ---------------------------------------------------------------------------


def save_agent(agent: Td3Agent, path) -> None:
    meta = {
        "cell_id": agent.cell_id,
        "n_slices": agent.n_slices,
        "step_count": agent.step_count,
        "frozen_actor_layers": agent.frozen_actor_layers,
        "config": asdict(agent.config),
    }
    nn.save_checkpoint(
        path,
        agent.networks(),
        {
            "actor": agent.actor_adam,
            "q1": agent.q1_adam,
            "q2": agent.q2_adam,
        },
        meta,
    )


def load_agent(path, seed: int = 0) -> Td3Agent:
    nets, adams, meta = nn.load_checkpoint(path)
    cfg_dict = dict(meta["config"])
    cfg_dict["actor_hidden"] = tuple(cfg_dict["actor_hidden"])
    cfg_dict["critic_hidden"] = tuple(cfg_dict["critic_hidden"])
    config = Td3Config(**cfg_dict)
    agent = Td3Agent(meta["cell_id"], meta["n_slices"], config, seed)
    agent.actor = nets["actor"]
    agent.q1 = nets["q1"]
    agent.q2 = nets["q2"]
    agent.target_actor = nets["target_actor"]
    agent.target_q1 = nets["target_q1"]
    agent.target_q2 = nets["target_q2"]
    agent.actor_adam = adams["actor"]
    agent.q1_adam = adams["q1"]
    agent.q2_adam = adams["q2"]
    agent.step_count = meta["step_count"]
    agent.frozen_actor_layers = meta["frozen_actor_layers"]
    return agent
