"""Knowledge-transfer strategies between pretrained and fresh TD3 agents.

Implements model transfer (exact parameter copy), feature transfer
(copy + freeze of the lower actor layers), instance transfer (replay
buffer merge), the integrated model+instance method, and exploration-free
fine-tuning of a transferred agent inside the live multi-cell environment.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import env as envm
from .agent import ReplayBuffer, Td3Agent, Transition, select_action, train_step
from .errors import ConfigurationError, DomainError, IncompatibleArchitectureError
from .runner import Policy, assemble_all_states, cell_normalizers, record_step

STRATEGIES = ("model", "feature", "instance", "integrated")
FINE_TUNE_NOISE = 0.1  # logit-space exploration std during fine-tuning


@dataclass(frozen=True)
class TransferPlan:
    source: int
    target: int
    strategy: str = "integrated"
    instance_fraction: float = 1.0
    frozen_layers: int = 1
    fine_tune_steps: int = 4000

    def __post_init__(self) -> None:
        if self.strategy not in STRATEGIES:
            raise ConfigurationError(f"unknown transfer strategy {self.strategy!r}")
        if not (0.0 <= self.instance_fraction <= 1.0):
            raise ConfigurationError("instance_fraction must lie in [0, 1]")
        if self.fine_tune_steps < 0:
            raise ConfigurationError("fine_tune_steps must be >= 0")


def _check_shapes(source: Td3Agent, target: Td3Agent) -> None:
    for name, net in source.networks().items():
        if net.sizes != target.networks()[name].sizes:
            raise IncompatibleArchitectureError(
                f"{name} shapes differ: source {net.sizes} vs "
                f"target {target.networks()[name].sizes}"
            )


def model_transfer(
    source: Td3Agent, target: Td3Agent, reset_optimizer: bool = True
) -> Td3Agent:
    """Copy all six networks from source to target; optimizer state resets."""

    _check_shapes(source, target)
    target.actor = source.actor.copy()
    target.q1 = source.q1.copy()
    target.q2 = source.q2.copy()
    target.target_actor = source.target_actor.copy()
    target.target_q1 = source.target_q1.copy()
    target.target_q2 = source.target_q2.copy()
    if reset_optimizer:
        target.actor_adam.reset()
        target.q1_adam.reset()
        target.q2_adam.reset()
    target.step_count = 0
    return target


def feature_transfer(
    source: Td3Agent, target: Td3Agent, frozen_layers: int
) -> Td3Agent:
    """Copy and freeze the lowest actor layers; the head stays fresh."""

    _check_shapes(source, target)
    if not (0 < frozen_layers < source.actor.n_layers):
        raise DomainError(
            f"frozen_layers must lie in (0, {source.actor.n_layers}), "
            f"got {frozen_layers}"
        )
    for i in range(frozen_layers):
        target.actor.weights[i] = source.actor.weights[i].copy()
        target.actor.biases[i] = source.actor.biases[i].copy()
        target.target_actor.weights[i] = source.actor.weights[i].copy()
        target.target_actor.biases[i] = source.actor.biases[i].copy()
    target.frozen_actor_layers = frozen_layers
    return target


def instance_transfer(
    source_buffer: ReplayBuffer,
    target_buffer: ReplayBuffer,
    fraction: float,
    seed: int,
) -> ReplayBuffer:
    """Append a uniform ceil(fraction * |source|) subsample, origin-tagged."""

    if not (0.0 <= fraction <= 1.0):
        raise DomainError(f"fraction must lie in [0, 1], got {fraction}")
    items = list(source_buffer)
    n = math.ceil(fraction * len(items))
    if n == 0:
        return target_buffer
    rng = np.random.default_rng(seed)
    idx = np.sort(rng.choice(len(items), size=n, replace=False))
    for i in idx:
        tr = items[i]
        target_buffer.add(
            Transition(tr.state, tr.action, tr.reward, tr.next_state,
                       origin=source_buffer.owner)
        )
    return target_buffer


def integrated_transfer(
    source: Td3Agent, target: Td3Agent, plan: TransferPlan, seed: int = 0
) -> Td3Agent:
    """Model transfer followed by instance transfer; target is fine-tune ready."""

    if plan.strategy != "integrated":
        raise ConfigurationError(
            f"integrated_transfer requires an integrated plan, got {plan.strategy!r}"
        )
    model_transfer(source, target)
    instance_transfer(source.buffer, target.buffer, plan.instance_fraction, seed)
    return target


def apply_transfer(
    source: Td3Agent, target: Td3Agent, plan: TransferPlan, seed: int = 0
) -> Td3Agent:
    """Dispatch to the strategy named in the plan."""

    if plan.strategy == "model":
        return model_transfer(source, target)
    if plan.strategy == "feature":
        return feature_transfer(source, target, plan.frozen_layers)
    if plan.strategy == "instance":
        instance_transfer(source.buffer, target.buffer, plan.instance_fraction, seed)
        return target
    return integrated_transfer(source, target, plan, seed)


def fine_tune(
    target: Td3Agent,
    scenario: envm.ScenarioConfig,
    peers: dict[int, Policy],
    steps: int,
    seed: int,
    noise_scale: float = FINE_TUNE_NOISE,
    collect_records: bool = False,
):
    """Train the target agent in the live network without an exploration phase.

    Non-target cells act through the given peer policies. Returns
    ``(target, reward_trace)`` and, when requested, the per-step records
    of all cells.
    """

    for c in scenario.cells:
        if c.cell_id != target.cell_id and c.cell_id not in peers:
            raise ConfigurationError(f"missing peer policy for cell {c.cell_id}")

    normalizers = cell_normalizers(scenario)
    net_state = envm.init_network(scenario, seed)
    states = assemble_all_states(scenario, net_state, normalizers)
    trace = np.zeros(steps)
    records = []
    cfg = target.config
    for t in range(1, steps + 1):
        actions = {}
        for c in scenario.cells:
            if c.cell_id == target.cell_id:
                actions[c.cell_id] = select_action(
                    target, states[c.cell_id], explore=True,
                    noise_scale=noise_scale,
                )
            else:
                actions[c.cell_id] = peers[c.cell_id](states[c.cell_id], t)
        ordered = [actions[c.cell_id] for c in scenario.cells]
        net_state, rewards = envm.step(net_state, ordered, scenario)
        new_states = assemble_all_states(scenario, net_state, normalizers)
        idx = scenario.cell_ids.index(target.cell_id)
        target.buffer.add(
            Transition(
                states[target.cell_id], actions[target.cell_id].shares,
                float(rewards[idx]), new_states[target.cell_id],
                origin=target.cell_id,
            )
        )
        if len(target.buffer) >= cfg.batch_size:
            for _ in range(cfg.updates_per_step):
                train_step(target, target.buffer.sample(cfg.batch_size))
        target.step_count += 1
        trace[t - 1] = rewards[idx]
        if collect_records:
            records.extend(
                record_step(scenario, t, states, actions, net_state, rewards)
            )
        states = new_states
    if collect_records:
        return target, trace, records
    return target, trace
