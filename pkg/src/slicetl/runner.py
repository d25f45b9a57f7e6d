"""Shared multi-agent rollout machinery: messages, state assembly, traces."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .agent import Message, Normalizers, assemble_state, extract_neighbor_features
from .env import NetworkState, PartitionAction, ScenarioConfig, SliceMetrics

Policy = Callable[[np.ndarray, int], PartitionAction]  # (state_vec, t) -> action


@dataclass(frozen=True)
class StepRecord:
    """One (cell, step) observation as logged by every experiment run."""

    t: int
    cell_id: int
    state: np.ndarray  # assembled 4N state the agent acted on
    action: np.ndarray
    reward: float
    metrics: tuple[SliceMetrics, ...]


def cell_normalizers(scenario: ScenarioConfig) -> dict[int, Normalizers]:
    return {
        c.cell_id: Normalizers(c.max_throughput_target, c.max_ues_per_slice)
        for c in scenario.cells
    }


def assemble_all_states(
    scenario: ScenarioConfig,
    net_state: NetworkState,
    normalizers: dict[int, Normalizers] | None = None,
) -> dict[int, np.ndarray]:
    """Per-cell agent states from one network snapshot.

    All messages for the step are produced before any state is assembled,
    matching the step-barrier message exchange.
    """

    normalizers = normalizers or cell_normalizers(scenario)
    messages = {
        c.cell_id: Message(
            c.cell_id,
            np.array([m.load for m in net_state.per_cell[i]]),
        )
        for i, c in enumerate(scenario.cells)
    }
    states = {}
    for i, c in enumerate(scenario.cells):
        features = extract_neighbor_features(
            [messages[j] for j in c.neighbor_ids], scenario.n_slices
        )
        states[c.cell_id] = assemble_state(
            net_state.per_cell[i], features, normalizers[c.cell_id]
        )
    return states


def record_step(
    scenario: ScenarioConfig,
    t: int,
    states: dict[int, np.ndarray],
    actions: dict[int, PartitionAction],
    new_state: NetworkState,
    rewards: np.ndarray,
) -> list[StepRecord]:
    return [
        StepRecord(
            t, c.cell_id, states[c.cell_id], actions[c.cell_id].shares,
            float(rewards[i]), new_state.per_cell[i],
        )
        for i, c in enumerate(scenario.cells)
    ]
