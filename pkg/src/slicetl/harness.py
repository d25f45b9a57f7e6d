"""Experiment orchestration: baseline, MADRL training, similarity, transfer.

Each run writes into its own output directory: ``metrics.csv`` (one row per
step/cell/slice), evaluation CDFs, checkpoints/buffers where applicable,
and ``run_meta.json`` echoing the configuration and recording provenance
such as the selected transfer source.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__, env as envm, similarity as simm
from .agent import (
    Td3Agent,
    Transition,
    load_agent,
    ReplayBuffer,
    save_agent,
    select_action,
    train_step,
)
from .env import PartitionAction, ScenarioConfig, equal_partition
from .errors import ConfigurationError, DependencyError, SliceTlError
from .runner import (
    Policy,
    StepRecord,
    assemble_all_states,
    cell_normalizers,
    record_step,
)
from .scenario import ExperimentConfig, config_to_dict
from .transfer import TransferPlan, fine_tune, integrated_transfer

TRACE_VERSION = 1


@dataclass
class RunMetrics:
    """Everything a run produced that downstream steps may consume."""

    records: list[StepRecord]
    eval_records: list[StepRecord]
    extras: dict


# ---------------------------------------------------------------------------
# CSV / artifact IO
# ---------------------------------------------------------------------------


def write_metrics_csv(path, records: Sequence[StepRecord]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["t", "cell", "slice", "throughput", "delay", "load", "ues",
             "share", "reward"]
        )
        for rec in records:
            for n, m in enumerate(rec.metrics):
                writer.writerow([
                    rec.t, rec.cell_id, n, repr(m.throughput), repr(m.delay),
                    repr(m.load), m.ue_count, repr(float(rec.action[n])),
                    repr(rec.reward),
                ])


def empirical_cdf(values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Sorted sample values and their empirical CDF levels."""

    values = np.sort(np.asarray(values, dtype=np.float64))
    levels = np.arange(1, values.size + 1) / values.size
    return values, levels


def write_cdf_csv(path, values: np.ndarray, column: str) -> None:
    xs, ps = empirical_cdf(values)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([column, "cdf"])
        for x, p in zip(xs, ps):
            writer.writerow([repr(float(x)), repr(float(p))])


def write_run_meta(out: Path, cfg: ExperimentConfig, seed: int, **extra) -> None:
    meta = {
        "slicetl_version": __version__,
        "numpy_version": np.__version__,
        "seed": seed,
        "config": config_to_dict(cfg),
    }
    meta.update(extra)
    (out / "run_meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True))


def save_trace(path, records: Sequence[StepRecord]) -> None:
    np.savez(
        path,
        version=np.array(TRACE_VERSION),
        t=np.array([r.t for r in records]),
        cell=np.array([r.cell_id for r in records]),
        states=np.stack([r.state for r in records]),
        actions=np.stack([r.action for r in records]),
        rewards=np.array([r.reward for r in records]),
    )


def load_trace(path) -> list[StepRecord]:
    path = Path(path)
    if not path.exists():
        raise DependencyError(f"trace file {path} does not exist")
    with np.load(path, allow_pickle=False) as data:
        if int(data["version"]) != TRACE_VERSION:
            raise DependencyError(f"unsupported trace version {data['version']}")
        return [
            StepRecord(int(t), int(c), s, a, float(r), ())
            for t, c, s, a, r in zip(
                data["t"], data["cell"], data["states"], data["actions"],
                data["rewards"],
            )
        ]


# ---------------------------------------------------------------------------
# Policy helpers
# ---------------------------------------------------------------------------


def greedy_policy(agent: Td3Agent) -> Policy:
    def policy(state: np.ndarray, t: int) -> PartitionAction:
        return select_action(agent, state, explore=False)

    return policy


def constant_policy(action: PartitionAction) -> Policy:
    return lambda state, t: action


def _baseline_policies(
    scenario: ScenarioConfig, demand_lookup: dict
) -> dict[int, Policy]:
    # Baseline needs next-step demands; the caller refreshes demand_lookup
    # before each step via env.peek_demands.
    return {
        c.cell_id: (lambda s, t, cid=c.cell_id:
                    envm.baseline_action(demand_lookup[cid]))
        for c in scenario.cells
    }


def rollout(
    scenario: ScenarioConfig,
    policies: dict[int, Policy],
    steps: int,
    seed: int,
    perfect_demand: bool = False,
    demand_lookup: dict | None = None,
) -> list[StepRecord]:
    """Run fixed policies for ``steps`` slots and log every cell's metrics."""

    normalizers = cell_normalizers(scenario)
    state = envm.init_network(scenario, seed)
    states = assemble_all_states(scenario, state, normalizers)
    records: list[StepRecord] = []
    for t in range(1, steps + 1):
        if perfect_demand:
            demand_lookup.update(envm.peek_demands(state, scenario))
        actions = {
            c.cell_id: policies[c.cell_id](states[c.cell_id], t)
            for c in scenario.cells
        }
        ordered = [actions[c.cell_id] for c in scenario.cells]
        state, rewards = envm.step(state, ordered, scenario)
        records.extend(record_step(scenario, t, states, actions, state, rewards))
        states = assemble_all_states(scenario, state, normalizers)
    return records


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------


@dataclass
class EvalSummary:
    satisfaction: np.ndarray  # per (step, cell) min-slice satisfaction
    max_delay: np.ndarray  # per (step, cell) max slice delay, ms
    records: list[StepRecord]

    @property
    def mean_satisfaction(self) -> float:
        return float(self.satisfaction.mean())

    @property
    def mean_max_delay(self) -> float:
        return float(self.max_delay.mean())


def evaluate_policies(
    scenario: ScenarioConfig,
    policies: dict[int, Policy],
    steps: int,
    seed: int,
    perfect_demand: bool = False,
    demand_lookup: dict | None = None,
) -> EvalSummary:
    """Frozen-policy run emitting satisfaction and max-delay distributions."""

    records = rollout(
        scenario, policies, steps, seed,
        perfect_demand=perfect_demand, demand_lookup=demand_lookup,
    )
    satisfaction = np.array([r.reward for r in records])
    max_delay = np.array([max(m.delay for m in r.metrics) for r in records])
    return EvalSummary(satisfaction, max_delay, records)


def write_eval_outputs(out: Path, summary: EvalSummary) -> None:
    write_cdf_csv(out / "cdf_throughput.csv", summary.satisfaction, "satisfaction")
    write_cdf_csv(out / "cdf_delay.csv", summary.max_delay, "max_delay_ms")


# ---------------------------------------------------------------------------
# Top-level runs
# ---------------------------------------------------------------------------


def run_baseline(cfg: ExperimentConfig, seed: int, out: str | Path) -> RunMetrics:
    """Traffic-aware baseline with perfect demand knowledge; no learning."""

    out = _prepare_out(out)
    scenario = cfg.scenario
    demand_lookup: dict = {}
    policies = _baseline_policies(scenario, demand_lookup)
    summary = evaluate_policies(
        scenario, policies, cfg.phases.evaluation, seed,
        perfect_demand=True, demand_lookup=demand_lookup,
    )
    write_metrics_csv(out / "metrics.csv", summary.records)
    write_eval_outputs(out, summary)
    write_run_meta(out, cfg, seed, method="baseline",
                   mean_satisfaction=summary.mean_satisfaction,
                   mean_max_delay=summary.mean_max_delay)
    return RunMetrics(summary.records, summary.records,
                      {"summary": summary})


def _agent_seed(seed: int, cell_id: int) -> int:
    return int(np.random.SeedSequence([seed, cell_id]).generate_state(1)[0])


def make_agents(cfg: ExperimentConfig, seed: int) -> dict[int, Td3Agent]:
    return {
        c.cell_id: Td3Agent(c.cell_id, cfg.scenario.n_slices, cfg.td3,
                            _agent_seed(seed, c.cell_id))
        for c in cfg.scenario.cells
    }


def run_madrl(cfg: ExperimentConfig, seed: int, out: str | Path) -> RunMetrics:
    """Train all cells in parallel: exploration, training, evaluation.

    Persists per-agent checkpoints, replay buffers, and a default-action
    trace for later similarity analysis.
    """

    out = _prepare_out(out)
    scenario = cfg.scenario
    normalizers = cell_normalizers(scenario)
    agents = make_agents(cfg, seed)
    n = scenario.n_slices

    # Default-action segment: every cell holds the equal split so that the
    # similarity pipeline has comparable samples from all agents.
    default_records = rollout(
        scenario,
        {c.cell_id: constant_policy(equal_partition(n)) for c in scenario.cells},
        cfg.similarity.steps, seed,
    )
    save_trace(out / "default_trace.npz", default_records)

    records: list[StepRecord] = []
    state = envm.init_network(scenario, seed)
    states = assemble_all_states(scenario, state, normalizers)
    diverged: dict[int, str] = {}
    total = cfg.phases.exploration + cfg.phases.training
    for t in range(1, total + 1):
        exploring = t <= cfg.phases.exploration
        actions = {}
        for c in scenario.cells:
            agent = agents[c.cell_id]
            if exploring:
                # Flat Dirichlet covers the simplex better than noisy
                # untrained actor output.
                actions[c.cell_id] = PartitionAction(
                    agent.explore_rng.dirichlet(np.ones(n))
                )
            else:
                # Linear exploration-noise decay across the training phase.
                frac = (t - cfg.phases.exploration) / max(cfg.phases.training, 1)
                noise = (cfg.td3.explore_noise * (1.0 - frac)
                         + cfg.td3.explore_noise_final * frac)
                actions[c.cell_id] = select_action(
                    agent, states[c.cell_id], explore=True, noise_scale=noise
                )
        ordered = [actions[c.cell_id] for c in scenario.cells]
        state, rewards = envm.step(state, ordered, scenario)
        new_states = assemble_all_states(scenario, state, normalizers)
        for i, c in enumerate(scenario.cells):
            agent = agents[c.cell_id]
            agent.buffer.add(Transition(
                states[c.cell_id], actions[c.cell_id].shares,
                float(rewards[i]), new_states[c.cell_id], origin=c.cell_id,
            ))
            agent.step_count += 1
            if (
                not exploring
                and c.cell_id not in diverged
                and len(agent.buffer) >= cfg.td3.batch_size
            ):
                try:
                    for _ in range(cfg.td3.updates_per_step):
                        train_step(agent, agent.buffer.sample(cfg.td3.batch_size))
                except SliceTlError as exc:
                    # One diverging agent must not abort the others.
                    diverged[c.cell_id] = str(exc)
        records.extend(record_step(scenario, t, states, actions, state, rewards))
        states = new_states

    checkpoints = out / "checkpoints"
    buffers = out / "buffers"
    checkpoints.mkdir(exist_ok=True)
    buffers.mkdir(exist_ok=True)
    for cid, agent in agents.items():
        save_agent(agent, checkpoints / f"cell_{cid}.npz")
        agent.buffer.export(buffers / f"cell_{cid}.npz")

    summary = evaluate_policies(
        scenario,
        {cid: greedy_policy(agent) for cid, agent in agents.items()},
        cfg.phases.evaluation, seed + 1,
    )
    write_metrics_csv(out / "metrics.csv", records + summary.records)
    write_eval_outputs(out, summary)
    write_run_meta(out, cfg, seed, method="madrl", diverged=diverged,
                   mean_satisfaction=summary.mean_satisfaction,
                   mean_max_delay=summary.mean_max_delay)
    return RunMetrics(records, summary.records,
                      {"agents": agents, "summary": summary, "out": out})


def _similarity_inputs(cfg: ExperimentConfig) -> tuple[int, list[int]]:
    ids = list(cfg.scenario.cell_ids)
    target = cfg.similarity.target if cfg.similarity.target is not None else ids[-1]
    if target not in ids:
        raise ConfigurationError(f"similarity target {target} is not a cell")
    candidates = (
        list(cfg.similarity.candidates)
        if cfg.similarity.candidates is not None
        else [i for i in ids if i != target]
    )
    return target, candidates


def run_similarity(
    cfg: ExperimentConfig, seed: int, out: str | Path,
    trace_records: list[StepRecord] | None = None,
) -> tuple[simm.DistanceMatrix, int]:
    """Pooled VAE + latent KL distances + source selection for one target."""

    out = _prepare_out(out)
    sim = cfg.similarity
    target, candidates = _similarity_inputs(cfg)
    if trace_records is None:
        if sim.trace is not None:
            trace_records = load_trace(sim.trace)
        else:
            trace_records = rollout(
                cfg.scenario,
                {c.cell_id: constant_policy(equal_partition(cfg.scenario.n_slices))
                 for c in cfg.scenario.cells},
                sim.steps, seed,
            )
            save_trace(out / "default_trace.npz", trace_records)

    a_prime = equal_partition(cfg.scenario.n_slices)
    samples_by_agent = {
        i: simm.collect_default_samples(trace_records, a_prime, agent=i)
        for i in [target, *candidates]
    }
    pooled = [s for group in samples_by_agent.values() for s in group]
    model = simm.vae_train(
        pooled, kl_weight=sim.kl_weight, epochs=sim.epochs, seed=seed,
        latent_dim=sim.latent_dim, batch_size=sim.batch_size, lr=sim.lr,
        min_samples=sim.min_samples,
    )
    latents = {
        i: simm.encode_samples(model, group)
        for i, group in samples_by_agent.items()
    }
    distances = simm.compute_distance_matrix(
        latents, target, candidates, mode=sim.mode, min_samples=sim.min_samples
    )
    source = simm.select_source(distances)
    simm.write_distances_csv(out / "distances.csv", distances)
    simm.write_latents_csv(
        out / "latents.csv", [s for group in latents.values() for s in group]
    )
    write_run_meta(out, cfg, seed, method="similarity",
                   selected_source=source,
                   selected_distance=distances.entries[source])
    return distances, source


def load_pretrained(
    artifacts: str | Path, cell_ids: Sequence[int], td3_batch: int = 32
) -> dict[int, Td3Agent]:
    artifacts = Path(artifacts)
    agents = {}
    for cid in cell_ids:
        ckpt = artifacts / "checkpoints" / f"cell_{cid}.npz"
        buf = artifacts / "buffers" / f"cell_{cid}.npz"
        if not ckpt.exists():
            raise DependencyError(f"missing checkpoint {ckpt}")
        agent = load_agent(ckpt)
        if buf.exists():
            agent.buffer = ReplayBuffer.load(
                buf, agent.config.buffer_capacity, seed=0,
                evict_threshold=agent.config.batch_size,
            )
        agents[cid] = agent
    return agents


def run_transfer(cfg: ExperimentConfig, seed: int, out: str | Path) -> RunMetrics:
    """Integrated transfer to the target cell plus a paired-seed scratch run.

    Emits the per-step TL gain curve (TL reward minus scratch reward under
    identical environment seeds) and the post-fine-tuning evaluation.
    """

    out = _prepare_out(out)
    scenario = cfg.scenario
    if cfg.transfer.artifacts is None:
        raise DependencyError(
            "transfer requires 'transfer.artifacts' pointing at a train run"
        )
    target_id = (
        cfg.transfer.target if cfg.transfer.target is not None
        else _similarity_inputs(cfg)[0]
    )
    peer_ids = [i for i in scenario.cell_ids if i != target_id]
    pretrained = load_pretrained(cfg.transfer.artifacts, scenario.cell_ids)

    source_id = cfg.transfer.source
    selected_distance = None
    if source_id is None:
        trace_path = Path(cfg.transfer.artifacts) / "default_trace.npz"
        trace = load_trace(trace_path) if trace_path.exists() else None
        distances, source_id = run_similarity(
            cfg, seed, out / "similarity", trace_records=trace
        )
        selected_distance = distances.entries[source_id]
    if source_id == target_id or source_id not in scenario.cell_ids:
        raise ConfigurationError(f"invalid transfer source {source_id}")

    plan = TransferPlan(
        source=source_id, target=target_id, strategy=cfg.transfer.strategy,
        instance_fraction=cfg.transfer.instance_fraction,
        frozen_layers=cfg.transfer.frozen_layers,
        fine_tune_steps=cfg.phases.tl_training,
    )
    peers = {i: greedy_policy(pretrained[i]) for i in peer_ids}

    tl_agent = Td3Agent(target_id, scenario.n_slices, cfg.td3,
                        _agent_seed(seed, target_id))
    integrated_transfer(pretrained[source_id], tl_agent, plan, seed)
    tl_agent, tl_trace, tl_records = fine_tune(
        tl_agent, scenario, peers, plan.fine_tune_steps, seed,
        collect_records=True,
    )

    # Paired-seed scratch reference: identical environment randomness,
    # fresh agent with a different init stream.
    scratch_agent = Td3Agent(target_id, scenario.n_slices, cfg.td3,
                             _agent_seed(seed + 1, target_id))
    scratch_agent, scratch_trace = fine_tune(
        scratch_agent, scenario, peers, plan.fine_tune_steps, seed
    )

    with open(out / "gain.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "reward_tl", "reward_scratch", "gain"])
        for t, (a, b) in enumerate(zip(tl_trace, scratch_trace), start=1):
            writer.writerow([t, repr(float(a)), repr(float(b)),
                             repr(float(a - b))])

    policies = dict(peers)
    policies[target_id] = greedy_policy(tl_agent)
    summary = evaluate_policies(scenario, policies, cfg.phases.evaluation,
                                seed + 1)
    checkpoints = out / "checkpoints"
    checkpoints.mkdir(exist_ok=True)
    save_agent(tl_agent, checkpoints / f"cell_{target_id}.npz")
    write_metrics_csv(out / "metrics.csv", tl_records + summary.records)
    write_eval_outputs(out, summary)
    write_run_meta(
        out, cfg, seed, method="tl",
        plan={"source": plan.source, "target": plan.target,
              "strategy": plan.strategy,
              "instance_fraction": plan.instance_fraction,
              "fine_tune_steps": plan.fine_tune_steps},
        selected_distance=selected_distance,
        mean_satisfaction=summary.mean_satisfaction,
        mean_max_delay=summary.mean_max_delay,
    )
    return RunMetrics(
        tl_records, summary.records,
        {"tl_trace": tl_trace, "scratch_trace": scratch_trace,
         "tl_agent": tl_agent, "summary": summary, "source": source_id},
    )


def run_evaluate(cfg: ExperimentConfig, seed: int, out: str | Path) -> EvalSummary:
    """Frozen-policy evaluation of checkpointed agents or the baseline."""

    out = _prepare_out(out)
    scenario = cfg.scenario
    if cfg.evaluate.checkpoints is None:
        demand_lookup: dict = {}
        policies = _baseline_policies(scenario, demand_lookup)
        summary = evaluate_policies(
            scenario, policies, cfg.phases.evaluation, seed,
            perfect_demand=True, demand_lookup=demand_lookup,
        )
    else:
        agents = load_pretrained(cfg.evaluate.checkpoints, scenario.cell_ids)
        policies = {cid: greedy_policy(a) for cid, a in agents.items()}
        summary = evaluate_policies(scenario, policies, cfg.phases.evaluation, seed)
    write_metrics_csv(out / "metrics.csv", summary.records)
    write_eval_outputs(out, summary)
    write_run_meta(out, cfg, seed, method="evaluate",
                   mean_satisfaction=summary.mean_satisfaction,
                   mean_max_delay=summary.mean_max_delay)
    return summary


def _prepare_out(out: str | Path) -> Path:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    return out
