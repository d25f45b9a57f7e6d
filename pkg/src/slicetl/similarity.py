"""Inter-agent similarity via VAE latent features and Gaussian KL distance.

One general VAE is trained on pooled (state, reward) samples collected
under a shared default action. Each sample's posterior N(mu, diag(sigma^2))
is a latent feature; the distance between two agents is the mean pairwise
KL divergence between their posteriors, with a mean-squared-difference
fast path valid when all posterior sigmas collapse to a common small value.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import nn
from .env import PartitionAction
from .errors import (
    DimensionError,
    DomainError,
    EmptySetError,
    NumericError,
    SingularityError,
)

DEFAULT_MIN_SAMPLES = 50
SIMPLIFIED_SIGMA_LIMIT = 1e-3
ACTION_MATCH_TOL = 1e-9


@dataclass(frozen=True)
class DefaultSample:
    """One [state, reward] observation taken under the default action."""

    x: np.ndarray  # length 4N + 1
    agent: int
    default_action: PartitionAction


@dataclass(frozen=True)
class LatentStats:
    """Diagonal-Gaussian VAE posterior of one sample (sigma = std dev)."""

    mu: np.ndarray
    sigma: np.ndarray
    agent: int = -1

    def __post_init__(self) -> None:
        mu = np.asarray(self.mu, dtype=np.float64)
        sigma = np.asarray(self.sigma, dtype=np.float64)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)
        if mu.shape != sigma.shape:
            raise DimensionError("mu and sigma must have the same shape")
        if np.any(sigma < 0):
            raise DomainError("sigma must be entrywise >= 0")


@dataclass
class VaeModel:
    """Encoder/decoder pair plus the standardization used at training time."""

    encoder: nn.Mlp  # input D -> ... -> 2L (mu | log variance)
    decoder: nn.Mlp  # L -> ... -> D
    kl_weight: float
    latent_dim: int
    feature_mean: np.ndarray
    feature_std: np.ndarray
    loss_history: list[float] = field(default_factory=list)

    @property
    def input_dim(self) -> int:
        return self.encoder.in_dim


def collect_default_samples(
    records: Sequence, default_action: PartitionAction, agent: int | None = None
) -> list[DefaultSample]:
    """Filter a step trace down to the steps executed under ``default_action``.

    ``records`` must expose ``.cell_id``, ``.state``, ``.action`` and
    ``.reward`` (see :class:`slicetl.runner.StepRecord`). If ``agent`` is
    given, only that cell's records are considered.
    """

    samples = []
    seen_agents = set()
    for rec in records:
        if agent is not None and rec.cell_id != agent:
            continue
        seen_agents.add(rec.cell_id)
        if np.max(np.abs(rec.action - default_action.shares)) <= ACTION_MATCH_TOL:
            samples.append(
                DefaultSample(
                    np.concatenate([rec.state, [rec.reward]]),
                    rec.cell_id,
                    default_action,
                )
            )
    if not samples:
        who = agent if agent is not None else sorted(seen_agents)
        raise EmptySetError(
            f"no steps under the default action for agent(s) {who}"
        )
    return samples


def _standardize_stats(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    std[std < 1e-12] = 1.0  # constant features pass through unscaled
    return mean, std


def vae_train(
    samples: Sequence[DefaultSample] | np.ndarray,
    kl_weight: float = 1e-3,
    epochs: int = 200,
    seed: int = 0,
    latent_dim: int = 4,
    hidden: tuple[int, int] = (64, 24),
    batch_size: int = 32,
    lr: float = 1e-3,
    min_samples: int = DEFAULT_MIN_SAMPLES,
) -> VaeModel:
    """Train one VAE on pooled samples from all agents.

    Minimizes ||x - x_hat||^2 + kl_weight * KL(N(mu, diag(sigma^2)) || N(0, I))
    by minibatch Adam; per-epoch mean loss lands in ``model.loss_history``.
    """

    if not isinstance(samples, np.ndarray):
        x = np.stack([s.x for s in samples]) if len(samples) else np.zeros((0, 1))
    else:
        x = np.asarray(samples, dtype=np.float64)
    if x.shape[0] < min_samples:
        raise EmptySetError(
            f"need at least {min_samples} pooled samples, got {x.shape[0]}"
        )
    mean, std = _standardize_stats(x)
    xs = (x - mean) / std
    d = xs.shape[1]

    rng = np.random.default_rng(seed)
    encoder = nn.init_mlp([d, *hidden, 2 * latent_dim], "identity", rng)
    decoder = nn.init_mlp([latent_dim, *reversed(hidden), d], "identity", rng)
    enc_adam = nn.AdamState.for_params(encoder)
    dec_adam = nn.AdamState.for_params(decoder)

    m = xs.shape[0]
    history = []
    for epoch in range(epochs):
        order = rng.permutation(m)
        epoch_loss = 0.0
        for start in range(0, m, batch_size):
            xb = xs[order[start:start + batch_size]]
            b = xb.shape[0]
            enc_out, enc_cache = nn.mlp_forward(encoder, xb)
            mu, logvar = enc_out[:, :latent_dim], enc_out[:, latent_dim:]
            sigma = np.exp(0.5 * logvar)
            eps = rng.standard_normal(mu.shape)
            z = mu + sigma * eps
            xh, dec_cache = nn.mlp_forward(decoder, z)

            recon = np.sum((xb - xh) ** 2, axis=1)
            kl = 0.5 * np.sum(sigma**2 + mu**2 - 1.0 - logvar, axis=1)
            loss = float(np.mean(recon + kl_weight * kl))
            if not math.isfinite(loss):
                raise NumericError(f"VAE loss diverged at epoch {epoch}")
            epoch_loss += loss * b

            dxh = 2.0 * (xh - xb) / b
            dec_grads, dz = nn.mlp_backward(decoder, dec_cache, dxh)
            dmu = dz + kl_weight * mu / b
            dsigma = dz * eps + kl_weight * (sigma - 1.0 / sigma) / b
            dlogvar = 0.5 * sigma * dsigma
            enc_grads, _ = nn.mlp_backward(
                encoder, enc_cache, np.hstack([dmu, dlogvar])
            )
            nn.adam_step(dec_adam, decoder, dec_grads, lr)
            nn.adam_step(enc_adam, encoder, enc_grads, lr)
        history.append(epoch_loss / m)

    return VaeModel(encoder, decoder, kl_weight, latent_dim, mean, std, history)


def encode(model: VaeModel, x: np.ndarray, agent: int = -1) -> LatentStats:
    """Posterior (mu, sigma) of one sample under the trained encoder."""

    x = np.asarray(x, dtype=np.float64)
    if x.shape != (model.input_dim,):
        raise DimensionError(
            f"sample length {x.shape} does not match encoder input "
            f"{model.input_dim}"
        )
    out, _ = nn.mlp_forward(model.encoder, (x - model.feature_mean) / model.feature_std)
    mu = out[: model.latent_dim]
    sigma = np.exp(0.5 * out[model.latent_dim:])
    return LatentStats(mu, sigma, agent)


def encode_samples(
    model: VaeModel, samples: Sequence[DefaultSample]
) -> list[LatentStats]:
    return [encode(model, s.x, s.agent) for s in samples]


def reconstruct(model: VaeModel, x: np.ndarray) -> np.ndarray:
    """Deterministic reconstruction through the posterior mean (for tests)."""

    stats = encode(model, x)
    xh, _ = nn.mlp_forward(model.decoder, stats.mu)
    return xh * model.feature_std + model.feature_mean


def kl_gaussian(p: LatentStats, q: LatentStats) -> float:
    """Closed-form KL divergence between two diagonal Gaussians."""

    if p.mu.shape != q.mu.shape:
        raise DimensionError("latent dimensions differ")
    if np.any(q.sigma <= 0):
        raise SingularityError("q has a zero-variance latent dimension")
    vp = p.sigma**2
    vq = q.sigma**2
    dmu = p.mu - q.mu
    with np.errstate(divide="ignore"):
        log_ratio = np.log(vq) - np.log(vp)
    return 0.5 * float(
        np.sum(log_ratio) - p.mu.size + np.sum(dmu * dmu / vq) + np.sum(vp / vq)
    )


def kl_mean_simplified(
    mu_n: np.ndarray, mu_m: np.ndarray, sigma: float
) -> float:
    """Mean-difference fast path: KL when both covariances are sigma^2 * I."""

    if sigma <= 0:
        raise DomainError(f"sigma must be positive, got {sigma}")
    mu_n = np.asarray(mu_n, dtype=np.float64)
    mu_m = np.asarray(mu_m, dtype=np.float64)
    if mu_n.shape != mu_m.shape:
        raise DimensionError("latent dimensions differ")
    d = mu_n - mu_m
    return float(np.sum(d * d)) / (2.0 * sigma**2)


def _latent_arrays(latents: Sequence[LatentStats]) -> tuple[np.ndarray, np.ndarray]:
    return (
        np.stack([s.mu for s in latents]),
        np.stack([s.sigma for s in latents]),
    )


def inter_agent_distance(
    source_latents: Sequence[LatentStats],
    target_latents: Sequence[LatentStats],
    mode: str = "exact",
    sigma: float | None = None,
) -> float:
    """Mean pairwise KL(source sample || target sample).

    ``mode='simplified'`` uses the common-sigma fast path with ``sigma``
    (pooled median posterior sigma when not given), but falls back to the
    exact form whenever any posterior sigma exceeds the validity limit.
    """

    if not source_latents or not target_latents:
        raise EmptySetError("latent sets must be non-empty")
    if mode not in ("exact", "simplified"):
        raise DomainError(f"unknown mode {mode!r}")
    mu_s, sig_s = _latent_arrays(source_latents)
    mu_t, sig_t = _latent_arrays(target_latents)
    if mu_s.shape[1] != mu_t.shape[1]:
        raise DimensionError("latent dimensions differ between sets")

    if mode == "simplified":
        max_sigma = max(float(sig_s.max()), float(sig_t.max()))
        if max_sigma <= SIMPLIFIED_SIGMA_LIMIT:
            if sigma is None:
                sigma = float(np.median(np.concatenate([sig_s.ravel(), sig_t.ravel()])))
            if sigma <= 0:
                raise DomainError("pooled sigma must be positive")
            diff2 = (
                np.sum(mu_s**2, axis=1)[:, None]
                + np.sum(mu_t**2, axis=1)[None, :]
                - 2.0 * mu_s @ mu_t.T
            )
            return float(np.mean(np.maximum(diff2, 0.0))) / (2.0 * sigma**2)
        # Lemma precondition violated: fall through to the exact form.

    if np.any(sig_t <= 0):
        raise SingularityError("a target sample has a zero-variance dimension")
    vp = sig_s**2  # (Ns, L)
    vq = sig_t**2  # (Nt, L)
    with np.errstate(divide="ignore"):
        log_vp = np.log(vp)
        log_vq = np.log(vq)
    l = mu_s.shape[1]
    log_term = log_vq.sum(axis=1)[None, :] - log_vp.sum(axis=1)[:, None]
    inv_vq = 1.0 / vq
    quad = (
        (mu_s**2 @ inv_vq.T)
        - 2.0 * (mu_s * 1.0) @ (mu_t * inv_vq).T
        + np.sum(mu_t**2 * inv_vq, axis=1)[None, :]
    )
    trace = vp @ inv_vq.T
    kl = 0.5 * (log_term - l + quad + trace)
    return float(np.mean(kl))


@dataclass
class DistanceMatrix:
    """Distances from each candidate source agent to one target agent."""

    target: int
    entries: dict[int, float]
    counts: dict[int, int]
    mode: str = "exact"

    def __post_init__(self) -> None:
        for i, d in self.entries.items():
            if d < 0:
                raise DomainError(f"negative distance for source {i}")


def compute_distance_matrix(
    latents_by_agent: dict[int, list[LatentStats]],
    target: int,
    candidates: Sequence[int] | None = None,
    mode: str = "simplified",
    min_samples: int = DEFAULT_MIN_SAMPLES,
) -> DistanceMatrix:
    if target not in latents_by_agent:
        raise EmptySetError(f"no latent samples for target agent {target}")
    candidates = (
        sorted(i for i in latents_by_agent if i != target)
        if candidates is None else list(candidates)
    )
    if not candidates:
        raise EmptySetError("no candidate source agents")
    for i in [target, *candidates]:
        if len(latents_by_agent.get(i, [])) < min_samples:
            raise EmptySetError(
                f"agent {i} has fewer than {min_samples} default-action samples"
            )
    entries = {
        i: inter_agent_distance(latents_by_agent[i], latents_by_agent[target], mode)
        for i in candidates
    }
    counts = {i: len(latents_by_agent[i]) for i in [target, *candidates]}
    return DistanceMatrix(target, entries, counts, mode)


def select_source(distances: DistanceMatrix, target: int | None = None) -> int:
    """Candidate with the smallest distance; ties break to the lowest id."""

    if target is not None and target != distances.target:
        raise DomainError(
            f"distance matrix was computed for target {distances.target}"
        )
    if not distances.entries:
        raise EmptySetError("distance matrix has no candidates")
    return min(distances.entries, key=lambda i: (distances.entries[i], i))


def write_distances_csv(path, distances: DistanceMatrix) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["source", "target", "distance", "n_source", "n_target", "mode"])
        for i in sorted(distances.entries):
            writer.writerow([
                i, distances.target, repr(distances.entries[i]),
                distances.counts[i], distances.counts[distances.target],
                distances.mode,
            ])


def write_latents_csv(path, latents: Sequence[LatentStats]) -> None:
    if not latents:
        raise EmptySetError("no latents to write")
    l = latents[0].mu.size
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["agent"]
            + [f"mu_{j}" for j in range(l)]
            + [f"sigma_{j}" for j in range(l)]
        )
        for s in latents:
            writer.writerow(
                [s.agent] + [repr(v) for v in s.mu] + [repr(v) for v in s.sigma]
            )
