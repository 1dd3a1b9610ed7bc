"""Training: the PAC-Bayes-with-backprop objective, its exact gradient, and
the SGD-with-momentum loops for prior and posterior learning.

The objective for a posterior Q with parameters (mu, rho) against a fixed
prior P is

    (1/B) * batch_loss(w) + sqrt((eta * KL(Q||P) + log(sqrt(n)/delta)) / (2n))

where w = mu + softplus(rho) * eps is a single reparameterized weight draw,
B the contrastive range bound, n the number of training pairs, and eta a
switch that de-weights the KL term (1e-6 when fitting the prior, 1 for the
posterior). Gradients are computed analytically; the noise eps is pinned by
seed so the finite-difference contract can perturb (mu, rho) around the same
draw.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .dataio import make_batches
from .losses import LossConfig, loss_range_bound, simclr_dataset_loss, cross_entropy, top1_risk
from .model import (
    NetworkArchitecture,
    derive_seed,
    WeightSample,
    _layer_slices,
    forward,
    forward_with_cache,
    initialize_posterior,
    sample_weights,
    sigmoid,
    softplus,
)

__all__ = [
    "TrainConfig",
    "TrainReport",
    "TrainingDivergedError",
    "PbbGradient",
    "pbb_complexity_term",
    "pbb_objective",
    "gradient",
    "train",
    "learn_prior",
    "linear_eval",
]

PRIOR_KL_PENALTY_ETA = 1e-6
DIVERGENCE_FACTOR = 10.0


class TrainingDivergedError(RuntimeError):
    """Raised when the training objective explodes past the divergence guard."""


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    batch_size_m: int = 250
    learning_rate: float = 0.5
    momentum: float = 0.9
    kl_penalty_eta: float = 1.0
    delta: float = 0.04
    sigma0: float = 0.05
    seed: int = 0
    loss: LossConfig = field(default_factory=LossConfig)

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be positive")
        if self.batch_size_m < 2:
            raise ValueError("batch_size_m must be at least 2")
        if self.learning_rate <= 0.0:
            raise ValueError("learning_rate must be positive")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")
        if self.kl_penalty_eta < 0.0:
            raise ValueError("kl_penalty_eta must be nonnegative")
        if not 0.0 < self.delta < 1.0:
            raise ValueError("delta must lie in (0, 1)")
        if self.sigma0 <= 0.0:
            raise ValueError("sigma0 must be positive")


@dataclass(frozen=True)
class TrainReport:
    epochs_run: int
    steps_run: int
    objective_trace: tuple[float, ...]
    final_objective: float
    final_kl: float
    retained_pairs: int

    def to_dict(self) -> dict:
        return {
            "epochs_run": self.epochs_run,
            "steps_run": self.steps_run,
            "objective_trace": list(self.objective_trace),
            "final_objective": self.final_objective,
            "final_kl": self.final_kl,
            "retained_pairs": self.retained_pairs,
        }


@dataclass(frozen=True)
class PbbGradient:
    d_mu: np.ndarray
    d_rho: np.ndarray
    objective: float
    loss_value: float
    kl_value: float


def pbb_complexity_term(kl: float, n: int, delta: float, eta: float) -> float:
    """sqrt((eta * KL + log(sqrt(n)/delta)) / (2n)), the objective's penalty part."""
    if n < 1:
        raise ValueError("n must be positive")
    return math.sqrt((eta * kl + math.log(math.sqrt(n) / delta)) / (2.0 * n))


def pbb_objective(posterior, prior, pairs, plan, config: TrainConfig, seed=None) -> float:
    """Full-data objective under a single weight draw (fresh unless seed pinned)."""
    if seed is None:
        seed = int(np.random.SeedSequence().generate_state(1, dtype=np.uint64)[0])
    weights = sample_weights(posterior, seed)
    loss = simclr_dataset_loss(weights, pairs, plan, config.loss)
    kl = posterior.kl_to(prior)
    penalty = pbb_complexity_term(kl, plan.retained, config.delta, config.kl_penalty_eta)
    return loss.value / loss.range_bound + penalty


def _contrastive_embedding_gradients(emb_a, emb_b, config: LossConfig):
    """Batch loss value plus its gradient w.r.t. both embedding matrices."""
    m = emb_a.shape[0]
    if m < 2:
        raise ValueError("contrastive loss needs at least two pairs per batch")
    tau = config.tau
    off = ~np.eye(m, dtype=bool)
    sim_ab = np.exp(emb_a @ emb_b.T / tau)
    sim_aa = np.exp(emb_a @ emb_a.T / tau)
    sim_bb = np.exp(emb_b @ emb_b.T / tau)
    pos = np.diag(sim_ab).copy()
    neg_a = np.sum(sim_aa, axis=1, where=off)
    neg_b = np.sum(sim_bb, axis=1, where=off)
    original = config.variant == "original"
    if original:
        neg_a = neg_a + np.sum(sim_ab, axis=1, where=off)
        neg_b = neg_b + np.sum(sim_ab.T, axis=1, where=off)
    add = (2.0 if config.variant == "simplified" else 4.0) * config.epsilon
    denom_a = pos + neg_a + add
    denom_b = pos + neg_b + add
    loss = float(
        0.5 * np.mean(np.log(denom_a) - np.log(pos))
        + 0.5 * np.mean(np.log(denom_b) - np.log(pos))
    )
    scale = 1.0 / (2.0 * m)
    coef_pos = scale * (pos / denom_a + pos / denom_b - 2.0)
    grad_a = coef_pos[:, None] * emb_b / tau
    grad_b = coef_pos[:, None] * emb_a / tau
    coef_aa = scale * (sim_aa / denom_a[:, None]) * off
    grad_a += (coef_aa + coef_aa.T) @ emb_a / tau
    coef_bb = scale * (sim_bb / denom_b[:, None]) * off
    grad_b += (coef_bb + coef_bb.T) @ emb_b / tau
    if original:
        coef_ab = scale * (sim_ab / denom_a[:, None]) * off
        grad_a += coef_ab @ emb_b / tau
        grad_b += coef_ab.T @ emb_a / tau
        coef_ba = scale * (sim_ab.T / denom_b[:, None]) * off
        grad_b += coef_ba @ emb_a / tau
        grad_a += coef_ba.T @ emb_b / tau
    return loss, grad_a, grad_b


def _backprop_to_flat(weights: WeightSample, cache: dict, grad_emb: np.ndarray) -> np.ndarray:
    """Push an embedding gradient back through normalization, slice and MLP."""
    arch = weights.arch
    emb = cache["emb"]
    norms = cache["norms"]
    nonzero = norms[:, 0] > 0.0
    g_proj = np.zeros_like(emb)
    inner = np.sum(grad_emb * emb, axis=1, keepdims=True)
    g_proj[nonzero] = (grad_emb[nonzero] - inner[nonzero] * emb[nonzero]) / norms[nonzero]
    if cache["use_projection"]:
        g_z = np.zeros_like(cache["z"])
        g_z[:, : g_proj.shape[1]] = g_proj
    else:
        g_z = g_proj
    layers = _layer_slices(arch)
    flat_grad = np.zeros_like(weights.values)
    d = g_z
    for li in range(len(layers) - 1, -1, -1):
        w_sl, b_sl, fan_in, fan_out = layers[li]
        pre = cache["pre"][li]
        d_pre = d if li == len(layers) - 1 else d * (pre > 0.0)
        h_in = cache["activations"][li]
        flat_grad[w_sl] += (d_pre.T @ h_in).reshape(-1)
        flat_grad[b_sl] += d_pre.sum(axis=0)
        if li > 0:
            W = weights.values[w_sl].reshape(fan_out, fan_in)
            d = d_pre @ W
    return flat_grad


def _pinned_objective(posterior, prior, batch, config: TrainConfig, seed: int, n_total: int):
    """The scalar the analytic gradient differentiates, at fixed noise."""
    weights = sample_weights(posterior, seed)
    views_a = np.stack([p.view_a for p in batch])
    views_b = np.stack([p.view_b for p in batch])
    emb_a, _ = forward_with_cache(weights, views_a, config.loss.use_projection)
    emb_b, _ = forward_with_cache(weights, views_b, config.loss.use_projection)
    loss, _, _ = _contrastive_embedding_gradients(emb_a, emb_b, config.loss)
    bound = loss_range_bound(config.loss.tau, len(batch), config.loss.variant)
    kl = posterior.kl_to(prior)
    return loss / bound + pbb_complexity_term(kl, n_total, config.delta, config.kl_penalty_eta)


def gradient(
    posterior, prior, batch, config: TrainConfig, seed: int, n_total: int | None = None
) -> PbbGradient:
    """Exact (mu, rho) gradient of the objective at the noise pinned by seed.

    n_total is the dataset size the complexity term should use; when omitted
    the batch is treated as the whole dataset.
    """
    if n_total is None:
        n_total = len(batch)
    weights = sample_weights(posterior, seed)
    views_a = np.stack([p.view_a for p in batch])
    views_b = np.stack([p.view_b for p in batch])
    emb_a, cache_a = forward_with_cache(weights, views_a, config.loss.use_projection)
    emb_b, cache_b = forward_with_cache(weights, views_b, config.loss.use_projection)
    loss, grad_ea, grad_eb = _contrastive_embedding_gradients(emb_a, emb_b, config.loss)
    flat = _backprop_to_flat(weights, cache_a, grad_ea)
    flat += _backprop_to_flat(weights, cache_b, grad_eb)
    bound = loss_range_bound(config.loss.tau, len(batch), config.loss.variant)

    std = softplus(posterior.rho)
    gate = sigmoid(posterior.rho)
    d_mu = flat / bound
    d_rho = (flat * weights.epsilon * gate) / bound

    kl = posterior.kl_to(prior)
    penalty = pbb_complexity_term(kl, n_total, config.delta, config.kl_penalty_eta)
    prior_var = softplus(prior.rho) ** 2
    if config.kl_penalty_eta > 0.0:
        kl_coef = config.kl_penalty_eta / (4.0 * n_total * penalty)
        d_mu = d_mu + kl_coef * (posterior.mu - prior.mu) / prior_var
        d_rho = d_rho + kl_coef * gate * (std / prior_var - 1.0 / std)
    objective = loss / bound + penalty
    return PbbGradient(d_mu=d_mu, d_rho=d_rho, objective=objective, loss_value=loss, kl_value=kl)


def train(posterior_init, prior, pairs, config: TrainConfig):
    """SGD with momentum on (mu, rho); batches re-partitioned every epoch.

    Aborts with TrainingDivergedError if the running objective exceeds
    10x the contrastive range bound. Fully deterministic per config.seed.
    """
    posterior = posterior_init.copy()
    velocity_mu = np.zeros_like(posterior.mu)
    velocity_rho = np.zeros_like(posterior.rho)
    bound = loss_range_bound(config.loss.tau, config.batch_size_m, config.loss.variant)
    guard = DIVERGENCE_FACTOR * bound
    trace = []
    steps = 0
    retained = 0
    for epoch in range(config.epochs):
        plan = make_batches(pairs, config.batch_size_m, seed=derive_seed(config.seed, 1, epoch))
        retained = plan.retained
        for step_index, batch_indices in enumerate(plan.assignments):
            batch = [pairs[i] for i in batch_indices]
            g = gradient(
                posterior, prior, batch, config,
                seed=derive_seed(config.seed, 2, epoch, step_index),
                n_total=plan.retained,
            )
            if not math.isfinite(g.objective) or g.objective > guard:
                raise TrainingDivergedError(
                    f"objective {g.objective:.4g} exceeded guard {guard:.4g} "
                    f"at epoch {epoch}, step {step_index}"
                )
            velocity_mu = config.momentum * velocity_mu + g.d_mu
            velocity_rho = config.momentum * velocity_rho + g.d_rho
            posterior.mu = posterior.mu - config.learning_rate * velocity_mu
            posterior.rho = posterior.rho - config.learning_rate * velocity_rho
            steps += 1
        trace.append(
            pbb_objective(posterior, prior, pairs, plan, config, seed=derive_seed(config.seed, 3, epoch))
        )
        if not math.isfinite(trace[-1]) or trace[-1] > guard:
            raise TrainingDivergedError(
                f"end-of-epoch objective {trace[-1]:.4g} exceeded guard {guard:.4g} at epoch {epoch}"
            )
    report = TrainReport(
        epochs_run=config.epochs,
        steps_run=steps,
        objective_trace=tuple(trace),
        final_objective=trace[-1],
        final_kl=posterior.kl_to(prior),
        retained_pairs=retained,
    )
    return posterior, report


def learn_prior(arch: NetworkArchitecture, pairs, config: TrainConfig, mode: str = "informed"):
    """Data-informed prior: fit from random init with a vanishing KL penalty.

    mode="random" skips training and returns the initialization itself.
    Returns (prior_posterior, report_or_None).
    """
    if mode not in ("informed", "random"):
        raise ValueError("prior mode must be 'informed' or 'random'")
    init = initialize_posterior(arch, config.sigma0, seed=derive_seed(config.seed, 0))
    if mode == "random":
        return init, None
    prior_config = replace(config, kl_penalty_eta=PRIOR_KL_PENALTY_ETA)
    anchor = init.copy()
    trained, report = train(init, anchor, pairs, prior_config)
    return trained, report


def linear_eval(
    weights: WeightSample,
    labeled_samples,
    num_classes: int,
    use_projection: bool = False,
    epochs: int = 20,
    learning_rate: float = 0.01,
    batch_size: int = 250,
    seed: int = 0,
):
    """Train a linear head on frozen embeddings with Adam; report CE and top-1.

    Returns (head, metrics dict). Deterministic per seed.
    """
    feats = np.stack([s.features for s in labeled_samples])
    labels = np.array([s.label for s in labeled_samples], dtype=np.int64)
    if labels.min() < 0 or labels.max() >= num_classes:
        raise ValueError("labels must lie in [0, num_classes)")
    emb = forward(weights, feats, use_projection)
    n, dim = emb.shape
    head = np.zeros((num_classes, dim))
    adam_m = np.zeros_like(head)
    adam_v = np.zeros_like(head)
    beta1, beta2, eps_adam = 0.9, 0.999, 1e-8
    rng = np.random.default_rng([seed, 0xADA])
    t = 0
    batch_size = min(batch_size, n)
    onehot = np.zeros((n, num_classes))
    onehot[np.arange(n), labels] = 1.0
    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n - batch_size + 1, batch_size):
            idx = order[start : start + batch_size]
            logits = emb[idx] @ head.T
            logits -= logits.max(axis=1, keepdims=True)
            probs = np.exp(logits)
            probs /= probs.sum(axis=1, keepdims=True)
            d_logits = (probs - onehot[idx]) / len(idx)
            grad = d_logits.T @ emb[idx]
            t += 1
            adam_m = beta1 * adam_m + (1 - beta1) * grad
            adam_v = beta2 * adam_v + (1 - beta2) * grad**2
            m_hat = adam_m / (1 - beta1**t)
            v_hat = adam_v / (1 - beta2**t)
            head -= learning_rate * m_hat / (np.sqrt(v_hat) + eps_adam)
    metrics = {
        "cross_entropy": cross_entropy(weights, head, labeled_samples, use_projection),
        "top1_risk": top1_risk(weights, head, labeled_samples, use_projection),
    }
    return head, metrics
