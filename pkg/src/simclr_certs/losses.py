"""Contrastive and downstream losses.

The batch contrastive loss is the symmetrized temperature-scaled objective:
for each pair (a_i, b_i) in a batch of m pairs, both orderings contribute
-log[ sim(anchor, positive) / (sim(anchor, positive) + sum over negatives) ]
with sim(u, v) = exp(u.v / tau), and the batch value is the mean of the
2m anchor terms. Two negative-set variants exist:

  simplified: anchor a_i sees the other same-view embeddings {a_j, j != i}
              (and b_i symmetrically sees {b_j, j != i}); m terms per
              denominator, range bound 2/tau + log(m).
  original:   every anchor sees both views of the other pairs, 2m-1 terms
              per denominator, range bound 2/tau + log(2m - 1).

A nonnegative epsilon models the concentration slack of the negative sum:
it enters each denominator as +2*epsilon (simplified) or +4*epsilon
(original, where the slack doubles).

The zero-one risk counts, for each anchor a_i, the fraction of negatives
(both views of every other pair) whose similarity strictly exceeds the
positive similarity; ties count as zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .model import WeightSample, forward

__all__ = [
    "LossConfig",
    "LossStats",
    "loss_range_bound",
    "simclr_loss",
    "simclr_dataset_loss",
    "zero_one_risk",
    "zero_one_dataset_risk",
    "cross_entropy",
    "top1_risk",
    "intra_class_deviation",
]

VARIANTS = ("simplified", "original")


@dataclass(frozen=True)
class LossConfig:
    """Temperature, negative-set variant, concentration slack, feature choice."""

    tau: float = 1.0
    variant: str = "simplified"
    epsilon: float = 0.0
    use_projection: bool = False

    def __post_init__(self):
        if self.tau <= 0.0:
            raise ValueError("tau must be positive")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        if self.epsilon < 0.0:
            raise ValueError("epsilon must be nonnegative")

    def with_epsilon(self, epsilon: float) -> "LossConfig":
        return replace(self, epsilon=epsilon)


@dataclass(frozen=True)
class LossStats:
    """A loss value, its per-batch decomposition, and the range bound."""

    value: float
    per_batch_values: tuple[float, ...]
    range_bound: float


def loss_range_bound(tau: float, m: int, variant: str = "simplified") -> float:
    """Upper bound on one contrastive term: 2/tau + log(#denominator terms)."""
    if variant == "simplified":
        return 2.0 / tau + math.log(m)
    if variant == "original":
        return 2.0 / tau + math.log(2 * m - 1)
    raise ValueError(f"variant must be one of {VARIANTS}")


def _stack_views(batch):
    a = np.stack([p.view_a for p in batch])
    b = np.stack([p.view_b for p in batch])
    return a, b


def _embed_batch(weights: WeightSample, batch, use_projection: bool):
    views_a, views_b = _stack_views(batch)
    emb_a = forward(weights, views_a, use_projection)
    emb_b = forward(weights, views_b, use_projection)
    return emb_a, emb_b


def _anchor_statistics(emb_a: np.ndarray, emb_b: np.ndarray, config: LossConfig):
    """Positive and negative-sum similarity per anchor (2m anchors).

    Returns (pos, neg) arrays of length 2m: the a-anchored terms first,
    then the b-anchored ones. Similarities are exp(inner / tau).
    """
    m = emb_a.shape[0]
    if m < 2:
        raise ValueError("contrastive loss needs at least two pairs per batch")
    tau = config.tau
    off = ~np.eye(m, dtype=bool)
    sim_ab = np.exp(emb_a @ emb_b.T / tau)
    sim_aa = np.exp(emb_a @ emb_a.T / tau)
    sim_bb = np.exp(emb_b @ emb_b.T / tau)
    pos = np.diag(sim_ab)
    neg_a = np.sum(sim_aa, axis=1, where=off)
    neg_b = np.sum(sim_bb, axis=1, where=off)
    if config.variant == "original":
        neg_a = neg_a + np.sum(sim_ab, axis=1, where=off)
        sim_ba = sim_ab.T
        neg_b = neg_b + np.sum(sim_ba, axis=1, where=off)
    return np.concatenate([pos, pos]), np.concatenate([neg_a, neg_b])


def _epsilon_denominator_add(config: LossConfig) -> float:
    factor = 2.0 if config.variant == "simplified" else 4.0
    return factor * config.epsilon


def _loss_from_statistics(pos: np.ndarray, neg: np.ndarray, config: LossConfig) -> float:
    add = _epsilon_denominator_add(config)
    return float(np.mean(np.log(pos + neg + add) - np.log(pos)))


def simclr_loss(weights: WeightSample, batch, config: LossConfig) -> LossStats:
    """Mean contrastive loss of one batch of positive pairs."""
    emb_a, emb_b = _embed_batch(weights, batch, config.use_projection)
    pos, neg = _anchor_statistics(emb_a, emb_b, config)
    value = _loss_from_statistics(pos, neg, config)
    return LossStats(
        value=value,
        per_batch_values=(value,),
        range_bound=loss_range_bound(config.tau, len(batch), config.variant),
    )


def simclr_dataset_loss(weights: WeightSample, pairs, plan, config: LossConfig) -> LossStats:
    """Contrastive loss averaged over every batch of a plan (equal batch sizes)."""
    values = []
    for batch_indices in plan.assignments:
        batch = [pairs[i] for i in batch_indices]
        values.append(simclr_loss(weights, batch, config).value)
    if not values:
        raise ValueError("batch plan holds no batches")
    return LossStats(
        value=float(np.mean(values)),
        per_batch_values=tuple(values),
        range_bound=loss_range_bound(config.tau, plan.batch_size_m, config.variant),
    )


def _zero_one_from_embeddings(emb_a: np.ndarray, emb_b: np.ndarray) -> float:
    m = emb_a.shape[0]
    if m < 2:
        raise ValueError("zero-one risk needs at least two pairs per batch")
    inner_ab = emb_a @ emb_b.T
    inner_aa = emb_a @ emb_a.T
    pos = np.diag(inner_ab)[:, None]
    off = ~np.eye(m, dtype=bool)
    # anchors are the first views; negatives are both views of the other pairs
    beats_same = (inner_aa > pos) & off
    beats_cross = (inner_ab > pos) & off
    count = np.sum(beats_same, axis=1) + np.sum(beats_cross, axis=1)
    return float(np.mean(count / (2.0 * (m - 1))))


def zero_one_risk(weights: WeightSample, batch, use_projection: bool = False) -> float:
    """Fraction of anchor/negative comparisons ranking a negative above the positive."""
    emb_a, emb_b = _embed_batch(weights, batch, use_projection)
    return _zero_one_from_embeddings(emb_a, emb_b)


def zero_one_dataset_risk(weights: WeightSample, pairs, plan, use_projection: bool = False) -> float:
    values = [
        zero_one_risk(weights, [pairs[i] for i in batch], use_projection)
        for batch in plan.assignments
    ]
    if not values:
        raise ValueError("batch plan holds no batches")
    return float(np.mean(values))


def _embed_labeled(weights: WeightSample, labeled_samples, use_projection: bool):
    feats = np.stack([s.features for s in labeled_samples])
    labels = np.array([s.label for s in labeled_samples])
    if any(s.label is None for s in labeled_samples):
        raise ValueError("labeled samples must all carry labels")
    return forward(weights, feats, use_projection), labels


def cross_entropy(
    weights: WeightSample, linear_head: np.ndarray, labeled_samples,
    use_projection: bool = False,
) -> float:
    """Softmax cross-entropy of a linear head over frozen embeddings."""
    emb, labels = _embed_labeled(weights, labeled_samples, use_projection)
    head = np.asarray(linear_head, dtype=np.float64)
    if head.ndim != 2 or head.shape[1] != emb.shape[1]:
        raise ValueError(
            f"linear head must be (num_classes, {emb.shape[1]}), got {head.shape}"
        )
    logits = emb @ head.T
    peak = logits.max(axis=1, keepdims=True)
    lse = peak[:, 0] + np.log(np.sum(np.exp(logits - peak), axis=1))
    picked = logits[np.arange(len(labels)), labels]
    return float(np.mean(lse - picked))


def top1_risk(
    weights: WeightSample, linear_head: np.ndarray, labeled_samples,
    use_projection: bool = False,
) -> float:
    """Top-1 classification risk; a tie with the true class counts as correct."""
    emb, labels = _embed_labeled(weights, labeled_samples, use_projection)
    head = np.asarray(linear_head, dtype=np.float64)
    logits = emb @ head.T
    true_logit = logits[np.arange(len(labels)), labels]
    masked = logits.copy()
    masked[np.arange(len(labels)), labels] = -np.inf
    best_other = masked.max(axis=1)
    return float(np.mean(true_logit < best_other))


def intra_class_deviation(
    weights: WeightSample, labeled_samples, use_projection: bool = False
):
    """Mean distance of embeddings to their (unnormalized) class centroids.

    Returns (sigma, class_means) with class_means a dict label -> centroid.
    """
    emb, labels = _embed_labeled(weights, labeled_samples, use_projection)
    class_means = {}
    for label in np.unique(labels):
        class_means[int(label)] = emb[labels == label].mean(axis=0)
    centroids = np.stack([class_means[int(y)] for y in labels])
    sigma = float(np.mean(np.linalg.norm(emb - centroids, axis=1)))
    return sigma, class_means
