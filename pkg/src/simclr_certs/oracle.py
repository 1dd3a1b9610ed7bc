"""Brute-force verification of every empirically checkable certificate claim.

Each check here re-derives a property the certificate machinery relies on,
using nothing but sampling and the public loss code path:

* bounded differences: replacing one pair never moves the dataset loss by
  more than C/n (2/n for the zero-one risk);
* negative-sum concentration: the per-anchor Hoeffding slack epsilon really
  does cover the deviation of the negative similarity sum at its stated
  failure probability;
* population losses on the synthetic model, with standard errors, so
  certificates can be compared against the quantity they claim to bound;
* end-to-end certificate validity over repeated fresh-data pipeline runs;
* the downstream inequality, checked one-sidedly by training a linear head
  (any trained head upper-bounds the minimum over heads).

Every check is seeded and deterministic; per-trial seeds derive from the
root seed by a counter so serial and parallel execution agree.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .certificates import (
    BoundInputs,
    CertifyConfig,
    bound_downstream,
    bounded_difference_constant,
    certify,
)
from .dataio import (
    SyntheticModel,
    UnlabeledSample,
    make_batches,
    sample_pairs,
    split_pair_indices,
)
from .losses import (
    LossConfig,
    VARIANTS,
    cross_entropy,
    intra_class_deviation,
    simclr_loss,
    simclr_dataset_loss,
    zero_one_dataset_risk,
    zero_one_risk,
)
from .model import (
    GaussianPosterior,
    NetworkArchitecture,
    count_parameters,
    derive_seed,
    forward,
    sample_weights,
)
from .training import TrainConfig, learn_prior, train

__all__ = [
    "OracleConfig",
    "ValidityConfig",
    "DownstreamGapResult",
    "oracle_record",
    "check_bounded_difference",
    "negative_sum_epsilon",
    "check_hoeffding_negatives",
    "estimate_population_loss",
    "check_certificate_validity",
    "check_downstream_gap",
]

SHARP_RHO = -40.0  # softplus(-40) ~ 4e-18: samples collapse onto the mean


@dataclass(frozen=True)
class OracleConfig:
    """Shared knobs for the verification suite."""

    trials: int = 100
    seed: int = 0
    margin_sigmas: float = 3.0
    downstream_tolerance: float = 1e-6
    negative_pool: int = 100_000

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        if self.margin_sigmas < 0.0:
            raise ValueError("margin_sigmas must be nonnegative")
        if self.negative_pool < 1:
            raise ValueError("negative_pool must be at least 1")


def oracle_record(check: str, trials: int, max_observed: float, budget: float) -> dict:
    """Uniform JSON record; PASS means the observed extreme stayed in budget."""
    return {
        "check": check,
        "trials": int(trials),
        "max_observed": float(max_observed),
        "budget": float(budget),
        "pass": bool(max_observed <= budget),
    }


# ---------------------------------------------------------------------------
# bounded differences


def check_bounded_difference(weights, pairs, plan, config: LossConfig, trials: int,
                             loss_kind: str = "simclr", seed: int = 0,
                             replacements=None):
    """Max |dataset-loss change| from replacing one pair, and its budget.

    Each trial swaps one retained pair for a replacement (both views change
    together) and remeasures the full empirical loss on the same batch plan.
    Replacements default to other pairs of the dataset; pass fresh pairs to
    probe beyond the empirical support. Returns (max_observed, budget) with
    budget C/n for the contrastive loss and 2/n for the zero-one risk.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    if loss_kind not in ("simclr", "zero_one"):
        raise ValueError("loss_kind must be 'simclr' or 'zero_one'")

    def measure(current_pairs) -> float:
        if loss_kind == "simclr":
            return simclr_dataset_loss(weights, current_pairs, plan, config).value
        return zero_one_dataset_risk(weights, current_pairs, plan, config.use_projection)

    n = plan.retained
    budget = (
        bounded_difference_constant(config.tau, plan.batch_size_m, config.variant) / n
        if loss_kind == "simclr" else 2.0 / n
    )
    base = measure(pairs)
    retained = plan.all_indices()
    rng = np.random.default_rng([seed, 0x0B0D])
    max_observed = 0.0
    mutated = list(pairs)
    for t in range(trials):
        i = retained[int(rng.integers(len(retained)))]
        if replacements is not None:
            replacement = replacements[t % len(replacements)]
        else:
            replacement = pairs[int(rng.integers(len(pairs)))]
        original = mutated[i]
        mutated[i] = replacement
        max_observed = max(max_observed, abs(measure(mutated) - base))
        mutated[i] = original
    return max_observed, budget


# ---------------------------------------------------------------------------
# negative-sum concentration


def negative_sum_epsilon(tau: float, m: int, delta: float,
                         variant: str = "simplified") -> float:
    """One-sided Hoeffding slack for the per-anchor negative similarity sum.

    Solves exp(-2 eps^2 / (K w^2)) = delta for eps, with w the per-term range
    e^{1/tau} - e^{-1/tau} and K = m-1 independent latents (the original
    variant contributes two coupled terms per latent, doubling the range).
    The certificate-side epsilon at exponent alpha equals this quantity
    evaluated at failure probability (delta/2)^{1/alpha}.
    """
    if m < 2:
        raise ValueError("m must be at least 2")
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    width = math.exp(1.0 / tau) - math.exp(-1.0 / tau)
    base = width * math.sqrt((m - 1) / 2.0 * math.log(1.0 / delta))
    if variant == "simplified":
        return base
    if variant == "original":
        return 2.0 * base
    raise ValueError(f"variant must be one of {VARIANTS}")


def _embed_fresh_views(weights, synthetic: SyntheticModel, count: int,
                       rng: np.random.Generator, use_projection: bool) -> np.ndarray:
    latents, _ = synthetic.sample_latents(count, rng)
    views = latents + synthetic.augmentation_std * rng.normal(size=latents.shape)
    return forward(weights, views, use_projection)


def check_hoeffding_negatives(weights, synthetic: SyntheticModel, tau: float, m: int,
                              delta: float, trials: int, variant: str = "simplified",
                              epsilon_scale: float = 1.0, pool_size: int = 100_000,
                              use_projection: bool = False, seed: int = 0) -> float:
    """Observed rate of S(x, X) - E[S | x] >= eps over fresh anchors.

    E[S | x] is estimated from one pool of pool_size fresh negative
    embeddings shared across anchors (the negatives' marginal does not
    depend on the anchor); the estimation error is folded into the caller's
    PASS margin. epsilon_scale probes sensitivity: doubling eps must shrink
    the rate.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    if epsilon_scale <= 0.0:
        raise ValueError("epsilon_scale must be positive")
    eps = epsilon_scale * negative_sum_epsilon(tau, m, delta, variant)
    rng = np.random.default_rng([seed, 0x40EF])

    if variant == "original":
        # two coupled terms per latent: both views of each fresh pair
        pool_latents, _ = synthetic.sample_latents(pool_size, rng)
        noise = synthetic.augmentation_std
        pool_a = forward(
            weights, pool_latents + noise * rng.normal(size=pool_latents.shape),
            use_projection,
        )
        pool_b = forward(
            weights, pool_latents + noise * rng.normal(size=pool_latents.shape),
            use_projection,
        )
    else:
        pool_a = _embed_fresh_views(weights, synthetic, pool_size, rng, use_projection)
    anchors = _embed_fresh_views(weights, synthetic, trials, rng, use_projection)

    expected = np.empty(trials)
    chunk = max(1, int(2e7) // pool_size)
    for start in range(0, trials, chunk):
        block = anchors[start:start + chunk]
        mean_sim = np.mean(np.exp(block @ pool_a.T / tau), axis=1)
        if variant == "original":
            mean_sim = mean_sim + np.mean(np.exp(block @ pool_b.T / tau), axis=1)
        expected[start:start + chunk] = (m - 1) * mean_sim

    k = m - 1
    if variant == "simplified":
        negs = _embed_fresh_views(weights, synthetic, trials * k, rng, use_projection)
        negs = negs.reshape(trials, k, -1)
        observed = np.sum(np.exp(np.einsum("td,tkd->tk", anchors, negs) / tau), axis=1)
    else:
        latents, _ = synthetic.sample_latents(trials * k, rng)
        noise = synthetic.augmentation_std
        dim = latents.shape[1]
        emb_a = forward(weights, latents + noise * rng.normal(size=(trials * k, dim)),
                        use_projection).reshape(trials, k, -1)
        emb_b = forward(weights, latents + noise * rng.normal(size=(trials * k, dim)),
                        use_projection).reshape(trials, k, -1)
        observed = (
            np.sum(np.exp(np.einsum("td,tkd->tk", anchors, emb_a) / tau), axis=1)
            + np.sum(np.exp(np.einsum("td,tkd->tk", anchors, emb_b) / tau), axis=1)
        )
    return float(np.mean(observed - expected >= eps))


# ---------------------------------------------------------------------------
# population losses


def estimate_population_loss(posterior: GaussianPosterior, synthetic: SyntheticModel,
                             loss_kind: str, m: int, fresh_batches: int, seed: int,
                             loss_config: LossConfig | None = None):
    """Monte Carlo population loss over fresh batches never seen in training.

    Each batch draws its own posterior weights and m fresh pairs, so batch
    values are i.i.d. and the reported standard error is the plain CLT one.
    Returns (estimate, std_error).
    """
    if loss_kind not in ("simclr", "simclr_eps", "zero_one"):
        raise ValueError("loss_kind must be 'simclr', 'simclr_eps' or 'zero_one'")
    if fresh_batches < 2:
        raise ValueError("fresh_batches must be at least 2 for a standard error")
    if loss_config is None:
        loss_config = LossConfig()
    if loss_kind == "simclr":
        loss_config = loss_config.with_epsilon(0.0)
    values = np.empty(fresh_batches)
    for b in range(fresh_batches):
        weights = sample_weights(posterior, derive_seed(seed, 0x70, b))
        batch = sample_pairs(synthetic, m, None, seed=derive_seed(seed, 0x71, b))
        if loss_kind == "zero_one":
            values[b] = zero_one_risk(weights, batch, loss_config.use_projection)
        else:
            values[b] = simclr_loss(weights, batch, loss_config).value
    estimate = float(np.mean(values))
    std_error = float(np.std(values, ddof=1) / math.sqrt(fresh_batches))
    return estimate, std_error


# ---------------------------------------------------------------------------
# end-to-end certificate validity


@dataclass(frozen=True)
class ValidityConfig:
    """One full pipeline setting for repeated fresh-data certificate runs."""

    dim: int = 6
    num_classes: int = 3
    sphere_radius: float = 2.5
    class_std: float = 0.2
    augmentation_std: float = 0.1
    hidden_widths: tuple[int, ...] = (8, 4)
    n_pairs: int = 2000
    prior_fraction: float = 0.8
    prior_epochs: int = 5
    posterior_epochs: int = 5
    learning_rate: float = 0.5
    momentum: float = 0.9
    sigma0: float = 0.05
    tau: float = 1.0
    m: int = 10
    delta: float = 0.04
    p_mc: int = 100
    variant: str = "simplified"
    fresh_batches: int = 400
    margin_sigmas: float = 3.0
    mode: str = "trained"  # or "prior_equals_posterior" (KL = 0, no training)
    thm2_constant_scale: float = 1.0  # < 1 corrupts the McDiarmid constant
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("trained", "prior_equals_posterior"):
            raise ValueError("mode must be 'trained' or 'prior_equals_posterior'")
        if self.thm2_constant_scale <= 0.0:
            raise ValueError("thm2_constant_scale must be positive")
        n_cert = self.n_pairs - int(self.prior_fraction * self.n_pairs)
        if n_cert % self.m != 0:
            raise ValueError(
                f"certificate subset size {n_cert} must be divisible by m={self.m}"
            )


def _pipeline_posterior(config: ValidityConfig, synthetic: SyntheticModel,
                        pairs, run_seed: int):
    """Train (or fabricate) a posterior/prior pair plus the certificate subset."""
    arch = NetworkArchitecture((config.dim, *config.hidden_widths))
    prior_idx, cert_idx = split_pair_indices(
        config.n_pairs, config.prior_fraction, seed=derive_seed(run_seed, 2)
    )
    cert_pairs = [pairs[i] for i in cert_idx]
    prior_sources = {pairs[i].source_index for i in prior_idx}
    if config.mode == "prior_equals_posterior":
        rng = np.random.default_rng([run_seed, 0x5AA5])
        mu = rng.normal(scale=0.5, size=count_parameters(arch))
        rho = np.full_like(mu, SHARP_RHO)
        posterior = GaussianPosterior(arch=arch, mu=mu, rho=rho)
        prior = posterior.copy()
        return posterior, prior, cert_pairs, prior_sources
    loss_config = LossConfig(tau=config.tau, variant=config.variant)
    prior_config = TrainConfig(
        epochs=config.prior_epochs, batch_size_m=config.m,
        learning_rate=config.learning_rate, momentum=config.momentum,
        delta=config.delta, sigma0=config.sigma0,
        seed=derive_seed(run_seed, 3), loss=loss_config,
    )
    prior, _ = learn_prior(arch, [pairs[i] for i in prior_idx], prior_config)
    posterior_config = replace(
        prior_config, epochs=config.posterior_epochs, seed=derive_seed(run_seed, 4)
    )
    # the posterior sees everything; the certificate set only has to be
    # independent of the prior
    posterior, _ = train(prior.copy(), prior, pairs, posterior_config)
    return posterior, prior, cert_pairs, prior_sources


LOSS_BOUND_NAMES = (
    "thm1_extended_kl", "thm2_mcdiarmid", "classic_iid", "kl_iid",
    "catoni_iid", "f_divergence",
)


def check_certificate_validity(config: ValidityConfig, runs: int) -> int:
    """Count fresh-data pipeline runs where any certificate undershoots the
    population value by more than margin_sigmas standard errors."""
    if runs < 1:
        raise ValueError("runs must be at least 1")
    violations = 0
    for r in range(runs):
        run_seed = derive_seed(config.seed, 0xCE, r)
        synthetic = SyntheticModel(
            dim=config.dim, num_classes=config.num_classes,
            sphere_radius=config.sphere_radius, class_std=config.class_std,
            augmentation_std=config.augmentation_std, seed=derive_seed(run_seed, 0),
        )
        pairs = sample_pairs(synthetic, config.n_pairs, None,
                             seed=derive_seed(run_seed, 1))
        posterior, prior, cert_pairs, prior_sources = _pipeline_posterior(
            config, synthetic, pairs, run_seed
        )
        certify_config = CertifyConfig(
            delta=config.delta, p_mc=config.p_mc, batch_size_m=config.m,
            loss=LossConfig(tau=config.tau, variant=config.variant),
            seed=derive_seed(run_seed, 5),
        )
        report = certify(posterior, prior, cert_pairs, certify_config,
                         prior_source_indices=prior_sources)
        pop_loss, se_loss = estimate_population_loss(
            posterior, synthetic, "simclr", config.m, config.fresh_batches,
            seed=derive_seed(run_seed, 6),
            loss_config=certify_config.loss,
        )
        pop_01, se_01 = estimate_population_loss(
            posterior, synthetic, "zero_one", config.m, config.fresh_batches,
            seed=derive_seed(run_seed, 7),
            loss_config=certify_config.loss,
        )
        bad = False
        for row in report.bounds:
            value = row["value"]
            if row["name"] == "thm2_mcdiarmid" and config.thm2_constant_scale != 1.0:
                emp = report.inputs["empirical_loss"]
                value = emp + config.thm2_constant_scale * (value - emp)
            if row["name"] in LOSS_BOUND_NAMES:
                floor = pop_loss - config.margin_sigmas * se_loss
            else:
                floor = pop_01 - config.margin_sigmas * se_01
            if value < floor:
                bad = True
        violations += int(bad)
    return violations


# ---------------------------------------------------------------------------
# downstream inequality


@dataclass(frozen=True)
class DownstreamGapResult:
    """One-sided downstream check: any trained head's loss bounds the min."""

    lhs: float
    rhs: float
    branch: str
    sigma: float
    loss_estimate: float
    loss_std_error: float
    converged: bool
    grad_norm: float
    passed: bool

    def __iter__(self):
        return iter((self.lhs, self.rhs))


def _train_head_full_batch(emb: np.ndarray, labels: np.ndarray, num_classes: int,
                           steps: int, learning_rate: float, grad_tol: float):
    """Plain full-batch gradient descent with halving on overshoot."""
    n = emb.shape[0]
    onehot = np.zeros((n, num_classes))
    onehot[np.arange(n), labels] = 1.0

    def value_and_grad(head):
        logits = emb @ head.T
        peak = logits.max(axis=1, keepdims=True)
        expd = np.exp(logits - peak)
        total = expd.sum(axis=1, keepdims=True)
        ce = float(np.mean(np.log(total[:, 0]) + peak[:, 0]
                           - logits[np.arange(n), labels]))
        grad = (expd / total - onehot).T @ emb / n
        return ce, grad

    head = np.zeros((num_classes, emb.shape[1]))
    ce, grad = value_and_grad(head)
    lr = learning_rate
    history = [ce]
    grad_norm = float(np.linalg.norm(grad))
    for _ in range(steps):
        grad_norm = float(np.linalg.norm(grad))
        if grad_norm < grad_tol:
            return head, True, grad_norm
        while lr > 1e-12:
            candidate = head - lr * grad
            ce_new, grad_new = value_and_grad(candidate)
            if ce_new <= ce:
                break
            lr *= 0.5
        else:
            break
        head, ce, grad = candidate, ce_new, grad_new
        lr = min(lr * 1.1, learning_rate)  # recover from early halvings
        history.append(ce)
        if len(history) > 100 and history[-101] - history[-1] < 1e-10:
            return head, True, float(np.linalg.norm(grad))
    grad_norm = float(np.linalg.norm(grad))
    return head, grad_norm < grad_tol, grad_norm


def check_downstream_gap(weights, synthetic: SyntheticModel, tau: float, m: int,
                         num_classes: int, variant: str = "simplified",
                         use_projection: bool = False, num_labeled: int = 2000,
                         fresh_batches: int = 200, gd_steps: int = 2000,
                         learning_rate: float = 8.0, grad_tol: float = 1e-5,
                         tolerance: float = 1e-6, seed: int = 0) -> DownstreamGapResult:
    """Check achieved linear-head cross-entropy <= downstream certificate.

    lhs comes from a head trained by full-batch gradient descent on a large
    labeled sample of augmented views (non-convergence is reported in the
    result, never hidden; an undertrained head only weakens the check).
    rhs plugs the Monte Carlo population contrastive loss and the sample
    intra-class deviation into the downstream bound.
    """
    if num_classes != synthetic.num_classes:
        raise ValueError(
            f"num_classes={num_classes} does not match the synthetic model "
            f"({synthetic.num_classes})"
        )
    rng = np.random.default_rng([seed, 0xD5])
    latents, labels = synthetic.sample_latents(num_labeled, rng)
    views = latents + synthetic.augmentation_std * rng.normal(size=latents.shape)
    labeled = [
        UnlabeledSample(features=views[i], label=int(labels[i]), source_index=i)
        for i in range(num_labeled)
    ]

    emb = forward(weights, views, use_projection)
    head, converged, grad_norm = _train_head_full_batch(
        emb, labels, num_classes, gd_steps, learning_rate, grad_tol
    )
    lhs = cross_entropy(weights, head, labeled, use_projection)

    sigma, _ = intra_class_deviation(weights, labeled, use_projection)
    sharp = GaussianPosterior(
        arch=weights.arch, mu=weights.values.copy(),
        rho=np.full_like(weights.values, SHARP_RHO),
    )
    loss_config = LossConfig(tau=tau, variant=variant, use_projection=use_projection)
    loss_estimate, loss_se = estimate_population_loss(
        sharp, synthetic, "simclr", m, fresh_batches,
        seed=derive_seed(seed, 0xD6), loss_config=loss_config,
    )
    inputs = BoundInputs(
        empirical_loss=0.0, kl_qp=0.0, n=1, m=m, tau=tau, delta=0.5,
        variant=variant, num_classes=num_classes,
    )
    bound = bound_downstream(inputs, contrastive_loss=loss_estimate, sigma=sigma)
    return DownstreamGapResult(
        lhs=lhs, rhs=bound.value, branch=bound.branch, sigma=sigma,
        loss_estimate=loss_estimate, loss_std_error=loss_se,
        converged=converged, grad_norm=grad_norm,
        passed=lhs <= bound.value + tolerance,
    )
