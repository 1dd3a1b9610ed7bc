"""Risk certificates for contrastive learning with probabilistic networks.

Two families of high-probability upper bounds are computed from the same
small set of inputs (empirical loss, KL(Q||P), n, m, tau, delta):

* contrastive-loss certificates: a McDiarmid-based additive bound whose
  constant comes from the bounded-difference property of the batch loss, and
  an extended kl-inverse bound that handles the non-i.i.d. batch structure by
  discarding a per-anchor concentration failure event (the epsilon-modified
  loss, optimized over a grid of failure exponents alpha);
* contrastive zero-one certificates: the analogous additive and kl-inverse
  bounds for the in-batch ranking risk.

Baseline bounds treat the n/m batches as i.i.d. examples of an m-sized
product loss (classic additive, kl-inverse, Catoni, and an f-divergence
style bound with KL substituted for chi-square), and a downstream bound
converts a contrastive loss level into a cross-entropy guarantee for the
best linear classifier.

All empirical posterior losses are estimated by Monte Carlo weight sampling
with a fixed reduction order, so reports are bit-reproducible per seed.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .dataio import make_batches
from .losses import (
    LossConfig,
    VARIANTS,
    _anchor_statistics,
    _loss_from_statistics,
    _stack_views,
    _zero_one_from_embeddings,
    loss_range_bound,
)
from .model import derive_seed, forward, sample_weights
from .numerics import _catoni_value, catoni_infimum, kl_inverse

__all__ = [
    "BoundInputs",
    "Constants",
    "CertifyConfig",
    "CertificateReport",
    "DownstreamBound",
    "B_FORMS",
    "bounded_difference_constant",
    "hoeffding_epsilon",
    "thm1_range_constant",
    "zero_one_gamma",
    "constants_for",
    "mc_empirical_loss",
    "bound_thm2_mcdiarmid",
    "bound_thm1_extended_kl",
    "bound_thm4_zero_one",
    "bound_thm5_zero_one_kl",
    "bound_baselines",
    "bound_downstream",
    "certify",
]

B_FORMS = ("theorem", "corollary")
BASELINE_KINDS = ("classic_iid", "kl_iid", "catoni_iid", "f_divergence")
DEFAULT_ALPHA_GRID = (0.1, 0.2, 0.3, 0.4, 0.5)


# ---------------------------------------------------------------------------
# constants


def bounded_difference_constant(tau: float, m: int, variant: str = "simplified") -> float:
    """Bounded-difference constant C of the McDiarmid route (budget is C/n)."""
    if tau <= 0.0:
        raise ValueError("tau must be positive")
    if m < 2:
        raise ValueError("m must be at least 2")
    if variant == "simplified":
        # log((m-1 + e^{2/tau})/m) via logaddexp for large 2/tau
        return 4.0 / tau + (m - 1) * (np.logaddexp(math.log(m - 1), 2.0 / tau) - math.log(m))
    if variant == "original":
        return 4.0 / tau + 2.0 * (m - 1) * (
            np.logaddexp(math.log(2 * (m - 1)), 2.0 / tau) - math.log(2 * m - 1)
        )
    raise ValueError(f"variant must be one of {VARIANTS}")


def hoeffding_epsilon(tau: float, m: int, alpha: float, delta: float,
                      variant: str = "simplified") -> float:
    """Per-anchor negative-sum concentration slack for failure exponent alpha."""
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    base = (math.exp(1.0 / tau) - math.exp(-1.0 / tau)) * math.sqrt(
        (m - 1) / (2.0 * alpha) * math.log(2.0 / delta)
    )
    if variant == "simplified":
        return base
    if variant == "original":
        return 2.0 * base
    raise ValueError(f"variant must be one of {VARIANTS}")


def thm1_range_constant(tau: float, m: int, epsilon: float, b_form: str = "theorem") -> float:
    """Range constant B of the extended kl bound.

    theorem form: 1/tau + log(m e^{1/tau}) + epsilon (larger, safe default);
    corollary form: 1/tau + log(m e^{1/tau} + epsilon).
    """
    if epsilon < 0.0:
        raise ValueError("epsilon must be nonnegative")
    log_core = math.log(m) + 1.0 / tau
    if b_form == "theorem":
        return 1.0 / tau + log_core + epsilon
    if b_form == "corollary":
        log_eps = math.log(epsilon) if epsilon > 0.0 else -math.inf
        return 1.0 / tau + float(np.logaddexp(log_core, log_eps))
    raise ValueError(f"b_form must be one of {B_FORMS}")


def zero_one_gamma(m: int, delta: float, alpha: float) -> float:
    """Concentration slack of the zero-one kl bound."""
    if m < 2:
        raise ValueError("m must be at least 2")
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    return math.sqrt(math.log(2.0 / delta) / (2.0 * (m - 1) * alpha))


@dataclass(frozen=True)
class Constants:
    """Every bound constant for one (tau, m, variant, delta, alpha) setting."""

    c_mcdiarmid: float
    epsilon: float
    b_thm1: float
    b_loss: float
    gamma: float

    def __post_init__(self):
        for name in ("c_mcdiarmid", "epsilon", "b_thm1", "b_loss", "gamma"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"constant {name} must be positive")


def constants_for(tau: float, m: int, variant: str, delta: float, alpha: float,
                  b_form: str = "theorem") -> Constants:
    eps = hoeffding_epsilon(tau, m, alpha, delta, variant)
    return Constants(
        c_mcdiarmid=bounded_difference_constant(tau, m, variant),
        epsilon=eps,
        b_thm1=thm1_range_constant(tau, m, eps, b_form),
        b_loss=loss_range_bound(tau, m, variant),
        gamma=zero_one_gamma(m, delta, alpha),
    )


# ---------------------------------------------------------------------------
# inputs


@dataclass(frozen=True)
class BoundInputs:
    """Everything a bound formula needs besides its grid/lambda arguments."""

    empirical_loss: float
    kl_qp: float
    n: int
    m: int
    tau: float
    delta: float
    variant: str = "simplified"
    num_classes: int | None = None

    def __post_init__(self):
        if self.empirical_loss < 0.0:
            raise ValueError("empirical_loss must be nonnegative")
        if self.kl_qp < 0.0:
            raise ValueError("kl_qp must be nonnegative")
        if self.n < 1:
            raise ValueError("n must be positive")
        if self.m < 2:
            raise ValueError("m must be at least 2")
        if self.tau <= 0.0:
            raise ValueError("tau must be positive")
        if not 0.0 < self.delta < 1.0:
            raise ValueError("delta must lie in (0, 1)")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        if self.num_classes is not None and self.num_classes < 1:
            raise ValueError("num_classes must be positive when given")


# ---------------------------------------------------------------------------
# Monte Carlo empirical losses

LOSS_KINDS = ("simclr", "simclr_eps", "zero_one")


def _mc_all_losses(posterior, pairs, plan, loss_config: LossConfig,
                   eps_by_key: dict, p_mc: int, seed: int):
    """One MC sweep computing the plain loss, every requested epsilon-modified
    loss, and the zero-one risk from shared per-batch embeddings.

    Returns (base_mean, {key: eps_loss_mean}, zero_one_mean).
    """
    base_config = loss_config.with_epsilon(0.0)
    base_total = 0.0
    eps_totals = {key: 0.0 for key in eps_by_key}
    zero_one_total = 0.0
    batches = [[pairs[i] for i in idx] for idx in plan.assignments]
    stacked = [_stack_views(b) for b in batches]
    for j in range(p_mc):
        weights = sample_weights(posterior, derive_seed(seed, 0x3C, j))
        base_sum = 0.0
        eps_sums = {key: 0.0 for key in eps_by_key}
        zero_one_sum = 0.0
        for views_a, views_b in stacked:
            emb_a = forward(weights, views_a, loss_config.use_projection)
            emb_b = forward(weights, views_b, loss_config.use_projection)
            pos, neg = _anchor_statistics(emb_a, emb_b, base_config)
            base_sum += _loss_from_statistics(pos, neg, base_config)
            for key, eps in eps_by_key.items():
                eps_sums[key] += _loss_from_statistics(
                    pos, neg, base_config.with_epsilon(eps)
                )
            zero_one_sum += _zero_one_from_embeddings(emb_a, emb_b)
        num_batches = len(batches)
        base_total += base_sum / num_batches
        for key in eps_by_key:
            eps_totals[key] += eps_sums[key] / num_batches
        zero_one_total += zero_one_sum / num_batches
    return (
        base_total / p_mc,
        {key: total / p_mc for key, total in eps_totals.items()},
        zero_one_total / p_mc,
    )


def mc_empirical_loss(posterior, pairs, plan, loss_kind: str, p_mc: int, seed: int,
                      loss_config: LossConfig | None = None) -> float:
    """Posterior-averaged empirical loss over p_mc weight draws.

    loss_kind selects the plain contrastive loss (epsilon forced to 0), the
    epsilon-modified loss (epsilon taken from loss_config), or the zero-one
    risk. Deterministic per seed.
    """
    if loss_kind not in LOSS_KINDS:
        raise ValueError(f"loss_kind must be one of {LOSS_KINDS}")
    if p_mc < 1:
        raise ValueError("p_mc must be at least 1")
    if loss_config is None:
        loss_config = LossConfig()
    eps_by_key = {"eps": loss_config.epsilon} if loss_kind == "simclr_eps" else {}
    base, eps_losses, zero_one = _mc_all_losses(
        posterior, pairs, plan, loss_config, eps_by_key, p_mc, seed
    )
    if loss_kind == "simclr":
        return base
    if loss_kind == "simclr_eps":
        return eps_losses["eps"]
    return zero_one


# ---------------------------------------------------------------------------
# bounds


def bound_thm2_mcdiarmid(inputs: BoundInputs) -> float:
    """Additive certificate: empirical loss + C sqrt((KL + log(2n/d))/(2(n-1)))."""
    if inputs.n < 2:
        raise ValueError("the McDiarmid bound needs n >= 2")
    c = bounded_difference_constant(inputs.tau, inputs.m, inputs.variant)
    radicand = (inputs.kl_qp + math.log(2.0 * inputs.n / inputs.delta)) / (2.0 * (inputs.n - 1))
    return inputs.empirical_loss + c * math.sqrt(radicand)


def _alpha_tails(delta: float, alpha: float):
    tail1 = (delta / 2.0) ** ((1.0 - alpha) / alpha)
    tail2 = (delta / 2.0) ** (1.0 / alpha)
    return tail1, tail2


def bound_thm1_extended_kl(inputs: BoundInputs, alpha_grid=DEFAULT_ALPHA_GRID,
                           loss_for_alpha=None, b_form: str = "theorem"):
    """Extended kl-inverse certificate, minimized over the alpha grid.

    The epsilon-modified empirical loss depends on alpha; pass loss_for_alpha
    as a callable (alpha, epsilon) -> loss to re-evaluate it per grid point,
    otherwise inputs.empirical_loss is used for every alpha (valid for
    formula-level evaluation with an externally fixed loss).

    Returns (bound, alpha_star).
    """
    if b_form not in B_FORMS:
        raise ValueError(f"b_form must be one of {B_FORMS}")
    best = math.inf
    best_alpha = None
    budget = (inputs.kl_qp + math.log(math.sqrt(inputs.n) / inputs.delta)) / inputs.n
    for alpha in alpha_grid:
        eps = hoeffding_epsilon(inputs.tau, inputs.m, alpha, inputs.delta, inputs.variant)
        b = thm1_range_constant(inputs.tau, inputs.m, eps, b_form)
        loss = (
            loss_for_alpha(alpha, eps) if loss_for_alpha is not None
            else inputs.empirical_loss
        )
        tail1, tail2 = _alpha_tails(inputs.delta, alpha)
        arg1 = max(0.0, loss / b + tail1)
        if arg1 >= 1.0:
            value = b + tail2
        else:
            value = b * kl_inverse(arg1, budget) + tail2
        if value < best:
            best = value
            best_alpha = alpha
    return best, best_alpha


def bound_thm4_zero_one(inputs: BoundInputs) -> float:
    """Additive zero-one certificate (McDiarmid form with constant 2)."""
    if inputs.n < 2:
        raise ValueError("the zero-one McDiarmid bound needs n >= 2")
    radicand = (inputs.kl_qp + math.log(2.0 * inputs.n / inputs.delta)) / (2.0 * (inputs.n - 1))
    return inputs.empirical_loss + 2.0 * math.sqrt(radicand)


def bound_thm5_zero_one_kl(inputs: BoundInputs, alpha_grid=DEFAULT_ALPHA_GRID):
    """kl-inverse zero-one certificate, minimized over the alpha grid.

    Returns (bound, alpha_star).
    """
    best = math.inf
    best_alpha = None
    budget = (inputs.kl_qp + math.log(math.sqrt(inputs.n) / inputs.delta)) / inputs.n
    for alpha in alpha_grid:
        gamma = zero_one_gamma(inputs.m, inputs.delta, alpha)
        tail1, tail2 = _alpha_tails(inputs.delta, alpha)
        arg1 = max(0.0, inputs.empirical_loss + gamma + tail1)
        if arg1 >= 1.0:
            value = 1.0 + gamma + tail2
        else:
            value = kl_inverse(arg1, budget) + gamma + tail2
        if value < best:
            best = value
            best_alpha = alpha
    return best, best_alpha


def bound_baselines(inputs: BoundInputs, kind: str, lambda_: float | None = None,
                    range_bound: float | None = None) -> float:
    """Bounds treating the n/m batches as i.i.d. draws of an m-term loss.

    range_bound overrides the contrastive range (pass 1.0 for the zero-one
    analogues). lambda_ evaluates the Catoni bound at a fixed lambda instead
    of taking the infimum; it is ignored by the other kinds.
    """
    if kind not in BASELINE_KINDS:
        raise ValueError(f"kind must be one of {BASELINE_KINDS}")
    if inputs.n % inputs.m != 0:
        raise ValueError(
            f"batch baselines need n divisible by m, got n={inputs.n}, m={inputs.m}"
        )
    b_loss = (
        range_bound if range_bound is not None
        else loss_range_bound(inputs.tau, inputs.m, inputs.variant)
    )
    if b_loss <= 0.0:
        raise ValueError("range_bound must be positive")
    n, m, delta, kl = inputs.n, inputs.m, inputs.delta, inputs.kl_qp
    if kind == "classic_iid":
        log_term = math.log(2.0 * math.sqrt(n) / (delta * math.sqrt(m)))
        return inputs.empirical_loss + b_loss * math.sqrt(m * (kl + log_term) / (2.0 * n))
    if kind == "kl_iid":
        log_term = math.log(2.0 * math.sqrt(n) / (delta * math.sqrt(m)))
        scaled = min(inputs.empirical_loss / b_loss, 1.0)
        return b_loss * kl_inverse(scaled, m * (kl + log_term) / n)
    if kind == "catoni_iid":
        complexity = m * (kl + math.log(1.0 / delta)) / n
        scaled = min(inputs.empirical_loss / b_loss, 1.0)
        if lambda_ is not None:
            if lambda_ <= 0.0:
                raise ValueError("lambda_ must be positive")
            return b_loss * _catoni_value(lambda_, scaled, complexity)
        return b_loss * catoni_infimum(scaled, complexity)
    # f-divergence form with KL substituted for chi-square
    return inputs.empirical_loss + b_loss * math.sqrt((m - 1) / (n * delta) * (kl + 1.0))


@dataclass(frozen=True)
class DownstreamBound:
    """Cross-entropy guarantee for the best linear head on a representation."""

    value: float
    branch: str  # which side of the min won
    beta: float  # untempered reference value (prior-work comparison row)
    alpha_const: float
    delta_log: float


def bound_downstream(inputs: BoundInputs, contrastive_loss: float, sigma: float) -> DownstreamBound:
    """min(beta, tau*beta + alpha) with beta = sigma/tau + L + Delta.

    Delta = log((C/K) cosh^2(1/tau)) where K is the per-anchor negative count
    (m-1, or 2(m-1) for the original variant); alpha = log C + min(0,
    log(cosh^2(1)) - tau*Delta). sigma is the expected intra-class feature
    deviation, valid in [0, 2] for unit-sphere features.
    """
    if inputs.num_classes is None:
        raise ValueError("downstream bound needs num_classes")
    if inputs.num_classes < 2:
        raise ValueError("num_classes must be at least 2")
    if not 0.0 <= sigma <= 2.0:
        raise ValueError("sigma must lie in [0, 2] for unit-sphere features")
    if contrastive_loss < 0.0:
        raise ValueError("contrastive_loss must be nonnegative")
    tau = inputs.tau
    negatives = (inputs.m - 1) if inputs.variant == "simplified" else 2 * (inputs.m - 1)
    delta_log = math.log(inputs.num_classes / negatives * math.cosh(1.0 / tau) ** 2)
    beta = sigma / tau + contrastive_loss + delta_log
    alpha_const = math.log(inputs.num_classes) + min(
        0.0, math.log(math.cosh(1.0) ** 2) - tau * delta_log
    )
    tempered = tau * beta + alpha_const
    if beta <= tempered:
        return DownstreamBound(beta, "untempered", beta, alpha_const, delta_log)
    return DownstreamBound(tempered, "tempered", beta, alpha_const, delta_log)


# ---------------------------------------------------------------------------
# orchestration


@dataclass(frozen=True)
class CertifyConfig:
    delta: float = 0.04
    p_mc: int = 100
    alpha_grid: tuple[float, ...] = DEFAULT_ALPHA_GRID
    batch_size_m: int = 250
    loss: LossConfig = field(default_factory=LossConfig)
    b_form: str = "theorem"
    seed: int = 0
    num_classes: int | None = None
    # optional kl-inverse tail correction for the p_mc-sample MC estimate;
    # off by default, matching plain MC averaging
    mc_correction: bool = False
    mc_delta: float = 0.01

    def __post_init__(self):
        if not 0.0 < self.delta < 1.0:
            raise ValueError("delta must lie in (0, 1)")
        if self.p_mc < 1:
            raise ValueError("p_mc must be at least 1")
        if not self.alpha_grid or any(not 0.0 < a < 1.0 for a in self.alpha_grid):
            raise ValueError("alpha_grid values must lie in (0, 1)")
        if self.batch_size_m < 2:
            raise ValueError("batch_size_m must be at least 2")
        if self.b_form not in B_FORMS:
            raise ValueError(f"b_form must be one of {B_FORMS}")
        if not 0.0 < self.mc_delta < 1.0:
            raise ValueError("mc_delta must lie in (0, 1)")


@dataclass(frozen=True)
class CertificateReport:
    inputs: dict
    bounds: tuple[dict, ...]
    mc: dict

    def as_dict(self) -> dict:
        return {"inputs": self.inputs, "bounds": list(self.bounds), "mc": self.mc}

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=2, sort_keys=True)

    def bound(self, name: str) -> dict:
        for row in self.bounds:
            if row["name"] == name:
                return row
        raise KeyError(f"no bound named {name!r} in report")

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["name", "value", "vacuous", "alpha_star"])
            for row in self.bounds:
                writer.writerow([
                    row["name"],
                    repr(row["value"]),
                    row["vacuous"],
                    "" if row.get("alpha_star") is None else repr(row["alpha_star"]),
                ])


def _mc_corrected(value: float, scale: float, p_mc: int, mc_delta: float) -> float:
    """One-sided kl-inverse tail bound on a [0, scale] MC mean estimate."""
    scaled = min(value / scale, 1.0)
    return scale * kl_inverse(scaled, math.log(2.0 / mc_delta) / p_mc)


def certify(posterior, prior, certificate_pairs, config: CertifyConfig,
            prior_source_indices=None) -> CertificateReport:
    """Full certificate report for a posterior on a held-out pair set.

    The pair set must not overlap the prior's training data; when
    prior_source_indices is given, disjointness is asserted against the
    pairs' source indices. n must be divisible by m so the batch baselines
    are well defined (the partition then drops nothing).
    """
    n = len(certificate_pairs)
    m = config.batch_size_m
    if n % m != 0:
        raise ValueError(f"certificate set size {n} must be divisible by m={m}")
    if prior_source_indices is not None:
        overlap = {p.source_index for p in certificate_pairs} & set(prior_source_indices)
        if overlap:
            raise ValueError(
                f"certificate pairs overlap the prior subset at indices {sorted(overlap)[:5]}"
            )
    loss_config = config.loss
    tau, variant = loss_config.tau, loss_config.variant
    plan = make_batches(certificate_pairs, m, seed=derive_seed(config.seed, 0xB0))
    kl = posterior.kl_to(prior)
    b_loss = loss_range_bound(tau, m, variant)

    eps_by_alpha = {
        alpha: hoeffding_epsilon(tau, m, alpha, config.delta, variant)
        for alpha in config.alpha_grid
    }
    emp_loss, eps_losses, emp_zero_one = _mc_all_losses(
        posterior, certificate_pairs, plan, loss_config, eps_by_alpha,
        config.p_mc, config.seed,
    )
    if config.mc_correction:
        emp_loss = _mc_corrected(emp_loss, b_loss, config.p_mc, config.mc_delta)
        eps_losses = {
            alpha: _mc_corrected(
                value,
                thm1_range_constant(tau, m, eps_by_alpha[alpha], config.b_form),
                config.p_mc, config.mc_delta,
            )
            for alpha, value in eps_losses.items()
        }
        emp_zero_one = _mc_corrected(emp_zero_one, 1.0, config.p_mc, config.mc_delta)

    def make_inputs(empirical: float) -> BoundInputs:
        return BoundInputs(
            empirical_loss=empirical, kl_qp=kl, n=n, m=m, tau=tau,
            delta=config.delta, variant=variant, num_classes=config.num_classes,
        )

    loss_inputs = make_inputs(emp_loss)
    zero_one_inputs = make_inputs(emp_zero_one)

    rows = []

    def add(name, value, threshold, alpha_star=None, constants=None):
        rows.append({
            "name": name,
            "value": float(value),
            "vacuous": bool(value >= threshold),
            "alpha_star": alpha_star,
            "constants": constants or {},
        })

    thm1_value, thm1_alpha = bound_thm1_extended_kl(
        loss_inputs, config.alpha_grid,
        loss_for_alpha=lambda alpha, eps: eps_losses[alpha],
        b_form=config.b_form,
    )
    add("thm1_extended_kl", thm1_value, b_loss, thm1_alpha, {
        "epsilon": eps_by_alpha[thm1_alpha],
        "b_thm1": thm1_range_constant(tau, m, eps_by_alpha[thm1_alpha], config.b_form),
        "b_loss": b_loss,
        "b_form": config.b_form,
        "empirical_eps_loss": eps_losses[thm1_alpha],
    })
    add("thm2_mcdiarmid", bound_thm2_mcdiarmid(loss_inputs), b_loss, None, {
        "c_mcdiarmid": bounded_difference_constant(tau, m, variant),
        "b_loss": b_loss,
    })
    for kind in BASELINE_KINDS:
        add(kind, bound_baselines(loss_inputs, kind), b_loss, None, {
            "b_loss": b_loss, "p_batches": n // m,
        })

    thm5_value, thm5_alpha = bound_thm5_zero_one_kl(zero_one_inputs, config.alpha_grid)
    add("thm5_zero_one_kl", thm5_value, 1.0, thm5_alpha, {
        "gamma": zero_one_gamma(m, config.delta, thm5_alpha),
    })
    add("thm4_zero_one", bound_thm4_zero_one(zero_one_inputs), 1.0, None, {
        "c_mcdiarmid": 2.0,
    })
    for kind in BASELINE_KINDS:
        add(f"{kind}_zero_one", bound_baselines(zero_one_inputs, kind, range_bound=1.0),
            1.0, None, {"b_loss": 1.0, "p_batches": n // m})

    inputs_echo = {
        "n": n,
        "m": m,
        "tau": tau,
        "delta": config.delta,
        "variant": variant,
        "use_projection": loss_config.use_projection,
        "kl_qp": kl,
        "empirical_loss": emp_loss,
        "empirical_zero_one": emp_zero_one,
        "empirical_eps_losses": {repr(a): v for a, v in sorted(eps_losses.items())},
        "alpha_grid": list(config.alpha_grid),
        "b_form": config.b_form,
        "mc_correction": config.mc_correction,
    }
    if config.num_classes is not None:
        inputs_echo["num_classes"] = config.num_classes
    return CertificateReport(
        inputs=inputs_echo,
        bounds=tuple(rows),
        mc={"p_mc": config.p_mc, "seed": config.seed},
    )
