"""Acceptance gate: nine criteria with stated tolerances and runtime budgets.

Each test covers one criterion end to end and prints a single summary line
when it passes (run with -s to see the lines as they appear). High-precision
reference values are recomputed in-test with mpmath so every numeric claim is
checked through two independent routes.
"""

import itertools
import math
import time
from dataclasses import replace

import numpy as np
from mpmath import exp as mp_exp
from mpmath import log as mp_log
from mpmath import mp, mpf
from mpmath import sqrt as mp_sqrt
from sklearn.datasets import load_digits

from simclr_certs.certificates import (
    BoundInputs,
    CertifyConfig,
    bound_baselines,
    bound_thm1_extended_kl,
    bound_thm2_mcdiarmid,
    bounded_difference_constant,
    certify,
    hoeffding_epsilon,
    mc_empirical_loss,
    zero_one_gamma,
)
from simclr_certs.dataio import (
    AugmentationConfig,
    PositivePair,
    SyntheticModel,
    load_idx,
    make_batches,
    normalize_samples,
    sample_pairs,
    write_idx,
)
from simclr_certs.losses import LossConfig, loss_range_bound
from simclr_certs.model import (
    GaussianPosterior,
    NetworkArchitecture,
    count_parameters,
    derive_seed,
    initialize_posterior,
    mean_weights,
)
from simclr_certs.numerics import binary_kl, gaussian_kl, kl_inverse
from simclr_certs.oracle import (
    ValidityConfig,
    check_bounded_difference,
    check_certificate_validity,
    check_downstream_gap,
    check_hoeffding_negatives,
)
from simclr_certs.training import TrainConfig, _pinned_objective, gradient, learn_prior, train

mp.dps = 50


def announce(number: int, detail: str, elapsed: float) -> None:
    print(f"criterion {number}: PASS ({detail}; {elapsed:.1f}s)", flush=True)


def small_arch() -> NetworkArchitecture:
    return NetworkArchitecture((6, 8, 4))


def random_net(seed: int, arch: NetworkArchitecture | None = None):
    if arch is None:
        arch = small_arch()
    return mean_weights(initialize_posterior(arch, 0.05, seed))


def mp_binary_kl(q, p):
    q, p = mpf(q), mpf(p)
    total = mpf(0)
    if q > 0:
        total += q * mp_log(q / p)
    if q < 1:
        total += (1 - q) * mp_log((1 - q) / (1 - p))
    return total


def mp_kl_inverse(q, budget):
    q, budget = mpf(q), mpf(budget)
    lo, hi = q, mpf(1)
    for _ in range(300):
        mid = (lo + hi) / 2
        if mp_binary_kl(q, mid) > budget:
            hi = mid
        else:
            lo = mid
    return lo


def test_criterion_1_numerics_suite():
    start = time.monotonic()
    rng = np.random.default_rng(101)
    for _ in range(10_000):
        q_hat = rng.uniform(0.0, 0.999)
        budget = rng.uniform(1e-6, 5.0)
        q = kl_inverse(q_hat, budget)
        if q < 1.0:
            back = binary_kl(q_hat, q)
            assert budget - 1e-9 <= back <= budget
        # Pinsker relaxation: the kl-form bound never exceeds the classic form
        assert q <= q_hat + math.sqrt(budget / 2.0) + 1e-12
    assert gaussian_kl([2.0], [0.3], [2.0], [0.3]) == 0.0
    np.testing.assert_allclose(gaussian_kl([1.0], [1.0], [0.0], [1.0]), 0.5, atol=1e-9)
    np.testing.assert_allclose(
        gaussian_kl([0.0], [1.0], [0.0], [math.e**2]), 0.567667641618, atol=1e-9
    )
    elapsed = time.monotonic() - start
    assert elapsed < 10.0
    announce(1, "kl round-trip, Pinsker ordering, Gaussian KL hand values", elapsed)


def test_criterion_2_constant_cross_check():
    start = time.monotonic()

    def mp_constant(tau, m):
        tau, m = mpf(tau), mpf(m)
        return 4 / tau + (m - 1) * mp_log(((m - 1) + mp_exp(2 / tau)) / m)

    def mp_epsilon(tau, m, alpha, delta):
        tau = mpf(tau)
        width = mp_exp(1 / tau) - mp_exp(-1 / tau)
        return width * mp_sqrt(mpf(m - 1) / (2 * mpf(alpha)) * mp_log(2 / mpf(delta)))

    def mp_gamma(m, delta, alpha):
        return mp_sqrt(mp_log(2 / mpf(delta)) / (2 * (m - 1) * mpf(alpha)))

    cases = [
        (bounded_difference_constant(1.0, 2), mp_constant(1, 2), 5.4338, 1e-3),
        (bounded_difference_constant(0.5, 250), mp_constant("0.5", 250), 56.37, 0.05),
        (
            hoeffding_epsilon(1.0, 2, 0.5, 0.04),
            mp_epsilon(1, 2, "0.5", "0.04"),
            4.6489,
            1e-3,
        ),
        (
            zero_one_gamma(250, 0.04, 0.4),
            mp_gamma(250, "0.04", "0.4"),
            0.14013,
            1e-4,
        ),
    ]
    for implementation, reference, target, tolerance in cases:
        assert abs(implementation - float(reference)) < 1e-9
        assert abs(implementation - target) <= tolerance
    elapsed = time.monotonic() - start
    announce(2, "four constants match 50-digit recomputation and targets", elapsed)


def test_criterion_3_bounded_difference_oracle():
    start = time.monotonic()
    model = SyntheticModel(
        dim=6, num_classes=3, sphere_radius=2.5, class_std=0.2,
        augmentation_std=0.1, seed=31,
    )
    pairs = sample_pairs(model, 100, None, seed=32)
    replacements = sample_pairs(model, 100, None, seed=33)
    combos = list(itertools.product((0.2, 1.0), (10, 50), ("simplified", "original")))
    violations = 0
    checks = 0
    for i in range(10):
        tau, m, variant = combos[i % len(combos)]
        plan = make_batches(pairs, m, seed=derive_seed(34, i))
        observed, budget = check_bounded_difference(
            random_net(derive_seed(35, i)),
            pairs,
            plan,
            LossConfig(tau=tau, variant=variant),
            trials=100,
            seed=derive_seed(36, i),
            replacements=replacements,
        )
        checks += 1
        if observed > budget:
            violations += 1
    for m in (10, 50):
        plan = make_batches(pairs, m, seed=derive_seed(37, m))
        observed, budget = check_bounded_difference(
            random_net(derive_seed(38, m)),
            pairs,
            plan,
            LossConfig(tau=1.0),
            trials=100,
            loss_kind="zero_one",
            seed=derive_seed(39, m),
            replacements=replacements,
        )
        checks += 1
        assert budget == 2.0 / plan.retained
        if observed > budget:
            violations += 1
    assert violations == 0
    elapsed = time.monotonic() - start
    assert elapsed < 120.0
    announce(3, f"0 violations over {checks} networks x 100 perturbations", elapsed)


def test_criterion_4_hoeffding_oracle():
    start = time.monotonic()
    model = SyntheticModel(
        dim=6, num_classes=3, sphere_radius=2.5, class_std=0.2,
        augmentation_std=0.1, seed=41,
    )
    trials = 10_000
    rates = []
    for delta in (0.05, 0.1):
        rate = check_hoeffding_negatives(
            random_net(derive_seed(42, int(delta * 100))),
            model,
            tau=1.0,
            m=50,
            delta=delta,
            trials=trials,
            pool_size=50_000,
            seed=derive_seed(43, int(delta * 100)),
        )
        assert rate <= delta + 3.0 * math.sqrt(delta * (1.0 - delta) / trials)
        rates.append(rate)
    elapsed = time.monotonic() - start
    assert elapsed < 120.0
    announce(4, f"violation rates {rates[0]:.4f}, {rates[1]:.4f} within budget", elapsed)


def test_criterion_5_gradient_contract():
    start = time.monotonic()
    arch = NetworkArchitecture((4, 3, 2))
    rng = np.random.default_rng(53)
    p = count_parameters(arch)
    posterior = GaussianPosterior(arch, rng.normal(0.0, 0.4, p), rng.normal(-2.0, 0.3, p))
    prior = GaussianPosterior(arch, rng.normal(0.0, 0.4, p), rng.normal(-2.2, 0.3, p))
    pairs = [
        PositivePair(rng.normal(size=4), rng.normal(size=4), i) for i in range(3)
    ]
    config = TrainConfig(epochs=1, batch_size_m=3, loss=LossConfig(tau=0.7))
    noise_seed = 56
    result = gradient(posterior, prior, pairs, config, seed=noise_seed)
    analytic = np.concatenate([result.d_mu, result.d_rho])
    size = posterior.mu.size
    step = 1e-5
    coords = rng.choice(2 * size, size=20, replace=False)
    worst = 0.0
    for coord in coords:
        plus = posterior.copy()
        minus = posterior.copy()
        if coord < size:
            plus.mu[coord] += step
            minus.mu[coord] -= step
        else:
            plus.rho[coord - size] += step
            minus.rho[coord - size] -= step
        difference = (
            _pinned_objective(plus, prior, pairs, config, noise_seed, 3)
            - _pinned_objective(minus, prior, pairs, config, noise_seed, 3)
        ) / (2.0 * step)
        scale = max(abs(analytic[coord]), abs(difference), 1e-8)
        worst = max(worst, abs(analytic[coord] - difference) / scale)
    assert worst <= 1e-4
    elapsed = time.monotonic() - start
    assert elapsed < 30.0
    announce(5, f"20 coordinates, worst relative error {worst:.2e}", elapsed)


def test_criterion_6_certificate_validity():
    start = time.monotonic()
    config = ValidityConfig(seed=2026)
    assert config.n_pairs == 2000
    assert config.m == 10
    assert config.delta == 0.04
    violations = check_certificate_validity(config, runs=20)
    assert violations == 0
    elapsed = time.monotonic() - start
    assert elapsed < 900.0
    announce(6, "0 certificate violations across 20 end-to-end runs", elapsed)


def test_criterion_7_downstream_gap():
    start = time.monotonic()
    model = SyntheticModel(
        dim=6, num_classes=3, sphere_radius=2.5, class_std=0.2,
        augmentation_std=0.1, seed=71,
    )
    taus = (0.2, 0.5, 1.0)
    failures = []
    improvements = []
    for rep in range(10):
        net = random_net(derive_seed(72, rep))
        for tau in taus:
            result = check_downstream_gap(
                net, model, tau, m=10, num_classes=3,
                seed=derive_seed(73, rep, int(tau * 10)),
            )
            if not result.passed:
                failures.append((rep, tau, result.lhs, result.rhs))
            if tau == 0.2:
                inputs = BoundInputs(
                    empirical_loss=0.0, kl_qp=0.0, n=1, m=10, tau=tau,
                    delta=0.5, variant="simplified", num_classes=3,
                )
                from simclr_certs.certificates import bound_downstream

                reference = bound_downstream(
                    inputs, result.loss_estimate, result.sigma
                ).beta
                assert result.rhs < reference
                improvements.append(reference - result.rhs)
    assert failures == []
    elapsed = time.monotonic() - start
    assert elapsed < 300.0
    announce(
        7,
        f"30 cases hold; tau=0.2 beats reference by >= {min(improvements):.3f}",
        elapsed,
    )


def test_criterion_8_qualitative_ordering():
    start = time.monotonic()
    loss_hat, kl, n, m, tau, delta = mpf("4.9"), mpf(13), 10_000, 250, mpf(1), mpf("0.04")
    b_loss = 2 / tau + mp_log(m)
    constant = 4 / tau + (m - 1) * mp_log(((m - 1) + mp_exp(2 / tau)) / m)
    thm2_ref = loss_hat + constant * mp_sqrt(
        (kl + mp_log(2 * n / delta)) / (2 * (n - 1))
    )
    budget = (kl + mp_log(mp_sqrt(n) / delta)) / n
    thm1_ref = mpf("inf")
    for alpha in (mpf("0.1"), mpf("0.2"), mpf("0.3"), mpf("0.4"), mpf("0.5")):
        width = mp_exp(1 / tau) - mp_exp(-1 / tau)
        epsilon = width * mp_sqrt((m - 1) / (2 * alpha) * mp_log(2 / delta))
        b_alpha = 1 / tau + mp_log(m * mp_exp(1 / tau)) + epsilon
        tail1 = (delta / 2) ** ((1 - alpha) / alpha)
        tail2 = (delta / 2) ** (1 / alpha)
        argument = loss_hat / b_alpha + tail1
        if argument >= 1:
            candidate = b_alpha + tail2
        else:
            candidate = b_alpha * mp_kl_inverse(argument, budget) + tail2
        thm1_ref = min(thm1_ref, candidate)
    kl_iid_ref = b_loss * mp_kl_inverse(
        loss_hat / b_loss, m * (kl + mp_log(2 * mp_sqrt(mpf(n) / m) / delta)) / n
    )
    classic_ref = loss_hat + b_loss * mp_sqrt(
        m * (kl + mp_log(2 * mp_sqrt(mpf(n) / m) / delta)) / (2 * n)
    )
    f_div_ref = loss_hat + b_loss * mp_sqrt((m - 1) / (mpf(n) * delta) * (kl + 1))

    inputs = BoundInputs(
        empirical_loss=4.9, kl_qp=13.0, n=10_000, m=250, tau=1.0, delta=0.04,
        variant="simplified",
    )
    thm2 = bound_thm2_mcdiarmid(inputs)
    thm1, _ = bound_thm1_extended_kl(inputs)
    kl_iid = bound_baselines(inputs, "kl_iid")
    classic = bound_baselines(inputs, "classic_iid")
    f_div = bound_baselines(inputs, "f_divergence")
    for value, reference in (
        (thm2, thm2_ref),
        (thm1, thm1_ref),
        (kl_iid, kl_iid_ref),
        (classic, classic_ref),
        (f_div, f_div_ref),
    ):
        assert abs(value - float(reference)) <= 1e-8 * max(1.0, float(reference))
    assert thm2 < thm1 < kl_iid < classic
    assert f_div > loss_range_bound(1.0, 250)
    elapsed = time.monotonic() - start
    announce(
        8,
        f"{thm2:.3f} < {thm1:.3f} < {kl_iid:.3f} < {classic:.3f}, f-div vacuous",
        elapsed,
    )


def test_criterion_9_desk_scale_end_to_end(tmp_path):
    start = time.monotonic()
    digits = load_digits()
    rng = np.random.default_rng(91)
    order = rng.permutation(len(digits.target))
    train_ids, test_ids = order[:1500], order[1500:]
    images = (digits.images * 15.0).astype(np.uint8)
    write_idx(
        tmp_path / "train-images", tmp_path / "train-labels",
        images[train_ids], digits.target[train_ids].astype(np.uint8),
    )
    write_idx(
        tmp_path / "test-images", tmp_path / "test-labels",
        images[test_ids], digits.target[test_ids].astype(np.uint8),
    )
    train_raw, stats = load_idx(tmp_path / "train-images", tmp_path / "train-labels")
    test_raw, _ = load_idx(tmp_path / "test-images", tmp_path / "test-labels")
    train_samples = normalize_samples(train_raw, stats)
    test_samples = normalize_samples(test_raw, stats)

    # prior and certificate pairs come from disjoint sample pools
    augment = AugmentationConfig()
    prior_pool = train_samples[:1200]
    cert_pool = train_samples[1200:]
    prior_pairs = sample_pairs(prior_pool, 8000, augment, seed=92)
    cert_pairs = sample_pairs(cert_pool, 2000, augment, seed=93)
    all_pairs = prior_pairs + cert_pairs

    arch = NetworkArchitecture((64, 128, 128, 64))
    loss_config = LossConfig(tau=1.0)
    train_config = TrainConfig(
        epochs=30, batch_size_m=250, learning_rate=0.5, momentum=0.9,
        sigma0=0.05, delta=0.04, seed=94, loss=loss_config,
    )
    prior, _ = learn_prior(arch, prior_pairs, train_config)
    posterior, _ = train(prior, prior, all_pairs, replace(train_config, seed=95))

    report = certify(
        posterior,
        prior,
        cert_pairs,
        CertifyConfig(
            delta=0.04, p_mc=100, batch_size_m=250, loss=loss_config,
            b_form="corollary", seed=96,
        ),
        prior_source_indices=[p.source_index for p in prior_pairs],
    )
    thm1 = report.bound("thm1_extended_kl")["value"]
    thm2 = report.bound("thm2_mcdiarmid")["value"]
    thm5 = report.bound("thm5_zero_one_kl")["value"]

    test_pairs = sample_pairs(test_samples, 2000, augment, seed=97)
    plan = make_batches(test_pairs, 250, seed=98)
    test_loss = mc_empirical_loss(
        posterior, test_pairs, plan, "simclr", p_mc=30, seed=99,
        loss_config=loss_config,
    )

    b_loss = loss_range_bound(1.0, 250)
    assert math.isfinite(thm1) and thm1 < b_loss
    assert math.isfinite(thm2) and thm2 < b_loss
    assert abs(thm1 - test_loss) <= 1.5
    assert abs(thm2 - test_loss) <= 1.5
    assert thm5 < 0.5
    elapsed = time.monotonic() - start
    assert elapsed < 2700.0
    announce(
        9,
        f"thm1 {thm1:.3f}, thm2 {thm2:.3f}, test {test_loss:.3f}, "
        f"thm5 {thm5:.3f}, range {b_loss:.3f}",
        elapsed,
    )
