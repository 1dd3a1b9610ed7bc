"""Verification-suite tests.

These exercise the oracle checks at desk scale: small nets, small pair
counts, trimmed trial budgets. The full-protocol runs (the published trial
counts and time limits) live in the acceptance suite.
"""

import math

import numpy as np
import pytest

from simclr_certs.certificates import bound_downstream, BoundInputs, hoeffding_epsilon
from simclr_certs.dataio import SyntheticModel, make_batches, sample_pairs
from simclr_certs.losses import LossConfig, loss_range_bound
from simclr_certs.model import (
    NetworkArchitecture,
    WeightSample,
    count_parameters,
    initialize_posterior,
    mean_weights,
)
from simclr_certs.oracle import (
    DownstreamGapResult,
    OracleConfig,
    ValidityConfig,
    check_bounded_difference,
    check_certificate_validity,
    check_downstream_gap,
    check_hoeffding_negatives,
    estimate_population_loss,
    negative_sum_epsilon,
    oracle_record,
)


def small_model(seed: int = 0, **overrides) -> SyntheticModel:
    kwargs = dict(
        dim=5, num_classes=3, sphere_radius=2.5, class_std=0.2,
        augmentation_std=0.1, seed=seed,
    )
    kwargs.update(overrides)
    return SyntheticModel(**kwargs)


def random_net(arch: NetworkArchitecture, seed: int) -> WeightSample:
    return mean_weights(initialize_posterior(arch, sigma0=0.05, seed=seed))


def constant_net(dim: int) -> WeightSample:
    # zero weights collapse every input to the same unit vector
    arch = NetworkArchitecture((dim, 3))
    flat = np.zeros(count_parameters(arch))
    return WeightSample(arch=arch, values=flat, epsilon=flat.copy())


class TestOracleConfig:
    def test_defaults_valid(self):
        config = OracleConfig()
        assert config.trials == 100

    @pytest.mark.parametrize("bad", [
        dict(trials=0), dict(margin_sigmas=-1.0), dict(negative_pool=0),
    ])
    def test_validation(self, bad):
        with pytest.raises(ValueError):
            OracleConfig(**bad)


class TestOracleRecord:
    def test_pass_iff_within_budget(self):
        record = oracle_record("bounded_difference", 100, 0.01, 0.02)
        assert record == {
            "check": "bounded_difference", "trials": 100,
            "max_observed": 0.01, "budget": 0.02, "pass": True,
        }
        assert not oracle_record("x", 1, 0.03, 0.02)["pass"]


class TestBoundedDifference:
    def setup_method(self):
        self.synthetic = small_model(seed=3)
        self.pairs = sample_pairs(self.synthetic, 40, None, seed=11)
        self.plan = make_batches(self.pairs, 10, seed=5)

    def test_constant_representation_never_moves(self):
        weights = constant_net(5)
        config = LossConfig(tau=0.5)
        observed, budget = check_bounded_difference(
            weights, self.pairs, self.plan, config, trials=30, seed=1
        )
        assert observed == 0.0
        assert budget > 0.0

    @pytest.mark.parametrize("tau", [0.2, 1.0])
    def test_random_nets_stay_in_budget(self, tau):
        arch = NetworkArchitecture((5, 8, 4))
        fresh = sample_pairs(self.synthetic, 100, None, seed=77)
        config = LossConfig(tau=tau)
        for net_seed in range(10):
            weights = random_net(arch, net_seed)
            observed, budget = check_bounded_difference(
                weights, self.pairs, self.plan, config, trials=100,
                seed=net_seed, replacements=fresh,
            )
            assert 0.0 < observed <= budget

    def test_zero_one_budget_two_over_n(self):
        arch = NetworkArchitecture((5, 8, 4))
        fresh = sample_pairs(self.synthetic, 100, None, seed=78)
        for net_seed in range(5):
            weights = random_net(arch, net_seed)
            observed, budget = check_bounded_difference(
                weights, self.pairs, self.plan, LossConfig(), trials=100,
                loss_kind="zero_one", seed=net_seed, replacements=fresh,
            )
            assert budget == 2.0 / self.plan.retained
            assert observed <= budget

    def test_budget_formula(self):
        from simclr_certs.certificates import bounded_difference_constant

        config = LossConfig(tau=0.7, variant="original")
        _, budget = check_bounded_difference(
            random_net(NetworkArchitecture((5, 4)), 0), self.pairs, self.plan,
            config, trials=1,
        )
        expected = bounded_difference_constant(0.7, 10, "original") / 40
        assert budget == pytest.approx(expected, rel=1e-15)

    def test_deterministic(self):
        weights = random_net(NetworkArchitecture((5, 4)), 2)
        config = LossConfig(tau=0.5)
        first = check_bounded_difference(
            weights, self.pairs, self.plan, config, trials=25, seed=9
        )
        second = check_bounded_difference(
            weights, self.pairs, self.plan, config, trials=25, seed=9
        )
        assert first == second

    @pytest.mark.parametrize("kwargs", [
        dict(trials=0), dict(trials=5, loss_kind="hinge"),
    ])
    def test_validation(self, kwargs):
        with pytest.raises(ValueError):
            check_bounded_difference(
                random_net(NetworkArchitecture((5, 4)), 0), self.pairs,
                self.plan, LossConfig(), **kwargs,
            )


class TestNegativeSumEpsilon:
    def test_matches_certificate_epsilon_at_its_failure_level(self):
        for tau, m, alpha, delta in [(1.0, 50, 0.5, 0.04), (0.5, 250, 0.3, 0.1)]:
            level = (delta / 2.0) ** (1.0 / alpha)
            assert negative_sum_epsilon(tau, m, level) == pytest.approx(
                hoeffding_epsilon(tau, m, alpha, delta), rel=1e-12
            )

    def test_original_doubles(self):
        simp = negative_sum_epsilon(0.7, 50, 0.1)
        assert negative_sum_epsilon(0.7, 50, 0.1, "original") == pytest.approx(
            2.0 * simp, rel=1e-15
        )

    @pytest.mark.parametrize("kwargs", [
        dict(tau=1.0, m=1, delta=0.1), dict(tau=1.0, m=50, delta=0.0),
        dict(tau=1.0, m=50, delta=0.1, variant="x"),
    ])
    def test_validation(self, kwargs):
        with pytest.raises(ValueError):
            negative_sum_epsilon(**kwargs)


class TestHoeffdingNegatives:
    def setup_method(self):
        self.synthetic = small_model(seed=6)
        self.arch = NetworkArchitecture((5, 8, 4))

    def test_rate_within_margin(self):
        weights = random_net(self.arch, 4)
        delta, trials = 0.1, 2000
        rate = check_hoeffding_negatives(
            weights, self.synthetic, tau=1.0, m=50, delta=delta, trials=trials,
            pool_size=20000, seed=2,
        )
        margin = 3.0 * math.sqrt(delta * (1 - delta) / trials)
        assert rate <= delta + margin

    def test_rate_monotone_in_epsilon(self):
        # scaled down until violations are common, then doubled
        weights = random_net(self.arch, 4)
        common = dict(
            weights=weights, synthetic=self.synthetic, tau=1.0, m=50,
            delta=0.1, trials=2000, pool_size=20000, seed=2,
        )
        small = check_hoeffding_negatives(epsilon_scale=0.05, **common)
        doubled = check_hoeffding_negatives(epsilon_scale=0.10, **common)
        assert small > 0.2  # the scaled-down slack must actually be violated
        assert doubled < small

    def test_constant_representation_never_deviates(self):
        rate = check_hoeffding_negatives(
            constant_net(5), self.synthetic, tau=0.5, m=20, delta=0.1,
            trials=500, pool_size=2000, seed=0,
        )
        assert rate == 0.0

    def test_original_variant_within_margin(self):
        weights = random_net(self.arch, 9)
        rate = check_hoeffding_negatives(
            weights, self.synthetic, tau=0.5, m=20, delta=0.1, trials=1000,
            variant="original", pool_size=10000, seed=3,
        )
        assert rate <= 0.1 + 3.0 * math.sqrt(0.09 / 1000)

    def test_deterministic(self):
        weights = random_net(self.arch, 4)
        args = dict(tau=1.0, m=10, delta=0.1, trials=200, pool_size=1000, seed=5)
        assert check_hoeffding_negatives(
            weights, self.synthetic, **args
        ) == check_hoeffding_negatives(weights, self.synthetic, **args)

    @pytest.mark.parametrize("kwargs", [
        dict(trials=0), dict(trials=10, epsilon_scale=0.0),
    ])
    def test_validation(self, kwargs):
        with pytest.raises(ValueError):
            check_hoeffding_negatives(
                random_net(self.arch, 0), self.synthetic, tau=1.0, m=10,
                delta=0.1, **kwargs,
            )


class TestEstimatePopulationLoss:
    def sharp_posterior(self, arch, seed):
        posterior = initialize_posterior(arch, sigma0=0.05, seed=seed)
        posterior.rho[:] = -40.0
        return posterior

    def test_constant_representation_gives_log_m_exactly(self):
        arch = NetworkArchitecture((5, 3))
        posterior = self.sharp_posterior(arch, 0)
        # zero weights, one dominant bias entry: every input embeds to e1
        # up to the posterior's ~1e-17 weight noise
        posterior.mu[:] = 0.0
        posterior.mu[-3] = 1.0
        estimate, se = estimate_population_loss(
            posterior, small_model(), "simclr", m=5, fresh_batches=20, seed=1
        )
        assert estimate == pytest.approx(math.log(5), abs=1e-12)
        assert se < 1e-12

    def test_zero_one_random_embeddings_near_half(self):
        # drown the latent structure in view noise: pairing becomes irrelevant
        noise_model = small_model(
            seed=2, sphere_radius=1e-3, class_std=0.0, augmentation_std=1.0
        )
        posterior = self.sharp_posterior(NetworkArchitecture((5, 8, 4)), 3)
        estimate, se = estimate_population_loss(
            posterior, noise_model, "zero_one", m=2, fresh_batches=2000, seed=4
        )
        assert se < 0.02
        assert abs(estimate - 0.5) <= 5.0 * se

    def test_std_error_ratio_follows_clt(self):
        posterior = self.sharp_posterior(NetworkArchitecture((5, 4)), 5)
        synthetic = small_model(seed=8)
        _, se_small = estimate_population_loss(
            posterior, synthetic, "simclr", m=2, fresh_batches=100, seed=6
        )
        _, se_big = estimate_population_loss(
            posterior, synthetic, "simclr", m=2, fresh_batches=10000, seed=6
        )
        assert 5.0 < se_small / se_big < 20.0

    def test_epsilon_kind_inflates_loss(self):
        posterior = self.sharp_posterior(NetworkArchitecture((5, 4)), 5)
        synthetic = small_model(seed=8)
        config = LossConfig(tau=0.5, epsilon=0.8)
        plain, _ = estimate_population_loss(
            posterior, synthetic, "simclr", m=4, fresh_batches=50, seed=7,
            loss_config=config,
        )
        modified, _ = estimate_population_loss(
            posterior, synthetic, "simclr_eps", m=4, fresh_batches=50, seed=7,
            loss_config=config,
        )
        assert modified > plain

    def test_deterministic(self):
        posterior = initialize_posterior(NetworkArchitecture((5, 4)), 0.05, seed=1)
        synthetic = small_model(seed=9)
        first = estimate_population_loss(posterior, synthetic, "simclr", 3, 30, 2)
        second = estimate_population_loss(posterior, synthetic, "simclr", 3, 30, 2)
        assert first == second

    @pytest.mark.parametrize("kwargs", [
        dict(loss_kind="hinge", fresh_batches=10),
        dict(loss_kind="simclr", fresh_batches=1),
    ])
    def test_validation(self, kwargs):
        posterior = initialize_posterior(NetworkArchitecture((5, 4)), 0.05, seed=1)
        with pytest.raises(ValueError):
            estimate_population_loss(
                posterior, small_model(), m=3, seed=0, **kwargs
            )


class TestCertificateValidity:
    def test_prior_equals_posterior_holds(self):
        config = ValidityConfig(
            n_pairs=200, m=10, p_mc=10, fresh_batches=100,
            mode="prior_equals_posterior", seed=12,
        )
        assert check_certificate_validity(config, runs=3) == 0

    def test_trained_pipeline_holds(self):
        config = ValidityConfig(
            n_pairs=200, m=10, p_mc=20, fresh_batches=100,
            prior_epochs=2, posterior_epochs=2, seed=13,
        )
        assert check_certificate_validity(config, runs=2) == 0

    def test_corrupted_constant_is_detected(self):
        # sensitivity smoke test: squashing the McDiarmid constant to nothing
        # leaves bare empirical loss, which dips below the population floor
        # on some fresh draws; the clean run must stay clean on the same seeds
        clean = ValidityConfig(
            n_pairs=200, m=10, p_mc=10, fresh_batches=2000,
            mode="prior_equals_posterior", seed=41,
        )
        corrupted = ValidityConfig(
            n_pairs=200, m=10, p_mc=10, fresh_batches=2000,
            mode="prior_equals_posterior", seed=41, thm2_constant_scale=1e-6,
        )
        assert check_certificate_validity(clean, runs=4) == 0
        assert check_certificate_validity(corrupted, runs=4) >= 1

    @pytest.mark.parametrize("kwargs", [
        dict(mode="untrained"),
        dict(n_pairs=205),
        dict(thm2_constant_scale=0.0),
    ])
    def test_config_validation(self, kwargs):
        with pytest.raises(ValueError):
            ValidityConfig(**kwargs)

    def test_runs_validation(self):
        with pytest.raises(ValueError):
            check_certificate_validity(ValidityConfig(n_pairs=200, m=10), runs=0)


class TestDownstreamGap:
    def test_random_nets_hold_across_taus(self):
        # well-separated classes embed linearly separably, so the head's CE
        # infimum sits at infinity and neither convergence criterion can
        # fire; the check stays one-sidedly valid and must still pass
        synthetic = small_model(seed=20)
        arch = NetworkArchitecture((5, 8, 4))
        for tau in (0.2, 0.5, 1.0):
            for net_seed in range(3):
                result = check_downstream_gap(
                    random_net(arch, net_seed), synthetic, tau=tau, m=10,
                    num_classes=3, num_labeled=400, fresh_batches=50,
                    gd_steps=300, seed=net_seed,
                )
                assert result.passed, (tau, net_seed, result)
                assert result.grad_norm < 0.1  # head genuinely trained

    def test_overlapping_classes_converge_by_gradient_norm(self):
        blurred = small_model(
            seed=30, sphere_radius=0.6, class_std=1.2, augmentation_std=0.6
        )
        result = check_downstream_gap(
            random_net(NetworkArchitecture((5, 8, 4)), 1), blurred, tau=0.5,
            m=10, num_classes=3, num_labeled=400, fresh_batches=50,
            gd_steps=2000, seed=4,
        )
        assert result.converged
        assert result.grad_norm < 1e-5
        assert result.passed

    def test_clustered_features_have_visible_slack(self):
        clustered = small_model(seed=21, class_std=0.0, augmentation_std=0.0)
        result = check_downstream_gap(
            random_net(NetworkArchitecture((5, 6, 3)), 1), clustered, tau=0.5,
            m=10, num_classes=3, num_labeled=300, fresh_batches=50,
            gd_steps=500, seed=2,
        )
        assert result.sigma < 1e-12  # identical inputs, identical embeddings
        assert result.passed
        assert result.rhs - result.lhs > 0.5

    def test_branch_matches_bound_downstream(self):
        synthetic = small_model(seed=22)
        result = check_downstream_gap(
            random_net(NetworkArchitecture((5, 4)), 3), synthetic, tau=0.2,
            m=10, num_classes=3, num_labeled=200, fresh_batches=50,
            gd_steps=200, seed=3,
        )
        inputs = BoundInputs(
            empirical_loss=0.0, kl_qp=0.0, n=1, m=10, tau=0.2, delta=0.5,
            num_classes=3,
        )
        reference = bound_downstream(
            inputs, contrastive_loss=result.loss_estimate, sigma=result.sigma
        )
        assert result.rhs == pytest.approx(reference.value, rel=1e-12)
        assert result.branch == reference.branch
        tempered = 0.2 * reference.beta + reference.alpha_const
        assert result.rhs == pytest.approx(
            min(reference.beta, tempered), rel=1e-12
        )

    def test_tuple_unpacking(self):
        synthetic = small_model(seed=23)
        result = check_downstream_gap(
            random_net(NetworkArchitecture((5, 4)), 0), synthetic, tau=1.0,
            m=5, num_classes=3, num_labeled=100, fresh_batches=20,
            gd_steps=100, seed=0,
        )
        lhs, rhs = result
        assert (lhs, rhs) == (result.lhs, result.rhs)
        assert isinstance(result, DownstreamGapResult)

    def test_num_classes_mismatch(self):
        with pytest.raises(ValueError, match="num_classes"):
            check_downstream_gap(
                random_net(NetworkArchitecture((5, 4)), 0), small_model(),
                tau=1.0, m=5, num_classes=7,
            )
