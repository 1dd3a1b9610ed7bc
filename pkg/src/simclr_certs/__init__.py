"""Risk certificates for contrastive representation learning at desk scale.

The package trains small probabilistic networks with a SimCLR-style loss and
computes PAC-Bayesian generalization certificates for the contrastive loss,
the contrastive zero-one risk, and the downstream linear classification loss,
together with batch-level baseline bounds and a sampling oracle suite that
stress-tests every guarantee.
"""

from .certificates import (
    B_FORMS,
    BASELINE_KINDS,
    DEFAULT_ALPHA_GRID,
    BoundInputs,
    CertificateReport,
    CertifyConfig,
    Constants,
    DownstreamBound,
    bound_baselines,
    bound_downstream,
    bound_thm1_extended_kl,
    bound_thm2_mcdiarmid,
    bound_thm4_zero_one,
    bound_thm5_zero_one_kl,
    bounded_difference_constant,
    certify,
    constants_for,
    hoeffding_epsilon,
    mc_empirical_loss,
    thm1_range_constant,
    zero_one_gamma,
)
from .dataio import (
    AugmentationConfig,
    BatchPlan,
    PositivePair,
    SyntheticModel,
    UnlabeledSample,
    load_embeddings_csv,
    load_idx,
    make_batches,
    normalize_samples,
    sample_pairs,
    split_pair_indices,
    write_idx,
)
from .losses import (
    VARIANTS,
    LossConfig,
    cross_entropy,
    intra_class_deviation,
    loss_range_bound,
    simclr_dataset_loss,
    simclr_loss,
    top1_risk,
    zero_one_dataset_risk,
    zero_one_risk,
)
from .model import (
    GaussianPosterior,
    NetworkArchitecture,
    WeightSample,
    count_parameters,
    derive_seed,
    forward,
    initialize_posterior,
    load_checkpoint,
    mean_weights,
    sample_weights,
    save_checkpoint,
)
from .numerics import (
    binary_kl,
    catoni_infimum,
    gaussian_kl,
    kl_inverse,
)
from .oracle import (
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
from .training import (
    TrainConfig,
    TrainReport,
    TrainingDivergedError,
    learn_prior,
    linear_eval,
    train,
)

__version__ = "0.1.0"
