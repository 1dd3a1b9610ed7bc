"""Command-line pipeline around the certificate library.

Subcommands share one TOML configuration document and write their artifacts
into an output directory alongside a per-run manifest (config hash, seed,
library versions). Failures print a machine-readable error record to stderr,
remove any partially written artifacts from the failed invocation, and exit
nonzero: 2 for configuration problems, 1 for runtime errors.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import platform
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - Python < 3.11
    import tomli as tomllib

from . import __version__
from .certificates import (
    B_FORMS,
    BoundInputs,
    CertifyConfig,
    bound_downstream,
    certify,
)
from .dataio import (
    AugmentationConfig,
    SyntheticModel,
    UnlabeledSample,
    load_embeddings_csv,
    load_idx,
    make_batches,
    normalize_samples,
    sample_pairs,
    split_pair_indices,
)
from .losses import (
    VARIANTS,
    LossConfig,
    intra_class_deviation,
    simclr_dataset_loss,
)
from .model import (
    NetworkArchitecture,
    derive_seed,
    initialize_posterior,
    load_checkpoint,
    mean_weights,
    save_checkpoint,
)
from .oracle import (
    OracleConfig,
    ValidityConfig,
    check_bounded_difference,
    check_certificate_validity,
    check_downstream_gap,
    check_hoeffding_negatives,
    oracle_record,
)
from .training import TrainConfig, TrainingDivergedError, learn_prior, linear_eval, train

DATASET_SOURCES = ("synthetic", "idx", "embeddings_csv")
VERIFY_CHECKS = (
    "bounded_difference",
    "zero_one_difference",
    "hoeffding_negatives",
    "certificate_validity",
    "downstream_gap",
)

# Hyperparameter grids enabled by --grid on the training subcommands.
GRID_MOMENTUM = (0.8, 0.85, 0.9, 0.95)
GRID_LEARNING_RATE = (0.1, 0.5, 1.0, 1.5)
GRID_SIGMA0 = (0.01, 0.05, 0.1)

# Stage tags mixed into the root seed so subcommands draw independent streams.
_SEED_MODEL = 0
_SEED_PAIRS = 1
_SEED_LABELED = 2
_SEED_SPLIT = 3
_SEED_PRIOR = 4
_SEED_POSTERIOR = 5
_SEED_CERTIFY = 6
_SEED_DOWNSTREAM = 7
_SEED_VERIFY = 8
_SEED_POOL = 9


class ConfigError(Exception):
    """Configuration problem; carries the offending field path when known."""

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message)
        self.field = field


@dataclass(frozen=True)
class FieldSpec:
    kind: str
    default: object = None
    required: bool = False
    choices: tuple | None = None
    element_choices: tuple | None = None


_SCHEMA: dict[str, dict[str, FieldSpec]] = {
    "dataset": {
        "source": FieldSpec("str", "synthetic", choices=DATASET_SOURCES),
        "n_pairs": FieldSpec("int", required=True),
        "dim": FieldSpec("int", 6),
        "num_classes": FieldSpec("int", 3),
        "sphere_radius": FieldSpec("float", 2.5),
        "class_std": FieldSpec("float", 0.2),
        "augmentation_std": FieldSpec("float", 0.1),
        "images_path": FieldSpec("str", ""),
        "labels_path": FieldSpec("str", ""),
        "embeddings_path": FieldSpec("str", ""),
        "shift_max": FieldSpec("int", 2),
        "mask_prob": FieldSpec("float", 0.1),
        "noise_std": FieldSpec("float", 0.05),
    },
    "model": {
        "hidden_widths": FieldSpec("list_int", [8]),
        "output_dim": FieldSpec("int", 4),
        "projection_dim": FieldSpec("int", 0),
        "use_projection": FieldSpec("bool", False),
    },
    "loss": {
        "tau": FieldSpec("float", 1.0),
        "variant": FieldSpec("str", "simplified", choices=VARIANTS),
    },
    "train": {
        "epochs": FieldSpec("int", required=True),
        "batch_size_m": FieldSpec("int", 250),
        "learning_rate": FieldSpec("float", 0.5),
        "momentum": FieldSpec("float", 0.9),
        "sigma0": FieldSpec("float", 0.05),
        "prior_fraction": FieldSpec("float", 0.8),
        "prior_mode": FieldSpec("str", "informed", choices=("informed", "random")),
        "delta": FieldSpec("float", 0.04),
    },
    "certify": {
        "p_mc": FieldSpec("int", 100),
        "alpha_grid": FieldSpec("list_float", [0.1, 0.2, 0.3, 0.4, 0.5]),
        "b_form": FieldSpec("str", "theorem", choices=B_FORMS),
        "mc_correction": FieldSpec("bool", False),
        "mc_delta": FieldSpec("float", 0.01),
    },
    "downstream": {
        "num_labeled": FieldSpec("int", 2000),
        "head_epochs": FieldSpec("int", 20),
        "head_learning_rate": FieldSpec("float", 0.01),
        "head_batch_size": FieldSpec("int", 250),
    },
    "verify": {
        "checks": FieldSpec("list_str", list(VERIFY_CHECKS), element_choices=VERIFY_CHECKS),
        "trials": FieldSpec("int", 100),
        "hoeffding_trials": FieldSpec("int", 2000),
        "hoeffding_pool": FieldSpec("int", 20000),
        "hoeffding_m": FieldSpec("int", 50),
        "hoeffding_delta": FieldSpec("float", 0.1),
        "validity_runs": FieldSpec("int", 3),
        "validity_mode": FieldSpec(
            "str", "trained", choices=("trained", "prior_equals_posterior")
        ),
        "validity_n_pairs": FieldSpec("int", 2000),
        "validity_m": FieldSpec("int", 10),
        "validity_epochs": FieldSpec("int", 5),
        "fresh_batches": FieldSpec("int", 400),
        "downstream_reps": FieldSpec("int", 3),
        "downstream_labeled": FieldSpec("int", 800),
    },
    "report": {
        "inputs": FieldSpec("list_str", []),
    },
    "output": {
        "dir": FieldSpec("str", "runs/out"),
        "seed": FieldSpec("int", 0),
    },
}


def _kind_ok(value, kind: str) -> bool:
    if kind == "bool":
        return isinstance(value, bool)
    if kind == "int":
        return isinstance(value, int) and not isinstance(value, bool)
    if kind == "float":
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if kind == "str":
        return isinstance(value, str)
    if kind.startswith("list_"):
        inner = kind[len("list_"):]
        return isinstance(value, list) and all(_kind_ok(v, inner) for v in value)
    raise AssertionError(f"unknown schema kind {kind}")


def _coerce(value, kind: str):
    if kind == "float":
        return float(value)
    if kind == "list_float":
        return [float(v) for v in value]
    return value


def validate_config(document: dict) -> dict:
    """Check a parsed TOML document against the schema and fill defaults.

    Unknown sections or keys, missing required keys, type mismatches, and
    out-of-choice values all raise ConfigError with the field path.
    """
    if not isinstance(document, dict):
        raise ConfigError("configuration root must be a table")
    for section in document:
        if section not in _SCHEMA:
            raise ConfigError(f"unknown section '{section}'", field=section)
    effective: dict[str, dict] = {}
    for section, fields in _SCHEMA.items():
        raw = document.get(section, {})
        if not isinstance(raw, dict):
            raise ConfigError(f"section '{section}' must be a table", field=section)
        for key in raw:
            if key not in fields:
                raise ConfigError(
                    f"unknown field '{section}.{key}'", field=f"{section}.{key}"
                )
        resolved = {}
        for key, spec in fields.items():
            path = f"{section}.{key}"
            if key not in raw:
                if spec.required:
                    raise ConfigError(f"missing required field '{path}'", field=path)
                resolved[key] = _coerce(spec.default, spec.kind)
                continue
            value = raw[key]
            if not _kind_ok(value, spec.kind):
                raise ConfigError(
                    f"field '{path}' must have type {spec.kind}", field=path
                )
            value = _coerce(value, spec.kind)
            if spec.choices is not None and value not in spec.choices:
                raise ConfigError(
                    f"field '{path}' must be one of {spec.choices}", field=path
                )
            if spec.element_choices is not None:
                for item in value:
                    if item not in spec.element_choices:
                        raise ConfigError(
                            f"field '{path}' entries must be among "
                            f"{spec.element_choices}",
                            field=path,
                        )
            resolved[key] = value
        effective[section] = resolved
    return effective


class PipelineConfig:
    """Validated configuration with builders for the library's typed configs."""

    def __init__(self, effective: dict):
        self.dataset = effective["dataset"]
        self.model = effective["model"]
        self.loss = effective["loss"]
        self.train = effective["train"]
        self.certify = effective["certify"]
        self.downstream = effective["downstream"]
        self.verify = effective["verify"]
        self.report = effective["report"]
        self.output = effective["output"]
        self.effective = effective

    @property
    def seed(self) -> int:
        return self.output["seed"]

    @property
    def out_dir(self) -> Path:
        return Path(self.output["dir"])

    def loss_config(self) -> LossConfig:
        return LossConfig(
            tau=self.loss["tau"],
            variant=self.loss["variant"],
            epsilon=0.0,
            use_projection=self.model["use_projection"],
        )

    def architecture(self, input_dim: int) -> NetworkArchitecture:
        widths = (input_dim, *self.model["hidden_widths"], self.model["output_dim"])
        projection = self.model["projection_dim"]
        return NetworkArchitecture(widths, projection if projection > 0 else None)

    def train_config(self, seed: int, **overrides) -> TrainConfig:
        base = dict(
            epochs=self.train["epochs"],
            batch_size_m=self.train["batch_size_m"],
            learning_rate=self.train["learning_rate"],
            momentum=self.train["momentum"],
            sigma0=self.train["sigma0"],
            delta=self.train["delta"],
            seed=seed,
            loss=self.loss_config(),
        )
        base.update(overrides)
        return TrainConfig(**base)

    def certify_config(self, seed: int) -> CertifyConfig:
        return CertifyConfig(
            delta=self.train["delta"],
            p_mc=self.certify["p_mc"],
            alpha_grid=tuple(self.certify["alpha_grid"]),
            batch_size_m=self.train["batch_size_m"],
            loss=self.loss_config(),
            b_form=self.certify["b_form"],
            seed=seed,
            mc_correction=self.certify["mc_correction"],
            mc_delta=self.certify["mc_delta"],
        )

    def synthetic_model(self) -> SyntheticModel:
        return SyntheticModel(
            dim=self.dataset["dim"],
            num_classes=self.dataset["num_classes"],
            sphere_radius=self.dataset["sphere_radius"],
            class_std=self.dataset["class_std"],
            augmentation_std=self.dataset["augmentation_std"],
            seed=derive_seed(self.seed, _SEED_MODEL),
        )

    def augmentation(self) -> AugmentationConfig:
        return AugmentationConfig(
            shift_max=self.dataset["shift_max"],
            mask_prob=self.dataset["mask_prob"],
            noise_std=self.dataset["noise_std"],
        )


class RunContext:
    """Tracks artifacts written by one invocation so failures clean up."""

    def __init__(self, out_dir: Path):
        self.out_dir = out_dir
        self.created: list[str] = []
        out_dir.mkdir(parents=True, exist_ok=True)

    def path(self, name: str) -> Path:
        return self.out_dir / name

    def _track(self, name: str) -> Path:
        if name not in self.created:
            self.created.append(name)
        return self.path(name)

    def write_json(self, name: str, payload) -> None:
        text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
        self._track(name).write_text(text)

    def write_text(self, name: str, text: str) -> None:
        self._track(name).write_text(text)

    def save_arrays(self, name: str, **arrays) -> None:
        np.savez(self._track(name), **arrays)

    def save_posterior(self, name: str, posterior) -> None:
        save_checkpoint(self._track(name), posterior)

    def discard_partial(self) -> None:
        for name in self.created:
            self.path(name).unlink(missing_ok=True)


def _emit_error(kind: str, message: str, field: str | None = None) -> None:
    record = {"error": {"type": kind, "message": message}}
    if field is not None:
        record["error"]["field"] = field
    print(json.dumps(record, sort_keys=True), file=sys.stderr)


def _load_config(args) -> tuple[PipelineConfig, str, dict]:
    path = Path(args.config)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    try:
        document = tomllib.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"invalid TOML in {path}: {exc}") from exc
    overrides = {}
    if args.seed is not None:
        document.setdefault("output", {})["seed"] = args.seed
        overrides["seed"] = args.seed
    if args.tau is not None:
        document.setdefault("loss", {})["tau"] = args.tau
        overrides["tau"] = args.tau
    if args.m is not None:
        document.setdefault("train", {})["batch_size_m"] = args.m
        overrides["m"] = args.m
    if args.variant is not None:
        document.setdefault("loss", {})["variant"] = args.variant
        overrides["variant"] = args.variant
    if args.out is not None:
        document.setdefault("output", {})["dir"] = args.out
        overrides["out"] = args.out
    if getattr(args, "grid", False):
        overrides["grid"] = True
    effective = validate_config(document)
    config_hash = hashlib.sha256(raw).hexdigest()
    return PipelineConfig(effective), config_hash, overrides


def _write_manifest(ctx: RunContext, subcommand: str, config: PipelineConfig,
                    config_hash: str, overrides: dict) -> None:
    name = f"manifest_{subcommand}.json"
    ctx.write_json(
        name,
        {
            "subcommand": subcommand,
            "config_sha256": config_hash,
            "effective_config": config.effective,
            "overrides": overrides,
            "seed": config.seed,
            "versions": {
                "python": platform.python_version(),
                "numpy": np.__version__,
                "package": __version__,
            },
            "artifacts": sorted(set(ctx.created) | {name}),
        },
    )


def _pairs_to_arrays(pairs) -> dict:
    return {
        "views_a": np.stack([p.view_a for p in pairs]),
        "views_b": np.stack([p.view_b for p in pairs]),
        "source_index": np.array([p.source_index for p in pairs], dtype=np.int64),
        "labels": np.array(
            [-1 if p.label is None else p.label for p in pairs], dtype=np.int64
        ),
    }


def _load_pairs(ctx: RunContext):
    path = ctx.path("pairs.npz")
    if not path.exists():
        raise FileNotFoundError(
            f"{path} not found; run the gen-synthetic subcommand first"
        )
    from .dataio import PositivePair

    with np.load(path) as data:
        views_a = data["views_a"]
        views_b = data["views_b"]
        source_index = data["source_index"]
        labels = data["labels"]
    return [
        PositivePair(
            view_a=views_a[i],
            view_b=views_b[i],
            source_index=int(source_index[i]),
            label=None if labels[i] < 0 else int(labels[i]),
        )
        for i in range(views_a.shape[0])
    ]


def _load_labeled(ctx: RunContext):
    path = ctx.path("labeled.npz")
    if not path.exists():
        raise FileNotFoundError(
            f"{path} not found; run the gen-synthetic subcommand first"
        )
    with np.load(path) as data:
        features = data["features"]
        labels = data["labels"]
    return [
        UnlabeledSample(features=features[i], label=int(labels[i]), source_index=i)
        for i in range(features.shape[0])
    ]


def _load_indices(ctx: RunContext) -> dict:
    path = ctx.path("indices.json")
    if not path.exists():
        raise FileNotFoundError(
            f"{path} not found; run the train-prior subcommand first"
        )
    return json.loads(path.read_text())


def _load_source_samples(config: PipelineConfig):
    """Materialize the labeled sample pool for a non-synthetic dataset."""
    source = config.dataset["source"]
    if source == "idx":
        if not config.dataset["images_path"] or not config.dataset["labels_path"]:
            raise ConfigError(
                "idx datasets need dataset.images_path and dataset.labels_path",
                field="dataset.images_path",
            )
        samples, stats = load_idx(
            config.dataset["images_path"], config.dataset["labels_path"]
        )
        return normalize_samples(samples, stats)
    if source == "embeddings_csv":
        if not config.dataset["embeddings_path"]:
            raise ConfigError(
                "embeddings_csv datasets need dataset.embeddings_path",
                field="dataset.embeddings_path",
            )
        return load_embeddings_csv(config.dataset["embeddings_path"])
    raise AssertionError(source)


def _cmd_generate(config: PipelineConfig, ctx: RunContext, args) -> None:
    """Materialize the configured dataset: positive pairs plus a labeled set.

    Synthetic sources get a fresh mixture model; file-backed sources are split
    at the sample level first so prior and certificate pairs never share an
    underlying sample (recorded in indices.json at generation time).
    """
    n_pairs = config.dataset["n_pairs"]
    if n_pairs < 1:
        raise ConfigError("dataset.n_pairs must be positive", field="dataset.n_pairs")
    num_labeled = config.downstream["num_labeled"]
    if config.dataset["source"] == "synthetic":
        model = config.synthetic_model()
        pairs = sample_pairs(model, n_pairs, None, derive_seed(config.seed, _SEED_PAIRS))
        rng = np.random.default_rng([derive_seed(config.seed, _SEED_LABELED), 0x1AB])
        latents, labels = model.sample_latents(num_labeled, rng)
        features = np.stack(
            [model.sample_view(latents[i], rng) for i in range(num_labeled)]
        )
        ctx.write_json("synthetic_model.json", model.to_spec())
        ctx.save_arrays("labeled.npz", features=features, labels=labels.astype(np.int64))
        ctx.save_arrays("pairs.npz", **_pairs_to_arrays(pairs))
        return
    samples = _load_source_samples(config)
    rng = np.random.default_rng([derive_seed(config.seed, _SEED_POOL), 0x5A])
    order = rng.permutation(len(samples))
    n_prior_pairs = int(n_pairs * config.train["prior_fraction"])
    split_at = int(len(samples) * config.train["prior_fraction"])
    if n_prior_pairs > 0 and split_at == 0:
        raise ConfigError(
            "prior_fraction leaves no samples for the prior pool",
            field="train.prior_fraction",
        )
    prior_pool = [samples[i] for i in order[:split_at]]
    cert_pool = [samples[i] for i in order[split_at:]]
    if not cert_pool:
        raise ConfigError(
            "prior_fraction leaves no samples for certification",
            field="train.prior_fraction",
        )
    augment = config.augmentation()
    pairs = []
    if n_prior_pairs > 0:
        pairs.extend(
            sample_pairs(
                prior_pool, n_prior_pairs, augment,
                derive_seed(config.seed, _SEED_PAIRS, 0),
            )
        )
    pairs.extend(
        sample_pairs(
            cert_pool, n_pairs - n_prior_pairs, augment,
            derive_seed(config.seed, _SEED_PAIRS, 1),
        )
    )
    pick = rng.permutation(len(samples))[: min(num_labeled, len(samples))]
    features = np.stack([samples[i].features for i in pick])
    labels = np.array(
        [-1 if samples[i].label is None else samples[i].label for i in pick],
        dtype=np.int64,
    )
    ctx.save_arrays("labeled.npz", features=features, labels=labels)
    ctx.save_arrays("pairs.npz", **_pairs_to_arrays(pairs))
    ctx.write_json(
        "indices.json",
        {
            "n_pairs": n_pairs,
            "prior_fraction": config.train["prior_fraction"],
            "prior_indices": list(range(n_prior_pairs)),
            "certificate_indices": list(range(n_prior_pairs, n_pairs)),
        },
    )


def _grid_candidates(with_sigma0: bool):
    for momentum in GRID_MOMENTUM:
        for learning_rate in GRID_LEARNING_RATE:
            if with_sigma0:
                for sigma0 in GRID_SIGMA0:
                    yield momentum, learning_rate, sigma0
            else:
                yield momentum, learning_rate, None


def _run_grid(train_one, with_sigma0: bool):
    """Run every grid candidate; select the finite minimum of the objective."""
    results = []
    best = None
    for momentum, learning_rate, sigma0 in _grid_candidates(with_sigma0):
        entry = {"momentum": momentum, "learning_rate": learning_rate}
        if sigma0 is not None:
            entry["sigma0"] = sigma0
        try:
            outcome, report = train_one(momentum, learning_rate, sigma0)
            entry["final_objective"] = report.final_objective
            entry["final_kl"] = report.final_kl
            entry["diverged"] = False
        except TrainingDivergedError:
            outcome, report = None, None
            entry["final_objective"] = math.inf
            entry["diverged"] = True
        results.append(entry)
        if report is not None and (
            best is None or report.final_objective < best[2].final_objective
        ):
            best = (entry, outcome, report)
    if best is None:
        raise TrainingDivergedError("every grid candidate diverged")
    return best, results


def _cmd_train_prior(config: PipelineConfig, ctx: RunContext, args) -> None:
    pairs = _load_pairs(ctx)
    indices_path = ctx.path("indices.json")
    if indices_path.exists():
        indices = json.loads(indices_path.read_text())
    else:
        prior_idx, cert_idx = split_pair_indices(
            len(pairs),
            config.train["prior_fraction"],
            derive_seed(config.seed, _SEED_SPLIT),
        )
        indices = {
            "n_pairs": len(pairs),
            "prior_fraction": config.train["prior_fraction"],
            "prior_indices": [int(i) for i in prior_idx],
            "certificate_indices": [int(i) for i in cert_idx],
        }
        ctx.write_json("indices.json", indices)
    prior_pairs = [pairs[i] for i in indices["prior_indices"]]
    arch = config.architecture(pairs[0].view_a.size)
    seed = derive_seed(config.seed, _SEED_PRIOR)
    mode = config.train["prior_mode"]
    if mode == "random" or not prior_pairs:
        prior, report = learn_prior(
            arch, prior_pairs, config.train_config(seed), mode="random"
        )
        grid_results = None
        selected = None
    elif getattr(args, "grid", False):
        def train_one(momentum, learning_rate, sigma0):
            tc = config.train_config(
                seed, momentum=momentum, learning_rate=learning_rate, sigma0=sigma0
            )
            return learn_prior(arch, prior_pairs, tc, mode="informed")

        (selected, prior, report), grid_results = _run_grid(train_one, True)
    else:
        prior, report = learn_prior(
            arch, prior_pairs, config.train_config(seed), mode="informed"
        )
        grid_results = None
        selected = None
    ctx.save_posterior("prior.npz", prior)
    ctx.write_json(
        "prior_report.json",
        {
            "mode": mode if prior_pairs else "random",
            "report": None if report is None else report.to_dict(),
            "grid": grid_results,
            "selected": selected,
        },
    )


def _cmd_train_posterior(config: PipelineConfig, ctx: RunContext, args) -> None:
    pairs = _load_pairs(ctx)
    prior_path = ctx.path("prior.npz")
    if not prior_path.exists():
        raise FileNotFoundError(f"{prior_path} not found; run train-prior first")
    prior = load_checkpoint(prior_path)
    seed = derive_seed(config.seed, _SEED_POSTERIOR)
    # The posterior trains on every pair; certificates later use only the
    # held-out subset recorded in indices.json, which the prior never saw.
    if getattr(args, "grid", False):
        def train_one(momentum, learning_rate, sigma0):
            tc = config.train_config(
                seed, momentum=momentum, learning_rate=learning_rate
            )
            return train(prior, prior, pairs, tc)

        (selected, posterior, report), grid_results = _run_grid(train_one, False)
    else:
        posterior, report = train(prior, prior, pairs, config.train_config(seed))
        grid_results = None
        selected = None
    ctx.save_posterior("posterior.npz", posterior)
    ctx.write_json(
        "posterior_report.json",
        {
            "report": report.to_dict(),
            "grid": grid_results,
            "selected": selected,
        },
    )


def _cmd_certify(config: PipelineConfig, ctx: RunContext, args) -> None:
    pairs = _load_pairs(ctx)
    indices = _load_indices(ctx)
    for name in ("prior.npz", "posterior.npz"):
        if not ctx.path(name).exists():
            raise FileNotFoundError(f"{ctx.path(name)} not found; train first")
    prior = load_checkpoint(ctx.path("prior.npz"))
    posterior = load_checkpoint(ctx.path("posterior.npz"))
    cert_pairs = [pairs[i] for i in indices["certificate_indices"]]
    prior_sources = [pairs[i].source_index for i in indices["prior_indices"]]
    report = certify(
        posterior,
        prior,
        cert_pairs,
        config.certify_config(derive_seed(config.seed, _SEED_CERTIFY)),
        prior_source_indices=prior_sources,
    )
    ctx.write_text("certificate.json", report.to_json() + "\n")
    report.write_csv(ctx._track("certificate.csv"))


def _cmd_downstream(config: PipelineConfig, ctx: RunContext, args) -> None:
    """Linear evaluation of the posterior mean plus its downstream guarantee."""
    posterior_path = ctx.path("posterior.npz")
    if not posterior_path.exists():
        raise FileNotFoundError(f"{posterior_path} not found; train first")
    posterior = load_checkpoint(posterior_path)
    weights = mean_weights(posterior)
    labeled = _load_labeled(ctx)
    labels = [s.label for s in labeled]
    if any(lab is None or lab < 0 for lab in labels):
        raise ValueError("downstream evaluation needs labeled samples")
    num_classes = max(labels) + 1
    if num_classes < 2:
        raise ValueError("downstream evaluation needs at least two classes")
    pairs = _load_pairs(ctx)
    plan = make_batches(
        pairs,
        config.train["batch_size_m"],
        derive_seed(config.seed, _SEED_DOWNSTREAM, 0),
    )
    variants = [False, True] if posterior.arch.projection_dim else [False]
    rows = []
    for use_projection in variants:
        loss_config = LossConfig(
            tau=config.loss["tau"],
            variant=config.loss["variant"],
            use_projection=use_projection,
        )
        contrastive = simclr_dataset_loss(weights, pairs, plan, loss_config).value
        _, metrics = linear_eval(
            weights,
            labeled,
            num_classes,
            use_projection=use_projection,
            epochs=config.downstream["head_epochs"],
            learning_rate=config.downstream["head_learning_rate"],
            batch_size=config.downstream["head_batch_size"],
            seed=derive_seed(config.seed, _SEED_DOWNSTREAM, 1 + int(use_projection)),
        )
        sigma, _ = intra_class_deviation(weights, labeled, use_projection)
        sigma = min(sigma, 2.0)
        inputs = BoundInputs(
            empirical_loss=0.0,
            kl_qp=0.0,
            n=len(pairs),
            m=config.train["batch_size_m"],
            tau=config.loss["tau"],
            delta=config.train["delta"],
            variant=config.loss["variant"],
            num_classes=num_classes,
        )
        result = bound_downstream(inputs, contrastive, sigma)
        rows.append(
            {
                "use_projection": use_projection,
                "cross_entropy": metrics["cross_entropy"],
                "top1_risk": metrics["top1_risk"],
                "contrastive_loss": contrastive,
                "sigma": sigma,
                "bound": result.value,
                "bao_reference": result.beta,
                "branch": result.branch,
            }
        )
    ctx.write_json(
        "downstream.json",
        {
            "tau": config.loss["tau"],
            "variant": config.loss["variant"],
            "num_classes": num_classes,
            "num_labeled": len(labeled),
            "rows": rows,
        },
    )
    header = (
        "use_projection,cross_entropy,top1_risk,contrastive_loss,"
        "sigma,bound,bao_reference,branch"
    )
    lines = [header]
    for row in rows:
        lines.append(
            ",".join(
                [
                    str(row["use_projection"]).lower(),
                    repr(row["cross_entropy"]),
                    repr(row["top1_risk"]),
                    repr(row["contrastive_loss"]),
                    repr(row["sigma"]),
                    repr(row["bound"]),
                    repr(row["bao_reference"]),
                    row["branch"],
                ]
            )
        )
    ctx.write_text("downstream.csv", "\n".join(lines) + "\n")


def _cmd_verify(config: PipelineConfig, ctx: RunContext, args) -> None:
    """Run the sampling oracles and store pass/fail records."""
    checks = config.verify["checks"]
    seed = derive_seed(config.seed, _SEED_VERIFY)
    loss_config = config.loss_config()
    synthetic = config.synthetic_model()
    arch = config.architecture(config.dataset["dim"])
    records = []

    def fixture_weights(tag: int):
        init = initialize_posterior(arch, config.train["sigma0"], derive_seed(seed, tag))
        return mean_weights(init)

    if "bounded_difference" in checks or "zero_one_difference" in checks:
        pairs = sample_pairs(
            synthetic, config.dataset["n_pairs"], None, derive_seed(seed, 10)
        )
        plan = make_batches(
            pairs, config.train["batch_size_m"], derive_seed(seed, 11)
        )
        weights = fixture_weights(0)
        for name, kind in (
            ("bounded_difference", "simclr"),
            ("zero_one_difference", "zero_one"),
        ):
            if name not in checks:
                continue
            observed, budget = check_bounded_difference(
                weights,
                pairs,
                plan,
                loss_config,
                trials=config.verify["trials"],
                loss_kind=kind,
                seed=derive_seed(seed, 12),
            )
            records.append(
                oracle_record(name, config.verify["trials"], observed, budget)
            )
    if "hoeffding_negatives" in checks:
        delta = config.verify["hoeffding_delta"]
        trials = config.verify["hoeffding_trials"]
        rate = check_hoeffding_negatives(
            fixture_weights(1),
            synthetic,
            config.loss["tau"],
            config.verify["hoeffding_m"],
            delta,
            trials=trials,
            variant=config.loss["variant"],
            pool_size=config.verify["hoeffding_pool"],
            use_projection=config.model["use_projection"],
            seed=derive_seed(seed, 13),
        )
        budget = delta + 3.0 * math.sqrt(delta * (1.0 - delta) / trials)
        records.append(oracle_record("hoeffding_negatives", trials, rate, budget))
    if "certificate_validity" in checks:
        validity = ValidityConfig(
            dim=config.dataset["dim"],
            num_classes=config.dataset["num_classes"],
            sphere_radius=config.dataset["sphere_radius"],
            class_std=config.dataset["class_std"],
            augmentation_std=config.dataset["augmentation_std"],
            hidden_widths=(*config.model["hidden_widths"], config.model["output_dim"]),
            n_pairs=config.verify["validity_n_pairs"],
            prior_fraction=config.train["prior_fraction"],
            prior_epochs=config.verify["validity_epochs"],
            posterior_epochs=config.verify["validity_epochs"],
            learning_rate=config.train["learning_rate"],
            momentum=config.train["momentum"],
            sigma0=config.train["sigma0"],
            tau=config.loss["tau"],
            m=config.verify["validity_m"],
            delta=config.train["delta"],
            p_mc=config.certify["p_mc"],
            variant=config.loss["variant"],
            fresh_batches=config.verify["fresh_batches"],
            mode=config.verify["validity_mode"],
            seed=derive_seed(seed, 14),
        )
        violations = check_certificate_validity(validity, config.verify["validity_runs"])
        records.append(
            oracle_record(
                "certificate_validity",
                config.verify["validity_runs"],
                float(violations),
                0.0,
            )
        )
    if "downstream_gap" in checks:
        reps = config.verify["downstream_reps"]
        tolerance = 1e-6
        worst = -math.inf
        for rep in range(reps):
            result = check_downstream_gap(
                fixture_weights(20 + rep),
                synthetic,
                config.loss["tau"],
                config.verify["validity_m"],
                config.dataset["num_classes"],
                variant=config.loss["variant"],
                use_projection=config.model["use_projection"],
                num_labeled=config.verify["downstream_labeled"],
                fresh_batches=config.verify["fresh_batches"],
                tolerance=tolerance,
                seed=derive_seed(seed, 30 + rep),
            )
            worst = max(worst, result.lhs - result.rhs)
        records.append(oracle_record("downstream_gap", reps, worst, tolerance))
    ctx.write_json(
        "verify.json",
        {"records": records, "all_pass": all(r["pass"] for r in records)},
    )


def _cmd_report(config: PipelineConfig, ctx: RunContext, args) -> None:
    """Merge certificate reports into one CSV, one row per bound per tau."""
    inputs = config.report["inputs"]
    if not inputs:
        raise ConfigError(
            "report.inputs must list certificate JSON files", field="report.inputs"
        )
    rows = []
    for path in inputs:
        source = Path(path)
        if not source.exists():
            raise FileNotFoundError(f"report input {source} not found")
        payload = json.loads(source.read_text())
        echo = payload["inputs"]
        for bound in payload["bounds"]:
            rows.append(
                {
                    "tau": echo["tau"],
                    "name": bound["name"],
                    "value": bound["value"],
                    "vacuous": bound["vacuous"],
                    "alpha_star": bound["alpha_star"],
                    "empirical_loss": echo["empirical_loss"],
                    "empirical_zero_one": echo["empirical_zero_one"],
                    "kl_qp": echo["kl_qp"],
                    "n": echo["n"],
                    "m": echo["m"],
                    "variant": echo["variant"],
                    "b_form": echo["b_form"],
                }
            )
    rows.sort(key=lambda r: (r["tau"], r["name"]))
    header = (
        "tau,name,value,vacuous,alpha_star,empirical_loss,"
        "empirical_zero_one,kl_qp,n,m,variant,b_form"
    )
    lines = [header]
    for row in rows:
        lines.append(
            ",".join(
                [
                    repr(float(row["tau"])),
                    row["name"],
                    repr(float(row["value"])),
                    str(bool(row["vacuous"])).lower(),
                    "" if row["alpha_star"] is None else repr(float(row["alpha_star"])),
                    repr(float(row["empirical_loss"])),
                    repr(float(row["empirical_zero_one"])),
                    repr(float(row["kl_qp"])),
                    str(int(row["n"])),
                    str(int(row["m"])),
                    row["variant"],
                    row["b_form"],
                ]
            )
        )
    ctx.write_text("report.csv", "\n".join(lines) + "\n")


_HANDLERS = {
    "gen-synthetic": (_cmd_generate, "materialize the configured dataset", False),
    "train-prior": (_cmd_train_prior, "fit the data-informed prior", True),
    "train-posterior": (_cmd_train_posterior, "fit the posterior from the prior", True),
    "certify": (_cmd_certify, "compute the certificate report", False),
    "downstream": (_cmd_downstream, "linear evaluation and downstream bound", False),
    "verify": (_cmd_verify, "run the sampling oracle suite", False),
    "report": (_cmd_report, "merge certificate reports into a CSV table", False),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="simclr-certs",
        description="Contrastive risk certificates: data, training, bounds.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    subparsers = parser.add_subparsers(dest="subcommand", required=True)
    for name, (handler, help_text, supports_grid) in _HANDLERS.items():
        sub = subparsers.add_parser(name, help=help_text)
        sub.add_argument("--config", required=True, help="TOML configuration file")
        sub.add_argument("--seed", type=int, default=None, help="override output.seed")
        sub.add_argument("--tau", type=float, default=None, help="override loss.tau")
        sub.add_argument(
            "--m", type=int, default=None, help="override train.batch_size_m"
        )
        sub.add_argument("--out", default=None, help="override output.dir")
        sub.add_argument(
            "--variant", choices=VARIANTS, default=None, help="override loss.variant"
        )
        if supports_grid:
            sub.add_argument(
                "--grid",
                action="store_true",
                help="search the momentum/learning-rate/sigma0 grids",
            )
        sub.set_defaults(handler=handler)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    ctx = None
    try:
        config, config_hash, overrides = _load_config(args)
        ctx = RunContext(config.out_dir)
        args.handler(config, ctx, args)
        _write_manifest(ctx, args.subcommand, config, config_hash, overrides)
    except ConfigError as exc:
        if ctx is not None:
            ctx.discard_partial()
        _emit_error("config", str(exc), field=exc.field)
        return 2
    except Exception as exc:  # noqa: BLE001 - single CLI failure funnel
        if ctx is not None:
            ctx.discard_partial()
        _emit_error(type(exc).__name__, str(exc))
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
