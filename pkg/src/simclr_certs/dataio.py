"""Data ingestion and sampling: IDX files, synthetic mixtures, positive pairs,
batch plans, and precomputed-embedding CSVs.

All randomness flows through numpy Generators seeded explicitly, so every
artifact this module produces is reproducible byte for byte given the seed.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field

import numpy as np

IMAGE_MAGIC = 2051  # 0x00000803, u8 pixels, 3 dims
LABEL_MAGIC = 2049  # 0x00000801, u8 labels, 1 dim

__all__ = [
    "UnlabeledSample",
    "PositivePair",
    "BatchPlan",
    "NormStats",
    "AugmentationConfig",
    "SyntheticModel",
    "load_idx",
    "write_idx",
    "normalize_samples",
    "load_embeddings_csv",
    "sample_pairs",
    "make_batches",
    "split_pair_indices",
]


@dataclass(frozen=True, eq=False)
class UnlabeledSample:
    """One data point: a flat feature vector plus optional class label."""

    features: np.ndarray
    label: int | None = None
    source_index: int = -1


@dataclass(frozen=True, eq=False)
class PositivePair:
    """Two augmented views of the same underlying sample."""

    view_a: np.ndarray
    view_b: np.ndarray
    source_index: int
    label: int | None = None


@dataclass(frozen=True)
class BatchPlan:
    """Disjoint batches of pair indices, each of size batch_size_m.

    Pairs that do not fill a final batch are dropped, never padded.
    """

    batch_size_m: int
    assignments: tuple[tuple[int, ...], ...]
    dropped: int

    @property
    def retained(self) -> int:
        return self.batch_size_m * len(self.assignments)

    def all_indices(self) -> list[int]:
        return [i for batch in self.assignments for i in batch]


@dataclass(frozen=True)
class NormStats:
    """Mean/std over all training pixels (single-channel data)."""

    mean: float
    std: float


@dataclass(frozen=True)
class AugmentationConfig:
    """Desk-scale augmentations applied in order: circular shift, mask, noise."""

    shift_max: int = 2
    mask_prob: float = 0.1
    noise_std: float = 0.05

    def __post_init__(self):
        if self.shift_max < 0:
            raise ValueError("shift_max must be nonnegative")
        if not 0.0 <= self.mask_prob <= 1.0:
            raise ValueError("mask_prob must lie in [0, 1]")
        if self.noise_std < 0.0:
            raise ValueError("noise_std must be nonnegative")


@dataclass(frozen=True, eq=False)
class SyntheticModel:
    """Gaussian mixture with class means on a sphere, Gaussian view noise.

    Latents: pick a class uniformly, then latent = class_mean + class_std * N(0, I).
    Views of a latent are latent + augmentation_std * N(0, I), independently.
    Class means derive deterministically from the seed and sit exactly on the
    sphere of the given radius.
    """

    dim: int
    num_classes: int
    sphere_radius: float
    class_std: float
    augmentation_std: float
    seed: int
    class_means: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.dim < 1 or self.num_classes < 2:
            raise ValueError("synthetic model needs dim >= 1 and num_classes >= 2")
        if self.sphere_radius <= 0 or self.class_std < 0 or self.augmentation_std < 0:
            raise ValueError("synthetic model scales must be positive (radius) / nonnegative")
        rng = np.random.default_rng([self.seed, 0xC1A55])
        directions = rng.normal(size=(self.num_classes, self.dim))
        norms = np.linalg.norm(directions, axis=1, keepdims=True)
        # resample any degenerate zero rows; probability zero but cheap to guard
        while np.any(norms == 0.0):
            bad = norms[:, 0] == 0.0
            directions[bad] = rng.normal(size=(int(np.sum(bad)), self.dim))
            norms = np.linalg.norm(directions, axis=1, keepdims=True)
        means = self.sphere_radius * directions / norms
        object.__setattr__(self, "class_means", means)
        gaps = np.linalg.norm(means[:, None, :] - means[None, :, :], axis=-1)
        if np.min(gaps[~np.eye(self.num_classes, dtype=bool)]) == 0.0:
            raise ValueError("synthetic class means collided; change the seed")

    def sample_latents(self, count: int, rng: np.random.Generator):
        labels = rng.integers(0, self.num_classes, size=count)
        latents = self.class_means[labels] + self.class_std * rng.normal(
            size=(count, self.dim)
        )
        return latents, labels

    def sample_view(self, latent: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        return latent + self.augmentation_std * rng.normal(size=latent.shape)

    def to_spec(self) -> dict:
        return {
            "dim": self.dim,
            "num_classes": self.num_classes,
            "sphere_radius": self.sphere_radius,
            "class_std": self.class_std,
            "augmentation_std": self.augmentation_std,
            "seed": self.seed,
        }

    @classmethod
    def from_spec(cls, spec: dict) -> "SyntheticModel":
        return cls(
            dim=int(spec["dim"]),
            num_classes=int(spec["num_classes"]),
            sphere_radius=float(spec["sphere_radius"]),
            class_std=float(spec["class_std"]),
            augmentation_std=float(spec["augmentation_std"]),
            seed=int(spec["seed"]),
        )


def _read_exact(fh, count: int, what: str) -> bytes:
    data = fh.read(count)
    if len(data) != count:
        raise ValueError(f"truncated IDX file while reading {what}")
    return data


def load_idx(images_path, labels_path):
    """Read an IDX image/label pair into samples scaled to [0, 1].

    Big-endian u32 magic and dimensions, raw u8 payload. Returns
    (samples, NormStats) where the stats are the pixel mean/std of this split
    after scaling; callers decide which split's stats to standardize with.
    """
    with open(images_path, "rb") as fh:
        (magic,) = struct.unpack(">I", _read_exact(fh, 4, "image magic"))
        if magic != IMAGE_MAGIC:
            raise ValueError(f"bad magic in image file: {magic:#010x}")
        count, rows, cols = struct.unpack(">III", _read_exact(fh, 12, "image dims"))
        payload = _read_exact(fh, count * rows * cols, "image payload")
        if fh.read(1):
            raise ValueError("trailing bytes after image payload")
    with open(labels_path, "rb") as fh:
        (magic,) = struct.unpack(">I", _read_exact(fh, 4, "label magic"))
        if magic != LABEL_MAGIC:
            raise ValueError(f"bad magic in label file: {magic:#010x}")
        (label_count,) = struct.unpack(">I", _read_exact(fh, 4, "label dims"))
        if label_count != count:
            raise ValueError(f"image/label count mismatch: {count} vs {label_count}")
        raw_labels = _read_exact(fh, label_count, "label payload")
        if fh.read(1):
            raise ValueError("trailing bytes after label payload")

    pixels = np.frombuffer(payload, dtype=np.uint8).reshape(count, rows * cols)
    features = pixels.astype(np.float64) / 255.0
    labels = np.frombuffer(raw_labels, dtype=np.uint8)
    stats = NormStats(mean=float(features.mean()), std=float(max(features.std(), 1e-12)))
    samples = [
        UnlabeledSample(features=features[i], label=int(labels[i]), source_index=i)
        for i in range(count)
    ]
    return samples, stats


def write_idx(images_path, labels_path, images: np.ndarray, labels: np.ndarray) -> None:
    """Write u8 images (count, rows, cols) and labels (count,) in IDX format."""
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    if images.ndim != 3 or labels.ndim != 1 or images.shape[0] != labels.shape[0]:
        raise ValueError("write_idx expects images (n, rows, cols) and labels (n,)")
    count, rows, cols = images.shape
    with open(images_path, "wb") as fh:
        fh.write(struct.pack(">IIII", IMAGE_MAGIC, count, rows, cols))
        fh.write(images.tobytes())
    with open(labels_path, "wb") as fh:
        fh.write(struct.pack(">II", LABEL_MAGIC, count))
        fh.write(labels.tobytes())


def normalize_samples(samples, stats: NormStats):
    """Standardize features with the given split statistics."""
    return [
        UnlabeledSample(
            features=(s.features - stats.mean) / stats.std,
            label=s.label,
            source_index=s.source_index,
        )
        for s in samples
    ]


def load_embeddings_csv(path):
    """Read precomputed embeddings: header id,label,e0..e{d-1}."""
    samples = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or len(header) < 3 or header[0] != "id" or header[1] != "label":
            raise ValueError("embeddings CSV must start with header id,label,e0,...")
        dim = len(header) - 2
        expected = ["e%d" % i for i in range(dim)]
        if header[2:] != expected:
            raise ValueError("embeddings CSV feature columns must be e0..e%d" % (dim - 1))
        for row in reader:
            if not row:
                continue
            if len(row) != dim + 2:
                raise ValueError(f"embeddings CSV row has {len(row)} fields, expected {dim + 2}")
            label = int(row[1]) if row[1] != "" else None
            features = np.array([float(v) for v in row[2:]], dtype=np.float64)
            samples.append(
                UnlabeledSample(features=features, label=label, source_index=int(row[0]))
            )
    return samples


def _augment(features: np.ndarray, config: AugmentationConfig, rng: np.random.Generator):
    out = features
    if config.shift_max > 0:
        shift = int(rng.integers(-config.shift_max, config.shift_max + 1))
        out = np.roll(out, shift)
    else:
        out = out.copy()
    if config.mask_prob > 0.0:
        mask = rng.random(out.shape) < config.mask_prob
        out = np.where(mask, 0.0, out)
    if config.noise_std > 0.0:
        out = out + config.noise_std * rng.normal(size=out.shape)
    return out


def sample_pairs(source, count: int, augment_config, seed: int):
    """Draw positive pairs: a latent from the source, then two independent views.

    source is either a SyntheticModel (latent = mixture draw, views = Gaussian
    perturbations) or a sequence of UnlabeledSample drawn uniformly with
    replacement and passed through the augmentation pipeline.
    """
    if count < 1:
        raise ValueError("sample_pairs needs count >= 1")
    rng = np.random.default_rng([seed, 0x9A125])
    pairs = []
    if isinstance(source, SyntheticModel):
        latents, labels = source.sample_latents(count, rng)
        for i in range(count):
            pairs.append(
                PositivePair(
                    view_a=source.sample_view(latents[i], rng),
                    view_b=source.sample_view(latents[i], rng),
                    source_index=i,
                    label=int(labels[i]),
                )
            )
        return pairs
    samples = list(source)
    if not samples:
        raise ValueError("sample_pairs needs a non-empty sample source")
    if augment_config is None:
        raise ValueError("dataset-mode sample_pairs needs an AugmentationConfig")
    picks = rng.integers(0, len(samples), size=count)
    for i in range(count):
        base = samples[int(picks[i])]
        pairs.append(
            PositivePair(
                view_a=_augment(base.features, augment_config, rng),
                view_b=_augment(base.features, augment_config, rng),
                source_index=base.source_index,
                label=base.label,
            )
        )
    return pairs


def make_batches(pairs, batch_size_m: int, seed: int) -> BatchPlan:
    """Uniformly random partition into batches of exactly m pairs, remainder dropped."""
    n = len(pairs)
    if batch_size_m < 2:
        raise ValueError("batch size m must be at least 2 (the loss needs a negative)")
    if batch_size_m > n:
        raise ValueError(f"batch size m={batch_size_m} exceeds pair count {n}")
    rng = np.random.default_rng([seed, 0xBA7C4])
    perm = rng.permutation(n)
    full = n // batch_size_m
    assignments = tuple(
        tuple(int(j) for j in perm[b * batch_size_m : (b + 1) * batch_size_m])
        for b in range(full)
    )
    return BatchPlan(
        batch_size_m=batch_size_m, assignments=assignments, dropped=n - full * batch_size_m
    )


def split_pair_indices(n: int, prior_fraction: float, seed: int):
    """Deterministic disjoint split: prior-training indices vs certificate indices."""
    if not 0.0 <= prior_fraction < 1.0:
        raise ValueError("prior_fraction must lie in [0, 1)")
    rng = np.random.default_rng([seed, 0x59117])
    perm = rng.permutation(n)
    cut = int(prior_fraction * n)
    prior_idx = np.sort(perm[:cut])
    cert_idx = np.sort(perm[cut:])
    return prior_idx, cert_idx
