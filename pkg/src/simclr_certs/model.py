"""Probabilistic MLP encoder: a mean-field Gaussian over all weights.

Parameters live in two flat float64 vectors, mu and rho, with per-weight
std = softplus(rho). Weight samples use the reparameterization
w = mu + softplus(rho) * eps with eps ~ N(0, I) pinned by seed, so training
can recreate the exact noise a sample was drawn with.

Layer packing order is fixed: for each layer, W (out x in, row-major) then b.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .numerics import gaussian_kl

__all__ = [
    "derive_seed",
    "NetworkArchitecture",
    "GaussianPosterior",
    "WeightSample",
    "count_parameters",
    "initialize_posterior",
    "sample_weights",
    "mean_weights",
    "forward",
    "save_checkpoint",
    "load_checkpoint",
    "softplus",
    "softplus_inverse",
    "sigmoid",
]

CHECKPOINT_VERSION = 1


def derive_seed(*parts: int) -> int:
    """Stable 64-bit seed from integer parts, for nested deterministic RNG."""
    return int(np.random.SeedSequence(list(parts)).generate_state(1, dtype=np.uint64)[0])


def softplus(x):
    return np.logaddexp(0.0, x)


def softplus_inverse(s):
    s = np.asarray(s, dtype=np.float64)
    if np.any(s <= 0.0):
        raise ValueError("softplus_inverse needs positive input")
    return np.log(np.expm1(s))


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


@dataclass(frozen=True)
class NetworkArchitecture:
    """MLP shape: layer_widths = (input, hidden..., output_dim).

    ReLU between layers, linear final layer, output L2-normalized onto the
    sphere. projection_dim k, when set, exposes the projected representation:
    the first k output coordinates renormalized.
    """

    layer_widths: tuple[int, ...]
    projection_dim: int | None = None

    def __post_init__(self):
        widths = tuple(int(w) for w in self.layer_widths)
        object.__setattr__(self, "layer_widths", widths)
        if len(widths) < 2:
            raise ValueError("architecture needs at least input and output widths")
        if any(w < 1 for w in widths):
            raise ValueError("all layer widths must be positive")
        if self.projection_dim is not None:
            k = int(self.projection_dim)
            if not 1 <= k <= widths[-1]:
                raise ValueError(
                    f"projection_dim {k} must lie in [1, {widths[-1]}]"
                )
            object.__setattr__(self, "projection_dim", k)

    @property
    def input_dim(self) -> int:
        return self.layer_widths[0]

    @property
    def output_dim(self) -> int:
        return self.layer_widths[-1]

    def representation_dim(self, use_projection: bool) -> int:
        if use_projection:
            if self.projection_dim is None:
                raise ValueError("architecture has no projection head")
            return self.projection_dim
        return self.output_dim


def count_parameters(arch: NetworkArchitecture) -> int:
    """Total scalar parameters: sum over layers of (fan_in + 1) * fan_out."""
    widths = arch.layer_widths
    return sum((widths[i] + 1) * widths[i + 1] for i in range(len(widths) - 1))


def _layer_slices(arch: NetworkArchitecture):
    """(w_slice, b_slice, fan_in, fan_out) per layer in packing order."""
    widths = arch.layer_widths
    out = []
    offset = 0
    for i in range(len(widths) - 1):
        fan_in, fan_out = widths[i], widths[i + 1]
        w_sl = slice(offset, offset + fan_in * fan_out)
        offset += fan_in * fan_out
        b_sl = slice(offset, offset + fan_out)
        offset += fan_out
        out.append((w_sl, b_sl, fan_in, fan_out))
    return out


def unpack_layers(arch: NetworkArchitecture, flat: np.ndarray):
    layers = []
    for w_sl, b_sl, fan_in, fan_out in _layer_slices(arch):
        layers.append((flat[w_sl].reshape(fan_out, fan_in), flat[b_sl]))
    return layers


@dataclass(eq=False)
class GaussianPosterior:
    """Mean-field Gaussian over the flat weight vector of an architecture."""

    arch: NetworkArchitecture
    mu: np.ndarray
    rho: np.ndarray

    def __post_init__(self):
        p = count_parameters(self.arch)
        self.mu = np.asarray(self.mu, dtype=np.float64)
        self.rho = np.asarray(self.rho, dtype=np.float64)
        if self.mu.shape != (p,) or self.rho.shape != (p,):
            raise ValueError(
                f"posterior vectors must have shape ({p},), got {self.mu.shape} / {self.rho.shape}"
            )

    @property
    def std(self) -> np.ndarray:
        return softplus(self.rho)

    def kl_to(self, prior: "GaussianPosterior") -> float:
        """KL(self || prior), summed over all weight coordinates."""
        if prior.arch.layer_widths != self.arch.layer_widths:
            raise ValueError("KL requires matching architectures")
        return gaussian_kl(self.mu, self.std**2, prior.mu, prior.std**2)

    def copy(self) -> "GaussianPosterior":
        return GaussianPosterior(self.arch, self.mu.copy(), self.rho.copy())


@dataclass(frozen=True, eq=False)
class WeightSample:
    """One reparameterized draw w = mu + softplus(rho) * epsilon."""

    arch: NetworkArchitecture
    values: np.ndarray
    epsilon: np.ndarray = field(repr=False, default=None)


def _truncated_normal(rng: np.random.Generator, std: float, size: int) -> np.ndarray:
    """N(0, std^2) truncated to +-2 std, by rejection (acceptance ~0.954)."""
    out = rng.normal(0.0, std, size=size)
    bad = np.abs(out) > 2.0 * std
    while np.any(bad):
        out[bad] = rng.normal(0.0, std, size=int(np.sum(bad)))
        bad = np.abs(out) > 2.0 * std
    return out


def initialize_posterior(
    arch: NetworkArchitecture, sigma0: float, seed: int
) -> GaussianPosterior:
    """Fresh posterior: per-layer truncated-Gaussian means, constant std sigma0.

    Mean weights are N(0, 1/fan_in) truncated at two standard deviations
    (biases included, same scale); rho is softplus_inverse(sigma0) everywhere.
    """
    if sigma0 <= 0.0:
        raise ValueError("sigma0 must be positive")
    rng = np.random.default_rng([seed, 0x1417])
    p = count_parameters(arch)
    mu = np.empty(p, dtype=np.float64)
    for w_sl, b_sl, fan_in, fan_out in _layer_slices(arch):
        std = 1.0 / np.sqrt(fan_in)
        mu[w_sl] = _truncated_normal(rng, std, fan_in * fan_out)
        mu[b_sl] = _truncated_normal(rng, std, fan_out)
    rho = np.full(p, float(softplus_inverse(sigma0)), dtype=np.float64)
    return GaussianPosterior(arch, mu, rho)


def sample_weights(posterior: GaussianPosterior, seed: int) -> WeightSample:
    """Deterministic reparameterized draw for the given seed."""
    rng = np.random.default_rng([seed, 0x5A3D])
    eps = rng.normal(size=posterior.mu.shape)
    values = posterior.mu + softplus(posterior.rho) * eps
    return WeightSample(arch=posterior.arch, values=values, epsilon=eps)


def mean_weights(posterior: GaussianPosterior) -> WeightSample:
    """The deterministic network at the posterior mean (epsilon = 0)."""
    return WeightSample(
        arch=posterior.arch,
        values=posterior.mu.copy(),
        epsilon=np.zeros_like(posterior.mu),
    )


def _normalize_rows(z: np.ndarray):
    norms = np.linalg.norm(z, axis=1, keepdims=True)
    out = np.empty_like(z)
    zero = norms[:, 0] == 0.0
    safe = ~zero
    out[safe] = z[safe] / norms[safe]
    if np.any(zero):
        out[zero] = 0.0
        out[zero, 0] = 1.0  # zero vector maps to the first basis vector
    return out, norms


def forward_with_cache(weights: WeightSample, inputs: np.ndarray, use_projection: bool = False):
    """Forward pass keeping per-layer activations for backprop.

    Returns (embeddings, cache); cache holds inputs/preactivations needed by
    the training module's backward pass.
    """
    arch = weights.arch
    x = np.asarray(inputs, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.shape[1] != arch.input_dim:
        raise ValueError(f"input has dim {x.shape[1]}, architecture expects {arch.input_dim}")
    layers = unpack_layers(arch, weights.values)
    activations = [x]
    pre_list = []
    h = x
    for li, (W, b) in enumerate(layers):
        pre = h @ W.T + b
        pre_list.append(pre)
        h = np.maximum(pre, 0.0) if li < len(layers) - 1 else pre
        activations.append(h)
    z = h
    if use_projection:
        k = arch.representation_dim(True)
        z_proj = z[:, :k]
    else:
        z_proj = z
    emb, norms = _normalize_rows(z_proj)
    cache = {
        "activations": activations,
        "pre": pre_list,
        "z": z,
        "z_proj": z_proj,
        "norms": norms,
        "emb": emb,
        "use_projection": use_projection,
        "single": single,
    }
    return (emb[0] if single else emb), cache


def forward(weights: WeightSample, inputs: np.ndarray, use_projection: bool = False):
    """Embed inputs onto the unit sphere (projected sphere when flagged)."""
    emb, _ = forward_with_cache(weights, inputs, use_projection)
    return emb


def save_checkpoint(path, posterior: GaussianPosterior) -> None:
    """Versioned record of architecture + mu + rho; float64 exact."""
    proj = posterior.arch.projection_dim
    np.savez(
        path,
        version=np.array([CHECKPOINT_VERSION]),
        arch=np.frombuffer(
            json.dumps(
                {
                    "layer_widths": list(posterior.arch.layer_widths),
                    "projection_dim": proj,
                }
            ).encode(),
            dtype=np.uint8,
        ),
        mu=posterior.mu,
        rho=posterior.rho,
    )


def load_checkpoint(path) -> GaussianPosterior:
    with np.load(path) as data:
        version = int(data["version"][0])
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        spec = json.loads(bytes(data["arch"].tobytes()).decode())
        arch = NetworkArchitecture(
            layer_widths=tuple(spec["layer_widths"]),
            projection_dim=spec["projection_dim"],
        )
        return GaussianPosterior(arch, data["mu"].copy(), data["rho"].copy())
