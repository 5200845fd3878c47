"""Feature harmonization for heterogeneous feature maps: adaptive average
pooling plus a seeded random channel projection.

The projection matrix is generated from a SplitMix64 stream so equal seeds
give bit-identical matrices in any implementation of the same contract:

  - stream: out_i = mix64(seed + (i+1) * 0x9E3779B97F4A7C15), all mod 2^64,
    where mix64 is the standard SplitMix64 finalizer.
  - uniforms: u_i = ((out_i >> 11) + 1) * 2^-53, in (0, 1].
  - normals: Box-Muller pairs z_{2j} = sqrt(-2 ln u_{2j}) cos(2 pi u_{2j+1}),
    z_{2j+1} = sqrt(-2 ln u_{2j}) sin(2 pi u_{2j+1}).
  - the weight matrix consumes normals row-major, shape (c_target, c_in),
    scaled by sqrt(2/c_in) (he) or sqrt(2/(c_in + c_target)) (xavier).
  - layer-specific matrices use seed XOR layer_index.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DomainError

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_U64 = np.uint64
_TWO53_INV = 2.0 ** -53


@dataclass(frozen=True)
class FeatureMap:
    """Dense feature tensor with shape (C_in, H, W)."""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64).copy()
        if data.ndim != 3:
            raise DomainError(f"feature map must be 3-d (C,H,W), got ndim={data.ndim}")
        if min(data.shape) < 1:
            raise DomainError(f"degenerate feature map shape {data.shape}")
        if not np.isfinite(data).all():
            raise DomainError("feature map contains non-finite values")
        data.flags.writeable = False
        object.__setattr__(self, "data", data)

    @property
    def channels(self) -> int:
        return self.data.shape[0]


@dataclass(frozen=True)
class ProjectionSpec:
    target_h: int
    target_w: int
    c_target: int
    seed: int
    init: str = "he"

    def __post_init__(self):
        if self.target_h < 1 or self.target_w < 1 or self.c_target < 1:
            raise ConfigError("projection targets must be >= 1")
        if self.init not in ("he", "xavier"):
            raise ConfigError(f"unknown init {self.init!r}")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError("seed must fit in 64 bits")


def splitmix64_stream(seed: int, count: int) -> np.ndarray:
    """First `count` outputs of the SplitMix64 stream for `seed` (uint64)."""
    idx = np.arange(1, count + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = _U64(seed % 2 ** 64) + idx * _GAMMA
        z = (z ^ (z >> _U64(30))) * _MIX1
        z = (z ^ (z >> _U64(27))) * _MIX2
        z = z ^ (z >> _U64(31))
    return z


def _normals(seed: int, count: int) -> np.ndarray:
    pairs = (count + 1) // 2
    raw = splitmix64_stream(seed, 2 * pairs)
    u = ((raw >> _U64(11)).astype(np.float64) + 1.0) * _TWO53_INV
    u1, u2 = u[0::2], u[1::2]
    r = np.sqrt(-2.0 * np.log(u1))
    theta = 2.0 * np.pi * u2
    z = np.empty(2 * pairs)
    z[0::2] = r * np.cos(theta)
    z[1::2] = r * np.sin(theta)
    return z[:count]


def projection_matrix(spec: ProjectionSpec, c_in: int, layer_index: int = 0) -> np.ndarray:
    """Deterministic (c_target, c_in) random projection matrix."""
    if c_in < 1:
        raise DomainError(f"c_in must be >= 1, got {c_in}")
    if spec.init == "he":
        scale = np.sqrt(2.0 / c_in)
    else:
        scale = np.sqrt(2.0 / (c_in + spec.c_target))
    seed = (spec.seed ^ layer_index) % 2 ** 64
    z = _normals(seed, spec.c_target * c_in)
    return scale * z.reshape(spec.c_target, c_in)


def adaptive_avg_pool(f: FeatureMap, target_h: int, target_w: int) -> FeatureMap:
    """Resize spatial dims by averaging over the standard adaptive partition:
    region i spans [floor(i*H/t), ceil((i+1)*H/t))."""
    if target_h < 1 or target_w < 1:
        raise ConfigError("pool targets must be >= 1")
    c, h, w = f.data.shape
    out = np.empty((c, target_h, target_w))
    for i in range(target_h):
        h0, h1 = (i * h) // target_h, -(-((i + 1) * h) // target_h)
        for j in range(target_w):
            w0, w1 = (j * w) // target_w, -(-((j + 1) * w) // target_w)
            out[:, i, j] = f.data[:, h0:h1, w0:w1].mean(axis=(1, 2))
    return FeatureMap(out)


def random_channel_projection(
    f: FeatureMap,
    spec: ProjectionSpec,
    layer_index: int = 0,
    weight: np.ndarray = None,
) -> FeatureMap:
    """Project the channel axis with a seeded random matrix (a 1x1
    convolution). `weight` overrides the generated matrix, for tests."""
    w = weight if weight is not None else projection_matrix(spec, f.channels, layer_index)
    if w.shape[1] != f.channels:
        raise DomainError(
            f"projection expects {w.shape[1]} channels, feature map has {f.channels}"
        )
    out = np.einsum("tc,chw->thw", w, f.data)
    return FeatureMap(out)


def harmonize(f: FeatureMap, spec: ProjectionSpec, layer_index: int = 0) -> FeatureMap:
    """Pool to the target spatial size, then project channels."""
    pooled = adaptive_avg_pool(f, spec.target_h, spec.target_w)
    return random_channel_projection(pooled, spec, layer_index)
