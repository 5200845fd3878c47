"""Model adapters: anything that can embed text prompts and expose per-layer
image representations.

Per-layer features may be joint-space vectors (shape (D,), the pretrained
projection head already applied) or spatial feature maps (shape (C, H, W)),
which the pipeline harmonizes with the shared seeded random channel
projection before scoring.
"""

from __future__ import annotations

import abc
import zlib
from typing import List, Sequence, Tuple

import numpy as np

from .errors import ConfigError, RetriableError


class ModelAdapter(abc.ABC):
    """Minimal encoder surface the extraction pipeline needs."""

    model_id: str
    layer_names: Tuple[str, ...]
    embed_dim: int

    @property
    def layer_count(self) -> int:
        return len(self.layer_names)

    @abc.abstractmethod
    def encode_text(self, prompts: Sequence[str]) -> np.ndarray:
        """Embed prompts into the joint space, shape (K, embed_dim)."""

    @abc.abstractmethod
    def layer_features(self, image: np.ndarray) -> List[np.ndarray]:
        """Per-layer representations for one image, final layer last.
        Each entry is either (embed_dim,) or a spatial map (C, H, W)."""


def _seeded_rng(*parts) -> np.random.Generator:
    crc = 0
    for part in parts:
        if isinstance(part, str):
            part = part.encode()
        elif isinstance(part, int):
            part = part.to_bytes(8, "little", signed=False)
        crc = zlib.crc32(part, crc)
    return np.random.default_rng(crc)


class ToyAdapter(ModelAdapter):
    """Deterministic stand-in encoder for tests and offline smoke runs.

    Features are pseudo-random functions of the image bytes, so identical
    inputs always embed identically while distinct images spread out. The
    early layers emit spatial maps to exercise the harmonization path.
    """

    def __init__(self, layer_count: int = 6, embed_dim: int = 16,
                 spatial_layers: Tuple[int, ...] = (0, 1), channels: int = 24):
        if layer_count < 1 or embed_dim < 2:
            raise ConfigError("ToyAdapter needs layer_count >= 1 and embed_dim >= 2")
        if any(not 0 <= l < layer_count - 1 for l in spatial_layers):
            raise ConfigError("spatial layers must be strictly before the final layer")
        self.model_id = "toy"
        self.layer_names = tuple(f"blocks.{i}" for i in range(layer_count))
        self.embed_dim = embed_dim
        self.spatial_layers = frozenset(spatial_layers)
        self.channels = channels

    def encode_text(self, prompts: Sequence[str]) -> np.ndarray:
        rows = [
            _seeded_rng("text", p).normal(size=self.embed_dim) for p in prompts
        ]
        text = np.stack(rows)
        return text / np.linalg.norm(text, axis=1, keepdims=True)

    def layer_features(self, image: np.ndarray) -> List[np.ndarray]:
        image = np.asarray(image, dtype=np.float64)
        content = image.tobytes()
        out = []
        for l in range(self.layer_count):
            rng = _seeded_rng("image", content, l)
            if l in self.spatial_layers:
                out.append(rng.normal(size=(self.channels, 4, 4)))
            else:
                out.append(rng.normal(size=self.embed_dim))
        return out


def resolve_adapter(model_id: str) -> ModelAdapter:
    if model_id == "toy" or model_id.startswith("toy:"):
        return ToyAdapter()
    if model_id.startswith("hf:"):
        try:
            from .hf_adapter import HFAdapter
        except ImportError as exc:
            raise RetriableError(
                f"model {model_id!r} needs torch/transformers which are not "
                f"available here: {exc}"
            ) from None
        return HFAdapter(model_id[3:])
    raise ConfigError(f"unknown model_id {model_id!r} (expected 'toy' or 'hf:<name>')")
