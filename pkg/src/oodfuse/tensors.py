"""In-memory data model for score / probability / embedding tensors.

All payloads are float64 and immutable after construction. Structural
invariants are checked by :func:`validate`, which reports the first
violation instead of raising, so callers can decide how to react.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from .errors import DomainError

SCORE_RULES = ("mcm", "msp", "maxlogit", "energy", "entropy", "variance", "raw")

PROB_ROWSUM_ATOL = 1e-6

# created_utc must be caller-supplied for real provenance; the sentinel keeps
# derived files byte-reproducible when no timestamp is given.
EPOCH_UTC = "1970-01-01T00:00:00Z"


@dataclass(frozen=True)
class TensorMeta:
    model_id: str
    dataset_id: str
    layer_names: Tuple[str, ...]
    temperature: float = 1.0
    score_rule: str = "raw"
    created_utc: str = EPOCH_UTC

    def __post_init__(self):
        object.__setattr__(self, "layer_names", tuple(self.layer_names))
        if self.temperature <= 0:
            raise DomainError(f"temperature must be > 0, got {self.temperature}")
        if self.score_rule not in SCORE_RULES:
            raise DomainError(f"unknown score_rule {self.score_rule!r}")

    @property
    def layer_count(self) -> int:
        return len(self.layer_names)


def default_meta(layer_count: int, **overrides) -> TensorMeta:
    """Meta with generic layer names, for synthetic or ad-hoc tensors."""
    fields = dict(
        model_id="synthetic",
        dataset_id="synthetic",
        layer_names=tuple(f"layer_{i}" for i in range(layer_count)),
        temperature=1.0,
        score_rule="raw",
    )
    fields.update(overrides)
    return TensorMeta(**fields)


def _freeze(a) -> np.ndarray:
    arr = np.asarray(a, dtype=np.float64).copy()
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class ScoreTensor:
    """Per-sample, per-layer scalar OOD scores, shape (N, L)."""

    data: np.ndarray
    meta: TensorMeta

    def __post_init__(self):
        data = _freeze(self.data)
        if data.ndim != 2:
            raise DomainError(f"ScoreTensor requires a 2-d array, got ndim={data.ndim}")
        if self.meta.layer_count != data.shape[1]:
            raise DomainError(
                f"meta has {self.meta.layer_count} layer names for {data.shape[1]} layers"
            )
        object.__setattr__(self, "data", data)

    @property
    def n_samples(self) -> int:
        return self.data.shape[0]

    @property
    def layer_count(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class ProbTensor:
    """Per-sample, per-layer class distributions, shape (N, L, C)."""

    data: np.ndarray
    meta: TensorMeta

    def __post_init__(self):
        data = _freeze(self.data)
        if data.ndim != 3:
            raise DomainError(f"ProbTensor requires a 3-d array, got ndim={data.ndim}")
        if self.meta.layer_count != data.shape[1]:
            raise DomainError(
                f"meta has {self.meta.layer_count} layer names for {data.shape[1]} layers"
            )
        object.__setattr__(self, "data", data)

    @property
    def n_samples(self) -> int:
        return self.data.shape[0]

    @property
    def layer_count(self) -> int:
        return self.data.shape[1]

    @property
    def class_count(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True)
class RawLogits:
    """Per-sample, per-layer raw similarity logits, shape (N, L, K)."""

    data: np.ndarray
    meta: TensorMeta

    def __post_init__(self):
        data = _freeze(self.data)
        if data.ndim != 3:
            raise DomainError(f"RawLogits requires a 3-d array, got ndim={data.ndim}")
        if self.meta.layer_count != data.shape[1]:
            raise DomainError(
                f"meta has {self.meta.layer_count} layer names for {data.shape[1]} layers"
            )
        object.__setattr__(self, "data", data)

    @property
    def n_samples(self) -> int:
        return self.data.shape[0]

    @property
    def layer_count(self) -> int:
        return self.data.shape[1]

    @property
    def class_count(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True)
class EmbeddingSet:
    """Per-layer projected image embeddings plus class-text embeddings.

    image: (N, L, D); text: (K, D) in the shared embedding space.
    """

    image: np.ndarray
    text: np.ndarray
    meta: TensorMeta

    def __post_init__(self):
        image = _freeze(self.image)
        text = _freeze(self.text)
        if image.ndim != 3 or text.ndim != 2:
            raise DomainError("EmbeddingSet requires image (N,L,D) and text (K,D)")
        if self.meta.layer_count != image.shape[1]:
            raise DomainError(
                f"meta has {self.meta.layer_count} layer names for {image.shape[1]} layers"
            )
        object.__setattr__(self, "image", image)
        object.__setattr__(self, "text", text)

    @property
    def n_samples(self) -> int:
        return self.image.shape[0]

    @property
    def layer_count(self) -> int:
        return self.image.shape[1]

    @property
    def class_count(self) -> int:
        return self.text.shape[0]

    @property
    def dim(self) -> int:
        return self.image.shape[2]


Tensor = Union[ScoreTensor, ProbTensor, RawLogits, EmbeddingSet]


@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    code: Optional[str] = None
    coords: Optional[Tuple[int, ...]] = None
    message: str = ""

    def __bool__(self) -> bool:
        return self.ok


def _first_nonfinite(arr: np.ndarray) -> Optional[Tuple[int, ...]]:
    bad = ~np.isfinite(arr)
    if bad.any():
        return tuple(int(i) for i in np.argwhere(bad)[0])
    return None


def validate(tensor: Tensor) -> ValidationReport:
    """Check all structural invariants; report the first violation.

    Never raises and never mutates its input.
    """
    if isinstance(tensor, EmbeddingSet):
        for name, arr in (("image", tensor.image), ("text", tensor.text)):
            at = _first_nonfinite(arr)
            if at is not None:
                return ValidationReport(
                    False, "non-finite", at, f"non-finite value in {name} at {at}"
                )
        if tensor.image.shape[2] != tensor.text.shape[1]:
            return ValidationReport(
                False, "dim-mismatch", None,
                f"image dim {tensor.image.shape[2]} != text dim {tensor.text.shape[1]}",
            )
        if tensor.class_count < 2:
            return ValidationReport(
                False, "too-few-classes", None, f"K={tensor.class_count} < 2"
            )
        return ValidationReport(True)

    data = tensor.data
    if data.shape[0] < 1 or data.shape[1] < 1:
        return ValidationReport(False, "empty", None, f"degenerate shape {data.shape}")
    at = _first_nonfinite(data)
    if at is not None:
        return ValidationReport(False, "non-finite", at, f"non-finite value at {at}")

    if isinstance(tensor, ProbTensor):
        if (data < 0).any() or (data > 1).any():
            bad = (data < 0) | (data > 1)
            at = tuple(int(i) for i in np.argwhere(bad)[0])
            return ValidationReport(
                False, "out-of-range", at, f"probability outside [0,1] at {at}"
            )
        sums = data.sum(axis=2)
        off = np.abs(sums - 1.0) > PROB_ROWSUM_ATOL
        if off.any():
            n, l = (int(i) for i in np.argwhere(off)[0])
            return ValidationReport(
                False, "row-sum", (n, l),
                f"probabilities at (n={n}, l={l}) sum to {sums[n, l]:.8f}",
            )
    return ValidationReport(True)


def ensure_valid(tensor: Tensor) -> Tensor:
    """Raise ValidationError if the tensor fails :func:`validate`."""
    from .errors import ValidationError

    report = validate(tensor)
    if not report.ok:
        raise ValidationError(report.message, code=report.code, coords=report.coords)
    return tensor


def slice_layers(tensor: ScoreTensor, layers: Sequence[int]) -> ScoreTensor:
    """Restrict a score tensor to the given layer indices, preserving order."""
    idx = list(layers)
    L = tensor.layer_count
    for i in idx:
        if not 0 <= i < L:
            raise DomainError(f"layer index {i} out of range for L={L}")
    data = tensor.data[:, idx]
    meta = replace(tensor.meta, layer_names=tuple(tensor.meta.layer_names[i] for i in idx))
    return ScoreTensor(data, meta)
