"""Candidate layer combinations, score fusion, and the histogram-entropy
selection criterion (plus the ablation heuristics and a brute-force oracle).

The selection rule: fuse per-layer ID scores over each candidate combination,
bin the fused scores into a normalized histogram, and pick the combination
whose histogram has minimum Shannon entropy. Low entropy marks concentrated,
confident ID scores, which proxies for good ID/OOD separability.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import kurtosis as _excess_kurtosis

from .errors import ConfigError, DomainError
from .tensors import ScoreTensor

HEURISTICS = ("entropy", "kurtosis", "std", "gini", "jsd", "average", "random")

# 'min': lower criterion is better; 'max': higher is better.
HEURISTIC_ORIENTATION = {
    "entropy": "min",
    "kurtosis": "max",
    "std": "max",
    "gini": "min",
    "jsd": "max",
    "average": "min",
    "random": "min",
}


@dataclass(frozen=True, order=True)
class LayerCombination:
    """A non-empty, sorted, duplicate-free subset of layer indices.

    Combinations produced by :func:`enumerate_candidates` always contain the
    final layer; ad-hoc combinations (e.g. for slicing) may not.
    """

    layers: Tuple[int, ...]

    def __init__(self, layers: Sequence[int]):
        layers = tuple(sorted(int(i) for i in layers))
        if not layers:
            raise DomainError("layer combination must be non-empty")
        if len(set(layers)) != len(layers):
            raise DomainError(f"duplicate layer indices in {layers}")
        if layers[0] < 0:
            raise DomainError(f"negative layer index in {layers}")
        object.__setattr__(self, "layers", layers)

    def __iter__(self):
        return iter(self.layers)

    def __len__(self):
        return len(self.layers)

    def __contains__(self, i):
        return i in self.layers

    def __str__(self):
        return ",".join(str(i) for i in self.layers)


@dataclass(frozen=True)
class CandidateSet:
    combos: Tuple[LayerCombination, ...]
    max_len: int
    layer_count: int

    def __post_init__(self):
        object.__setattr__(self, "combos", tuple(self.combos))
        if len(set(self.combos)) != len(self.combos):
            raise ConfigError("duplicate combinations in candidate set")
        for c in self.combos:
            if len(c) > self.max_len:
                raise ConfigError(f"combination {c} exceeds max_len={self.max_len}")

    def __len__(self):
        return len(self.combos)

    def __iter__(self):
        return iter(self.combos)


@dataclass(frozen=True)
class HistogramSpec:
    bins: int = 32
    range_mode: str = "empirical_minmax"

    def __post_init__(self):
        if not 2 <= self.bins <= 4096:
            raise ConfigError(f"bins must be in [2, 4096], got {self.bins}")
        if self.range_mode not in ("empirical_minmax", "fixed_unit"):
            raise ConfigError(f"unknown range_mode {self.range_mode!r}")


@dataclass(frozen=True)
class SelectionResult:
    best: LayerCombination
    criterion_values: Dict[LayerCombination, float]
    heuristic: str
    orientation: str


def enumerate_candidates(layer_count: int, max_len: int) -> CandidateSet:
    """All layer subsets that contain the final layer, with size <= max_len.

    Ordered by size, then lexicographically; count is
    sum_{k=0}^{max_len-1} C(layer_count-1, k).
    """
    if not 1 <= max_len <= layer_count:
        raise ConfigError(
            f"max_len must be in [1, {layer_count}], got {max_len}"
        )
    final = layer_count - 1
    combos: List[LayerCombination] = []
    for size in range(1, max_len + 1):
        for extra in itertools.combinations(range(final), size - 1):
            combos.append(LayerCombination(extra + (final,)))
    return CandidateSet(tuple(combos), max_len=max_len, layer_count=layer_count)


def fuse(scores: ScoreTensor, combo: LayerCombination) -> np.ndarray:
    """Arithmetic mean of the selected layers' scores, one value per sample."""
    L = scores.layer_count
    for i in combo:
        if not 0 <= i < L:
            raise DomainError(f"layer index {i} out of range for L={L}")
    return scores.data[:, list(combo)].mean(axis=1)


def _histogram_probs(fused: np.ndarray, spec: HistogramSpec) -> np.ndarray:
    """Normalized bin occupancy; last bin is right-closed."""
    if spec.range_mode == "fixed_unit":
        lo, hi = 0.0, 1.0
        fused = np.clip(fused, lo, hi)
    else:
        lo, hi = float(fused.min()), float(fused.max())
        if lo == hi:
            # degenerate point mass: single occupied bin by convention
            p = np.zeros(spec.bins)
            p[0] = 1.0
            return p
    counts, _ = np.histogram(fused, bins=spec.bins, range=(lo, hi))
    return counts / counts.sum()


def _entropy_nats(p: np.ndarray) -> float:
    nz = p[p > 0]
    return float(-(nz * np.log(nz)).sum())


def histogram_entropy(fused: np.ndarray, spec: HistogramSpec) -> float:
    """Shannon entropy (natural log) of the binned fused-score distribution.

    Result lies in [0, log B]; a point-mass distribution yields 0.
    """
    fused = np.asarray(fused, dtype=np.float64)
    if fused.size < 2:
        raise DomainError(f"histogram entropy needs N >= 2, got N={fused.size}")
    if not np.isfinite(fused).all():
        raise DomainError("fused scores contain non-finite values")
    return _entropy_nats(_histogram_probs(fused, spec))


def heuristic_criterion(
    fused: np.ndarray,
    heuristic: str,
    spec: HistogramSpec,
    rng: Optional[np.random.Generator] = None,
) -> float:
    """Criterion value for one fused-score vector under a selection heuristic.

    Orientation differs per heuristic (see HEURISTIC_ORIENTATION); 'average'
    is a constant placeholder since it bypasses ranking entirely.
    """
    fused = np.asarray(fused, dtype=np.float64)
    if fused.size < 2:
        raise DomainError(f"criterion needs N >= 2, got N={fused.size}")
    if heuristic == "entropy":
        return histogram_entropy(fused, spec)
    if heuristic == "kurtosis":
        return float(_excess_kurtosis(fused, fisher=True, bias=True))
    if heuristic == "std":
        return float(np.std(fused))
    if heuristic == "gini":
        p = _histogram_probs(fused, spec)
        return float(1.0 - (p ** 2).sum())
    if heuristic == "jsd":
        p = _histogram_probs(fused, spec)
        u = np.full_like(p, 1.0 / p.size)
        return _jsd_base2(p, u)
    if heuristic == "average":
        return 0.0
    if heuristic == "random":
        if rng is None:
            raise ConfigError("random heuristic requires a seeded RNG")
        return float(rng.uniform())
    raise ConfigError(f"unknown heuristic {heuristic!r}")


def _jsd_base2(p: np.ndarray, q: np.ndarray) -> float:
    m = 0.5 * (p + q)

    def kl(a, b):
        mask = a > 0
        return float((a[mask] * np.log2(a[mask] / b[mask])).sum())

    return 0.5 * kl(p, m) + 0.5 * kl(q, m)


def _tie_key(combo: LayerCombination):
    return (len(combo), combo.layers)


def select(
    scores_id: ScoreTensor,
    candidates: CandidateSet,
    spec: HistogramSpec,
    heuristic: str = "entropy",
    seed: Optional[int] = None,
) -> SelectionResult:
    """Rank every candidate combination on unlabeled ID scores and return the
    best one under the requested heuristic.

    Deterministic: candidates are scanned in (size, lexicographic) order and
    ties keep the earliest combination, so smaller combinations win ties.
    """
    if len(candidates) == 0:
        raise ConfigError("candidate set is empty")
    if scores_id.n_samples < 2:
        raise DomainError("selection requires at least 2 ID samples")
    if heuristic not in HEURISTICS:
        raise ConfigError(f"unknown heuristic {heuristic!r}")

    ordered = sorted(candidates, key=_tie_key)

    if heuristic == "average":
        # naive all-layer fusion baseline; ranking is bypassed
        best = LayerCombination(range(scores_id.layer_count))
        values = {c: 0.0 for c in ordered}
        return SelectionResult(best, values, heuristic, HEURISTIC_ORIENTATION[heuristic])

    rng = None
    if heuristic == "random":
        if seed is None:
            raise ConfigError("random heuristic requires an explicit seed")
        rng = np.random.default_rng(seed)

    orientation = HEURISTIC_ORIENTATION[heuristic]
    sign = 1.0 if orientation == "min" else -1.0
    values: Dict[LayerCombination, float] = {}
    best = None
    best_val = np.inf
    for combo in ordered:
        v = heuristic_criterion(fuse(scores_id, combo), heuristic, spec, rng=rng)
        values[combo] = v
        if sign * v < best_val:
            best_val = sign * v
            best = combo
    return SelectionResult(best, values, heuristic, orientation)


def oracle_search(
    scores_id: ScoreTensor,
    scores_ood: Sequence[ScoreTensor],
    candidates: CandidateSet,
) -> List[Tuple[LayerCombination, float]]:
    """Exhaustive post-hoc ranking of candidates by average FPR@95 across the
    OOD sets. Diagnostics only; selection never sees OOD data.
    """
    from .metrics import fpr_at_tpr

    if not scores_ood:
        raise DomainError("oracle search requires at least one OOD tensor")
    L = scores_id.layer_count
    for t in scores_ood:
        if t.layer_count != L:
            raise DomainError(
                f"layer count mismatch: ID has {L}, OOD has {t.layer_count}"
            )
    ranked = []
    for combo in sorted(candidates, key=_tie_key):
        fused_id = fuse(scores_id, combo)
        fprs = [fpr_at_tpr(fused_id, fuse(t, combo))[0] for t in scores_ood]
        ranked.append((combo, float(np.mean(fprs))))
    ranked.sort(key=lambda item: (item[1], _tie_key(item[0])))
    return ranked
