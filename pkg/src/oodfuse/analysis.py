"""Representation diagnostics: SVCCA between layers, top-1 agreement, JSD
matrices, per-layer entropy profiles, Jaccard consistency of top-ranked
combinations, and the entropy-vs-FPR scatter used to sanity-check the
selection criterion.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Mapping, Sequence, Tuple

import numpy as np

from .errors import ConfigError, DomainError
from .metrics import fpr_at_tpr
from .selection import (
    CandidateSet,
    HistogramSpec,
    LayerCombination,
    fuse,
    histogram_entropy,
)
from .tensors import ProbTensor, ScoreTensor


@dataclass(frozen=True)
class LayerPairMatrix:
    values: np.ndarray  # (L, L)
    kind: str  # svcca | top1_agreement | jsd

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2 or values.shape[0] != values.shape[1]:
            raise DomainError(f"layer-pair matrix must be square, got {values.shape}")
        if self.kind not in ("svcca", "top1_agreement", "jsd"):
            raise DomainError(f"unknown matrix kind {self.kind!r}")
        values = values.copy()
        values.flags.writeable = False
        object.__setattr__(self, "values", values)


def _center(x: np.ndarray) -> np.ndarray:
    return x - x.mean(axis=0, keepdims=True)


def _truncated_basis(x: np.ndarray, var_keep: float) -> np.ndarray:
    """Orthonormal basis of the dominant subspace of centered activations,
    keeping the smallest rank whose squared singular values capture
    var_keep of the total mass."""
    xc = _center(np.asarray(x, dtype=np.float64))
    u, s, _ = np.linalg.svd(xc, full_matrices=False)
    mass = s ** 2
    total = mass.sum()
    if total == 0:
        raise DomainError("all-constant activations have no variance")
    keep = int(np.searchsorted(np.cumsum(mass) / total, var_keep) + 1)
    keep = min(keep, int((s > 1e-12 * s[0]).sum()))
    return u[:, :keep]


def svcca(acts_a: np.ndarray, acts_b: np.ndarray, var_keep: float = 0.99) -> float:
    """Mean canonical correlation between the SVD-truncated subspaces of two
    activation matrices (rows = samples). Result clipped to [0, 1]."""
    a = np.asarray(acts_a, dtype=np.float64)
    b = np.asarray(acts_b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[0] != b.shape[0]:
        raise DomainError("activations must be 2-d with matching sample counts")
    if not (np.isfinite(a).all() and np.isfinite(b).all()):
        raise DomainError("activations contain non-finite values")
    ua = _truncated_basis(a, var_keep)
    ub = _truncated_basis(b, var_keep)
    if a.shape[0] <= max(ua.shape[1], ub.shape[1]):
        raise DomainError(
            f"need N > truncated rank; N={a.shape[0]}, "
            f"ranks=({ua.shape[1]}, {ub.shape[1]})"
        )
    # canonical correlations of whitened subspaces = singular values of ua^T ub
    corrs = np.linalg.svd(ua.T @ ub, compute_uv=False)
    return float(np.clip(corrs, 0.0, 1.0).mean())


def layer_distance_profile(
    acts: Sequence[np.ndarray], var_keep: float = 0.99
) -> Dict[int, List[float]]:
    """SVCCA values grouped by layer distance: delta -> [svcca(l, l+delta)]."""
    L = len(acts)
    if L < 2:
        raise DomainError(f"need at least 2 layers, got {L}")
    profile: Dict[int, List[float]] = {}
    for delta in range(1, L):
        profile[delta] = [
            svcca(acts[l], acts[l + delta], var_keep) for l in range(L - delta)
        ]
    return profile


def svcca_matrix(acts: Sequence[np.ndarray], var_keep: float = 0.99) -> LayerPairMatrix:
    """Full L x L SVCCA similarity matrix between layer activations."""
    L = len(acts)
    m = np.eye(L)
    for i in range(L):
        for j in range(i + 1, L):
            m[i, j] = m[j, i] = svcca(acts[i], acts[j], var_keep)
    return LayerPairMatrix(m, "svcca")


def top1_agreement(probs: ProbTensor) -> LayerPairMatrix:
    """Fraction of samples whose argmax class matches between layer pairs.

    Argmax ties break toward the lowest class index, so the matrix is
    bit-reproducible.
    """
    preds = probs.data.argmax(axis=2)  # (N, L); np.argmax takes first maximum
    L = probs.layer_count
    m = np.eye(L)
    for i in range(L):
        for j in range(i + 1, L):
            m[i, j] = m[j, i] = float((preds[:, i] == preds[:, j]).mean())
    return LayerPairMatrix(m, "top1_agreement")


def _jsd_base2_rows(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Row-wise Jensen-Shannon divergence (base 2) between (N, C) arrays."""
    m = 0.5 * (p + q)

    def kl(a, b):
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.where(a > 0, a * np.log2(np.where(a > 0, a / b, 1.0)), 0.0)
        return t.sum(axis=-1)

    return 0.5 * kl(p, m) + 0.5 * kl(q, m)


def jsd_matrix(probs: ProbTensor) -> LayerPairMatrix:
    """Mean over samples of pairwise base-2 JSD between layer distributions."""
    L = probs.layer_count
    m = np.zeros((L, L))
    for i in range(L):
        for j in range(i + 1, L):
            d = _jsd_base2_rows(probs.data[:, i, :], probs.data[:, j, :]).mean()
            m[i, j] = m[j, i] = float(np.clip(d, 0.0, 1.0))
    return LayerPairMatrix(m, "jsd")


def entropy_profile(probs: ProbTensor) -> np.ndarray:
    """Per layer, the mean Shannon entropy (natural log) over samples."""
    p = probs.data
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, p * np.log(p), 0.0)
    return -(terms.sum(axis=2)).mean(axis=0)


def jaccard_topk(
    rankings: Sequence[LayerCombination], k: int
) -> np.ndarray:
    """Pairwise Jaccard distance among the top-k combinations of a ranking."""
    if not 1 <= k <= len(rankings):
        raise ConfigError(f"k must be in [1, {len(rankings)}], got {k}")
    top = [set(c) for c in rankings[:k]]
    d = np.zeros((k, k))
    for i in range(k):
        for j in range(i + 1, k):
            inter = len(top[i] & top[j])
            union = len(top[i] | top[j])
            d[i, j] = d[j, i] = 1.0 - inter / union
    return d


def entropy_fpr_scatter(
    scores_id: ScoreTensor,
    scores_ood_sets: Mapping[str, ScoreTensor],
    candidates: CandidateSet,
    spec: HistogramSpec,
) -> List[Tuple[LayerCombination, float, float]]:
    """Per candidate: (combo, histogram entropy on ID, average FPR@95).

    Plot-ready join of the selection criterion with the oracle metric.
    """
    if not scores_ood_sets:
        raise DomainError("scatter requires at least one OOD set")
    L = scores_id.layer_count
    for name, t in scores_ood_sets.items():
        if t.layer_count != L:
            raise DomainError(
                f"layer count mismatch for {name!r}: ID has {L}, OOD has {t.layer_count}"
            )
    rows = []
    for combo in sorted(candidates, key=lambda c: (len(c), c.layers)):
        fused_id = fuse(scores_id, combo)
        ent = histogram_entropy(fused_id, spec)
        fprs = [
            fpr_at_tpr(fused_id, fuse(t, combo))[0]
            for t in scores_ood_sets.values()
        ]
        rows.append((combo, ent, float(np.mean(fprs))))
    return rows
