"""Detection metrics: FPR at fixed TPR and exact AUROC.

ID is the positive class throughout; all score vectors are oriented
larger = more in-distribution.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Mapping, Tuple

import numpy as np
from scipy.stats import rankdata

from .errors import DomainError
from .selection import LayerCombination, fuse
from .tensors import ScoreTensor


@dataclass(frozen=True)
class DatasetMetrics:
    fpr95: float
    auroc: float
    n_id: int
    n_ood: int


@dataclass(frozen=True)
class EvalReport:
    per_dataset: Dict[str, DatasetMetrics]
    average_fpr95: float
    average_auroc: float
    combo: LayerCombination
    score_rule: str
    threshold_at_tpr95: float
    positive_class: str = "id"


def _as_vector(scores, name: str) -> np.ndarray:
    v = np.asarray(scores, dtype=np.float64).ravel()
    if v.size == 0:
        raise DomainError(f"{name} score vector is empty")
    if not np.isfinite(v).all():
        raise DomainError(f"{name} score vector contains non-finite values")
    return v


def fpr_at_tpr(id_scores, ood_scores, tpr_target: float = 0.95) -> Tuple[float, float]:
    """False positive rate at the threshold achieving the target ID TPR.

    The threshold is the largest value t with fraction(id >= t) >= target,
    so the achieved TPR is always >= target (conservative tie handling).
    Returns (fpr, threshold).
    """
    ids = _as_vector(id_scores, "id")
    oods = _as_vector(ood_scores, "ood")
    if not 0 < tpr_target <= 1:
        raise DomainError(f"tpr_target must be in (0, 1], got {tpr_target}")

    # fraction(id >= t) only changes at observed values; scan them descending
    uniq = np.unique(ids)[::-1]
    counts_ge = ids.size - np.searchsorted(np.sort(ids), uniq, side="left")
    ok = counts_ge / ids.size >= tpr_target
    threshold = float(uniq[ok][0])
    fpr = float((oods >= threshold).mean())
    return fpr, threshold


def auroc(id_scores, ood_scores) -> float:
    """Exact AUROC via the Mann-Whitney statistic (ties half-counted)."""
    ids = _as_vector(id_scores, "id")
    oods = _as_vector(ood_scores, "ood")
    combined = np.concatenate([ids, oods])
    ranks = rankdata(combined)  # average ranks handle ties
    u = ranks[: ids.size].sum() - ids.size * (ids.size + 1) / 2.0
    return float(u / (ids.size * oods.size))


def evaluate(
    scores_id: ScoreTensor,
    scores_ood_sets: Mapping[str, ScoreTensor],
    combo: LayerCombination,
) -> EvalReport:
    """Fuse scores over one combination and report both metrics per OOD set
    plus their unweighted averages."""
    if not scores_ood_sets:
        raise DomainError("evaluate requires at least one OOD set")
    L = scores_id.layer_count
    for name, t in scores_ood_sets.items():
        if t.layer_count != L:
            raise DomainError(
                f"layer count mismatch for {name!r}: ID has {L}, OOD has {t.layer_count}"
            )

    fused_id = fuse(scores_id, combo)
    _, threshold = fpr_at_tpr(fused_id, fused_id)  # threshold depends on ID only

    per_dataset: Dict[str, DatasetMetrics] = {}
    for name, t in scores_ood_sets.items():
        fused_ood = fuse(t, combo)
        fpr, _ = fpr_at_tpr(fused_id, fused_ood)
        per_dataset[name] = DatasetMetrics(
            fpr95=fpr,
            auroc=auroc(fused_id, fused_ood),
            n_id=fused_id.size,
            n_ood=fused_ood.size,
        )

    return EvalReport(
        per_dataset=per_dataset,
        average_fpr95=float(np.mean([m.fpr95 for m in per_dataset.values()])),
        average_auroc=float(np.mean([m.auroc for m in per_dataset.values()])),
        combo=combo,
        score_rule=scores_id.meta.score_rule,
        threshold_at_tpr95=threshold,
    )
