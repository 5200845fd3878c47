"""Desk-scale synthetic tensor generators.

Three documented families:

  complementary  ID logits carry a planted layer subset whose per-layer
                 confidences are permutations of a fixed margin triple, so
                 they anticorrelate across the subset and their average is
                 the same constant for every sample at any temperature.
                 OOD logits stay low, with occasional spurious final-layer
                 confidence spikes. Fusing the planted subset separates
                 ID/OOD cleanly while the final layer alone does not.

  redundant      all layers share one latent confidence per sample plus
                 small jitter; fusion has nothing extra to exploit.

  flat           near-uniform class probabilities at every layer (the
                 uniformly-high-entropy regime some backbones exhibit).

A fourth generator, `make_graded`, produces score tensors whose layers
degrade gradually in noise level; it drives the entropy-vs-FPR
correlation diagnostics.
"""

from __future__ import annotations

from typing import Dict, List, Tuple

import numpy as np

from .errors import ConfigError
from .tensors import ProbTensor, RawLogits, ScoreTensor, default_meta

# margin triple assigned (permuted) to the planted layers of ID samples;
# values are small enough that temperatures down to 0.25 do not saturate
PLANTED_MARGINS = (0.4, 0.8, 1.2)
OUTLIER_FRACTION = 0.02
SPIKE_FRACTION = 0.25


def _margins_to_logits(margins: np.ndarray, n_classes: int, rng) -> np.ndarray:
    """One-spike logit rows: the (random) argmax class gets the margin, all
    other classes sit at zero."""
    n, L = margins.shape
    logits = np.zeros((n, L, n_classes))
    top = rng.integers(0, n_classes, size=(n, L))
    ii, ll = np.meshgrid(np.arange(n), np.arange(L), indexing="ij")
    logits[ii, ll, top] = margins
    return logits


def make_complementary(
    seed: int,
    n_id: int = 1000,
    n_ood: int = 1000,
    n_ood_sets: int = 3,
    layer_count: int = 12,
    n_classes: int = 10,
    planted: Tuple[int, ...] = (2, 5, 11),
) -> Tuple[RawLogits, List[RawLogits], Dict]:
    if max(planted) != layer_count - 1:
        raise ConfigError("planted subset must contain the final layer")
    rng = np.random.default_rng(seed)
    final = layer_count - 1

    # ID margins
    margins = rng.uniform(0.1, 1.0, size=(n_id, layer_count))
    for n in range(n_id):
        perm = rng.permutation(len(planted))
        for slot, layer in enumerate(planted):
            margins[n, layer] = PLANTED_MARGINS[perm[slot]]
    n_outliers = int(round(OUTLIER_FRACTION * n_id))
    margins[:n_outliers, :] = 0.0  # hard ID samples: uniform logits everywhere
    meta = default_meta(layer_count, dataset_id="fixture-complementary-id")
    id_logits = RawLogits(_margins_to_logits(margins, n_classes, rng), meta)

    # OOD margins: low everywhere, spurious final-layer spikes on a fraction
    ood_sets = []
    for s in range(n_ood_sets):
        m = rng.uniform(0.05, 0.35, size=(n_ood, layer_count))
        spiked = rng.uniform(size=n_ood) < SPIKE_FRACTION
        m[spiked, final] = rng.uniform(0.45, 0.6, size=int(spiked.sum()))
        ood_meta = default_meta(
            layer_count, dataset_id=f"fixture-complementary-ood-{s}"
        )
        ood_sets.append(RawLogits(_margins_to_logits(m, n_classes, rng), ood_meta))

    sidecar = {
        "family": "complementary",
        "seed": seed,
        "planted_subset": list(planted),
        "planted_margins": list(PLANTED_MARGINS),
        "outlier_fraction": OUTLIER_FRACTION,
        "spike_fraction": SPIKE_FRACTION,
        "n_id": n_id,
        "n_ood": n_ood,
        "n_ood_sets": n_ood_sets,
        "layer_count": layer_count,
        "n_classes": n_classes,
    }
    return id_logits, ood_sets, sidecar


def make_redundant(
    seed: int,
    n_id: int = 1000,
    n_ood: int = 1000,
    n_ood_sets: int = 3,
    layer_count: int = 12,
    n_classes: int = 10,
) -> Tuple[RawLogits, List[RawLogits], Dict]:
    rng = np.random.default_rng(seed)

    latent = rng.uniform(0.8, 1.6, size=n_id)
    margins = latent[:, None] + rng.normal(0, 0.05, size=(n_id, layer_count))
    margins = np.clip(margins, 0.0, None)
    meta = default_meta(layer_count, dataset_id="fixture-redundant-id")
    id_logits = RawLogits(_margins_to_logits(margins, n_classes, rng), meta)

    ood_sets = []
    for s in range(n_ood_sets):
        latent = rng.uniform(0.1, 0.7, size=n_ood)
        m = latent[:, None] + rng.normal(0, 0.05, size=(n_ood, layer_count))
        m = np.clip(m, 0.0, None)
        ood_meta = default_meta(layer_count, dataset_id=f"fixture-redundant-ood-{s}")
        ood_sets.append(RawLogits(_margins_to_logits(m, n_classes, rng), ood_meta))

    sidecar = {
        "family": "redundant",
        "seed": seed,
        "n_id": n_id,
        "n_ood": n_ood,
        "n_ood_sets": n_ood_sets,
        "layer_count": layer_count,
        "n_classes": n_classes,
    }
    return id_logits, ood_sets, sidecar


def make_flat(
    seed: int,
    n_samples: int = 1000,
    layer_count: int = 12,
    n_classes: int = 100,
) -> Tuple[ProbTensor, Dict]:
    rng = np.random.default_rng(seed)
    alpha = np.full(n_classes, 1000.0)
    probs = rng.dirichlet(alpha, size=(n_samples, layer_count))
    meta = default_meta(layer_count, dataset_id="fixture-flat")
    sidecar = {
        "family": "flat",
        "seed": seed,
        "n_samples": n_samples,
        "layer_count": layer_count,
        "n_classes": n_classes,
        "dirichlet_alpha": 1000.0,
    }
    return ProbTensor(probs, meta), sidecar


def make_graded(
    seed: int,
    n_id: int = 800,
    n_ood: int = 800,
    n_ood_sets: int = 2,
    layer_count: int = 11,
) -> Tuple[ScoreTensor, List[ScoreTensor], Dict]:
    """Score tensors whose layers carry progressively noisier copies of one
    latent signal. Combinations dominated by noisy layers have both higher
    ID histogram entropy and higher FPR, giving a positive entropy-FPR
    association across candidates."""
    rng = np.random.default_rng(seed)
    noise = 0.05 + 0.45 * np.arange(layer_count) / (layer_count - 1)

    z = np.where(rng.uniform(size=n_id) < 0.98, 1.0, 0.0)
    base = 0.5 + 0.4 * z
    scores_id = base[:, None] + noise[None, :] * rng.uniform(
        -1, 1, size=(n_id, layer_count)
    )
    meta = default_meta(layer_count, dataset_id="fixture-graded-id")
    id_tensor = ScoreTensor(scores_id, meta)

    ood_sets = []
    for s in range(n_ood_sets):
        scores = 0.35 + noise[None, :] * rng.uniform(-1, 1, size=(n_ood, layer_count))
        ood_meta = default_meta(layer_count, dataset_id=f"fixture-graded-ood-{s}")
        ood_sets.append(ScoreTensor(scores, ood_meta))

    sidecar = {
        "family": "graded",
        "seed": seed,
        "n_id": n_id,
        "n_ood": n_ood,
        "n_ood_sets": n_ood_sets,
        "layer_count": layer_count,
        "layer_noise": noise.tolist(),
    }
    return id_tensor, ood_sets, sidecar
