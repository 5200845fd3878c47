"""Extraction pipeline: images -> per-layer joint-space embeddings ->
cosine logits against prompt embeddings -> tensor files.

Spatial feature maps are pooled and channel-projected with the shared
seeded projection (per-layer seed = projection_seed XOR layer index), then
l2-normalized; vector features are l2-normalized directly. The order
(pool, project, normalize) is recorded in the sidecar.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from oodfuse.io import write_report, write_tensor
from oodfuse.projection import FeatureMap, ProjectionSpec, harmonize
from oodfuse.scoring import ScoreRuleConfig, apply_rule, cosine_logits, softmax_probs
from oodfuse.tensors import EmbeddingSet, TensorMeta

from .adapters import ModelAdapter, resolve_adapter
from .errors import ConfigError
from .job import ExtractionJob


@dataclass(frozen=True)
class ExtractionResult:
    paths: Dict[str, Path]
    sample_ids: Tuple[str, ...]
    skipped: Tuple[str, ...]


def _load_image(path: Path) -> Optional[np.ndarray]:
    try:
        arr = np.load(path, allow_pickle=False)
    except Exception:
        return None
    if not isinstance(arr, np.ndarray) or arr.size == 0:
        return None
    return np.asarray(arr, dtype=np.float64)


def _select_layers(job: ExtractionJob, adapter: ModelAdapter) -> List[int]:
    if job.layers == "all":
        return list(range(adapter.layer_count))
    bad = [l for l in job.layers if l >= adapter.layer_count]
    if bad:
        raise ConfigError(
            f"layer indices {bad} out of range for {adapter.layer_count} layers"
        )
    return list(job.layers)


def embed_layers(adapter: ModelAdapter, image: np.ndarray,
                 layer_indices: List[int], projection_seed: int) -> np.ndarray:
    """One image -> (len(layer_indices), embed_dim), normalized."""
    feats = adapter.layer_features(image)
    rows = []
    for l in layer_indices:
        feat = np.asarray(feats[l], dtype=np.float64)
        if feat.ndim == 3:
            spec = ProjectionSpec(1, 1, adapter.embed_dim,
                                  seed=projection_seed, init="xavier")
            feat = harmonize(FeatureMap(feat), spec, layer_index=l).data.reshape(-1)
        elif feat.ndim != 1 or feat.shape[0] != adapter.embed_dim:
            raise ConfigError(
                f"adapter returned shape {feat.shape} for layer {l}; expected "
                f"({adapter.embed_dim},) or a (C, H, W) map"
            )
        rows.append(feat / np.linalg.norm(feat))
    return np.stack(rows)


def extract(job: ExtractionJob, out_dir, adapter: ModelAdapter = None) -> ExtractionResult:
    adapter = adapter if adapter is not None else resolve_adapter(job.model_id)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    layer_indices = _select_layers(job, adapter)
    text = adapter.encode_text(job.prompts())
    text = np.asarray(text, dtype=np.float64)
    text /= np.linalg.norm(text, axis=1, keepdims=True)

    source = Path(job.image_source)
    if not source.is_dir():
        raise ConfigError(f"image_source {source} is not a directory")
    paths = sorted(p for p in source.iterdir() if p.is_file())
    if not paths:
        raise ConfigError(f"image_source {source} holds no files")

    sample_ids, skipped, per_image = [], [], []
    for p in paths:
        image = _load_image(p)
        if image is None:
            skipped.append(p.name)
            continue
        sample_ids.append(p.name)
        per_image.append(embed_layers(adapter, image, layer_indices,
                                      job.projection_seed))
    if not per_image:
        raise ConfigError(f"no decodable images in {source}")

    meta = TensorMeta(
        model_id=adapter.model_id,
        dataset_id=source.name,
        layer_names=tuple(adapter.layer_names[l] for l in layer_indices),
        temperature=job.temperature,
        score_rule="raw",
    )
    embeddings = EmbeddingSet(np.stack(per_image), text, meta)
    logits = cosine_logits(embeddings)

    out_paths = {"logits": out_dir / "logits.lftn"}
    write_tensor(logits, out_paths["logits"])
    if job.output_kind == "probs":
        out_paths["probs"] = out_dir / "probs.lftn"
        write_tensor(softmax_probs(logits, job.temperature), out_paths["probs"])
    elif job.output_kind == "scores":
        out_paths["scores"] = out_dir / "scores.lftn"
        scores = apply_rule(
            logits, ScoreRuleConfig(rule="mcm", temperature=job.temperature)
        )
        write_tensor(scores, out_paths["scores"])

    sidecar = {
        "model_id": adapter.model_id,
        "image_source": str(source),
        "sample_ids": sample_ids,
        "skipped": skipped,
        "prompts": job.prompts(),
        "layer_indices": layer_indices,
        "layer_names": list(meta.layer_names),
        "projection_seed": job.projection_seed,
        "spatial_order": "pool, project, normalize",
    }
    out_paths["sidecar"] = out_dir / "sidecar.json"
    write_report(sidecar, out_paths["sidecar"], format="json")

    return ExtractionResult(
        paths=out_paths,
        sample_ids=tuple(sample_ids),
        skipped=tuple(skipped),
    )
