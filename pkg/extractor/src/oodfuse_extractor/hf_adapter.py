"""CLIP-style adapter backed by huggingface transformers.

Imported lazily; environments without torch/transformers never touch this
module. Representations are residual-stream block outputs (CLS token),
layer-normalized like the final layer and passed through the pretrained
visual projection, matching the published layer naming and indexing.
"""

from __future__ import annotations

from typing import List, Sequence

import numpy as np
import torch
from transformers import CLIPModel, CLIPProcessor

from .errors import RetriableError


class HFAdapter:
    def __init__(self, name: str):
        try:
            self.model = CLIPModel.from_pretrained(name)
            self.processor = CLIPProcessor.from_pretrained(name)
        except Exception as exc:  # weights missing, cache cold, network down
            raise RetriableError(f"cannot load model {name!r}: {exc}") from None
        self.model.eval()
        self.model_id = f"hf:{name}"
        n_blocks = self.model.config.vision_config.num_hidden_layers
        self.layer_names = tuple(
            f"vision_model.encoder.layers.{i}" for i in range(n_blocks)
        )
        self.embed_dim = int(self.model.config.projection_dim)

    @property
    def layer_count(self) -> int:
        return len(self.layer_names)

    @torch.no_grad()
    def encode_text(self, prompts: Sequence[str]) -> np.ndarray:
        inputs = self.processor(text=list(prompts), return_tensors="pt", padding=True)
        feats = self.model.get_text_features(**inputs)
        return feats.double().cpu().numpy()

    @torch.no_grad()
    def layer_features(self, image: np.ndarray) -> List[np.ndarray]:
        inputs = self.processor(images=image, return_tensors="pt")
        out = self.model.vision_model(
            pixel_values=inputs["pixel_values"], output_hidden_states=True
        )
        post_ln = self.model.vision_model.post_layernorm
        proj = self.model.visual_projection
        feats = []
        # hidden_states[0] is the embedding layer; block outputs follow
        for hidden in out.hidden_states[1:]:
            cls = post_ln(hidden[:, 0, :])
            feats.append(proj(cls)[0].double().cpu().numpy())
        return feats
