"""Extraction job description, loaded from a JSON file."""

from __future__ import annotations

import json
import string
from dataclasses import dataclass
from pathlib import Path
from typing import Tuple, Union

from .errors import ConfigError, FormatError

OUTPUT_KINDS = ("logits", "probs", "scores")


def _placeholder_count(template: str) -> int:
    try:
        fields = [f for _, f, _, _ in string.Formatter().parse(template) if f is not None]
    except ValueError as exc:
        raise ConfigError(f"bad prompt_template: {exc}") from None
    return len(fields)


@dataclass(frozen=True)
class ExtractionJob:
    model_id: str
    class_labels: Tuple[str, ...]
    image_source: str
    projection_seed: int
    prompt_template: str = "a photo of a {label}"
    layers: Union[str, Tuple[int, ...]] = "all"
    temperature: float = 1.0
    output_kind: str = "logits"

    def __post_init__(self):
        object.__setattr__(self, "class_labels", tuple(self.class_labels))
        if not self.class_labels:
            raise ConfigError("class_labels must be non-empty")
        if _placeholder_count(self.prompt_template) != 1:
            raise ConfigError(
                "prompt_template must contain exactly one placeholder, got "
                f"{self.prompt_template!r}"
            )
        if self.layers != "all":
            layers = tuple(int(l) for l in self.layers)
            if any(l < 0 for l in layers):
                raise ConfigError(f"negative layer index in {layers}")
            object.__setattr__(self, "layers", tuple(sorted(set(layers))))
        if self.temperature <= 0:
            raise ConfigError(f"temperature must be > 0, got {self.temperature}")
        if self.output_kind not in OUTPUT_KINDS:
            raise ConfigError(
                f"output_kind must be one of {OUTPUT_KINDS}, got {self.output_kind!r}"
            )
        seed = int(self.projection_seed)
        if not 0 <= seed < 2 ** 64:
            raise ConfigError(f"projection_seed must fit in 64 bits, got {seed}")
        object.__setattr__(self, "projection_seed", seed)

    def prompts(self) -> list:
        field_name = next(
            f for _, f, _, _ in string.Formatter().parse(self.prompt_template)
            if f is not None
        )
        return [
            self.prompt_template.format(**{field_name: label})
            for label in self.class_labels
        ]


_REQUIRED = ("model_id", "class_labels", "image_source", "projection_seed")


def load_job(path) -> ExtractionJob:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise FormatError(f"cannot read job file {path}: {exc}") from None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"job file {path} is not valid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise FormatError(f"job file {path} must hold a JSON object")
    missing = [k for k in _REQUIRED if k not in raw]
    if missing:
        raise ConfigError(f"job file missing required fields: {', '.join(missing)}")
    known = set(ExtractionJob.__dataclass_fields__)
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"job file has unknown fields: {', '.join(unknown)}")
    if isinstance(raw.get("layers"), list):
        raw["layers"] = tuple(raw["layers"])
    return ExtractionJob(**raw)
