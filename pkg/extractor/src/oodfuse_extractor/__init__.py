"""Per-layer representation extraction into oodfuse tensor files."""

from .adapters import ModelAdapter, ToyAdapter, resolve_adapter
from .errors import RetriableError
from .extract import ExtractionResult, embed_layers, extract
from .job import ExtractionJob, load_job

__all__ = [
    "ExtractionJob",
    "ExtractionResult",
    "ModelAdapter",
    "RetriableError",
    "ToyAdapter",
    "embed_layers",
    "extract",
    "load_job",
    "resolve_adapter",
]

__version__ = "0.1.0"
