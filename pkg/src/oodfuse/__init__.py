"""Training-free multi-layer score fusion and selection for OOD detection."""

from .errors import (
    ConfigError,
    DomainError,
    FormatError,
    OodFuseError,
    ValidationError,
)
from .metrics import EvalReport, auroc, evaluate, fpr_at_tpr
from .scoring import (
    ScoreRuleConfig,
    apply_rule,
    cosine_logits,
    energy_score,
    entropy_score,
    maxlogit_score,
    mcm_score,
    msp_score,
    variance_score,
)
from .selection import (
    CandidateSet,
    HistogramSpec,
    LayerCombination,
    SelectionResult,
    enumerate_candidates,
    fuse,
    histogram_entropy,
    oracle_search,
    select,
)
from .tensors import (
    EmbeddingSet,
    ProbTensor,
    RawLogits,
    ScoreTensor,
    TensorMeta,
    default_meta,
    slice_layers,
    validate,
)

__version__ = "0.1.0"
