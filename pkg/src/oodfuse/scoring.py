"""Per-layer confidence scores from embeddings, logits, or probabilities.

Every rule follows one orientation convention: larger score = more
in-distribution. Entropy is therefore negated relative to the usual
definition, so metrics and selection share a single threshold direction.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.special import logsumexp

from .errors import ConfigError, DomainError
from .tensors import EmbeddingSet, ProbTensor, RawLogits, ScoreTensor


@dataclass(frozen=True)
class ScoreRuleConfig:
    rule: str
    temperature: float = 1.0

    def __post_init__(self):
        if self.temperature <= 0:
            raise ConfigError(f"temperature must be > 0, got {self.temperature}")
        if self.rule not in ("mcm", "msp", "maxlogit", "energy", "entropy", "variance"):
            raise ConfigError(f"unknown scoring rule {self.rule!r}")


def cosine_logits(emb: EmbeddingSet) -> RawLogits:
    """Cosine similarity between each per-layer image embedding and every
    class-text embedding; output shape (N, L, K), values in [-1, 1]."""
    img_norm = np.linalg.norm(emb.image, axis=2)
    if (img_norm == 0).any():
        n, l = (int(i) for i in np.argwhere(img_norm == 0)[0])
        raise DomainError(f"zero-norm image embedding at (n={n}, l={l})")
    txt_norm = np.linalg.norm(emb.text, axis=1)
    if (txt_norm == 0).any():
        k = int(np.argwhere(txt_norm == 0)[0][0])
        raise DomainError(f"zero-norm text embedding at k={k}")

    img = emb.image / img_norm[:, :, None]
    txt = emb.text / txt_norm[:, None]
    logits = np.einsum("nld,kd->nlk", img, txt)
    meta = replace(emb.meta, score_rule="raw")
    return RawLogits(np.clip(logits, -1.0, 1.0), meta)


def _softmax(logits: np.ndarray, tau: float) -> np.ndarray:
    # max-subtraction keeps tau ~ 0.01 regimes from overflowing
    z = logits / tau
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_probs(logits: RawLogits, tau: float) -> ProbTensor:
    """Temperature-scaled softmax over the class axis."""
    if tau <= 0:
        raise ConfigError(f"temperature must be > 0, got {tau}")
    probs = _softmax(logits.data, tau)
    meta = replace(logits.meta, temperature=float(tau))
    return ProbTensor(probs, meta)


def mcm_score(logits: RawLogits, tau: float) -> ScoreTensor:
    """Maximum concept matching: max over classes of the temperature-scaled
    softmax of the similarity logits. Output in (1/K, 1]."""
    if tau <= 0:
        raise ConfigError(f"temperature must be > 0, got {tau}")
    if logits.class_count < 2:
        raise DomainError(f"mcm requires K >= 2, got K={logits.class_count}")
    probs = _softmax(logits.data, tau)
    meta = replace(logits.meta, temperature=float(tau), score_rule="mcm")
    return ScoreTensor(probs.max(axis=2), meta)


def msp_score(probs: ProbTensor) -> ScoreTensor:
    """Maximum softmax probability per layer."""
    meta = replace(probs.meta, score_rule="msp")
    return ScoreTensor(probs.data.max(axis=2), meta)


def maxlogit_score(logits: RawLogits) -> ScoreTensor:
    meta = replace(logits.meta, score_rule="maxlogit")
    return ScoreTensor(logits.data.max(axis=2), meta)


def energy_score(logits: RawLogits, tau: float = 1.0) -> ScoreTensor:
    """Negative log-sum-exp of temperature-scaled logits."""
    if tau <= 0:
        raise ConfigError(f"temperature must be > 0, got {tau}")
    s = -logsumexp(logits.data / tau, axis=2)
    meta = replace(logits.meta, temperature=float(tau), score_rule="energy")
    return ScoreTensor(s, meta)


def entropy_score(probs: ProbTensor) -> ScoreTensor:
    """Negated Shannon entropy (natural log) of each class distribution.

    Range [-log C, 0]; negation keeps the larger-is-ID orientation.
    """
    p = probs.data
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, p * np.log(p), 0.0)
    meta = replace(probs.meta, score_rule="entropy")
    return ScoreTensor(terms.sum(axis=2), meta)


def variance_score(probs: ProbTensor) -> ScoreTensor:
    """Probability-weighted spread around the uniform level 1/C."""
    p = probs.data
    p_bar = 1.0 / probs.class_count
    s = (p * (p - p_bar) ** 2).sum(axis=2)
    meta = replace(probs.meta, score_rule="variance")
    return ScoreTensor(s, meta)


def apply_rule(tensor, config: ScoreRuleConfig) -> ScoreTensor:
    """Dispatch a scoring rule over logits or probabilities.

    Probability-based rules accept RawLogits by first applying the
    temperature-scaled softmax.
    """
    rule, tau = config.rule, config.temperature
    if rule == "mcm":
        if not isinstance(tensor, RawLogits):
            raise ConfigError("mcm requires raw logits")
        return mcm_score(tensor, tau)
    if rule == "maxlogit":
        if not isinstance(tensor, RawLogits):
            raise ConfigError("maxlogit requires raw logits")
        return maxlogit_score(tensor)
    if rule == "energy":
        if not isinstance(tensor, RawLogits):
            raise ConfigError("energy requires raw logits")
        return energy_score(tensor, tau)
    if isinstance(tensor, RawLogits):
        tensor = softmax_probs(tensor, tau)
    if not isinstance(tensor, ProbTensor):
        raise ConfigError(f"rule {rule!r} requires probabilities or logits")
    if rule == "msp":
        return msp_score(tensor)
    if rule == "entropy":
        return entropy_score(tensor)
    if rule == "variance":
        return variance_score(tensor)
    raise ConfigError(f"unknown scoring rule {rule!r}")
