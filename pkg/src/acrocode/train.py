"""Reference trainer: per-code logistic models over hashed bag-of-words features.

The model is intentionally small so every quantity in the two-branch
objective is observable and checkable: each label code gets an independent
Bernoulli logistic head over a shared hashed feature space. The objective
averages cross entropy over an original-text branch and an expanded-text
branch and adds a weighted symmetric KL consistency term between the two
branches' probabilities.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.special import expit

from .corpus import CodeSet, Note, ScoreMatrix
from .expand import ExpandedNote
from .prompts import sample_synonyms
from .seeding import derive_seed

_WORD_RE = re.compile(r"[a-z0-9]+")

CHECKPOINT_MAGIC = "acrocode-model-v1"


@dataclass
class TrainConfig:
    consistency_weight: float = 0.05
    feature_dim: int = 65536
    learning_rate: float = 0.1
    epochs: int = 10
    batch_size: int = 16
    seed: int = 0
    prob_clamp: float = 1e-7
    use_synonym_prompt: bool = False
    synonym_count: int = 4
    token_dropout: float = 0.0

    def __post_init__(self) -> None:
        if self.consistency_weight < 0:
            raise ValueError("consistency_weight must be >= 0")
        if self.feature_dim < 1:
            raise ValueError("feature_dim must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not (0.0 < self.prob_clamp < 0.5):
            raise ValueError("prob_clamp must lie in (0, 0.5)")
        if not (0.0 <= self.token_dropout < 1.0):
            raise ValueError("token_dropout must lie in [0, 1)")

    def content_hash(self) -> str:
        payload = json.dumps(asdict(self), sort_keys=True)
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


@dataclass(eq=False)
class ModelParams:
    """Weight matrix (codes x features) and per-code biases."""

    weights: np.ndarray
    biases: np.ndarray

    def __post_init__(self) -> None:
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.biases = np.asarray(self.biases, dtype=np.float64)
        if self.weights.ndim != 2 or self.biases.shape != (self.weights.shape[0],):
            raise ValueError("weights must be 2-D with one bias per row")

    @classmethod
    def zeros(cls, n_codes: int, feature_dim: int) -> "ModelParams":
        return cls(
            weights=np.zeros((n_codes, feature_dim), dtype=np.float64),
            biases=np.zeros(n_codes, dtype=np.float64),
        )

    def copy(self) -> "ModelParams":
        return ModelParams(weights=self.weights.copy(), biases=self.biases.copy())


@dataclass(eq=False, frozen=True)
class SparseVector:
    """Hashed token counts: strictly increasing indices with positive values."""

    indices: np.ndarray
    values: np.ndarray

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SparseVector):
            return NotImplemented
        return np.array_equal(self.indices, other.indices) and np.array_equal(
            self.values, other.values
        )


@dataclass(frozen=True)
class TrainResult:
    params: ModelParams
    loss_trace: tuple[float, ...]


def tokenize(text: str) -> list[str]:
    """Lowercased alphanumeric runs; everything else is a delimiter."""
    return _WORD_RE.findall(text.lower())


def fnv1a_32(token: str) -> int:
    """32-bit FNV-1a hash of the token's UTF-8 bytes.

    Chosen because it is trivially portable: the same token maps to the
    same bucket on every platform and interpreter.
    """
    value = 2166136261
    for byte in token.encode("utf-8"):
        value ^= byte
        value = (value * 16777619) & 0xFFFFFFFF
    return value


def featurize_tokens(tokens: Sequence[str], feature_dim: int) -> SparseVector:
    if feature_dim < 1:
        raise ValueError("feature_dim must be >= 1")
    if not tokens:
        return SparseVector(
            indices=np.empty(0, dtype=np.int64), values=np.empty(0, dtype=np.float64)
        )
    raw = np.fromiter(
        (fnv1a_32(t) % feature_dim for t in tokens), dtype=np.int64, count=len(tokens)
    )
    indices, counts = np.unique(raw, return_counts=True)
    return SparseVector(indices=indices, values=counts.astype(np.float64))


def featurize(text: str, feature_dim: int) -> SparseVector:
    """Hashed token-count features of a text."""
    return featurize_tokens(tokenize(text), feature_dim)


def forward(params: ModelParams, features: SparseVector, prob_clamp: float) -> np.ndarray:
    """Per-code probabilities for one feature vector, clamped away from 0 and 1.

    Raises if any parameter the example touches is non-finite. Feature
    values are positive counts, so a NaN or infinite touched weight always
    surfaces as a non-finite logit.
    """
    logits = _logits(params, features)
    if not np.isfinite(logits).all():
        raise ValueError("non-finite model parameters")
    return np.clip(expit(logits), prob_clamp, 1.0 - prob_clamp)


def cross_entropy(probs: np.ndarray, labels: np.ndarray) -> float:
    """Bernoulli cross entropy averaged over codes."""
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    terms = labels * np.log(probs) + (1.0 - labels) * np.log1p(-probs)
    return float(-terms.mean())


def consistency_loss(p: np.ndarray, q: np.ndarray) -> float:
    """Mean over codes of the symmetrized Bernoulli KL divergence, halved.

    Per code this equals (KL(p||q) + KL(q||p)) / 2, computed through the
    identity KL(p||q) + KL(q||p) = (p - q) * (logit(p) - logit(q)), which is
    symmetric and manifestly non-negative.
    """
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    gap = (p - q) * (_logit(p) - _logit(q))
    return float(0.5 * gap.mean())


def total_loss(
    params: ModelParams,
    features_original: SparseVector,
    features_expanded: SparseVector,
    labels: np.ndarray,
    config: TrainConfig,
) -> float:
    """Two-branch objective for one example.

    The mean of the two branch cross entropies plus ``consistency_weight``
    times the consistency term between the branch probabilities.
    """
    p = forward(params, features_original, config.prob_clamp)
    q = forward(params, features_expanded, config.prob_clamp)
    ce = 0.5 * (cross_entropy(p, labels) + cross_entropy(q, labels))
    return ce + config.consistency_weight * consistency_loss(p, q)


def gradient(
    params: ModelParams,
    batch: Sequence[tuple[SparseVector, SparseVector, np.ndarray]],
    config: TrainConfig,
) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form gradient of the mean per-example total loss over a batch.

    Returns (weight gradient, bias gradient) with the shapes of the
    parameters. Probabilities pinned at the clamp boundary propagate a zero
    derivative, matching what finite differences of the clamped loss see.
    """
    if not batch:
        raise ValueError("empty batch")
    n_codes = params.weights.shape[0]
    grad_w = np.zeros_like(params.weights)
    grad_b = np.zeros_like(params.biases)
    eps = config.prob_clamp
    cw = config.consistency_weight
    for features_orig, features_exp, labels in batch:
        y = np.asarray(labels, dtype=np.float64)
        z1 = _logits(params, features_orig)
        z2 = _logits(params, features_exp)
        raw_p = expit(z1)
        raw_q = expit(z2)
        p = np.clip(raw_p, eps, 1.0 - eps)
        q = np.clip(raw_q, eps, 1.0 - eps)
        # dLoss/dp and dLoss/dq, both including the 1/N mean over codes.
        dce_dp = -(y / p - (1.0 - y) / (1.0 - p)) / n_codes
        dce_dq = -(y / q - (1.0 - y) / (1.0 - q)) / n_codes
        logit_gap = _logit(p) - _logit(q)
        dcons_dp = 0.5 * (logit_gap + (p - q) / (p * (1.0 - p))) / n_codes
        dcons_dq = 0.5 * (-logit_gap - (p - q) / (q * (1.0 - q))) / n_codes
        dl_dp = 0.5 * dce_dp + cw * dcons_dp
        dl_dq = 0.5 * dce_dq + cw * dcons_dq
        # Through the clamp: zero slope wherever the raw probability was cut.
        active_p = (raw_p > eps) & (raw_p < 1.0 - eps)
        active_q = (raw_q > eps) & (raw_q < 1.0 - eps)
        dl_dz1 = dl_dp * raw_p * (1.0 - raw_p) * active_p
        dl_dz2 = dl_dq * raw_q * (1.0 - raw_q) * active_q
        if features_orig.indices.size:
            grad_w[:, features_orig.indices] += np.outer(dl_dz1, features_orig.values)
        if features_exp.indices.size:
            grad_w[:, features_exp.indices] += np.outer(dl_dz2, features_exp.values)
        grad_b += dl_dz1 + dl_dz2
    grad_w /= len(batch)
    grad_b /= len(batch)
    return grad_w, grad_b


def train(
    pairs: Sequence[tuple[Note, ExpandedNote]],
    code_set: CodeSet,
    config: TrainConfig,
) -> TrainResult:
    """Mini-batch gradient descent over (original, expanded) note pairs.

    The run is a pure function of its inputs: example order, and dropout
    when enabled, are derived from the config seed, batches are visited in a
    fixed order, and gradients accumulate in example order, so repeated runs
    produce bitwise-identical parameter trajectories.
    """
    if not pairs:
        raise ValueError("no training pairs")
    for note, expanded in pairs:
        if note.id != expanded.note_id:
            raise ValueError(f"note {note.id!r} paired with expansion of {expanded.note_id!r}")
    n_codes = len(code_set)
    labels_matrix = np.zeros((len(pairs), n_codes), dtype=np.float64)
    for i, (note, _) in enumerate(pairs):
        for code in note.labels:
            labels_matrix[i, code_set.index_of(code)] = 1.0

    prefix_tokens: list[str] = []
    if config.use_synonym_prompt:
        displays = sample_synonyms(
            code_set, config.synonym_count, derive_seed(config.seed, "synonym-prompt")
        )
        prefix_tokens = tokenize(" ".join(displays[c] for c in code_set.code_ids))

    tokens_original = [tokenize(note.text) for note, _ in pairs]
    tokens_expanded = [
        prefix_tokens + tokenize(expanded.expanded_text) for _, expanded in pairs
    ]
    static_features: list[tuple[SparseVector, SparseVector]] | None = None
    if config.token_dropout == 0.0:
        static_features = [
            (
                featurize_tokens(tokens_original[i], config.feature_dim),
                featurize_tokens(tokens_expanded[i], config.feature_dim),
            )
            for i in range(len(pairs))
        ]

    params = ModelParams.zeros(n_codes, config.feature_dim)
    trace: list[float] = []
    n = len(pairs)
    for epoch in range(config.epochs):
        order = np.random.default_rng(
            derive_seed(config.seed, "epoch-order", epoch)
        ).permutation(n)
        epoch_loss = 0.0
        for batch_start in range(0, n, config.batch_size):
            batch_ids = order[batch_start : batch_start + config.batch_size]
            batch = []
            for i in batch_ids:
                if static_features is not None:
                    f1, f2 = static_features[i]
                else:
                    f1 = _dropout_features(
                        tokens_original[i], config, epoch, int(i), branch=0
                    )
                    f2 = _dropout_features(
                        tokens_expanded[i], config, epoch, int(i), branch=1
                    )
                batch.append((f1, f2, labels_matrix[i]))
            batch_loss = sum(total_loss(params, f1, f2, y, config) for f1, f2, y in batch)
            if not np.isfinite(batch_loss):
                raise RuntimeError(
                    f"non-finite loss at epoch {epoch}, batch starting at {batch_start}"
                )
            epoch_loss += batch_loss
            grad_w, grad_b = gradient(params, batch, config)
            params.weights -= config.learning_rate * grad_w
            params.biases -= config.learning_rate * grad_b
        trace.append(epoch_loss / n)
    return TrainResult(params=params, loss_trace=tuple(trace))


def score_texts(
    params: ModelParams, texts: Sequence[str], feature_dim: int, prob_clamp: float = 1e-7
) -> np.ndarray:
    """Per-code probabilities for each text, stacked into one array."""
    out = np.empty((len(texts), params.weights.shape[0]), dtype=np.float64)
    for i, text in enumerate(texts):
        out[i] = forward(params, featurize(text, feature_dim), prob_clamp)
    return out


def score_matrix(
    params: ModelParams,
    notes: Sequence[Note],
    code_set: CodeSet,
    feature_dim: int,
    prob_clamp: float = 1e-7,
) -> ScoreMatrix:
    scores = score_texts(params, [n.text for n in notes], feature_dim, prob_clamp)
    return ScoreMatrix(
        note_ids=[n.id for n in notes], code_ids=list(code_set.code_ids), scores=scores
    )


def save_checkpoint(
    params: ModelParams, code_ids: Sequence[str], config: TrainConfig, path: str | Path
) -> None:
    """Write a checkpoint: one JSON header line, then raw little-endian floats."""
    if params.weights.shape[0] != len(code_ids):
        raise ValueError("one weight row per code id required")
    header = {
        "magic": CHECKPOINT_MAGIC,
        "code_ids": list(code_ids),
        "config_hash": config.content_hash(),
        "feature_dim": int(params.weights.shape[1]),
        "n_codes": int(params.weights.shape[0]),
    }
    with open(path, "wb") as fh:
        fh.write((json.dumps(header, sort_keys=True) + "\n").encode("utf-8"))
        fh.write(params.weights.astype("<f8").tobytes())
        fh.write(params.biases.astype("<f8").tobytes())


def load_checkpoint(path: str | Path) -> tuple[ModelParams, list[str], str]:
    """Read a checkpoint; returns (params, code ids, config hash)."""
    with open(path, "rb") as fh:
        header_line = fh.readline()
        try:
            header = json.loads(header_line.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ValueError(f"{path}: malformed checkpoint header") from exc
        if header.get("magic") != CHECKPOINT_MAGIC:
            raise ValueError(f"{path}: not a model checkpoint")
        n_codes = int(header["n_codes"])
        feature_dim = int(header["feature_dim"])
        code_ids = list(header["code_ids"])
        if len(code_ids) != n_codes:
            raise ValueError(f"{path}: header code ids do not match n_codes")
        body = fh.read()
    expected = (n_codes * feature_dim + n_codes) * 8
    if len(body) != expected:
        raise ValueError(f"{path}: expected {expected} parameter bytes, found {len(body)}")
    flat = np.frombuffer(body, dtype="<f8")
    weights = flat[: n_codes * feature_dim].reshape(n_codes, feature_dim).astype(np.float64)
    biases = flat[n_codes * feature_dim :].astype(np.float64)
    return ModelParams(weights=weights, biases=biases), code_ids, str(header["config_hash"])


def _logits(params: ModelParams, features: SparseVector) -> np.ndarray:
    if features.indices.size == 0:
        return params.biases.copy()
    return params.weights[:, features.indices] @ features.values + params.biases


def _logit(p: np.ndarray) -> np.ndarray:
    return np.log(p) - np.log1p(-p)


def _dropout_features(
    tokens: list[str], config: TrainConfig, epoch: int, example: int, branch: int
) -> SparseVector:
    rng = np.random.default_rng(
        derive_seed(config.seed, "dropout", epoch, example, branch)
    )
    keep = rng.random(len(tokens)) >= config.token_dropout
    return featurize_tokens([t for t, k in zip(tokens, keep) if k], config.feature_dim)
