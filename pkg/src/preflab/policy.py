"""Exact tabular autoregressive policy with order-k context.

The policy is a dense logits table of shape (V**k, V): one row per context
k-tuple, one column per next token. Sequences are scored left to right with
BOS padding on the left, so every position (including the first) has a full
k-token context, and the terminal EOS of a response is a scored token like any
other. Everything is float64 and the log-likelihood gradient is available in
closed form, which is what makes finite-difference audits of every training
objective cheap and exact.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .corpus import BOS, Sequence
from .errors import ConfigError, DataFormatError

_EMPTY_PROMPT = Sequence((), "prompt")

# GradientTensor: ndarray with the same (V**k, V) shape as PolicyParams.logits.
GradientTensor = np.ndarray


@dataclass(eq=False)
class PolicyParams:
    vocab_size: int
    k: int
    logits: np.ndarray
    init_meta: dict = field(default_factory=lambda: {"kind": "zeros"})

    def __post_init__(self):
        if self.vocab_size < 4:
            raise ConfigError(f"vocab size must be >= 4, got {self.vocab_size}")
        if self.k < 1:
            raise ConfigError(f"context order must be >= 1, got {self.k}")
        expected = (self.vocab_size**self.k, self.vocab_size)
        if self.logits.shape != expected:
            raise ConfigError(
                f"logits shape {self.logits.shape} does not match {expected}"
            )

    @property
    def n_contexts(self) -> int:
        return self.vocab_size**self.k


def zeros_policy(vocab_size: int, k: int = 2) -> PolicyParams:
    logits = np.zeros((vocab_size**k, vocab_size), dtype=np.float64)
    return PolicyParams(vocab_size, k, logits, {"kind": "zeros"})


def gaussian_policy(
    vocab_size: int, k: int = 2, stdev: float = 0.5, seed: int = 0
) -> PolicyParams:
    rng = np.random.default_rng(seed)
    logits = rng.normal(0.0, stdev, size=(vocab_size**k, vocab_size))
    return PolicyParams(
        vocab_size, k, logits, {"kind": "gaussian", "stdev": stdev, "seed": seed}
    )


def snapshot(policy: PolicyParams) -> PolicyParams:
    """Independent deep copy; mutating the original never touches the copy."""
    return PolicyParams(
        policy.vocab_size, policy.k, policy.logits.copy(), dict(policy.init_meta)
    )


def context_rows(
    vocab_size: int, k: int, prefix: tuple[int, ...], y: tuple[int, ...]
) -> np.ndarray:
    """Row index into the logits table for each position of y.

    The context stream is [BOS]*k + prefix + y; position t of y reads the k
    tokens immediately before it. Rows are base-V encodings of those windows.
    """
    stream = np.concatenate(
        [
            np.full(k, BOS, dtype=np.int64),
            np.asarray(prefix + y, dtype=np.int64),
        ]
    )
    if stream.size and (stream.max() >= vocab_size or stream.min() < 0):
        bad = stream[(stream >= vocab_size) | (stream < 0)][0]
        raise ValueError(f"token id {bad} outside vocab of size {vocab_size}")
    powers = vocab_size ** np.arange(k - 1, -1, -1, dtype=np.int64)
    windows = np.lib.stride_tricks.sliding_window_view(stream, k)
    start = len(prefix)
    return windows[start : start + len(y)] @ powers


def _position_logprobs(
    policy: PolicyParams, x: Sequence, y: Sequence
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(rows, per-position log-probs, per-position softmax) for y given x."""
    if x.kind != "prompt":
        raise ValueError("conditioning sequence must be a prompt")
    if y.kind != "response":
        raise ValueError("scored sequence must be a response")
    rows = context_rows(policy.vocab_size, policy.k, x.tokens, y.tokens)
    z = policy.logits[rows]
    zmax = z.max(axis=1, keepdims=True)
    # The sum includes the max entry's exp(0)=1, so lse >= every logit and
    # each per-position log-prob is <= 0 exactly.
    probs_unnorm = np.exp(z - zmax)
    norm = probs_unnorm.sum(axis=1, keepdims=True)
    lse = zmax + np.log(norm)
    targets = np.asarray(y.tokens, dtype=np.int64)
    logps = z[np.arange(len(targets)), targets] - lse[:, 0]
    return rows, logps, probs_unnorm / norm


def seq_logprob(policy: PolicyParams, x: Sequence, y: Sequence) -> float:
    """log pi(y | x) summed over all response positions, EOS included."""
    _, logps, _ = _position_logprobs(policy, x, y)
    return float(logps.sum())


def seq_logprob_marginal(policy: PolicyParams, y: Sequence) -> float:
    """log pi(y): the same chain scored with an empty prompt (BOS-only context)."""
    return seq_logprob(policy, _EMPTY_PROMPT, y)


def seq_logprob_and_grad(
    policy: PolicyParams, x: Sequence, y: Sequence
) -> tuple[float, GradientTensor]:
    """log pi(y | x) and its exact gradient w.r.t. the logits table.

    Each visited context row c with realized token v contributes
    onehot(v) - softmax(logits[c]); unvisited rows stay zero.
    """
    rows, logps, probs = _position_logprobs(policy, x, y)
    grad = np.zeros_like(policy.logits)
    np.add.at(grad, rows, -probs)
    targets = np.asarray(y.tokens, dtype=np.int64)
    np.add.at(grad, (rows, targets), 1.0)
    return float(logps.sum()), grad


def seq_logprob_grad(policy: PolicyParams, x: Sequence, y: Sequence) -> GradientTensor:
    return seq_logprob_and_grad(policy, x, y)[1]


# ---- checkpoint format: JSON header plus row-major flat logits ----

def save_checkpoint(policy: PolicyParams, path) -> None:
    doc = {
        "vocab_size": policy.vocab_size,
        "k": policy.k,
        "init": policy.init_meta,
        "logits": policy.logits.ravel().tolist(),
    }
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh, separators=(",", ":"))
        fh.write("\n")


def load_checkpoint(path) -> PolicyParams:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as e:
            raise DataFormatError(f"invalid checkpoint JSON ({e.msg})") from e
    for key in ("vocab_size", "k", "logits"):
        if key not in doc:
            raise DataFormatError(f"checkpoint missing field {key!r}")
    v, k = int(doc["vocab_size"]), int(doc["k"])
    flat = np.asarray(doc["logits"], dtype=np.float64)
    if flat.size != v**k * v:
        raise DataFormatError(
            f"checkpoint logits length {flat.size} does not match vocab_size="
            f"{v}, k={k}"
        )
    return PolicyParams(v, k, flat.reshape(v**k, v), doc.get("init", {}))
