"""Synthetic preference corpora over a tiny token alphabet.

A corpus is a list of (prompt, preferred response, rejected response) triplets.
Labels come from a Bradley-Terry draw against a planted token-affinity oracle,
so every dataset carries a known ground-truth reward signal (recorded per
triplet as the signed oracle gap). Two extra generators plant pure popularity
structure with no prompt-response coupling at all; they exist to probe whether
an objective can tell relevance from frequency.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .errors import ConfigError, DataFormatError
from .numerics import sigmoid

BOS = 0
EOS = 1

# A triplet is redrawn at most this many times before we give up and report
# degenerate generation bounds.
MAX_TRIPLET_RETRIES = 20_000


@dataclass(frozen=True)
class Vocab:
    """Token alphabet: BOS=0 and EOS=1 are reserved, content ids are 2..size-1."""

    size: int

    def __post_init__(self):
        if self.size < 4:
            raise ConfigError(f"vocab size must be >= 4, got {self.size}")

    @property
    def content(self) -> range:
        return range(2, self.size)


@dataclass(frozen=True)
class Sequence:
    """Immutable token sequence tagged as prompt or response.

    Prompts never contain EOS. Responses end with exactly one EOS (their final
    token), never contain BOS, and have length >= 1 counting that EOS.
    """

    tokens: tuple[int, ...]
    kind: str

    def __post_init__(self):
        if self.kind not in ("prompt", "response"):
            raise ValueError(f"unknown sequence kind {self.kind!r}")
        if any((not isinstance(t, int)) or t < 0 for t in self.tokens):
            raise ValueError("tokens must be non-negative integers")
        if self.kind == "prompt":
            if EOS in self.tokens:
                raise ValueError("prompt must not contain EOS")
        else:
            if len(self.tokens) < 1:
                raise ValueError("response must contain at least the EOS token")
            if self.tokens[-1] != EOS or EOS in self.tokens[:-1]:
                raise ValueError("response must end with exactly one EOS")
            if BOS in self.tokens:
                raise ValueError("response must not contain BOS")

    def __len__(self) -> int:
        return len(self.tokens)


def prompt_seq(tokens: Iterable[int]) -> Sequence:
    return Sequence(tuple(int(t) for t in tokens), "prompt")


def response_seq(tokens: Iterable[int]) -> Sequence:
    return Sequence(tuple(int(t) for t in tokens), "response")


@dataclass(frozen=True)
class PreferenceTriplet:
    """One labeled comparison; gap records r*(y_w) - r*(y_l) at generation time."""

    x: Sequence
    y_w: Sequence
    y_l: Sequence
    gap: float = 0.0

    def __post_init__(self):
        if self.x.kind != "prompt":
            raise ValueError("x must be a prompt")
        if self.y_w.kind != "response" or self.y_l.kind != "response":
            raise ValueError("y_w and y_l must be responses")
        if self.y_w.tokens == self.y_l.tokens:
            raise ValueError("y_w and y_l must differ")


@dataclass(frozen=True)
class OracleReward:
    """Bilinear ground-truth reward: sum of w[(last prompt token, y_t)] over
    response positions, minus length_penalty per response token.

    Missing table entries score 0. For an empty prompt the conditioning token
    is BOS, matching the policy's padding convention.
    """

    weights: dict[tuple[int, int], float] = field(default_factory=dict)
    length_penalty: float = 0.0


def oracle_reward(oracle: OracleReward, x: Sequence, y: Sequence) -> float:
    if x.kind != "prompt" or y.kind != "response":
        raise ValueError("oracle_reward expects (prompt, response)")
    anchor = x.tokens[-1] if x.tokens else BOS
    total = 0.0
    for t in y.tokens:
        total += oracle.weights.get((anchor, t), 0.0)
    return total - oracle.length_penalty * len(y)


def bt_label(r_w: float, r_l: float, rng: np.random.Generator) -> bool:
    """True with probability sigmoid(r_w - r_l): Bradley-Terry preference draw."""
    return bool(rng.random() < sigmoid(r_w - r_l))


def random_oracle(
    vocab: Vocab,
    rng: np.random.Generator,
    scale: float = 20.0,
    relevance: float = 0.25,
    length_penalty: float = 0.0,
) -> OracleReward:
    """Planted oracle with a global token-quality part and a prompt-coupled part.

    weights[(p, t)] = scale * ((1 - relevance) * v[t] + relevance * z[p, t])
    with v, z ~ Uniform(-1, 1). relevance=0 makes the reward a pure function of
    the response; relevance=1 makes it a pure prompt-response interaction.
    """
    if not 0.0 <= relevance <= 1.0:
        raise ConfigError(f"relevance must be in [0, 1], got {relevance}")
    content = list(vocab.content)
    v = {t: rng.uniform(-1.0, 1.0) for t in content}
    weights = {}
    for p in content:
        for t in content:
            z = rng.uniform(-1.0, 1.0)
            weights[(p, t)] = scale * ((1.0 - relevance) * v[t] + relevance * z)
    return OracleReward(weights=weights, length_penalty=length_penalty)


def sample_prompt(vocab: Vocab, max_len: int, rng: np.random.Generator) -> Sequence:
    if max_len < 1:
        raise ConfigError("max prompt length must be >= 1")
    length = int(rng.integers(1, max_len + 1))
    content = np.array(vocab.content)
    return prompt_seq(rng.choice(content, size=length))


def sample_response(
    vocab: Vocab,
    max_len: int,
    rng: np.random.Generator,
    probs: np.ndarray | None = None,
    length: int | None = None,
) -> Sequence:
    """Uniform-length response; tokens uniform over content unless probs given.

    max_len bounds the total length including the terminal EOS, so max_len=1
    admits only the bare-EOS response.
    """
    if max_len < 1:
        raise ConfigError("max response length must be >= 1")
    total = int(rng.integers(1, max_len + 1)) if length is None else length
    content = np.array(vocab.content)
    body = rng.choice(content, size=total - 1, p=probs)
    return response_seq(list(body) + [EOS])


def generate_dataset(
    oracle: OracleReward,
    vocab: Vocab,
    n: int,
    max_prompt_len: int,
    max_resp_len: int,
    rng: np.random.Generator,
    gap_range: tuple[float, float] | None = None,
) -> list[PreferenceTriplet]:
    """n Bradley-Terry labeled triplets against the oracle.

    The stored y_w is whichever candidate won the BT draw, so the recorded gap
    is negative exactly when label noise flipped the oracle ordering.
    gap_range=(lo, hi) rejection-samples candidate pairs until the unsigned
    oracle gap lands in [lo, hi); this is how fixed-confidence corpora such as
    a gap-20 or gap-1 set are produced.
    """
    if n < 1:
        raise ConfigError(f"dataset size must be >= 1, got {n}")
    out = []
    for _ in range(n):
        for attempt in range(MAX_TRIPLET_RETRIES):
            x = sample_prompt(vocab, max_prompt_len, rng)
            a = sample_response(vocab, max_resp_len, rng)
            b = sample_response(vocab, max_resp_len, rng)
            if a.tokens == b.tokens:
                continue
            r_a = oracle_reward(oracle, x, a)
            r_b = oracle_reward(oracle, x, b)
            if gap_range is not None:
                lo, hi = gap_range
                if not lo <= abs(r_a - r_b) < hi:
                    continue
            if bt_label(r_a, r_b, rng):
                w, l, gap = a, b, r_a - r_b
            else:
                w, l, gap = b, a, r_b - r_a
            out.append(PreferenceTriplet(x, w, l, float(gap)))
            break
        else:
            raise ConfigError(
                "could not sample a valid triplet; vocab, length bounds, or "
                "gap_range are degenerate"
            )
    return out


def generate_token_popularity_dataset(
    vocab: Vocab,
    n: int,
    popular: frozenset[int] | set[int],
    tilt: float,
    max_prompt_len: int,
    max_resp_len: int,
    rng: np.random.Generator,
) -> list[PreferenceTriplet]:
    """Zero-relevance corpus where frequent tokens win.

    Responses are sampled with popular content tokens `tilt` times likelier
    than the rest, both candidates share one length so the comparison is pure
    composition, and the candidate with more popular tokens is stored as
    preferred (ties fall to a coin flip). Nothing depends on the prompt. The
    gap metadata is the popular-token count difference.
    """
    if n < 1:
        raise ConfigError(f"dataset size must be >= 1, got {n}")
    if tilt < 1.0:
        raise ConfigError(f"tilt must be >= 1, got {tilt}")
    popular = frozenset(popular)
    content = list(vocab.content)
    if not popular <= set(content):
        raise ConfigError("popular tokens must be content tokens")
    if max_resp_len < 2:
        raise ConfigError("popularity corpus needs responses with content")
    weights = np.array([tilt if t in popular else 1.0 for t in content])
    probs = weights / weights.sum()
    out = []
    for _ in range(n):
        for attempt in range(MAX_TRIPLET_RETRIES):
            x = sample_prompt(vocab, max_prompt_len, rng)
            length = int(rng.integers(2, max_resp_len + 1))
            a = sample_response(vocab, max_resp_len, rng, probs=probs, length=length)
            b = sample_response(vocab, max_resp_len, rng, probs=probs, length=length)
            if a.tokens == b.tokens:
                continue
            score_a = sum(1 for t in a.tokens if t in popular)
            score_b = sum(1 for t in b.tokens if t in popular)
            if score_a == score_b:
                w, l = (a, b) if rng.random() < 0.5 else (b, a)
                gap = 0.0
            elif score_a > score_b:
                w, l, gap = a, b, float(score_a - score_b)
            else:
                w, l, gap = b, a, float(score_b - score_a)
            out.append(PreferenceTriplet(x, w, l, gap))
            break
        else:
            raise ConfigError("could not sample a valid popularity triplet")
    return out


def generate_template_popularity_dataset(
    vocab: Vocab,
    n: int,
    template: Sequence,
    rate: float,
    max_prompt_len: int,
    max_resp_len: int,
    rng: np.random.Generator,
) -> list[PreferenceTriplet]:
    """Zero-relevance corpus where one fixed response is oversampled and,
    whenever it appears, labeled preferred. Remaining pairs are coin flips.
    """
    if n < 1:
        raise ConfigError(f"dataset size must be >= 1, got {n}")
    if not 0.0 <= rate <= 1.0:
        raise ConfigError(f"rate must be in [0, 1], got {rate}")
    if template.kind != "response":
        raise ConfigError("template must be a response")
    out = []
    for _ in range(n):
        for attempt in range(MAX_TRIPLET_RETRIES):
            x = sample_prompt(vocab, max_prompt_len, rng)
            if rng.random() < rate:
                other = sample_response(vocab, max_resp_len, rng)
                if other.tokens == template.tokens:
                    continue
                out.append(PreferenceTriplet(x, template, other, 1.0))
            else:
                a = sample_response(vocab, max_resp_len, rng)
                b = sample_response(vocab, max_resp_len, rng)
                if a.tokens == b.tokens:
                    continue
                if rng.random() < 0.5:
                    a, b = b, a
                out.append(PreferenceTriplet(x, a, b, 0.0))
            break
        else:
            raise ConfigError("could not sample a valid template triplet")
    return out


# ---- JSONL serialization ----

def save_dataset(dataset: list[PreferenceTriplet], path) -> None:
    """One JSON object per line: {"x": [...], "yw": [...], "yl": [...], "gap": g}."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for t in dataset:
            rec = {
                "x": list(t.x.tokens),
                "yw": list(t.y_w.tokens),
                "yl": list(t.y_l.tokens),
                "gap": t.gap,
            }
            fh.write(json.dumps(rec, separators=(",", ":")) + "\n")


def load_dataset(path, vocab: Vocab | None = None) -> list[PreferenceTriplet]:
    """Inverse of save_dataset; errors name the offending line and field."""
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise DataFormatError(f"line {lineno}: invalid JSON ({e.msg})") from e
            if not isinstance(rec, dict):
                raise DataFormatError(f"line {lineno}: expected a JSON object")
            for key in ("x", "yw", "yl", "gap"):
                if key not in rec:
                    raise DataFormatError(f"line {lineno}: missing field {key!r}")
            try:
                triplet = PreferenceTriplet(
                    prompt_seq(rec["x"]),
                    response_seq(rec["yw"]),
                    response_seq(rec["yl"]),
                    float(rec["gap"]),
                )
            except (ValueError, TypeError) as e:
                raise DataFormatError(f"line {lineno}: {e}") from e
            if vocab is not None:
                ids = triplet.x.tokens + triplet.y_w.tokens + triplet.y_l.tokens
                bad = [t for t in ids if t >= vocab.size]
                if bad:
                    raise DataFormatError(
                        f"line {lineno}: token id {bad[0]} outside vocab of size "
                        f"{vocab.size}"
                    )
            out.append(triplet)
    return out
