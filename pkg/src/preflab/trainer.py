"""Minibatch gradient descent on preference objectives.

The loop is deliberately plain: snapshot the reference, reshuffle each epoch
from a dedicated seeded stream, evaluate one batch, step the optimizer, log
one history record per step. Everything is deterministic for a fixed config,
dataset, and initial policy; reruns produce bit-identical parameters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .corpus import PreferenceTriplet
from .errors import ConfigError, NumericalAbort
from .objectives import (
    LossConfig,
    MIN_BATCH_TWO,
    EpsRule,
    delta_reward,
    effective_length_norm,
    evaluate_batch,
)
from .policy import PolicyParams, seq_logprob_and_grad, snapshot

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class TrainConfig:
    loss: LossConfig = field(default_factory=LossConfig)
    steps: int = 500
    batch_size: int = 32
    lr: float = 0.1
    optimizer: str = "sgd"
    lr_schedule: str = "constant"
    seed: int = 0

    def __post_init__(self):
        if self.steps < 0:
            raise ConfigError(f"steps must be >= 0, got {self.steps}")
        if self.batch_size < 1:
            raise ConfigError(f"batch size must be >= 1, got {self.batch_size}")
        if self.loss.method in MIN_BATCH_TWO and self.batch_size < 2:
            raise ConfigError(f"{self.loss.method} requires batch size >= 2")
        if not self.lr > 0:
            raise ConfigError(f"learning rate must be > 0, got {self.lr}")
        if self.optimizer not in ("sgd", "adam"):
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")
        if self.lr_schedule not in ("constant", "cosine"):
            raise ConfigError(f"unknown lr schedule {self.lr_schedule!r}")


@dataclass
class StepRecord:
    step: int
    loss: float
    margin: float
    win_rate: float
    mean_gamma: float
    mean_dpmi: float


@dataclass
class TrainHistory:
    records: list[StepRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])


@dataclass
class TrainResult:
    policy: PolicyParams
    ref: PolicyParams
    history: TrainHistory


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0


def optimizer_step(
    policy: PolicyParams,
    grad: np.ndarray,
    lr: float,
    adam: AdamState | None = None,
) -> None:
    """In-place parameter update: plain SGD, or bias-corrected Adam when given state."""
    if adam is None:
        policy.logits -= lr * grad
        return
    adam.t += 1
    adam.m = ADAM_BETA1 * adam.m + (1.0 - ADAM_BETA1) * grad
    adam.v = ADAM_BETA2 * adam.v + (1.0 - ADAM_BETA2) * grad * grad
    m_hat = adam.m / (1.0 - ADAM_BETA1**adam.t)
    v_hat = adam.v / (1.0 - ADAM_BETA2**adam.t)
    policy.logits -= lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)


def _lr_at(cfg: TrainConfig, step: int) -> float:
    if cfg.lr_schedule == "cosine":
        return cfg.lr * 0.5 * (1.0 + math.cos(math.pi * step / max(1, cfg.steps)))
    return cfg.lr


def _locate_bad_sample(policy, batch, indices) -> int:
    """Dataset index of the first sample with a non-finite gradient, else -1."""
    for pos, t in enumerate(batch):
        for y in (t.y_w, t.y_l):
            _, g = seq_logprob_and_grad(policy, t.x, y)
            if not np.isfinite(g).all():
                return int(indices[pos])
    return -1


def train(
    cfg: TrainConfig,
    dataset: list[PreferenceTriplet],
    init_policy: PolicyParams,
    eps_rule: EpsRule | None = None,
) -> TrainResult:
    """Run cfg.steps minibatch updates and return the trained policy.

    The reference policy is a snapshot of init_policy taken before the first
    step and never touched again. Per-step history values (loss, margin, win
    rate, mean gamma, mean dpmi) describe the step's own minibatch under the
    pre-update parameters. Raises NumericalAbort, naming the step and the
    dataset index of the offending sample, if any loss or gradient goes
    non-finite.
    """
    if len(dataset) < cfg.batch_size:
        raise ConfigError(
            f"dataset of {len(dataset)} triplets is smaller than batch size "
            f"{cfg.batch_size}"
        )
    policy = snapshot(init_policy)
    ref = snapshot(init_policy)
    shuffle_seq, = np.random.SeedSequence(cfg.seed).spawn(1)
    shuffle_rng = np.random.default_rng(shuffle_seq)

    adam = None
    if cfg.optimizer == "adam":
        adam = AdamState(np.zeros_like(policy.logits), np.zeros_like(policy.logits))

    history = TrainHistory()
    state = None
    batches_per_epoch = len(dataset) // cfg.batch_size
    epoch_order: np.ndarray = np.empty(0, dtype=np.int64)
    batch_in_epoch = batches_per_epoch  # force a reshuffle on the first step

    for step in range(cfg.steps):
        if batch_in_epoch >= batches_per_epoch:
            epoch_order = shuffle_rng.permutation(len(dataset))
            batch_in_epoch = 0
        lo = batch_in_epoch * cfg.batch_size
        indices = epoch_order[lo : lo + cfg.batch_size]
        batch_in_epoch += 1
        batch = [dataset[i] for i in indices]

        ev = evaluate_batch(
            policy, ref, batch, cfg.loss, state=state, eps_rule=eps_rule
        )
        state = ev.state
        diag = ev.diag

        per_sample = np.stack([diag.loss, diag.d_reward, diag.dlog, diag.weight])
        bad = ~np.isfinite(per_sample).all(axis=0)
        if bad.any():
            pos = int(np.flatnonzero(bad)[0])
            raise NumericalAbort(step, int(indices[pos]), "per-sample loss")
        if not np.isfinite(ev.grad).all():
            raise NumericalAbort(
                step, _locate_bad_sample(policy, batch, indices), "batch gradient"
            )

        history.records.append(
            StepRecord(
                step=step,
                loss=ev.loss,
                margin=diag.mean_margin,
                win_rate=diag.win_count / len(batch),
                mean_gamma=float(np.mean(diag.gamma)),
                mean_dpmi=float(np.mean(diag.dpmi)),
            )
        )
        optimizer_step(policy, ev.grad, _lr_at(cfg, step), adam)

    return TrainResult(policy=policy, ref=ref, history=history)


def evaluate_win_rate(
    policy: PolicyParams, dataset: list[PreferenceTriplet], cfg: LossConfig
) -> float:
    """Fraction of triplets whose preferred response the policy rewards strictly
    more; ties count as losses. beta only scales the difference, so the value
    depends on the config through length normalization alone.
    """
    if not dataset:
        raise ConfigError("win rate over an empty dataset is undefined")
    length_norm = effective_length_norm(cfg)
    wins = sum(
        1 for t in dataset if delta_reward(policy, t, cfg.beta, length_norm) > 0
    )
    return wins / len(dataset)


def write_history_csv(path, history: TrainHistory) -> None:
    """CSV with header step,loss,margin,win_rate,mean_gamma,mean_dpmi."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("step,loss,margin,win_rate,mean_gamma,mean_dpmi\n")
        for r in history.records:
            fh.write(
                f"{r.step},{r.loss!r},{r.margin!r},{r.win_rate!r},"
                f"{r.mean_gamma!r},{r.mean_dpmi!r}\n"
            )
