"""Numerical audits and distribution views over trained or synthetic policies.

Everything here reports raw numbers (histograms, arrays, result rows); the
figure rendering lives with the CLI so these stay import-light and exact.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .corpus import PreferenceTriplet, Vocab, sample_prompt, sample_response
from .errors import ConfigError, PreflabError
from .objectives import (
    FrozenStats,
    LossConfig,
    adaptive_gamma,
    delta_pmi,
    delta_reward,
    evaluate_batch,
    per_sample_weight,
    sigmoid_log_loss,
)
from .policy import PolicyParams, context_rows, gaussian_policy, seq_logprob, snapshot
from .trainer import TrainConfig, evaluate_win_rate, train


def grad_check(
    policy: PolicyParams,
    ref: PolicyParams | None,
    batch: list[PreferenceTriplet],
    cfg: LossConfig,
    h: float = 1e-5,
    state: float | None = None,
) -> float:
    """Max relative error between the analytic batch gradient and central
    finite differences over every logit entry the batch visits.

    Detached quantities (adaptive margins, Z-scores, EMA anchors, KL
    estimates, per-sample beta selections) are frozen at their unperturbed
    values, matching the stop-gradient semantics the analytic gradient
    implements. Relative error is |analytic - numeric| / max(1, |numeric|).
    """
    base = evaluate_batch(policy, ref, batch, cfg, state=state)
    analytic = base.grad
    frozen = base.frozen

    visited: set[int] = set()
    for t in batch:
        for y in (t.y_w, t.y_l):
            visited.update(
                context_rows(policy.vocab_size, policy.k, t.x.tokens, y.tokens).tolist()
            )

    work = snapshot(policy)

    def loss_at() -> float:
        return evaluate_batch(
            work, ref, batch, cfg, state=state, frozen=frozen,
            want_grad=False, want_diag=False,
        ).loss

    worst = 0.0
    for row in sorted(visited):
        for col in range(policy.vocab_size):
            orig = work.logits[row, col]
            work.logits[row, col] = orig + h
            f_plus = loss_at()
            work.logits[row, col] = orig - h
            f_minus = loss_at()
            work.logits[row, col] = orig
            numeric = (f_plus - f_minus) / (2.0 * h)
            if not np.isfinite(numeric):
                raise PreflabError(
                    f"non-finite finite-difference value at logit ({row}, {col})"
                )
            err = float(abs(analytic[row, col] - numeric)) / max(1.0, abs(numeric))
            worst = max(worst, err)
    return worst


def random_batch(
    vocab: Vocab,
    rng: np.random.Generator,
    size: int = 3,
    max_prompt_len: int = 2,
    max_resp_len: int = 4,
) -> list[PreferenceTriplet]:
    """Unlabeled random triplets for numerical audits (the pairing is arbitrary)."""
    batch = []
    while len(batch) < size:
        x = sample_prompt(vocab, max_prompt_len, rng)
        a = sample_response(vocab, max_resp_len, rng)
        b = sample_response(vocab, max_resp_len, rng)
        if a.tokens == b.tokens:
            continue
        batch.append(PreferenceTriplet(x, a, b, 0.0))
    return batch


def random_grad_check_instance(
    method: str,
    rng: np.random.Generator,
    vocab_size: int = 6,
    k: int = 2,
    batch_size: int = 3,
):
    """(policy, ref, batch, cfg, state) with randomized hyperparameters.

    Policies are distinct Gaussian tables so reference terms are active, and
    beta-dpo sometimes gets a mid-training EMA anchor so both branches of the
    state update are exercised.
    """
    vocab = Vocab(vocab_size)
    policy = gaussian_policy(vocab_size, k, 0.6, int(rng.integers(2**31)))
    ref = gaussian_policy(vocab_size, k, 0.5, int(rng.integers(2**31)))
    batch = random_batch(vocab, rng, size=batch_size)
    gamma_min = float(rng.uniform(0.1, 0.5))
    cfg = LossConfig(
        method=method,
        beta=float(rng.uniform(0.5, 3.0)),
        gamma=float(rng.uniform(0.2, 1.8)),
        gamma_min=gamma_min,
        gamma_max=gamma_min + float(rng.uniform(0.5, 1.5)),
        schedule=("exponential", "linear", "cosine", "none")[int(rng.integers(4))],
        schedule_scale=float(rng.uniform(1.0, 4.0)),
        length_norm=bool(rng.integers(2)),
        tau=float(rng.uniform(0.05, 0.5)),
        delta=float(rng.uniform(0.5, 2.0)),
        lam=float(rng.uniform(0.1, 1.0)),
        lambda_w=float(rng.uniform(0.5, 1.5)),
        lambda_l=float(rng.uniform(0.5, 1.5)),
        alpha=float(rng.uniform(0.05, 0.8)),
        rho=(0.0, 0.2, 0.34)[int(rng.integers(3))],
        epsilon=float(rng.uniform(0.005, 0.05)),
    )
    state = None if rng.random() < 0.5 else float(rng.normal(0.0, 1.0))
    return policy, ref, batch, cfg, state


# ---- histograms ----

@dataclass(frozen=True)
class Histogram:
    """Fixed-width bins spanning the observed range; edges has len(counts)+1."""

    edges: np.ndarray
    counts: np.ndarray

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def make_histogram(values, bins: int = 64) -> Histogram:
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        raise ConfigError("cannot histogram an empty value set")
    lo, hi = float(v.min()), float(v.max())
    if lo == hi:
        # degenerate range: center a unit-wide window on the single value
        lo, hi = lo - 0.5, hi + 0.5
    counts, edges = np.histogram(v, bins=bins, range=(lo, hi))
    return Histogram(edges=edges, counts=counts)


def write_histogram_csv(path, hist: Histogram) -> None:
    """CSV rows edge_lo,edge_hi,count with a one-line header."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("edge_lo,edge_hi,count\n")
        for i in range(len(hist.counts)):
            fh.write(
                f"{float(hist.edges[i])!r},{float(hist.edges[i + 1])!r},"
                f"{int(hist.counts[i])}\n"
            )


def delta_log_values(
    policy: PolicyParams, dataset: list[PreferenceTriplet], mode: str
) -> np.ndarray:
    """Per-triplet dlog (mode "conditional") or dpmi (mode "pmi") values.

    The pmi mode subtracts the marginal preference, so any popularity
    structure shared by conditional and unconditional scoring cancels.
    """
    if mode == "conditional":
        return np.array(
            [
                seq_logprob(policy, t.x, t.y_w) - seq_logprob(policy, t.x, t.y_l)
                for t in dataset
            ]
        )
    if mode == "pmi":
        return np.array([delta_pmi(policy, t) for t in dataset])
    raise ConfigError(f"unknown distribution mode {mode!r}")


def delta_log_distribution(
    policy: PolicyParams,
    dataset: list[PreferenceTriplet],
    mode: str = "conditional",
    bins: int = 64,
) -> Histogram:
    return make_histogram(delta_log_values(policy, dataset, mode), bins=bins)


def reward_density(
    dataset: list[PreferenceTriplet],
    rng: np.random.Generator,
    jitter: float = 0.5,
) -> np.ndarray:
    """Continuous view of the labeled reward gaps: per triplet, the integer
    rank gap sign(recorded oracle gap) in {-1, 0, 1} plus Uniform(-jitter,
    jitter). jitter=0 returns the bare integer ranks.
    """
    if jitter < 0:
        raise ConfigError(f"jitter half-width must be >= 0, got {jitter}")
    ranks = np.array([np.sign(t.gap) for t in dataset])
    if jitter == 0:
        return ranks
    return ranks + rng.uniform(-jitter, jitter, size=len(ranks))


def gamma_values(
    policy: PolicyParams, dataset: list[PreferenceTriplet], cfg: LossConfig
) -> np.ndarray:
    return np.array([adaptive_gamma(delta_pmi(policy, t), cfg) for t in dataset])


def gamma_histogram(
    policy: PolicyParams,
    dataset: list[PreferenceTriplet],
    cfg: LossConfig,
    bins: int = 64,
) -> Histogram:
    """Histogram of per-triplet adaptive margins; support lies in
    [gamma_min, gamma_max] by the schedule contract."""
    return make_histogram(gamma_values(policy, dataset, cfg), bins=bins)


# ---- fixed-margin dominance experiment ----

@dataclass
class DominanceRow:
    beta: float
    gamma: float
    win_rate: float
    final_loss: float
    weights: np.ndarray

    def ranking(self) -> np.ndarray:
        """Sample indices from most to least violated, stable under ties."""
        return np.argsort(-self.weights, kind="stable")


def gamma_dominance_experiment(
    dataset: list[PreferenceTriplet],
    beta_grid: list[float],
    gamma_grid: list[float],
    base_cfg: TrainConfig,
    init_policy: PolicyParams,
) -> list[DominanceRow]:
    """Train a fixed-margin length-normalized objective on each (beta, gamma)
    grid point, rescaling the learning rate by 1/beta so the gradient scale
    is comparable, and report final win rate, loss, and per-sample weights.
    """
    if not beta_grid or not gamma_grid:
        raise ConfigError("dominance experiment needs non-empty grids")
    rows = []
    for beta in beta_grid:
        for gamma in gamma_grid:
            loss_cfg = replace(
                base_cfg.loss,
                method="unified-fixed",
                beta=beta,
                gamma=gamma,
                length_norm=True,
            )
            tcfg = replace(base_cfg, loss=loss_cfg, lr=base_cfg.lr / beta)
            result = train(tcfg, dataset, init_policy)
            rewards = np.array(
                [delta_reward(result.policy, t, beta, True) for t in dataset]
            )
            weights = np.array([per_sample_weight(r, gamma) for r in rewards])
            losses = np.array([sigmoid_log_loss(r - gamma) for r in rewards])
            rows.append(
                DominanceRow(
                    beta=beta,
                    gamma=gamma,
                    win_rate=evaluate_win_rate(result.policy, dataset, loss_cfg),
                    final_loss=float(losses.mean()),
                    weights=weights,
                )
            )
    return rows


def write_dominance_csv(path, rows: list[DominanceRow]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("beta,gamma,win_rate,final_loss,mean_weight\n")
        for r in rows:
            fh.write(
                f"{r.beta!r},{r.gamma!r},{r.win_rate!r},{r.final_loss!r},"
                f"{float(r.weights.mean())!r}\n"
            )


def write_dominance_weights_csv(path, rows: list[DominanceRow]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("beta,gamma,sample,weight\n")
        for r in rows:
            for i, w in enumerate(r.weights):
                fh.write(f"{r.beta!r},{r.gamma!r},{i},{float(w)!r}\n")
