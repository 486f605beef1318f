"""Offline preference-optimization objectives over the tabular policy.

Every objective consumes (prompt, preferred, rejected) triplets and returns an
exact analytic gradient with respect to the policy logits. A shared sigmoid
margin kernel covers the family of losses of the form -log sigmoid(dR - margin),
which is what makes the documented reductions between methods (rmipo with a
disabled schedule vs simpo, alpha-dpo at alpha=0 vs simpo, beta-dpo and
eps-dpo at neutral settings vs dpo) hold to float precision.

Quantities that the methods treat as constants during differentiation (the
adaptive margin, batch Z-scores, EMA anchors, KL estimates, per-sample beta
selections) are collected in FrozenStats; re-evaluating a batch with a frozen
set reproduces the stop-gradient semantics exactly, which finite-difference
audits rely on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .corpus import PreferenceTriplet, Sequence
from .errors import ConfigError
from .numerics import sigmoid, softplus
from .policy import GradientTensor, PolicyParams, seq_logprob, seq_logprob_and_grad

METHODS = (
    "dpo",
    "slic",
    "ipo",
    "cpo",
    "kto",
    "simpo",
    "alpha-dpo",
    "beta-dpo",
    "eps-dpo",
    "simper",
    "rmipo",
    "unified-fixed",
)
SCHEDULES = ("exponential", "linear", "cosine", "none")

# Methods that score against a frozen reference policy.
REFERENCE_METHODS = frozenset({"dpo", "ipo", "kto", "alpha-dpo", "beta-dpo", "eps-dpo"})
# Methods whose batch statistics are undefined on singleton batches.
MIN_BATCH_TWO = frozenset({"alpha-dpo", "beta-dpo"})
# Methods whose batch gradient factors as -mean(beta_i * w_i * grad dlog_i).
MARGIN_FAMILY = frozenset(
    {"dpo", "simpo", "rmipo", "unified-fixed", "alpha-dpo", "beta-dpo", "eps-dpo"}
)

# beta-dpo clamps its per-sample beta here to keep the loss finite and ordered.
BETA_FLOOR_FRACTION = 1e-6
# EMA decay for beta-dpo's running batch-mean anchor.
BETA_DPO_EMA_DECAY = 0.9


@dataclass
class LossConfig:
    """Hyperparameters for every objective; unused fields are ignored.

    length_norm controls rmipo and unified-fixed only: simpo, alpha-dpo and
    simper normalize by construction, the reference-based methods never do.
    """

    method: str = "rmipo"
    beta: float = 2.0
    gamma: float = 1.0
    gamma_min: float = 0.3
    gamma_max: float = 1.6
    schedule: str = "exponential"
    schedule_scale: float = 3.0
    length_norm: bool = True
    tau: float = 0.1
    delta: float = 1.0
    lam: float = 1.0
    lambda_w: float = 1.0
    lambda_l: float = 1.0
    alpha: float = 0.1
    rho: float = 0.2
    epsilon: float = 0.01

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}")
        if self.schedule not in SCHEDULES:
            raise ConfigError(f"unknown schedule {self.schedule!r}")
        if not self.beta > 0:
            raise ConfigError(f"beta must be > 0, got {self.beta}")
        if not self.tau > 0:
            raise ConfigError(f"tau must be > 0, got {self.tau}")
        if self.gamma_min > self.gamma_max:
            raise ConfigError(
                f"gamma_min {self.gamma_min} exceeds gamma_max {self.gamma_max}"
            )
        if not self.schedule_scale > 0:
            raise ConfigError(f"schedule_scale must be > 0, got {self.schedule_scale}")
        if not 0.0 <= self.rho < 0.5:
            raise ConfigError(f"rho must be in [0, 0.5), got {self.rho}")
        if self.epsilon < 0:
            raise ConfigError(f"epsilon must be >= 0, got {self.epsilon}")


def effective_length_norm(cfg: LossConfig) -> bool:
    if cfg.method in ("simpo", "alpha-dpo", "simper"):
        return True
    if cfg.method in ("rmipo", "unified-fixed"):
        return cfg.length_norm
    return False


# ---- scalar building blocks ----

def sigmoid_log_loss(u) -> float:
    """-log sigmoid(u), evaluated as softplus(-u); finite for any finite u."""
    return softplus(-u)


def unified_loss(d_reward: float, gamma: float) -> float:
    """Margin-form loss -log sigmoid(dR - gamma) shared by the margin family."""
    return sigmoid_log_loss(d_reward - gamma)


def per_sample_weight(d_reward: float, gamma: float) -> float:
    """Gradient weight 1 - sigmoid(dR - gamma): large when the pair is violated."""
    return 1.0 - sigmoid(d_reward - gamma)


def beta_dpo_beta_i(m_i, m0: float, alpha: float, beta0: float):
    """Per-sample beta (1 + alpha * (M_i - M_0)) * beta0, floored at 1e-6 * beta0.

    Accepts a scalar or an array of implicit margins M_i.
    """
    return np.maximum(BETA_FLOOR_FRACTION * beta0, (1.0 + alpha * (m_i - m0)) * beta0)


def delta_reward(
    policy: PolicyParams, t: PreferenceTriplet, beta: float, length_norm: bool
) -> float:
    """Policy reward difference: beta * dlog, per-token normalized when asked."""
    lw = seq_logprob(policy, t.x, t.y_w)
    ll = seq_logprob(policy, t.x, t.y_l)
    if length_norm:
        return beta / len(t.y_w) * lw - beta / len(t.y_l) * ll
    return beta * (lw - ll)


_EMPTY_PROMPT = Sequence((), "prompt")


def pmi(policy: PolicyParams, x, y) -> float:
    """log pi(y|x) - log pi(y): the response-level pointwise mutual information."""
    return seq_logprob(policy, x, y) - seq_logprob(policy, _EMPTY_PROMPT, y)


def delta_pmi(policy: PolicyParams, t: PreferenceTriplet) -> float:
    """PMI difference between preferred and rejected responses.

    Computed as (conditional dlog) - (marginal dlog) rather than as a
    difference of two pmi() calls; the two agree to rounding, but this form
    cancels the shared popularity terms exactly, which the distribution
    diagnostics assert.
    """
    lw = seq_logprob(policy, t.x, t.y_w)
    ll = seq_logprob(policy, t.x, t.y_l)
    mw = seq_logprob(policy, _EMPTY_PROMPT, t.y_w)
    ml = seq_logprob(policy, _EMPTY_PROMPT, t.y_l)
    return (lw - ll) - (mw - ml)


def adaptive_gamma(dpmi: float, cfg: LossConfig) -> float:
    """Margin as a function of the PMI difference, bounded to [gamma_min, gamma_max].

    All schedules are rectified: any dpmi <= 0 sits on the gamma_max plateau.
    exponential decays as exp(-dpmi); linear and cosine ramp down to gamma_min
    over [0, schedule_scale] and saturate there. schedule "none" ignores dpmi
    and returns the fixed gamma.
    """
    if cfg.schedule == "none":
        return cfg.gamma
    lo, hi = cfg.gamma_min, cfg.gamma_max
    r = max(0.0, dpmi)
    if r == 0.0:
        return hi
    if cfg.schedule == "exponential":
        return lo + (hi - lo) * math.exp(-r)
    frac = min(1.0, r / cfg.schedule_scale)
    if cfg.schedule == "linear":
        return hi - (hi - lo) * frac
    return lo + (hi - lo) * 0.5 * (1.0 + math.cos(math.pi * frac))


def implicit_margin(ref: PolicyParams, t: PreferenceTriplet, beta: float) -> float:
    """The frozen-reference margin that rewrites dpo in unified margin form."""
    rw = seq_logprob(ref, t.x, t.y_w)
    rl = seq_logprob(ref, t.x, t.y_l)
    return beta * rw - beta * rl


# ---- frozen (stop-gradient) statistics and diagnostics ----

@dataclass
class FrozenStats:
    """Detached per-batch quantities; fixed across re-evaluations when supplied."""

    gammas: np.ndarray | None = None  # rmipo per-sample adaptive margins
    m_star: np.ndarray | None = None  # alpha-dpo per-sample Z-scores
    z_ref: float | None = None  # kto batch KL estimate
    betas: np.ndarray | None = None  # beta-dpo / eps-dpo per-sample betas
    keep: np.ndarray | None = None  # beta-dpo kept-sample boolean mask
    m0: float | None = None  # beta-dpo EMA anchor used for this batch


@dataclass
class SampleDiag:
    dlog: float
    d_reward: float
    dpmi: float
    gamma: float
    weight: float
    loss: float


@dataclass
class BatchDiagnostics:
    """Per-sample views of one batch evaluation plus batch aggregates.

    d_reward is the policy-side reward difference the method ranks pairs by
    (per-sample beta for beta-dpo and eps-dpo); gamma is the effective margin
    (the implicit reference margin for the dpo family, the KL estimate for
    kto, the squared-loss target for ipo, the hinge offset for slic). The
    weight column is always 1 - sigmoid(d_reward - gamma), which is the exact
    gradient weight for the margin family and descriptive elsewhere. For
    beta-dpo the loss column still reports dropped samples even though they
    are excluded from the batch mean.
    """

    dlog: np.ndarray
    d_reward: np.ndarray
    dpmi: np.ndarray
    gamma: np.ndarray
    weight: np.ndarray
    loss: np.ndarray
    win_count: int
    mean_margin: float
    degenerate_zscore: bool = False

    @property
    def size(self) -> int:
        return len(self.dlog)


def _make_diagnostics(dlog, d_reward, dpmi, gamma, loss, degenerate=False):
    dlog = np.asarray(dlog, dtype=np.float64)
    d_reward = np.asarray(d_reward, dtype=np.float64)
    dpmi = np.asarray(dpmi, dtype=np.float64)
    gamma = np.asarray(gamma, dtype=np.float64)
    loss = np.asarray(loss, dtype=np.float64)
    weight = 1.0 - sigmoid(d_reward - gamma)
    return BatchDiagnostics(
        dlog=dlog,
        d_reward=d_reward,
        dpmi=dpmi,
        gamma=gamma,
        weight=np.atleast_1d(weight),
        loss=loss,
        win_count=int(np.sum(d_reward > 0)),
        mean_margin=float(np.mean(d_reward - gamma)),
        degenerate_zscore=degenerate,
    )


def write_diagnostics_csv(path, steps: list[tuple[int, BatchDiagnostics]]) -> None:
    """CSV rows step,sample,dlog,dR,dpmi,gamma,weight,loss with one header line."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("step,sample,dlog,dR,dpmi,gamma,weight,loss\n")
        for step, diag in steps:
            for i in range(diag.size):
                cols = (
                    diag.dlog[i], diag.d_reward[i], diag.dpmi[i],
                    diag.gamma[i], diag.weight[i], diag.loss[i],
                )
                vals = ",".join(repr(float(v)) for v in cols)
                fh.write(f"{step},{i},{vals}\n")


# ---- shared per-pair evaluation ----

@dataclass
class _Pair:
    lw: float
    ll: float
    nw: int
    nl: int
    gw: GradientTensor | None = None
    gl: GradientTensor | None = None
    rw: float | None = None
    rl: float | None = None
    mw: float | None = None
    ml: float | None = None

    @property
    def dlog(self) -> float:
        return self.lw - self.ll

    @property
    def ref_logratio_delta(self) -> float:
        return (self.lw - self.rw) - (self.ll - self.rl)

    @property
    def dpmi(self) -> float:
        return (self.lw - self.ll) - (self.mw - self.ml)


def _build_pair(
    policy: PolicyParams,
    ref: PolicyParams | None,
    t: PreferenceTriplet,
    need_grad: bool,
    need_ref: bool,
    need_pmi: bool,
) -> _Pair:
    if need_grad:
        lw, gw = seq_logprob_and_grad(policy, t.x, t.y_w)
        ll, gl = seq_logprob_and_grad(policy, t.x, t.y_l)
    else:
        lw, gw = seq_logprob(policy, t.x, t.y_w), None
        ll, gl = seq_logprob(policy, t.x, t.y_l), None
    pair = _Pair(lw=lw, ll=ll, nw=len(t.y_w), nl=len(t.y_l), gw=gw, gl=gl)
    if need_ref:
        pair.rw = seq_logprob(ref, t.x, t.y_w)
        pair.rl = seq_logprob(ref, t.x, t.y_l)
    if need_pmi:
        pair.mw = seq_logprob(policy, _EMPTY_PROMPT, t.y_w)
        pair.ml = seq_logprob(policy, _EMPTY_PROMPT, t.y_l)
    return pair


def _normalized_delta(pair: _Pair, beta: float, length_norm: bool):
    """(dR, dR gradient or None) for the configured normalization."""
    if length_norm:
        d = beta / pair.nw * pair.lw - beta / pair.nl * pair.ll
        g = None
        if pair.gw is not None:
            g = beta / pair.nw * pair.gw - beta / pair.nl * pair.gl
    else:
        d = beta * (pair.lw - pair.ll)
        g = None
        if pair.gw is not None:
            g = beta * (pair.gw - pair.gl)
    return d, g


@dataclass
class BatchEval:
    loss: float
    grad: GradientTensor | None
    diag: BatchDiagnostics | None
    state: float | None
    frozen: FrozenStats


# Rule hook for eps-dpo: maps per-sample statistics to the beta actually used.
@dataclass(frozen=True)
class EpsSampleStats:
    dlog_policy: float
    dlog_ref: float
    beta: float
    beta_minus: float
    beta_plus: float


EpsRule = Callable[[EpsSampleStats], float]


def default_eps_rule(stats: EpsSampleStats) -> float:
    """Tighten regularization where the reference disagrees with the label.

    sigmoid(dlog under the reference) < 1/2 means the reference prefers the
    rejected response; those pairs get beta_plus, the rest beta_minus.
    """
    if sigmoid(stats.dlog_ref) < 0.5:
        return stats.beta_plus
    return stats.beta_minus


def evaluate_batch(
    policy: PolicyParams,
    ref: PolicyParams | None,
    batch: list[PreferenceTriplet],
    cfg: LossConfig,
    state: float | None = None,
    frozen: FrozenStats | None = None,
    eps_rule: EpsRule | None = None,
    want_grad: bool = True,
    want_diag: bool = True,
) -> BatchEval:
    """One batch evaluation: mean loss, mean gradient, diagnostics, new state.

    Passing `frozen` re-evaluates the batch with all detached statistics held
    at the supplied values (stop-gradient semantics); otherwise they are
    computed from the batch and returned. `state` is beta-dpo's EMA anchor
    and is passed through untouched by every other method.
    """
    if len(batch) < 1:
        raise ConfigError("batch must contain at least one triplet")
    method = cfg.method
    need_ref = method in REFERENCE_METHODS
    if need_ref and ref is None:
        raise ConfigError(f"{method} requires a reference policy")
    need_pmi = want_diag or (method == "rmipo" and frozen is None)
    pairs = [
        _build_pair(policy, ref, t, want_grad, need_ref, need_pmi) for t in batch
    ]

    if method in ("simpo", "unified-fixed", "rmipo"):
        out = _eval_margin_policy_only(pairs, cfg, frozen, want_grad)
    elif method == "alpha-dpo":
        out = _eval_alpha_dpo(pairs, cfg, frozen, want_grad)
    elif method in ("dpo", "beta-dpo", "eps-dpo"):
        out = _eval_dpo_family(pairs, cfg, frozen, want_grad, state, eps_rule)
    elif method == "kto":
        out = _eval_kto(pairs, cfg, frozen, want_grad)
    elif method == "ipo":
        out = _eval_ipo(pairs, cfg, want_grad)
    elif method == "slic":
        out = _eval_slic(pairs, cfg, want_grad)
    elif method == "cpo":
        out = _eval_cpo(pairs, cfg, want_grad)
    else:
        out = _eval_simper(pairs, cfg, want_grad)

    losses, grads, d_reward, gammas, frozen_out, keep, state_out, degenerate = out
    if state_out is None:
        state_out = state

    keep_idx = np.flatnonzero(keep)
    batch_loss = float(np.mean(np.asarray(losses)[keep_idx]))
    grad = None
    if want_grad:
        grad = np.zeros_like(policy.logits)
        for i in keep_idx:
            grad += grads[i]
        grad /= len(keep_idx)

    diag = None
    if want_diag:
        diag = _make_diagnostics(
            dlog=[p.dlog for p in pairs],
            d_reward=d_reward,
            dpmi=[p.dpmi for p in pairs],
            gamma=gammas,
            loss=losses,
            degenerate=degenerate,
        )
    return BatchEval(batch_loss, grad, diag, state_out, frozen_out)


def _margin_kernel(arg: float):
    """(loss, weight) for the shared -log sigmoid(arg) margin form."""
    return sigmoid_log_loss(arg), 1.0 - sigmoid(arg)


def _eval_margin_policy_only(pairs, cfg, frozen, want_grad):
    length_norm = effective_length_norm(cfg)
    n = len(pairs)
    if cfg.method == "rmipo":
        if frozen is not None and frozen.gammas is not None:
            gammas = np.asarray(frozen.gammas, dtype=np.float64)
        else:
            gammas = np.array([adaptive_gamma(p.dpmi, cfg) for p in pairs])
    else:
        gammas = np.full(n, cfg.gamma, dtype=np.float64)
    losses = np.empty(n)
    d_reward = np.empty(n)
    grads = [None] * n
    for i, p in enumerate(pairs):
        d, dg = _normalized_delta(p, cfg.beta, length_norm)
        loss, w = _margin_kernel(d - gammas[i])
        losses[i] = loss
        d_reward[i] = d
        if want_grad:
            grads[i] = -w * dg
    frozen_out = FrozenStats(gammas=gammas.copy())
    return losses, grads, d_reward, gammas, frozen_out, np.ones(n, bool), None, False


def _eval_alpha_dpo(pairs, cfg, frozen, want_grad):
    n = len(pairs)
    m = np.array([cfg.beta * p.ref_logratio_delta for p in pairs])
    degenerate = False
    if frozen is not None and frozen.m_star is not None:
        m_star = np.asarray(frozen.m_star, dtype=np.float64)
    elif n == 1:
        m_star = np.zeros(1)
        degenerate = True
    else:
        std = float(np.std(m))
        m_star = (m - np.mean(m)) / std if std > 0 else np.zeros(n)
    gammas = cfg.gamma + cfg.alpha * m_star
    losses = np.empty(n)
    d_reward = np.empty(n)
    grads = [None] * n
    for i, p in enumerate(pairs):
        u, ug = _normalized_delta(p, cfg.beta, True)
        loss, w = _margin_kernel(u - gammas[i])
        losses[i] = loss
        d_reward[i] = u
        if want_grad:
            grads[i] = -w * ug
    frozen_out = FrozenStats(m_star=m_star.copy())
    return losses, grads, d_reward, gammas, frozen_out, np.ones(n, bool), None, degenerate


def _eval_dpo_family(pairs, cfg, frozen, want_grad, state, eps_rule):
    n = len(pairs)
    deltas = np.array([p.ref_logratio_delta for p in pairs])
    keep = np.ones(n, bool)
    state_out = None
    m0 = None

    if cfg.method == "dpo":
        betas = np.full(n, cfg.beta)
    elif cfg.method == "beta-dpo":
        m = cfg.beta * deltas
        if frozen is not None and frozen.betas is not None:
            betas = np.asarray(frozen.betas, dtype=np.float64)
            keep = np.asarray(frozen.keep, dtype=bool)
            m0 = frozen.m0
            state_out = m0
        else:
            batch_mean = float(np.mean(m))
            m0 = (
                batch_mean
                if state is None
                else BETA_DPO_EMA_DECAY * state + (1 - BETA_DPO_EMA_DECAY) * batch_mean
            )
            state_out = m0
            betas = beta_dpo_beta_i(m, m0, cfg.alpha, cfg.beta)
            n_drop = math.ceil(cfg.rho * n)
            if n_drop >= n:
                raise ConfigError(
                    f"rho={cfg.rho} drops all {n} samples in this batch"
                )
            if n_drop:
                # stable sort so ties drop deterministically
                order = np.argsort(-np.abs(m - m0), kind="stable")
                keep = np.ones(n, bool)
                keep[order[:n_drop]] = False
    else:  # eps-dpo
        if frozen is not None and frozen.betas is not None:
            betas = np.asarray(frozen.betas, dtype=np.float64)
        else:
            rule = eps_rule or default_eps_rule
            beta_minus = cfg.beta / (1.0 + cfg.epsilon)
            beta_plus = cfg.beta * (1.0 + cfg.epsilon)
            betas = np.array(
                [
                    rule(
                        EpsSampleStats(
                            dlog_policy=p.dlog,
                            dlog_ref=p.rw - p.rl,
                            beta=cfg.beta,
                            beta_minus=beta_minus,
                            beta_plus=beta_plus,
                        )
                    )
                    for p in pairs
                ]
            )

    losses = np.empty(n)
    d_reward = np.empty(n)
    gammas = np.empty(n)
    grads = [None] * n
    for i, p in enumerate(pairs):
        u = betas[i] * deltas[i]
        loss, w = _margin_kernel(u)
        losses[i] = loss
        d_reward[i] = betas[i] * p.dlog
        gammas[i] = betas[i] * (p.rw - p.rl)
        if want_grad:
            grads[i] = -w * betas[i] * (p.gw - p.gl)
    frozen_out = FrozenStats(betas=betas.copy(), keep=keep.copy(), m0=m0)
    return losses, grads, d_reward, gammas, frozen_out, keep, state_out, False


def _eval_kto(pairs, cfg, frozen, want_grad):
    n = len(pairs)
    logratio_l = np.array([p.ll - p.rl for p in pairs])
    if frozen is not None and frozen.z_ref is not None:
        z_ref = float(frozen.z_ref)
    else:
        z_ref = max(0.0, float(np.mean(cfg.beta * logratio_l)))
    losses = np.empty(n)
    d_reward = np.empty(n)
    grads = [None] * n
    for i, p in enumerate(pairs):
        aw = cfg.beta * (p.lw - p.rw) - z_ref
        al = z_ref - cfg.beta * (p.ll - p.rl)
        sw, sl = sigmoid(aw), sigmoid(al)
        losses[i] = -cfg.lambda_w * sw + cfg.lambda_l * sl
        d_reward[i] = cfg.beta * p.dlog
        if want_grad:
            grads[i] = (
                -cfg.lambda_w * sw * (1.0 - sw) * cfg.beta * p.gw
                - cfg.lambda_l * sl * (1.0 - sl) * cfg.beta * p.gl
            )
    gammas = np.full(n, z_ref)
    frozen_out = FrozenStats(z_ref=z_ref)
    return losses, grads, d_reward, gammas, frozen_out, np.ones(n, bool), None, False


def _eval_ipo(pairs, cfg, want_grad):
    n = len(pairs)
    target = 1.0 / (2.0 * cfg.tau)
    losses = np.empty(n)
    d_reward = np.empty(n)
    grads = [None] * n
    for i, p in enumerate(pairs):
        d = p.ref_logratio_delta
        losses[i] = (d - target) ** 2
        d_reward[i] = cfg.beta * p.dlog
        if want_grad:
            grads[i] = 2.0 * (d - target) * (p.gw - p.gl)
    gammas = np.full(n, target)
    return losses, grads, d_reward, gammas, FrozenStats(), np.ones(n, bool), None, False


def _eval_slic(pairs, cfg, want_grad):
    n = len(pairs)
    losses = np.empty(n)
    d_reward = np.empty(n)
    grads = [None] * n
    for i, p in enumerate(pairs):
        slack = cfg.delta - p.dlog
        losses[i] = max(0.0, slack) - cfg.lam * p.lw
        d_reward[i] = p.dlog
        if want_grad:
            # hinge subgradient: 0 on the inactive branch, including slack == 0
            g = -cfg.lam * p.gw
            if slack > 0:
                g = g - (p.gw - p.gl)
            grads[i] = g
    gammas = np.full(n, cfg.delta)
    return losses, grads, d_reward, gammas, FrozenStats(), np.ones(n, bool), None, False


def _eval_cpo(pairs, cfg, want_grad):
    n = len(pairs)
    losses = np.empty(n)
    d_reward = np.empty(n)
    grads = [None] * n
    for i, p in enumerate(pairs):
        u = cfg.beta * p.dlog
        loss, w = _margin_kernel(u)
        losses[i] = loss - cfg.lam * p.lw
        d_reward[i] = u
        if want_grad:
            grads[i] = -w * cfg.beta * (p.gw - p.gl) - cfg.lam * p.gw
    gammas = np.zeros(n)
    return losses, grads, d_reward, gammas, FrozenStats(), np.ones(n, bool), None, False


def _eval_simper(pairs, cfg, want_grad):
    n = len(pairs)
    losses = np.empty(n)
    d_reward = np.empty(n)
    grads = [None] * n
    for i, p in enumerate(pairs):
        pw = math.exp(p.lw / p.nw)
        pl = math.exp(p.ll / p.nl)
        losses[i] = -pw + pl
        d_reward[i], _ = _normalized_delta(p, cfg.beta, True)
        if want_grad:
            grads[i] = -(pw / p.nw) * p.gw + (pl / p.nl) * p.gl
    gammas = np.zeros(n)
    return losses, grads, d_reward, gammas, FrozenStats(), np.ones(n, bool), None, False


# ---- per-triplet entry points ----

def _single(policy, ref, t, cfg, **kw):
    ev = evaluate_batch(policy, ref, [t], cfg, **kw)
    d = ev.diag
    diag = SampleDiag(
        dlog=float(d.dlog[0]),
        d_reward=float(d.d_reward[0]),
        dpmi=float(d.dpmi[0]),
        gamma=float(d.gamma[0]),
        weight=float(d.weight[0]),
        loss=float(d.loss[0]),
    )
    return ev.loss, ev.grad, diag


def rmipo_loss(policy: PolicyParams, t: PreferenceTriplet, cfg: LossConfig):
    """Adaptive-margin loss: -log sigmoid(dR - gamma(dpmi)), gamma detached."""
    return _single(policy, None, t, replace(cfg, method="rmipo"))


def simpo_loss(policy: PolicyParams, t: PreferenceTriplet, beta: float, gamma: float):
    cfg = LossConfig(method="simpo", beta=beta, gamma=gamma)
    return _single(policy, None, t, cfg)


def unified_fixed_loss(
    policy: PolicyParams,
    t: PreferenceTriplet,
    beta: float,
    gamma: float,
    length_norm: bool = True,
):
    cfg = LossConfig(
        method="unified-fixed", beta=beta, gamma=gamma, length_norm=length_norm
    )
    return _single(policy, None, t, cfg)


def dpo_loss(policy: PolicyParams, ref: PolicyParams, t: PreferenceTriplet, beta: float):
    cfg = LossConfig(method="dpo", beta=beta)
    return _single(policy, ref, t, cfg)


def ipo_loss(policy: PolicyParams, ref: PolicyParams, t: PreferenceTriplet, tau: float):
    cfg = LossConfig(method="ipo", tau=tau)
    return _single(policy, ref, t, cfg)


def slic_loss(
    policy: PolicyParams, t: PreferenceTriplet, delta: float, lam: float
):
    cfg = LossConfig(method="slic", delta=delta, lam=lam)
    return _single(policy, None, t, cfg)


def cpo_loss(policy: PolicyParams, t: PreferenceTriplet, beta: float, lam: float):
    cfg = LossConfig(method="cpo", beta=beta, lam=lam)
    return _single(policy, None, t, cfg)


def simper_loss(policy: PolicyParams, t: PreferenceTriplet):
    """Hyperparameter-free perplexity objective: -exp(lw/|yw|) + exp(ll/|yl|)."""
    return _single(policy, None, t, LossConfig(method="simper"))


def kto_loss(
    policy: PolicyParams,
    ref: PolicyParams,
    batch: list[PreferenceTriplet],
    beta: float,
    lambda_w: float,
    lambda_l: float,
):
    cfg = LossConfig(method="kto", beta=beta, lambda_w=lambda_w, lambda_l=lambda_l)
    ev = evaluate_batch(policy, ref, batch, cfg)
    return ev.loss, ev.grad, ev.diag


def alpha_dpo_loss(
    policy: PolicyParams,
    ref: PolicyParams,
    batch: list[PreferenceTriplet],
    beta: float,
    gamma: float,
    alpha: float,
):
    cfg = LossConfig(method="alpha-dpo", beta=beta, gamma=gamma, alpha=alpha)
    ev = evaluate_batch(policy, ref, batch, cfg)
    return ev.loss, ev.grad, ev.diag


def beta_dpo_loss(
    policy: PolicyParams,
    ref: PolicyParams,
    batch: list[PreferenceTriplet],
    beta: float,
    alpha: float,
    rho: float,
    state: float | None = None,
):
    """Returns (loss, grad, diag, new_state); state is the EMA anchor M0."""
    cfg = LossConfig(method="beta-dpo", beta=beta, alpha=alpha, rho=rho)
    ev = evaluate_batch(policy, ref, batch, cfg, state=state)
    return ev.loss, ev.grad, ev.diag, ev.state


def eps_dpo_loss(
    policy: PolicyParams,
    ref: PolicyParams,
    batch: list[PreferenceTriplet],
    beta: float,
    epsilon: float,
    rule: EpsRule | None = None,
):
    cfg = LossConfig(method="eps-dpo", beta=beta, epsilon=epsilon)
    ev = evaluate_batch(policy, ref, batch, cfg, eps_rule=rule)
    return ev.loss, ev.grad, ev.diag
