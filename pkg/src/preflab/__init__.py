"""Exact tabular laboratory for offline preference optimization.

Synthetic Bradley-Terry corpora, a dense autoregressive policy scored in
closed form, eleven preference objectives under one margin view (including an
adaptive PMI-driven margin), a deterministic trainer, and finite-difference
diagnostics. Everything runs in float64 on a desk; no sampling noise hides in
any number this package reports.
"""

from .corpus import (
    BOS,
    EOS,
    OracleReward,
    PreferenceTriplet,
    Sequence,
    Vocab,
    bt_label,
    generate_dataset,
    generate_template_popularity_dataset,
    generate_token_popularity_dataset,
    load_dataset,
    oracle_reward,
    prompt_seq,
    random_oracle,
    response_seq,
    sample_prompt,
    sample_response,
    save_dataset,
)
from .diagnostics import (
    DominanceRow,
    Histogram,
    delta_log_distribution,
    delta_log_values,
    gamma_dominance_experiment,
    gamma_histogram,
    gamma_values,
    grad_check,
    make_histogram,
    random_grad_check_instance,
    reward_density,
    write_dominance_csv,
    write_dominance_weights_csv,
    write_histogram_csv,
)
from .errors import (
    ConfigError,
    DataFormatError,
    NumericalAbort,
    PreflabError,
)
from .numerics import log_softmax, sigmoid, softmax, softplus
from .objectives import (
    METHODS,
    SCHEDULES,
    BatchDiagnostics,
    BatchEval,
    EpsRule,
    EpsSampleStats,
    FrozenStats,
    LossConfig,
    SampleDiag,
    adaptive_gamma,
    alpha_dpo_loss,
    beta_dpo_beta_i,
    beta_dpo_loss,
    cpo_loss,
    default_eps_rule,
    delta_pmi,
    delta_reward,
    dpo_loss,
    effective_length_norm,
    eps_dpo_loss,
    evaluate_batch,
    implicit_margin,
    ipo_loss,
    kto_loss,
    per_sample_weight,
    pmi,
    rmipo_loss,
    sigmoid_log_loss,
    simper_loss,
    simpo_loss,
    slic_loss,
    unified_fixed_loss,
    unified_loss,
    write_diagnostics_csv,
)
from .policy import (
    PolicyParams,
    context_rows,
    gaussian_policy,
    load_checkpoint,
    save_checkpoint,
    seq_logprob,
    seq_logprob_and_grad,
    seq_logprob_grad,
    seq_logprob_marginal,
    snapshot,
    zeros_policy,
)
from .trainer import (
    AdamState,
    StepRecord,
    TrainConfig,
    TrainHistory,
    TrainResult,
    evaluate_win_rate,
    optimizer_step,
    train,
    write_history_csv,
)

__version__ = "0.1.0"
