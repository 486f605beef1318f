"""Tabular policy scoring and analytic gradients against independent oracles."""

import math

import numpy as np
import pytest

from preflab.corpus import BOS, Vocab, prompt_seq, response_seq, sample_prompt, sample_response
from preflab.errors import ConfigError, DataFormatError
from preflab.policy import (
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


def naive_seq_logprob(policy: PolicyParams, x, y) -> float:
    """Chain-rule oracle: explicit window tracking and unguarded softmax."""
    ctx = [BOS] * policy.k + list(x.tokens)
    total = 0.0
    for tok in y.tokens:
        row = 0
        for c in ctx[-policy.k:]:
            row = row * policy.vocab_size + c
        z = policy.logits[row]
        p = np.exp(z) / np.exp(z).sum()
        total += math.log(p[tok])
        ctx.append(tok)
    return total


def random_pair(vocab, rng):
    return sample_prompt(vocab, 3, rng), sample_response(vocab, 4, rng)


def test_params_validation():
    with pytest.raises(ConfigError):
        PolicyParams(vocab_size=4, k=2, logits=np.zeros((15, 4)))
    p = zeros_policy(4, 2)
    assert p.n_contexts == 16
    assert p.logits.shape == (16, 4)
    assert p.logits.dtype == np.float64


def test_uniform_policy_anchor():
    policy = zeros_policy(8, 2)
    x = prompt_seq([2, 3])
    y = response_seq([4, 5, 1])
    # three positions, each -log 8 under the untrained uniform table
    assert seq_logprob(policy, x, y) == pytest.approx(-3 * math.log(8), abs=1e-14)
    assert seq_logprob(policy, x, y) == pytest.approx(-6.238324625039507, abs=1e-14)


def test_seq_logprob_matches_naive_oracle():
    rng = np.random.default_rng(31)
    for _ in range(50):
        vocab = Vocab(int(rng.integers(4, 9)))
        k = int(rng.integers(1, 4))
        policy = gaussian_policy(vocab.size, k, 1.0, int(rng.integers(2**31)))
        x, y = random_pair(vocab, rng)
        assert seq_logprob(policy, x, y) == pytest.approx(
            naive_seq_logprob(policy, x, y), abs=1e-12
        )


def test_seq_logprob_is_never_positive():
    rng = np.random.default_rng(32)
    for stdev in (0.5, 5.0, 60.0):
        vocab = Vocab(6)
        policy = gaussian_policy(6, 2, stdev, int(rng.integers(2**31)))
        for _ in range(40):
            x, y = random_pair(vocab, rng)
            assert seq_logprob(policy, x, y) <= 0.0


def test_marginal_is_conditional_with_empty_prompt():
    rng = np.random.default_rng(33)
    vocab = Vocab(7)
    policy = gaussian_policy(7, 2, 0.8, 5)
    for _ in range(25):
        y = sample_response(vocab, 4, rng)
        assert seq_logprob_marginal(policy, y) == seq_logprob(
            policy, prompt_seq([]), y
        )


def test_context_rows_hand_case():
    # V=4, k=2: x=(2,), y=(3, 1); padded context [0, 0, 2, 3, 1]
    rows = context_rows(4, 2, (2,), (3, 1))
    assert rows.tolist() == [0 * 4 + 2, 2 * 4 + 3]
    with pytest.raises(ValueError):
        context_rows(4, 2, (7,), (3, 1))


def test_context_rows_cover_response_positions():
    rng = np.random.default_rng(34)
    vocab = Vocab(5)
    for _ in range(20):
        x, y = random_pair(vocab, rng)
        rows = context_rows(5, 3, x.tokens, y.tokens)
        assert len(rows) == len(y)
        assert (rows >= 0).all() and (rows < 5**3).all()


def test_analytic_gradient_matches_finite_differences():
    rng = np.random.default_rng(35)
    for _ in range(10):
        vocab = Vocab(5)
        policy = gaussian_policy(5, 2, 0.7, int(rng.integers(2**31)))
        x, y = random_pair(vocab, rng)
        grad = seq_logprob_grad(policy, x, y)
        h = 1e-6
        work = snapshot(policy)
        rows = set(context_rows(5, 2, x.tokens, y.tokens).tolist())
        for row in rows:
            for col in range(5):
                orig = work.logits[row, col]
                work.logits[row, col] = orig + h
                f_plus = seq_logprob(work, x, y)
                work.logits[row, col] = orig - h
                f_minus = seq_logprob(work, x, y)
                work.logits[row, col] = orig
                numeric = (f_plus - f_minus) / (2 * h)
                assert abs(grad[row, col] - numeric) < 1e-6


def test_gradient_is_zero_off_visited_rows_and_sums_to_zero():
    rng = np.random.default_rng(36)
    vocab = Vocab(6)
    policy = gaussian_policy(6, 2, 0.5, 9)
    x, y = random_pair(vocab, rng)
    logp, grad = seq_logprob_and_grad(policy, x, y)
    assert logp == seq_logprob(policy, x, y)
    visited = set(context_rows(6, 2, x.tokens, y.tokens).tolist())
    for row in range(policy.n_contexts):
        if row in visited:
            assert abs(grad[row].sum()) < 1e-12  # onehot minus softmax
        else:
            assert (grad[row] == 0).all()


def test_snapshot_is_independent():
    policy = gaussian_policy(5, 2, 0.3, 1)
    copy = snapshot(policy)
    copy.logits[0, 0] += 1.0
    assert policy.logits[0, 0] != copy.logits[0, 0]


def test_checkpoint_round_trip(tmp_path):
    policy = gaussian_policy(6, 2, 0.9, 42)
    path = tmp_path / "ckpt.json"
    save_checkpoint(policy, path)
    again = load_checkpoint(path)
    assert again.vocab_size == 6 and again.k == 2
    assert (again.logits == policy.logits).all()
    # writing the reload reproduces identical bytes
    path2 = tmp_path / "ckpt2.json"
    save_checkpoint(again, path2)
    assert path.read_bytes() == path2.read_bytes()


def test_checkpoint_rejects_malformed_files(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"vocab_size": 6, "k": 2}')
    with pytest.raises(DataFormatError):
        load_checkpoint(path)
    path.write_text('{"vocab_size": 6, "k": 2, "init": "zeros", "logits": [0.0]}')
    with pytest.raises(DataFormatError):
        load_checkpoint(path)
