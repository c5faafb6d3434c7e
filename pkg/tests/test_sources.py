import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from entropytest.bits import BitSequence
from entropytest.sources import (
    ModelError,
    binary_entropy,
    entropy_rate,
    load_model_file,
    log_prob,
    log_prob_batch,
    make_bernoulli,
    make_hmm,
    make_markov,
    make_uniform,
    model_id,
    parse_model,
    sample,
    stationary_distribution,
)

import oracles

MARKOV1 = make_markov(1, [0.9, 0.5])


def test_bernoulli_half_has_unit_entropy():
    est = entropy_rate(make_bernoulli(0.5))
    assert est.value == 1.0
    assert est.method == "closed_form" and est.ci_halfwidth == 0.0


def test_bernoulli_0501_entropy():
    # -p log2 p - (1-p) log2 (1-p) at p = 0.501
    p = 0.501
    expected = -(p * math.log2(p) + (1 - p) * math.log2(1 - p))
    assert entropy_rate(make_bernoulli(p)).value == pytest.approx(expected, abs=1e-15)
    assert entropy_rate(make_bernoulli(p)).value == pytest.approx(0.99999712, abs=1e-8)


@pytest.mark.parametrize("p", [0.0, 1.0, -0.1, 1.5, float("nan")])
def test_bernoulli_domain(p):
    with pytest.raises(ModelError):
        make_bernoulli(p)


def test_markov_order0_matches_bernoulli():
    m0, b = make_markov(0, {0: 0.8}), make_bernoulli(0.8)
    assert sample(m0, 500, 3) == sample(b, 500, 3)
    x = sample(b, 40, 1)
    assert log_prob(m0, x) == log_prob(b, x)
    assert entropy_rate(m0).value == entropy_rate(b).value


def test_markov_stationary_and_entropy():
    pi = MARKOV1.context_stationary()
    assert pi == pytest.approx([5 / 6, 1 / 6], abs=1e-14)
    h = 5 / 6 * binary_entropy(0.9) + 1 / 6 * binary_entropy(0.5)
    est = entropy_rate(MARKOV1)
    assert est.value == pytest.approx(h, abs=1e-14)
    # the quoted 0.55757 is a rounding of this value
    assert est.value == pytest.approx(0.557496, abs=1e-6)


@pytest.mark.parametrize("table", [{0: 1.0, 1: 0.5}, {0: 0.5}, [0.3, 0.0], [0.2, 0.3, 0.4]])
def test_markov_domain(table):
    with pytest.raises(ModelError):
        make_markov(1, table)


def test_stationary_distribution_examples():
    assert stationary_distribution([[0.5, 0.5], [0.5, 0.5]]) == pytest.approx([0.5, 0.5])
    P = [[0.9, 0.1], [0.5, 0.5]]
    pi = stationary_distribution(P)
    assert pi == pytest.approx(oracles.stationary_two_state(P), abs=1e-14)
    assert np.abs(pi @ np.array(P) - pi).max() <= 1e-12
    with pytest.raises(ModelError):
        stationary_distribution([[0.9, 0.09], [0.5, 0.5]])
    with pytest.raises(ModelError):
        stationary_distribution([[0.5, 0.5, 0.0]])


def test_stationary_residual_random_chains():
    rng = np.random.default_rng(5)
    for m in (3, 5, 16):
        P = rng.random((m, m)) + 0.01
        P /= P.sum(axis=1, keepdims=True)
        pi = stationary_distribution(P)
        assert np.abs(pi @ P - pi).max() <= 1e-12
        assert pi.sum() == pytest.approx(1.0, abs=1e-14)


def test_sample_determinism():
    u = make_uniform()
    assert sample(u, 8, 42) == sample(u, 8, 42)
    assert sample(MARKOV1, 300, 9) == sample(MARKOV1, 300, 9)


def test_sample_bernoulli_frequency():
    x = sample(make_bernoulli(0.8), 100_000, 2024)
    assert abs(1 - x.count_ones() / len(x) - 0.8) <= 0.01


def test_sample_markov_transition_frequency():
    x = sample(MARKOV1, 100_000, 2024).array
    prev, nxt = x[:-1], x[1:]
    p00 = np.count_nonzero((prev == 0) & (nxt == 0)) / np.count_nonzero(prev == 0)
    assert abs(p00 - 0.9) <= 0.01


def test_log_prob_uniform_and_bernoulli():
    assert log_prob(make_uniform(), "0110100") == -7.0
    assert log_prob(make_bernoulli(0.8), "000") == pytest.approx(math.log2(0.512), abs=1e-15)


def test_uniform_equals_bernoulli_half():
    u, b = make_uniform(), make_bernoulli(0.5)
    for seed in range(5):
        x = sample(u, 64, seed)
        assert x == sample(b, 64, seed)
        assert log_prob(u, x) == log_prob(b, x)
    assert entropy_rate(u) == entropy_rate(b)


def _all_words(n):
    idx = np.arange(1 << n)
    return ((idx[:, None] >> np.arange(n - 1, -1, -1)) & 1).astype(np.uint8)


HMM2 = make_hmm([[0.7, 0.3], [0.2, 0.8]], [0.9, 0.3])
HMM3 = make_hmm([[0.6, 0.3, 0.1], [0.2, 0.5, 0.3], [0.25, 0.25, 0.5]], [0.95, 0.5, 0.1])


@pytest.mark.parametrize("model", [
    make_uniform(), make_bernoulli(0.8), MARKOV1,
    make_markov(2, [0.9, 0.2, 0.6, 0.35]),
    make_markov(3, [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8]),
    HMM2,
], ids=model_id)
def test_normalization(model):
    top = 12 if model.kind != "hmm" else 9
    for n in (1, 2, 3, 5, top):
        probs = 2.0 ** log_prob_batch(model, _all_words(n))
        assert math.fsum(probs) == pytest.approx(1.0, abs=1e-9)


def test_log_prob_batch_matches_single():
    m = make_markov(2, [0.9, 0.2, 0.6, 0.35])
    W = _all_words(7)
    batch = log_prob_batch(m, W)
    single = [log_prob(m, row) for row in W]
    assert np.allclose(batch, single, atol=1e-12)


@pytest.mark.parametrize("model", [MARKOV1, make_markov(2, [0.9, 0.2, 0.6, 0.35])], ids=model_id)
def test_markov_stationarity(model):
    for n in range(2, 11):
        for w in oracles.words(n - 1)[:: max(1, 2 ** (n - 1) // 64)]:
            pw = 2.0 ** log_prob(model, w)
            extensions = 2.0 ** log_prob(model, w + "0") + 2.0 ** log_prob(model, w + "1")
            as_suffix = 2.0 ** log_prob(model, "0" + w) + 2.0 ** log_prob(model, "1" + w)
            assert extensions == pytest.approx(pw, abs=1e-9)
            assert as_suffix == pytest.approx(pw, abs=1e-9)


def test_markov_matches_direct_product():
    for w in oracles.words(8):
        assert 2.0 ** log_prob(MARKOV1, w) == pytest.approx(oracles.markov1_prob(0.9, 0.5, w), rel=1e-12)


@pytest.mark.parametrize("model", [HMM2, HMM3], ids=["S2", "S3"])
def test_hmm_forward_matches_path_sum(model):
    init = model.hidden_stationary()
    rng = np.random.default_rng(0)
    for n in (1, 2, 5, 8):
        for _ in range(4):
            x = "".join(rng.choice(["0", "1"], size=n))
            brute = oracles.hmm_prob(init, model.trans, model.emit0, x)
            assert 2.0 ** log_prob(model, x) == pytest.approx(brute, rel=1e-9, abs=1e-12)
    x = "0110010111"
    assert 2.0 ** log_prob(HMM2, x) == pytest.approx(oracles.hmm_prob(HMM2.hidden_stationary(), HMM2.trans, HMM2.emit0, x), abs=1e-9)


def test_hmm_entropy_degenerate_bernoulli():
    m = make_hmm([[0.6, 0.4], [0.3, 0.7]], [0.8, 0.8])
    est = entropy_rate(m, n_used=4096, trials=16, seed=1)
    assert est.method == "monte_carlo_smb"
    assert est.ci_halfwidth > 0
    assert abs(est.value - binary_entropy(0.8)) <= est.ci_halfwidth


def test_hmm_rejects_zero_transition():
    with pytest.raises(ModelError):
        make_hmm([[1.0, 0.0], [0.5, 0.5]], [0.5, 0.5])
    with pytest.raises(ModelError):
        make_hmm([[0.5, 0.5], [0.5, 0.5]], [1.0, 0.5])


@settings(max_examples=40, deadline=None)
@given(p=st.floats(0.01, 0.99), q=st.floats(0.01, 0.99))
def test_entropy_bounds(p, q):
    for m in (make_bernoulli(p), make_markov(1, [p, q])):
        assert 0.0 <= entropy_rate(m).value <= 1.0


def test_model_strings_round_trip(tmp_path):
    for m in (make_uniform(), make_bernoulli(0.8), MARKOV1, HMM2):
        assert parse_model(model_id(m)) == m
    f = tmp_path / "m.txt"
    f.write_text("# order-1 chain\nkind=markov\norder=1\np0_ctx0=0.9\np0_ctx1=0.5\n")
    assert load_model_file(f) == MARKOV1
    f.write_text("kind=markov\norder=1\np0_ctx0=0.9\n")
    with pytest.raises(ModelError):
        load_model_file(f)
    with pytest.raises(ModelError):
        parse_model("bernoulli:p0=0.8,order=2")


def test_bitsequence_basics():
    x = BitSequence("0110")
    assert len(x) == 4 and str(x) == "0110" and x.count_ones() == 2
    assert x.complement() == "1001"
    with pytest.raises(ValueError):
        BitSequence("")
    with pytest.raises(ValueError):
        BitSequence([0, 2])
