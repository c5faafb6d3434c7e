import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from entropytest.coders import (
    CTW,
    KT,
    LZ78,
    Best,
    Type2P,
    best_code_length,
    ctw_code_length,
    kt_code_length,
    lz78_code_length,
    parse_coder,
    type2p_code_length,
)
from entropytest.sources import binary_entropy, entropy_rate, make_bernoulli, make_markov, sample

import oracles

bitstrings = st.text(alphabet="01", min_size=1, max_size=64)


# --- LZ78 -------------------------------------------------------------------

def test_lz78_examples():
    assert lz78_code_length("0") == 1
    # 0 | 1 | 10 | trailing 0  ->  1 + 2 + 3 + 2
    assert lz78_code_length("01100") == 8
    # 0 | 00 | 000 | 0000 are four complete phrases: 1 + 2 + 3 + 3
    assert lz78_code_length("0" * 10) == 9
    assert lz78_code_length("0" * 9) == 1 + 2 + 3 + 2


@settings(max_examples=300)
@given(bitstrings)
def test_lz78_matches_string_parse(x):
    assert lz78_code_length(x) == oracles.lz78_length(x)


# --- KT ---------------------------------------------------------------------

def test_kt_examples():
    assert oracles.kt_prob("0") == Fraction(1, 2)
    assert oracles.kt_prob("00") == Fraction(3, 8)
    assert oracles.kt_prob("01") == Fraction(1, 8)
    assert kt_code_length("0") == 1
    assert kt_code_length("00") == 2
    assert kt_code_length("01") == 3


@settings(max_examples=300)
@given(bitstrings)
def test_kt_matches_exact_rational(x):
    assert kt_code_length(x) == oracles.ceil_neglog2(oracles.kt_prob(x))


# --- CTW --------------------------------------------------------------------

@settings(max_examples=200)
@given(bitstrings)
def test_ctw_depth0_is_kt(x):
    assert ctw_code_length(x, 0) == kt_code_length(x)


def test_ctw_depth1_hand_evaluated():
    # "00" with initial context 0: both symbols land in the ctx-0 leaf (KT 3/8),
    # the ctx-1 leaf is empty; root KT on "00" is also 3/8.
    leaf0, leaf1, root_kt = Fraction(3, 8), Fraction(1), Fraction(3, 8)
    pw = (root_kt + leaf0 * leaf1) / 2
    assert pw == oracles.ctw_prob("00", 1)
    assert ctw_code_length("00", 1) == oracles.ceil_neglog2(pw) == 2


@settings(max_examples=150, deadline=None)
@given(bitstrings.filter(lambda s: len(s) <= 24), st.integers(0, 5))
def test_ctw_matches_tree_recursion(x, depth):
    assert ctw_code_length(x, depth) == oracles.ceil_neglog2(oracles.ctw_prob(x, depth))


def test_ctw_markov_convergence():
    model = make_markov(1, [0.9, 0.5])
    h = entropy_rate(model).value
    x = sample(model, 1 << 16, 11)
    assert abs(ctw_code_length(x, 4) / len(x) - h) <= 0.02


# --- type2p and best ----------------------------------------------------------

def test_type2p_examples():
    assert type2p_code_length("0000") == 3
    assert type2p_code_length("0101") == 6
    assert type2p_code_length("0") == type2p_code_length("1") == 1


@settings(max_examples=300)
@given(bitstrings)
def test_type2p_matches_formula(x):
    assert type2p_code_length(x) == oracles.type2p_length(x)


def test_best_examples():
    x = "01100"
    assert best_code_length(x, [KT()]) == kt_code_length(x)
    assert best_code_length(x, [KT(), LZ78()]) == 1 + min(kt_code_length(x), 8)
    with pytest.raises(ValueError):
        Best(())


# --- invariants ---------------------------------------------------------------

def _all_words(n):
    idx = np.arange(1 << n)
    return ((idx[:, None] >> np.arange(n - 1, -1, -1)) & 1).astype(np.uint8)


@pytest.mark.parametrize("coder", [LZ78(), KT(), CTW(0), CTW(1), CTW(4), Type2P(), Best((KT(), LZ78(), Type2P()))], ids=str)
def test_kraft_small_n(coder):
    for n in range(1, 11):
        lengths = coder.batch(_all_words(n))
        assert lengths.min() >= 1
        assert math.fsum(2.0 ** -lengths.astype(float)) <= 1.0 + 1e-12


@pytest.mark.parametrize("coder", [KT(), Type2P(), CTW(3), Best((KT(), LZ78()))], ids=str)
def test_batch_matches_scalar(coder):
    W = _all_words(9)
    assert coder.batch(W).tolist() == [coder(row) for row in W]


@settings(max_examples=200)
@given(bitstrings)
def test_complement_symmetry(x):
    comp = "".join("1" if c == "0" else "0" for c in x)
    assert kt_code_length(x) == kt_code_length(comp)
    assert type2p_code_length(x) == type2p_code_length(comp)


def test_determinism():
    x = sample(make_bernoulli(0.7), 2000, 1)
    for coder in (LZ78(), KT(), CTW(8), Type2P()):
        assert coder(x) == coder(x)


def test_kt_universality_bernoulli():
    rates = [kt_code_length(sample(make_bernoulli(0.8), 1 << 16, s)) / (1 << 16) for s in range(32)]
    assert abs(np.mean(rates) - binary_entropy(0.8)) <= 0.01


def test_lz78_universality_bernoulli():
    h = binary_entropy(0.8)
    gaps = []
    for n in (1 << 14, 1 << 17, 1 << 20):
        x = sample(make_bernoulli(0.8), n, 5)
        gaps.append(lz78_code_length(x) / n - h)
    assert gaps[0] > gaps[1] > gaps[2]
    assert abs(gaps[2]) <= 0.12


def test_parse_coder_grammar():
    assert parse_coder("lz78") == LZ78()
    assert parse_coder("kt") == KT()
    assert parse_coder("type2p") == Type2P()
    assert parse_coder("ctw:D=4") == CTW(4)
    assert parse_coder("ctw") == CTW(8)
    assert parse_coder("best:kt,lz78") == Best((KT(), LZ78()))
    assert parse_coder("best:kt,ctw:D=2").name == "best:kt,ctw:D=2"
    for bad in ("zip", "ctw:K=3", "ctw:D=x", "best:", "kt:D=1", "ctw:D=-1"):
        with pytest.raises(ValueError):
            parse_coder(bad)
