"""Lossless code-length functions |phi(x)| in whole bits.

Only lengths are computed; no bitstream is emitted.  Every coder is a
complete description of a prefix code for each fixed n, so the lengths obey
Kraft's inequality, which is what gives the compression test its level.

Coder strings: ``lz78``, ``kt``, ``ctw:D=<int>``, ``type2p``,
``best:<comma-separated coders>``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import gammaln

from .bits import BitSequence, as_bits

__all__ = [
    "CodeLengthFunction",
    "LZ78",
    "KT",
    "CTW",
    "Type2P",
    "Best",
    "lz78_code_length",
    "kt_code_length",
    "ctw_code_length",
    "type2p_code_length",
    "best_code_length",
    "kt_log2_prob",
    "ctw_log2_prob",
    "parse_coder",
    "DEFAULT_CODER",
]

DEFAULT_CODER = "ctw:D=8"
DEFAULT_CTW_DEPTH = 8

_LN2 = math.log(2.0)
_LGAMMA_HALF = math.lgamma(0.5)


def ceil_log2(m: int) -> int:
    """Exact ceil(log2 m) for a positive integer."""
    if m < 1:
        raise ValueError("ceil_log2 needs a positive integer")
    return (m - 1).bit_length()


def _bits_from_neglog2(v: float) -> int:
    # snap to 1e-9 before the ceiling so rounding noise cannot add a bit
    return max(1, math.ceil(round(v, 9)))


# --- LZ78 -------------------------------------------------------------------

def lz78_code_length(x) -> int:
    """Cost of the incremental (LZ78) parse of x.

    Complete phrase i (1-based) costs ceil(log2 i) bits for the index of its
    prefix among the i entries already known (the empty phrase included) plus
    one bit for the new symbol.  A trailing incomplete phrase costs
    ceil(log2(c + 1)) bits, c being the number of complete phrases.
    """
    bits = as_bits(x).array.tolist()
    trie = {}
    node = 0  # 0 is the empty phrase
    c = 0
    total = 0
    for b in bits:
        key = (node << 1) | b
        child = trie.get(key)
        if child is None:
            c += 1
            trie[key] = c
            total += (c - 1).bit_length() + 1
            node = 0
        else:
            node = child
    if node:
        total += c.bit_length()
    return total


# --- Krichevsky-Trofimov ----------------------------------------------------

def kt_log2_prob(zeros, ones):
    """log2 of the KT (add-1/2) block probability for the given symbol counts.

    Works elementwise on arrays.  Uses
    P = Gamma(a + 1/2) Gamma(b + 1/2) / (pi Gamma(a + b + 1)).
    """
    a = np.asarray(zeros, dtype=float)
    b = np.asarray(ones, dtype=float)
    ln = gammaln(a + 0.5) + gammaln(b + 0.5) - 2.0 * _LGAMMA_HALF - gammaln(a + b + 1.0)
    return ln / _LN2


def kt_code_length(x) -> int:
    """ceil(-log2 P_KT(x)) with the sequential add-1/2 estimator."""
    bits = as_bits(x)
    ones = bits.count_ones()
    return _bits_from_neglog2(-float(kt_log2_prob(len(bits) - ones, ones)))


def _kt_lengths_batch(words: np.ndarray) -> np.ndarray:
    n = words.shape[1]
    ones = words.sum(axis=1, dtype=np.int64)
    v = -kt_log2_prob(n - ones, ones)
    return np.maximum(1, np.ceil(np.round(v, 9))).astype(np.int64)


# --- context-tree weighting -------------------------------------------------

def ctw_log2_prob(x, depth: int = DEFAULT_CTW_DEPTH) -> float:
    """log2 of the binary CTW mixture over tree sources of depth <= ``depth``.

    The context of x_t is x_{t-1} ... x_{t-depth}, with ``depth`` zeros assumed
    before x_1.  Each node weighs its KT estimate against its children's
    product with weight 1/2; nodes at ``depth`` are leaves.
    """
    if depth < 0:
        raise ValueError("CTW depth must be non-negative")
    bits = as_bits(x).array.astype(np.int64)
    n = bits.size
    padded = np.concatenate([np.zeros(depth, dtype=np.int64), bits])
    # bit j of ctx is x_{t-1-j}: a depth-d node is identified by ctx & (2**d - 1)
    ctx = np.zeros(n, dtype=np.int64)
    for j in range(depth):
        ctx |= padded[depth - 1 - j:depth - 1 - j + n] << j
    size = 1 << depth
    zeros = np.bincount(ctx[bits == 0], minlength=size).astype(float)
    ones = np.bincount(ctx[bits == 1], minlength=size).astype(float)
    pw = kt_log2_prob(zeros, ones)
    for d in range(depth - 1, -1, -1):
        half = 1 << d
        # children of node c at depth d are c and c + 2**d at depth d + 1
        children = pw[:half] + pw[half:]
        zeros = zeros[:half] + zeros[half:]
        ones = ones[:half] + ones[half:]
        pe = kt_log2_prob(zeros, ones)
        pw = np.logaddexp2(pe, children) - 1.0
    return float(pw[0])


def ctw_code_length(x, depth: int = DEFAULT_CTW_DEPTH) -> int:
    return _bits_from_neglog2(-ctw_log2_prob(x, depth))


# --- two-part type code -----------------------------------------------------

def type2p_code_length(x) -> int:
    """ceil(log2(n+1)) bits for the number of ones k, then ceil(log2 C(n,k)) for the index in the type class."""
    bits = as_bits(x)
    n = len(bits)
    return ceil_log2(n + 1) + ceil_log2(math.comb(n, bits.count_ones()))


# --- coder objects ----------------------------------------------------------

class CodeLengthFunction:
    """A named code-length function; call it on a bit sequence to get |phi(x)|."""

    id: str = ""

    def __call__(self, x) -> int:
        raise NotImplementedError

    def batch(self, words: np.ndarray) -> np.ndarray:
        """Code lengths for every row of a 2-D 0/1 array."""
        return np.fromiter((self(BitSequence(row)) for row in words), dtype=np.int64, count=len(words))

    @property
    def name(self) -> str:
        return self.id

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class LZ78(CodeLengthFunction):
    id = "lz78"

    def __call__(self, x) -> int:
        return lz78_code_length(x)


@dataclass(frozen=True)
class KT(CodeLengthFunction):
    id = "kt"

    def __call__(self, x) -> int:
        return kt_code_length(x)

    def batch(self, words):
        return _kt_lengths_batch(np.asarray(words))


@dataclass(frozen=True)
class CTW(CodeLengthFunction):
    depth: int = DEFAULT_CTW_DEPTH
    id = "ctw"

    def __post_init__(self):
        if self.depth < 0:
            raise ValueError("CTW depth must be non-negative")

    def __call__(self, x) -> int:
        return ctw_code_length(x, self.depth)

    @property
    def name(self) -> str:
        return f"ctw:D={self.depth}"


@dataclass(frozen=True)
class Type2P(CodeLengthFunction):
    id = "type2p"

    def __call__(self, x) -> int:
        return type2p_code_length(x)

    def batch(self, words):
        words = np.asarray(words)
        n = words.shape[1]
        head = ceil_log2(n + 1)
        per_k = np.array([head + ceil_log2(math.comb(n, k)) for k in range(n + 1)], dtype=np.int64)
        return per_k[words.sum(axis=1, dtype=np.int64)]


@dataclass(frozen=True)
class Best(CodeLengthFunction):
    """ceil(log2 m) header naming the winning coder, then its codeword."""

    coders: tuple = ()
    id = "best"

    def __post_init__(self):
        if not self.coders:
            raise ValueError("best needs at least one coder")

    @property
    def header_bits(self) -> int:
        return ceil_log2(len(self.coders))

    def __call__(self, x) -> int:
        return self.header_bits + min(c(x) for c in self.coders)

    def batch(self, words):
        return self.header_bits + np.min(np.stack([c.batch(words) for c in self.coders]), axis=0)

    @property
    def name(self) -> str:
        return "best:" + ",".join(c.name for c in self.coders)


def best_code_length(x, coders: Sequence[CodeLengthFunction]) -> int:
    return Best(tuple(coders))(x)


def _parse_single(text: str) -> CodeLengthFunction:
    head, _, params = text.strip().partition(":")
    head = head.strip().lower()
    if head == "lz78" and not params:
        return LZ78()
    if head == "kt" and not params:
        return KT()
    if head == "type2p" and not params:
        return Type2P()
    if head == "ctw":
        if not params:
            return CTW()
        key, eq, value = params.partition("=")
        if key.strip().upper() != "D" or not eq:
            raise ValueError(f"bad ctw parameters {params!r}; expected ctw:D=<int>")
        try:
            depth = int(value)
        except ValueError:
            raise ValueError(f"ctw depth must be an integer, got {value!r}") from None
        return CTW(depth)
    raise ValueError(f"unknown coder {text!r}; expected lz78, kt, ctw:D=<int>, type2p or best:<list>")


def parse_coder(text: str) -> CodeLengthFunction:
    """Parse a coder selection string."""
    text = text.strip()
    head, _, rest = text.partition(":")
    if head.strip().lower() == "best":
        items = [s for s in (p.strip() for p in rest.split(",")) if s]
        if not items:
            raise ValueError("best: needs a non-empty comma-separated coder list")
        return Best(tuple(_parse_single(s) for s in items))
    return _parse_single(text)
