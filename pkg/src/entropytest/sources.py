"""Stationary ergodic binary sources: exact log-probabilities, sampling, entropy rates.

All sampling goes through numpy's PCG64 generator (``numpy.random.default_rng``)
seeded with the caller's integer seed; experiments derive per-trial seeds as
``seed + trial_index``.  Probabilities are carried as log2 values in double
precision.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .bits import BitSequence, as_bits

__all__ = [
    "SourceModel",
    "EntropyEstimate",
    "binary_entropy",
    "make_uniform",
    "make_bernoulli",
    "make_markov",
    "make_hmm",
    "stationary_distribution",
    "sample",
    "log_prob",
    "log_prob_batch",
    "entropy_rate",
    "parse_model",
    "load_model_file",
    "model_from_params",
    "model_id",
]

ROW_SUM_TOL = 1e-12
STATIONARY_RESIDUAL = 1e-12
MAX_MARKOV_ORDER = 12

HMM_ENTROPY_N = 1 << 16
HMM_ENTROPY_TRIALS = 32


class ModelError(ValueError):
    """Invalid or non-ergodic source parameters."""


@dataclass(frozen=True)
class SourceModel:
    """A binary source.

    ``kind`` is one of ``uniform``, ``bernoulli``, ``markov`` or ``hmm``.
    Uniform and Bernoulli carry ``p0`` (probability of emitting 0).  Markov
    models carry ``order`` and ``table``, where ``table[c]`` is P(next = 0 | c)
    and the context integer ``c`` holds the previous ``order`` symbols with the
    oldest symbol in the most significant bit.  Hidden Markov models carry a
    row-stochastic ``trans`` matrix and ``emit0[s]`` = P(emit 0 | state s).

    Use the ``make_*`` constructors; they enforce ergodicity.
    """

    kind: str
    p0: float = 0.5
    order: int = 0
    table: tuple = ()
    trans: tuple = ()
    emit0: tuple = ()
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False, hash=False)

    @property
    def is_iid(self) -> bool:
        return self.kind in ("uniform", "bernoulli") or (self.kind == "markov" and self.order == 0)

    @property
    def iid_p0(self) -> float:
        if self.kind in ("uniform", "bernoulli"):
            return self.p0
        if self.kind == "markov" and self.order == 0:
            return self.table[0]
        raise ModelError(f"{self.kind} model of order {self.order} is not memoryless")

    def context_stationary(self) -> np.ndarray:
        """Stationary distribution over the 2**order Markov contexts."""
        if self.kind != "markov":
            raise ModelError("context_stationary is defined for markov models only")
        if "ctx_pi" not in self._cache:
            self._cache["ctx_pi"] = stationary_distribution(_context_matrix(self.table, self.order))
        return self._cache["ctx_pi"]

    def hidden_stationary(self) -> np.ndarray:
        if self.kind != "hmm":
            raise ModelError("hidden_stationary is defined for hmm models only")
        if "hid_pi" not in self._cache:
            self._cache["hid_pi"] = stationary_distribution(np.array(self.trans))
        return self._cache["hid_pi"]

    def __str__(self) -> str:
        return model_id(self)


@dataclass(frozen=True)
class EntropyEstimate:
    value: float
    method: str  # "closed_form" | "monte_carlo_smb"
    ci_halfwidth: float = 0.0
    n_used: int | None = None
    trials: int | None = None


def binary_entropy(p: float) -> float:
    """H(p) in bits, with H(0) = H(1) = 0."""
    if p <= 0.0 or p >= 1.0:
        return 0.0
    return -(p * math.log2(p) + (1.0 - p) * math.log2(1.0 - p))


def _check_open_prob(p, what: str) -> float:
    p = float(p)
    if not (0.0 < p < 1.0) or math.isnan(p):
        raise ModelError(f"{what} must lie strictly between 0 and 1 (got {p})")
    return p


def make_uniform() -> SourceModel:
    return SourceModel(kind="uniform", p0=0.5)


def make_bernoulli(p: float) -> SourceModel:
    """IID source emitting 0 with probability ``p``."""
    return SourceModel(kind="bernoulli", p0=_check_open_prob(p, "p0"))


def make_markov(order: int, table: Mapping[int, float] | Sequence[float]) -> SourceModel:
    """Order-``order`` Markov source; ``table`` maps context -> P(next = 0).

    ``table`` may be a sequence of length 2**order or a mapping with exactly
    the keys 0 .. 2**order - 1.
    """
    order = int(order)
    if order < 0 or order > MAX_MARKOV_ORDER:
        raise ModelError(f"markov order must be in 0..{MAX_MARKOV_ORDER}")
    size = 1 << order
    if isinstance(table, Mapping):
        keys = set(table)
        if keys != set(range(size)):
            missing = sorted(set(range(size)) - keys)
            extra = sorted(keys - set(range(size)))
            raise ModelError(f"markov table needs contexts 0..{size - 1}; missing {missing}, unexpected {extra}")
        values = [table[c] for c in range(size)]
    else:
        values = list(table)
        if len(values) != size:
            raise ModelError(f"markov table of order {order} needs {size} entries, got {len(values)}")
    values = tuple(_check_open_prob(v, f"P(0|ctx{c})") for c, v in enumerate(values))
    return SourceModel(kind="markov", order=order, table=values)


def make_hmm(trans, emit0) -> SourceModel:
    """Hidden Markov source with strictly positive transitions and emissions."""
    A = np.asarray(trans, dtype=float)
    B = np.asarray(emit0, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] < 1:
        raise ModelError("hmm transition matrix must be square and non-empty")
    if B.shape != (A.shape[0],):
        raise ModelError("hmm needs one emission probability per hidden state")
    if not (A > 0).all() or not (A <= 1).all():
        raise ModelError("hmm transition probabilities must be strictly positive")
    if np.abs(A.sum(axis=1) - 1.0).max() > ROW_SUM_TOL:
        raise ModelError("hmm transition rows must sum to 1")
    for s, b in enumerate(B):
        _check_open_prob(b, f"emit0[{s}]")
    return SourceModel(
        kind="hmm",
        trans=tuple(tuple(float(v) for v in row) for row in A),
        emit0=tuple(float(b) for b in B),
    )


def _context_matrix(table: Sequence[float], order: int) -> np.ndarray:
    size = 1 << order
    P = np.zeros((size, size))
    mask = size - 1
    for c in range(size):
        P[c, ((c << 1) & mask)] += table[c]
        P[c, ((c << 1) & mask) | 1] += 1.0 - table[c]
    return P


def stationary_distribution(P) -> np.ndarray:
    """Unique pi with pi P = pi and sum(pi) = 1.

    Entries must be non-negative and rows must sum to 1 within 1e-12; the chain
    must be irreducible (positive entries suffice).  Solved directly, then
    polished by power steps until the residual is at most 1e-12.
    """
    P = np.asarray(P, dtype=float)
    if P.ndim != 2 or P.shape[0] != P.shape[1] or P.shape[0] == 0:
        raise ModelError("transition matrix must be square and non-empty")
    if (P < 0).any() or (P > 1).any():
        raise ModelError("transition probabilities must lie in [0, 1]")
    if np.abs(P.sum(axis=1) - 1.0).max() > ROW_SUM_TOL:
        raise ModelError("transition matrix is not row-stochastic")
    m = P.shape[0]
    M = P.T - np.eye(m)
    M[-1, :] = 1.0
    rhs = np.zeros(m)
    rhs[-1] = 1.0
    try:
        pi = np.linalg.solve(M, rhs)
    except np.linalg.LinAlgError:
        raise ModelError("transition matrix has no unique stationary distribution") from None
    for _ in range(100):
        if np.abs(pi @ P - pi).max() <= STATIONARY_RESIDUAL:
            break
        pi = pi @ P
        pi = pi / pi.sum()
    if (pi < -STATIONARY_RESIDUAL).any() or np.abs(pi @ P - pi).max() > STATIONARY_RESIDUAL:
        raise ModelError("could not solve for a stationary distribution")
    pi = np.clip(pi, 0.0, None)
    return pi / pi.sum()


# --- sampling ---------------------------------------------------------------

def sample(model: SourceModel, n: int, seed: int) -> BitSequence:
    """Draw n symbols from ``model``; deterministic in (model, n, seed)."""
    if n < 1:
        raise ValueError("n must be at least 1")
    rng = np.random.default_rng(seed)
    if model.is_iid:
        return BitSequence((rng.random(n) >= model.iid_p0).astype(np.uint8))
    if model.kind == "markov":
        return BitSequence(_sample_markov(model, n, rng))
    if model.kind == "hmm":
        return BitSequence(_sample_hmm(model, n, rng))
    raise ModelError(f"unknown model kind {model.kind!r}")


def _sample_markov(model: SourceModel, n: int, rng: np.random.Generator) -> np.ndarray:
    k = model.order
    pi = model.context_stationary()
    ctx = int(np.searchsorted(np.cumsum(pi), rng.random(), side="right"))
    ctx = min(ctx, pi.size - 1)
    out = np.empty(max(n, k), dtype=np.uint8)
    for j in range(k):
        out[j] = (ctx >> (k - 1 - j)) & 1
    mask = (1 << k) - 1
    table = model.table
    u = rng.random(max(n - k, 0)).tolist()
    for t, ut in enumerate(u, start=k):
        b = 0 if ut < table[ctx] else 1
        out[t] = b
        ctx = ((ctx << 1) | b) & mask
    return out[:n]


def _sample_hmm(model: SourceModel, n: int, rng: np.random.Generator) -> np.ndarray:
    cum_init = np.cumsum(model.hidden_stationary())
    cum_trans = [np.cumsum(row).tolist() for row in model.trans]
    emit0 = model.emit0
    last = len(emit0) - 1
    state = min(int(np.searchsorted(cum_init, rng.random(), side="right")), last)
    u = rng.random((n, 2)).tolist()
    out = np.empty(n, dtype=np.uint8)
    for t, (ue, ut) in enumerate(u):
        out[t] = 0 if ue < emit0[state] else 1
        row = cum_trans[state]
        nxt = 0
        while nxt < last and ut >= row[nxt]:
            nxt += 1
        state = nxt
    return out


# --- probabilities ----------------------------------------------------------

def log_prob(model: SourceModel, x) -> float:
    """log2 of the probability that the stationary source emits ``x`` as its first n symbols."""
    bits = as_bits(x).array
    if model.is_iid:
        p = model.iid_p0
        ones = int(np.count_nonzero(bits))
        zeros = bits.size - ones
        return zeros * math.log2(p) + ones * math.log2(1.0 - p)
    if model.kind == "markov":
        return _markov_log_prob(model, bits)
    if model.kind == "hmm":
        return _hmm_log_prob(model, bits)
    raise ModelError(f"unknown model kind {model.kind!r}")


def _contexts(words: np.ndarray, k: int) -> np.ndarray:
    """Context integers (oldest bit most significant) preceding positions k..n-1 of each row."""
    n = words.shape[-1]
    ctx = np.zeros(words.shape[:-1] + (n - k,), dtype=np.int64)
    for j in range(k):
        ctx = (ctx << 1) | words[..., j:n - k + j]
    return ctx


def _markov_log_prob(model: SourceModel, bits: np.ndarray) -> float:
    k = model.order
    pi = model.context_stationary()
    n = bits.size
    if n < k:
        prefix = 0
        for b in bits.tolist():
            prefix = (prefix << 1) | b
        shift = k - n
        lo = prefix << shift
        return math.log2(float(math.fsum(pi[lo:lo + (1 << shift)])))
    first = 0
    for b in bits[:k].tolist():
        first = (first << 1) | b
    ctx = _contexts(bits, k)
    log0 = np.log2(np.asarray(model.table))
    log1 = np.log2(1.0 - np.asarray(model.table))
    nxt = bits[k:]
    terms = np.where(nxt == 0, log0[ctx], log1[ctx])
    return math.log2(pi[first]) + math.fsum(terms.tolist())


def _hmm_log_prob(model: SourceModel, bits: np.ndarray) -> float:
    # scaled forward recursion; the log-likelihood is the sum of log2 normalisers
    A = np.asarray(model.trans)
    e0 = np.asarray(model.emit0)
    emit = (e0, 1.0 - e0)
    alpha = model.hidden_stationary() * emit[int(bits[0])]
    logs = []
    c = alpha.sum()
    logs.append(math.log2(c))
    alpha = alpha / c
    for b in bits[1:].tolist():
        alpha = (alpha @ A) * emit[b]
        c = alpha.sum()
        logs.append(math.log2(c))
        alpha = alpha / c
    return math.fsum(logs)


def log_prob_batch(model: SourceModel, words: np.ndarray) -> np.ndarray:
    """Row-wise log_prob for a 2-D array of equal-length words."""
    words = np.asarray(words, dtype=np.uint8)
    if words.ndim != 2:
        raise ValueError("words must be a 2-D array")
    n = words.shape[1]
    if model.is_iid:
        p = model.iid_p0
        ones = words.sum(axis=1, dtype=np.int64)
        return (n - ones) * math.log2(p) + ones * math.log2(1.0 - p)
    if model.kind == "markov" and n >= model.order:
        k = model.order
        pi = model.context_stationary()
        first = np.zeros(words.shape[0], dtype=np.int64)
        for j in range(k):
            first = (first << 1) | words[:, j]
        ctx = _contexts(words, k)
        log0 = np.log2(np.asarray(model.table))
        log1 = np.log2(1.0 - np.asarray(model.table))
        terms = np.where(words[:, k:] == 0, log0[ctx], log1[ctx])
        return np.log2(pi[first]) + terms.sum(axis=1)
    return np.array([log_prob(model, row) for row in words])


# --- entropy rate -----------------------------------------------------------

def entropy_rate(
    model: SourceModel,
    n_used: int = HMM_ENTROPY_N,
    trials: int = HMM_ENTROPY_TRIALS,
    seed: int = 0,
) -> EntropyEstimate:
    """Entropy rate h in bits per symbol.

    Closed form for memoryless and Markov sources.  For hidden Markov sources
    the estimate is the mean of -(1/n) log2 P(x) over ``trials`` samples of
    length ``n_used`` with half-width 2 sd / sqrt(trials).
    """
    if model.is_iid:
        return EntropyEstimate(binary_entropy(model.iid_p0), "closed_form")
    if model.kind == "markov":
        pi = model.context_stationary()
        h = math.fsum(float(w) * binary_entropy(p) for w, p in zip(pi, model.table))
        return EntropyEstimate(min(max(h, 0.0), 1.0), "closed_form")
    if model.kind == "hmm":
        if n_used < 1 or trials < 1:
            raise ValueError("n_used and trials must be positive")
        rates = np.array([-log_prob(model, sample(model, n_used, seed + i)) / n_used for i in range(trials)])
        sd = float(rates.std(ddof=1)) if trials > 1 else 0.0
        value = min(max(float(rates.mean()), 0.0), 1.0)
        return EntropyEstimate(value, "monte_carlo_smb", 2.0 * sd / math.sqrt(trials), n_used, trials)
    raise ModelError(f"unknown model kind {model.kind!r}")


# --- textual model descriptions ---------------------------------------------

def model_id(model: SourceModel) -> str:
    """Canonical one-line description, parseable by :func:`parse_model`."""
    if model.kind == "uniform":
        return "uniform"
    if model.kind == "bernoulli":
        return f"bernoulli:p0={model.p0!r}"
    if model.kind == "markov":
        parts = [f"order={model.order}"] + [f"p0_ctx{c}={p!r}" for c, p in enumerate(model.table)]
        return "markov:" + ",".join(parts)
    parts = [f"states={len(model.emit0)}"]
    for i, row in enumerate(model.trans):
        parts += [f"a_{i}_{j}={v!r}" for j, v in enumerate(row)]
    parts += [f"emit0_{i}={v!r}" for i, v in enumerate(model.emit0)]
    return "hmm:" + ",".join(parts)


def _number(params: Mapping[str, str], key: str, cast=float):
    if key not in params:
        raise ModelError(f"missing model parameter {key!r}")
    try:
        return cast(params[key])
    except ValueError:
        raise ModelError(f"model parameter {key}={params[key]!r} is not a valid number") from None


def model_from_params(params: Mapping[str, str]) -> SourceModel:
    """Build a model from flat key/value pairs (see README for the grammar)."""
    params = {k.strip().lower(): str(v).strip() for k, v in params.items()}
    kind = params.get("kind", "").lower()
    if kind == "uniform":
        known = {"kind"}
        model = make_uniform()
    elif kind == "bernoulli":
        known = {"kind", "p0"}
        model = make_bernoulli(_number(params, "p0"))
    elif kind == "markov":
        order = _number(params, "order", int)
        if order < 0 or order > MAX_MARKOV_ORDER:
            raise ModelError(f"markov order must be in 0..{MAX_MARKOV_ORDER}")
        keys = [f"p0_ctx{c}" for c in range(1 << order)]
        known = {"kind", "order", *keys}
        model = make_markov(order, [_number(params, key) for key in keys])
    elif kind == "hmm":
        s = _number(params, "states", int)
        if s < 1:
            raise ModelError("hmm needs at least one state")
        akeys = [[f"a_{i}_{j}" for j in range(s)] for i in range(s)]
        ekeys = [f"emit0_{i}" for i in range(s)]
        known = {"kind", "states", *ekeys, *(k for row in akeys for k in row)}
        model = make_hmm(
            [[_number(params, k) for k in row] for row in akeys],
            [_number(params, k) for k in ekeys],
        )
    else:
        raise ModelError(f"unknown model kind {kind!r}; expected uniform, bernoulli, markov or hmm")
    unknown = sorted(set(params) - known)
    if unknown:
        raise ModelError(f"unexpected parameters for {kind} model: {', '.join(unknown)}")
    return model


def parse_model(text: str) -> SourceModel:
    """Parse ``kind`` or ``kind:key=value,key=value``."""
    kind, _, rest = text.strip().partition(":")
    params = {"kind": kind}
    for item in filter(None, (s.strip() for s in rest.split(","))):
        key, eq, value = item.partition("=")
        if not eq:
            raise ModelError(f"expected key=value in model description, got {item!r}")
        params[key] = value
    return model_from_params(params)


def load_model_file(path) -> SourceModel:
    """Read a ``key=value`` per line model file; ``#`` starts a comment."""
    params = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, eq, value = line.partition("=")
            if not eq:
                raise ModelError(f"{path}:{lineno}: expected key=value")
            key = key.strip().lower()
            if key in params:
                raise ModelError(f"{path}:{lineno}: duplicate key {key!r}")
            params[key] = value
    return model_from_params(params)
