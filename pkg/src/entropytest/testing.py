"""The compression statistic, its decision rule, and p-value engines.

H0 is "x is uniform on {0,1}^n".  The statistic of a coder phi is
tau(x) = n - |phi(x)|, and the test rejects H0 when tau(x) >= -log2(alpha).
A p-value is |{y : s(y) >= s(x)}| / 2^n for a statistic s; ties count as
"at least as extreme" everywhere.

Exact p-values keep integer numerators; ``log2_value`` is always accurate,
while the float ``value`` underflows to 0.0 below about 2**-1074.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

import numpy as np
from scipy import stats

from .bits import as_bits
from .coders import CodeLengthFunction, parse_coder
from .sources import SourceModel, log_prob, log_prob_batch, make_bernoulli

__all__ = [
    "Decision",
    "Statistic",
    "PValue",
    "TestReport",
    "CoderTau",
    "NPLogProb",
    "tau_statistic",
    "decide",
    "pvalue_kraft_bound",
    "pvalue_exact_enum",
    "exact_enum_numerators",
    "np_pvalue_iid",
    "np_pvalue_markov",
    "pvalue_monte_carlo",
    "required_sample_size",
    "run_test",
    "parse_pvalue_method",
    "EnumerationLimitError",
]

ENUM_LIMIT = 24
MARKOV_LIMIT = 512
MC_MIN_TRIALS = 100
MC_CONFIDENCE = 0.99
_ENUM_CHUNK = 1 << 15


class EnumerationLimitError(ValueError):
    pass


class Decision(str, enum.Enum):
    REJECT = "reject"
    ACCEPT = "accept"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class Statistic:
    value: float
    kind: str  # "coder_tau" | "np_log_prob"
    n: int


@dataclass(frozen=True)
class PValue:
    value: float
    log2_value: float
    method: str  # "exact_enumeration" | "type_class_exact" | "monte_carlo" | "kraft_bound"
    numerator: int | None = None
    denominator: int | None = None
    trials: int | None = None
    exceed: int | None = None
    ci_low: float | None = None
    ci_high: float | None = None

    @property
    def fraction(self) -> Fraction | None:
        if self.numerator is None:
            return None
        return Fraction(self.numerator, self.denominator)

    def exponent(self, n: int) -> float:
        """-(1/n) log2 of the p-value."""
        return 0.0 - self.log2_value / n


def _exact(numerator: int, n: int, method: str) -> PValue:
    den = 1 << n
    return PValue(
        value=numerator / den,
        log2_value=math.log2(numerator) - n,
        method=method,
        numerator=numerator,
        denominator=den,
    )


# --- statistics -------------------------------------------------------------

@dataclass(frozen=True)
class CoderTau:
    """Evaluator for tau(y) = n - |phi(y)| (integer valued)."""

    coder: CodeLengthFunction
    kind = "coder_tau"

    def __call__(self, x) -> int:
        x = as_bits(x)
        return len(x) - self.coder(x)

    def batch(self, words: np.ndarray) -> np.ndarray:
        return words.shape[1] - self.coder.batch(words)

    def threshold(self, value):
        return value

    @property
    def name(self) -> str:
        return self.coder.name


@dataclass(frozen=True)
class NPLogProb:
    """Evaluator for log2 nu(y): the Neyman-Pearson ordering under alternative ``model``."""

    model: SourceModel
    kind = "np_log_prob"

    def __call__(self, x) -> float:
        return log_prob(self.model, x)

    def batch(self, words: np.ndarray) -> np.ndarray:
        return log_prob_batch(self.model, words)

    def threshold(self, value):
        return value - _tie_tol(value)

    @property
    def name(self) -> str:
        return f"np[{self.model}]"


def _tie_tol(logp: float) -> float:
    # log-probabilities reached along different float paths must still tie
    return 1e-9 + 1e-12 * abs(logp)


def tau_statistic(coder: CodeLengthFunction, x) -> Statistic:
    x = as_bits(x)
    return Statistic(len(x) - coder(x), "coder_tau", len(x))


def _check_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if not (0.0 < alpha < 1.0):
        raise ValueError(f"alpha must lie strictly between 0 and 1 (got {alpha})")
    return alpha


def decide(coder: CodeLengthFunction, x, alpha: float) -> Decision:
    """Reject H0 iff n - |phi(x)| >= -log2(alpha)."""
    return _decide_tau(tau_statistic(coder, x).value, alpha)


def _decide_tau(tau: float, alpha: float) -> Decision:
    return Decision.REJECT if tau >= -math.log2(_check_alpha(alpha)) else Decision.ACCEPT


# --- p-value engines --------------------------------------------------------

def pvalue_kraft_bound(tau: Statistic) -> PValue:
    """min(1, 2**-tau): by Kraft, |{y : tau(y) >= t}| <= 2**(n - t)."""
    if tau.kind != "coder_tau":
        raise ValueError("the Kraft bound applies to coder statistics only")
    log2v = min(0.0, -float(tau.value))
    return PValue(value=2.0 ** log2v, log2_value=log2v, method="kraft_bound")


def _word_block(n: int, start: int, stop: int) -> np.ndarray:
    idx = np.arange(start, stop, dtype=np.int64)
    shifts = np.arange(n - 1, -1, -1, dtype=np.int64)
    return ((idx[:, None] >> shifts) & 1).astype(np.uint8)


def _all_statistics(evaluator, n: int) -> np.ndarray:
    total = 1 << n
    return np.concatenate([
        np.asarray(evaluator.batch(_word_block(n, s, min(s + _ENUM_CHUNK, total))))
        for s in range(0, total, _ENUM_CHUNK)
    ])


def pvalue_exact_enum(evaluator, x, n_limit: int = ENUM_LIMIT) -> PValue:
    """Count every y in {0,1}^n with s(y) >= s(x); feasible for n <= ``n_limit``."""
    x = as_bits(x)
    n = len(x)
    if n > n_limit:
        raise EnumerationLimitError(
            f"exact enumeration needs 2^{n} evaluations (limit n <= {n_limit}); "
            "use a Monte Carlo p-value (mc:M=...) or the Kraft bound instead"
        )
    cut = evaluator.threshold(evaluator(x))
    total = 1 << n
    count = 0
    for s in range(0, total, _ENUM_CHUNK):
        block = evaluator.batch(_word_block(n, s, min(s + _ENUM_CHUNK, total)))
        count += int(np.count_nonzero(np.asarray(block) >= cut))
    return _exact(count, n, "exact_enumeration")


def exact_enum_numerators(evaluator, n: int, n_limit: int = ENUM_LIMIT) -> np.ndarray:
    """Exact p-value numerators for every word of length n, indexed by the word read MSB first."""
    if n > n_limit:
        raise EnumerationLimitError(f"n = {n} exceeds the enumeration limit {n_limit}")
    values = _all_statistics(evaluator, n)
    ordered = np.sort(values)
    cuts = np.array([evaluator.threshold(v) for v in values.tolist()])
    return ordered.size - np.searchsorted(ordered, cuts, side="left")


@lru_cache(maxsize=64)
def _binomial_row(n: int) -> tuple:
    row = [1]
    for k in range(n):
        row.append(row[-1] * (n - k) // (k + 1))
    return tuple(row)


def np_pvalue_iid(p: float, x) -> PValue:
    """Exact Neyman-Pearson p-value against a Bernoulli(p0 = p) alternative.

    nu(y) depends only on the number of ones, so the count is a sum of
    binomial coefficients over the type classes at least as likely as x's.
    """
    model = make_bernoulli(p)
    x = as_bits(x)
    n = len(x)
    lp, lq = math.log2(model.p0), math.log2(1.0 - model.p0)
    target = (n - x.count_ones()) * lp + x.count_ones() * lq
    cut = target - _tie_tol(target)
    row = _binomial_row(n)
    numerator = sum(row[k] for k in range(n + 1) if (n - k) * lp + k * lq >= cut)
    return _exact(numerator, n, "type_class_exact")


def _markov_classes(n: int):
    """Transition-count classes of binary words of length n >= 2.

    A class is fixed by the first symbol, the number of runs and the number
    of zeros.  Returns arrays (first, n00, n01, n10, n11, zeros, ones, runs0, runs1).
    """
    cols = []
    for first in (0, 1):
        for runs in range(1, n + 1):
            r_first, r_other = (runs + 1) // 2, runs // 2
            r0, r1 = (r_first, r_other) if first == 0 else (r_other, r_first)
            if r0 == 0:
                z = np.array([0]) if n >= r1 else np.array([], dtype=np.int64)
            elif r1 == 0:
                z = np.array([n]) if n >= r0 else np.array([], dtype=np.int64)
            else:
                z = np.arange(r0, n - r1 + 1)
            if z.size == 0:
                continue
            o = n - z
            if first == 0:
                n01, n10 = r1, r0 - 1
            else:
                n01, n10 = r1 - 1, r0
            k = z.size
            cols.append(np.stack([
                np.full(k, first), z - r0, np.full(k, n01), np.full(k, n10), o - r1,
                z, o, np.full(k, r0), np.full(k, r1),
            ]))
    return np.concatenate(cols, axis=1).astype(np.int64)


def _compositions(total: int, parts: int) -> int:
    # ways to write total as an ordered sum of `parts` positive integers
    if parts == 0:
        return 1 if total == 0 else 0
    return math.comb(total - 1, parts - 1)


def np_pvalue_markov(model: SourceModel, x, n_limit: int = MARKOV_LIMIT) -> PValue:
    """Exact Neyman-Pearson p-value against an order-1 Markov alternative.

    nu(y) is fixed by y's first symbol and its four transition counts.  Each
    such class is a set of run-length compositions, so its size is a product
    of two binomial coefficients.
    """
    if model.kind != "markov" or model.order != 1:
        raise ValueError("np_pvalue_markov needs an order-1 markov model")
    x = as_bits(x)
    n = len(x)
    if n > n_limit:
        raise EnumerationLimitError(f"n = {n} exceeds the markov type-class limit {n_limit}")
    target = log_prob(model, x)
    cut = target - _tie_tol(target)
    pi = model.context_stationary()
    if n == 1:
        numerator = sum(1 for b in (0, 1) if math.log2(pi[b]) >= cut)
        return _exact(numerator, n, "type_class_exact")
    first, n00, n01, n10, n11, zeros, ones, r0, r1 = _markov_classes(n)
    p00, p10 = model.table
    logs = np.log2(pi)[first] + (
        n00 * math.log2(p00) + n01 * math.log2(1.0 - p00) + n10 * math.log2(p10) + n11 * math.log2(1.0 - p10)
    )
    numerator = 0
    for i in np.flatnonzero(logs >= cut).tolist():
        numerator += _compositions(int(zeros[i]), int(r0[i])) * _compositions(int(ones[i]), int(r1[i]))
    return _exact(numerator, n, "type_class_exact")


def pvalue_monte_carlo(evaluator, x, trials: int, seed: int) -> PValue:
    """(r + 1) / (M + 1) from M uniform draws; r counts draws with s(y) >= s(x).

    The interval is Clopper-Pearson at 99% for r / M.
    """
    if trials < MC_MIN_TRIALS:
        raise ValueError(f"Monte Carlo p-values need at least {MC_MIN_TRIALS} trials")
    x = as_bits(x)
    n = len(x)
    cut = evaluator.threshold(evaluator(x))
    rng = np.random.default_rng(seed)
    r = 0
    done = 0
    chunk = max(1, min(_ENUM_CHUNK, (1 << 22) // n))
    while done < trials:
        m = min(chunk, trials - done)
        words = (rng.random((m, n)) >= 0.5).astype(np.uint8)
        r += int(np.count_nonzero(np.asarray(evaluator.batch(words)) >= cut))
        done += m
    value = (r + 1) / (trials + 1)
    tail = (1.0 - MC_CONFIDENCE) / 2.0
    lo = 0.0 if r == 0 else float(stats.beta.ppf(tail, r, trials - r + 1))
    hi = 1.0 if r == trials else float(stats.beta.ppf(1.0 - tail, r + 1, trials - r))
    return PValue(
        value=value,
        log2_value=math.log2(value),
        method="monte_carlo",
        trials=trials,
        exceed=r,
        ci_low=lo,
        ci_high=hi,
    )


def required_sample_size(alpha: float, h: float) -> int:
    """Smallest n with n > -log2(alpha) / (1 - h)."""
    alpha = _check_alpha(alpha)
    if not (0.0 <= h <= 1.0):
        raise ValueError("entropy must lie in [0, 1]")
    if h >= 1.0:
        raise ValueError("source indistinguishable at any n: entropy rate is 1")
    return math.floor(-math.log2(alpha) / (1.0 - h)) + 1


# --- reports ----------------------------------------------------------------

@dataclass(frozen=True)
class PValueMethod:
    name: str  # "bound" | "exact" | "mc" | "np-iid" | "np-markov"
    trials: int = 0
    limit: int = 0

    def __str__(self) -> str:
        if self.name == "mc":
            return f"mc:M={self.trials}"
        return self.name


def parse_pvalue_method(text: str) -> PValueMethod:
    """Parse ``bound``, ``exact``, ``mc:M=<int>``, ``np-iid`` or ``np-markov``."""
    head, _, params = text.strip().partition(":")
    head = head.lower()
    if head in ("bound", "np-iid", "np-markov") and not params:
        return PValueMethod(head)
    if head == "exact":
        if not params:
            return PValueMethod("exact", limit=ENUM_LIMIT)
        key, _, value = params.partition("=")
        if key.strip().lower() != "limit":
            raise ValueError(f"bad exact parameters {params!r}; expected exact or exact:limit=<int>")
        return PValueMethod("exact", limit=int(value))
    if head == "mc":
        key, eq, value = params.partition("=")
        if key.strip().upper() != "M" or not eq:
            raise ValueError("Monte Carlo method must be written mc:M=<trials>")
        trials = int(value)
        if trials < MC_MIN_TRIALS:
            raise ValueError(f"Monte Carlo p-values need at least {MC_MIN_TRIALS} trials")
        return PValueMethod("mc", trials=trials)
    raise ValueError(f"unknown p-value method {text!r}; expected bound, exact, mc:M=<int>, np-iid or np-markov")


@dataclass
class TestReport:
    statistic: Statistic
    code_length: int
    pvalues: list = field(default_factory=list)
    alpha: float = 0.01
    decision: Decision = Decision.ACCEPT
    coder: str = ""

    __test__ = False  # keep pytest from collecting this class

    @property
    def n(self) -> int:
        return self.statistic.n

    @property
    def primary(self) -> PValue:
        return self.pvalues[0]

    @property
    def exponent(self) -> float:
        return self.primary.exponent(self.n)


def coder_pvalue(coder: CodeLengthFunction, x, method: PValueMethod, seed: int = 0) -> PValue:
    """p-value of tau_phi(x) by the requested method."""
    if method.name == "bound":
        return pvalue_kraft_bound(tau_statistic(coder, x))
    if method.name == "exact":
        return pvalue_exact_enum(CoderTau(coder), x, n_limit=method.limit)
    if method.name == "mc":
        return pvalue_monte_carlo(CoderTau(coder), x, method.trials, seed)
    raise ValueError(f"{method} is a Neyman-Pearson method; it needs a source model, not a coder")


def run_test(coder: CodeLengthFunction | str, x, alpha: float = 0.01, method="bound", seed: int = 0) -> TestReport:
    """Apply T_phi to x: statistic, requested p-value (plus the bound), decision."""
    if isinstance(coder, str):
        coder = parse_coder(coder)
    if isinstance(method, str):
        method = parse_pvalue_method(method)
    x = as_bits(x)
    alpha = _check_alpha(alpha)
    length = coder(x)
    tau = Statistic(len(x) - length, "coder_tau", len(x))
    pvalues = [coder_pvalue(coder, x, method, seed)]
    if method.name != "bound":
        pvalues.append(pvalue_kraft_bound(tau))
    return TestReport(
        statistic=tau,
        code_length=length,
        pvalues=pvalues,
        alpha=alpha,
        decision=_decide_tau(tau.value, alpha),
        coder=coder.name,
    )
