"""Desk-scale checks of the p-value exponent limits.

For a sample x of length n from a stationary ergodic source nu, both the
Neyman-Pearson p-value and the p-value of a universal-code test satisfy
-(1/n) log2 pi(x) -> 1 - h(nu).  The runs here sample x, compute p-values and
tabulate exponents against that target.

Trial t of any run uses seed ``seed + t``.  Results do not depend on how
trials are scheduled: set ``ENTROPYTEST_THREADS`` to fan trials out over
processes (0 means one per CPU; unset means serial).
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from .bits import BitSequence, as_bits
from .coders import parse_coder
from .sources import SourceModel, entropy_rate, log_prob, make_uniform, model_id, parse_model, sample
from .testing import (
    ENUM_LIMIT,
    MARKOV_LIMIT,
    Decision,
    NPLogProb,
    PValue,
    PValueMethod,
    _decide_tau,
    coder_pvalue,
    np_pvalue_iid,
    np_pvalue_markov,
    parse_pvalue_method,
    pvalue_exact_enum,
)

__all__ = [
    "ExperimentConfig",
    "ExponentRecord",
    "SummaryRow",
    "RateRecord",
    "ConvergenceResult",
    "DecimationResult",
    "convergence_run",
    "decimate",
    "decimation_experiment",
    "type1_calibration",
    "power_run",
    "run_config",
    "load_config",
    "write_records_csv",
    "write_summary_csv",
    "write_rates_csv",
    "RECORD_HEADER",
    "SUMMARY_HEADER",
    "RATE_HEADER",
]

RECORD_HEADER = [
    "experiment", "method", "model", "n", "trial", "seed", "statistic",
    "pvalue", "pvalue_method", "exponent", "target", "abs_gap",
]
SUMMARY_HEADER = ["n", "mean_exponent", "stderr", "target"]
RATE_HEADER = ["experiment", "method", "model", "n", "alpha", "rejections", "trials", "rate", "ci_low", "ci_high"]

EXPERIMENTS = ("convergence", "decimation", "type1", "power")


def _workers() -> int:
    raw = os.environ.get("ENTROPYTEST_THREADS", "").strip()
    if not raw:
        return 1
    try:
        value = int(raw)
    except ValueError:
        raise ValueError(f"ENTROPYTEST_THREADS must be an integer, got {raw!r}") from None
    if value < 0:
        raise ValueError("ENTROPYTEST_THREADS must be >= 0")
    return value or (os.cpu_count() or 1)


def _map(fn: Callable, jobs: Sequence) -> list:
    workers = min(_workers(), len(jobs))
    if workers <= 1:
        return [fn(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs, chunksize=max(1, len(jobs) // (4 * workers))))


# --- configuration ----------------------------------------------------------

@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment.

    ``method`` is ``"np"`` (Neyman-Pearson against ``model`` itself) or a
    coder string such as ``"kt"`` or ``"ctw:D=4"``.
    """

    model: SourceModel
    method: str
    n_grid: tuple
    trials: int
    seed: int = 0
    pvalue: str = "bound"
    experiment: str = "convergence"
    alphas: tuple = (0.01,)
    out: str | None = None

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.experiment!r}; expected one of {EXPERIMENTS}")
        if not self.n_grid:
            raise ValueError("n_grid must not be empty")
        if any(n < 1 for n in self.n_grid):
            raise ValueError("every n in n_grid must be positive")
        if any(b <= a for a, b in zip(self.n_grid, self.n_grid[1:])):
            raise ValueError("n_grid must be strictly increasing")
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        for a in self.alphas:
            if not 0.0 < a < 1.0:
                raise ValueError(f"alpha must lie strictly between 0 and 1 (got {a})")
        if self.method != "np":
            parse_coder(self.method)
        parse_pvalue_method(self.pvalue)


@dataclass(frozen=True)
class ExponentRecord:
    experiment: str
    method: str
    model: str
    n: int
    trial: int
    seed: int
    statistic: float
    pvalue: PValue
    pvalue_method: str
    exponent: float
    target: float

    @property
    def abs_gap(self) -> float:
        return abs(self.exponent - self.target)

    def row(self) -> list:
        return [
            self.experiment, self.method, self.model, self.n, self.trial, self.seed,
            _fmt(self.statistic), format_pvalue(self.pvalue), self.pvalue_method,
            _fmt(self.exponent), _fmt(self.target), _fmt(self.abs_gap),
        ]


@dataclass(frozen=True)
class SummaryRow:
    n: int
    mean_exponent: float
    stderr: float
    target: float

    @property
    def gap(self) -> float:
        return abs(self.mean_exponent - self.target)

    def row(self) -> list:
        return [self.n, _fmt(self.mean_exponent), _fmt(self.stderr), _fmt(self.target)]


@dataclass(frozen=True)
class RateRecord:
    experiment: str
    method: str
    model: str
    n: int
    alpha: float
    rejections: int
    trials: int
    ci_low: float
    ci_high: float

    @property
    def rate(self) -> float:
        return self.rejections / self.trials

    def row(self) -> list:
        return [
            self.experiment, self.method, self.model, self.n, _fmt(self.alpha), self.rejections,
            self.trials, _fmt(self.rate), _fmt(self.ci_low), _fmt(self.ci_high),
        ]


@dataclass
class ConvergenceResult:
    records: list
    summary: list

    def summary_for(self, n: int) -> SummaryRow:
        for row in self.summary:
            if row.n == n:
                return row
        raise KeyError(n)


@dataclass
class DecimationResult:
    ratio: float
    stderr: float
    plain: SummaryRow
    half: SummaryRow
    records: list = field(default_factory=list)


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if math.isnan(v):
        return "nan"
    return repr(v + 0.0)


def format_pvalue(p: PValue) -> str:
    """Scientific notation that stays meaningful below the float range."""
    if p.value > 0.0 and p.log2_value > -1000:
        return repr(p.value)
    log10 = p.log2_value * math.log10(2.0)
    exp10 = math.floor(log10)
    mantissa = 10.0 ** (log10 - exp10)
    if mantissa >= 9.9999999999995:
        mantissa, exp10 = 1.0, exp10 + 1
    return f"{mantissa:.12f}e{exp10}"


def _target(model: SourceModel) -> float:
    return 1.0 - entropy_rate(model).value


def _summarise(records: list, n_grid: Sequence[int], target: float) -> list:
    rows = []
    for n in n_grid:
        ex = np.array([r.exponent for r in records if r.n == n])
        se = float(ex.std(ddof=1) / math.sqrt(ex.size)) if ex.size > 1 else 0.0
        rows.append(SummaryRow(n, float(np.mean(ex)), se, target))
    return rows


# --- p-values of one sample -------------------------------------------------

def np_pvalue(model: SourceModel, x, method: str = "auto") -> PValue:
    """Exact Neyman-Pearson p-value of x against ``model``."""
    x = as_bits(x)
    if method == "exact":
        return pvalue_exact_enum(NPLogProb(model), x)
    if model.is_iid:
        return np_pvalue_iid(model.iid_p0, x)
    if model.kind == "markov" and model.order == 1:
        if len(x) > MARKOV_LIMIT:
            raise ValueError(f"exact NP p-values for markov sources need n <= {MARKOV_LIMIT}")
        return np_pvalue_markov(model, x)
    if len(x) <= ENUM_LIMIT:
        return pvalue_exact_enum(NPLogProb(model), x)
    raise ValueError(f"no exact NP p-value for {model_id(model)} at n = {len(x)}")


def _check_feasible(model: SourceModel, method: str, n: int, pvalue: PValueMethod) -> None:
    if method == "np":
        if model.is_iid:
            return
        if model.kind == "markov" and model.order == 1 and n <= MARKOV_LIMIT:
            return
        if n <= ENUM_LIMIT:
            return
        raise ValueError(
            f"NP p-values for {model_id(model)} at n = {n} are infeasible "
            f"(memoryless: any n; order-1 markov: n <= {MARKOV_LIMIT}; otherwise n <= {ENUM_LIMIT})"
        )
    if pvalue.name in ("np-iid", "np-markov"):
        raise ValueError(f"p-value method {pvalue} needs method 'np'")
    if pvalue.name == "exact" and n > pvalue.limit:
        raise ValueError(f"exact coder p-values need n <= {pvalue.limit}; use bound or mc:M=...")


@dataclass(frozen=True)
class _Job:
    model: SourceModel
    method: str
    pvalue: str
    n: int
    trial: int
    seed: int
    decimated: bool = False


def _one_trial(job: _Job) -> tuple:
    x = sample(job.model, job.n, job.seed)
    if job.decimated:
        x = decimate(x)
    if job.method == "np":
        p = np_pvalue(job.model, x)
        return log_prob(job.model, x), p, p.method
    coder = parse_coder(job.method)
    tau = len(x) - coder(x)
    method = parse_pvalue_method(job.pvalue)
    p = coder_pvalue(coder, x, method, seed=job.seed)
    return tau, p, str(method)


# --- experiments ------------------------------------------------------------

def convergence_run(cfg: ExperimentConfig) -> ConvergenceResult:
    """Exponent -(1/n) log2 pi(x) per (n, trial), and its mean per n."""
    pm = parse_pvalue_method(cfg.pvalue)
    for n in cfg.n_grid:
        _check_feasible(cfg.model, cfg.method, n, pm)
    target = _target(cfg.model)
    mid = model_id(cfg.model)
    jobs = [
        _Job(cfg.model, cfg.method, cfg.pvalue, n, t, cfg.seed + t)
        for n in cfg.n_grid for t in range(cfg.trials)
    ]
    records = []
    for job, (stat, p, pname) in zip(jobs, _map(_one_trial, jobs)):
        records.append(ExponentRecord(
            "convergence", cfg.method, mid, job.n, job.trial, job.seed, stat, p, pname,
            p.exponent(job.n), target,
        ))
    return ConvergenceResult(records, _summarise(records, cfg.n_grid, target))


def decimate(x) -> BitSequence:
    """x1 x3 x5 ...: the odd positions (1-based), length floor((n + 1) / 2)."""
    x = as_bits(x)
    if len(x) < 2:
        raise ValueError("decimation needs at least two symbols")
    return BitSequence(x.array[0::2])


def decimation_experiment(
    model: SourceModel,
    method: str,
    n: int,
    trials: int,
    seed: int = 0,
    pvalue: str = "bound",
) -> DecimationResult:
    """Mean exponent of the test applied to x1 x3 x5 ... over that of the plain test.

    Both exponents are normalised by the original length n, so the ratio
    should approach 1/2.  The ratio is NaN when the plain exponent is zero.
    """
    if not model.is_iid:
        raise ValueError("decimation experiment is defined for memoryless sources")
    if trials < 1:
        raise ValueError("trials must be at least 1")
    pm = parse_pvalue_method(pvalue)
    _check_feasible(model, method, n, pm)
    target = _target(model)
    mid = model_id(model)
    records = []
    columns = {}
    for decimated, label in ((False, "decimation-plain"), (True, "decimation-half")):
        jobs = [_Job(model, method, pvalue, n, t, seed + t, decimated) for t in range(trials)]
        rows = []
        for job, (stat, p, pname) in zip(jobs, _map(_one_trial, jobs)):
            exponent = 0.0 - p.log2_value / n
            rows.append(ExponentRecord(
                label, method, mid, n, job.trial, job.seed, stat, p, pname, exponent,
                target / 2.0 if decimated else target,
            ))
        records += rows
        columns[decimated] = np.array([r.exponent for r in rows])
    plain, half = columns[False], columns[True]
    mp, mh = float(plain.mean()), float(half.mean())

    def _row(arr, tgt):
        se = float(arr.std(ddof=1) / math.sqrt(arr.size)) if arr.size > 1 else 0.0
        return SummaryRow(n, float(arr.mean()), se, tgt)

    if mp == 0.0:
        ratio = stderr = float("nan")
    else:
        ratio = mh / mp
        if trials > 1:
            cov = np.cov(half, plain, ddof=1)
            var = (cov[0, 0] - 2.0 * ratio * cov[0, 1] + ratio * ratio * cov[1, 1]) / (trials * mp * mp)
            stderr = math.sqrt(max(var, 0.0))
        else:
            stderr = 0.0
    return DecimationResult(ratio, stderr, _row(plain, target), _row(half, target / 2.0), records)


def _clopper_pearson(k: int, m: int, confidence: float = 0.99) -> tuple:
    tail = (1.0 - confidence) / 2.0
    lo = 0.0 if k == 0 else float(stats.beta.ppf(tail, k, m - k + 1))
    hi = 1.0 if k == m else float(stats.beta.ppf(1.0 - tail, k + 1, m - k))
    return lo, hi


@dataclass(frozen=True)
class _TauJob:
    model: SourceModel
    coder: str
    n: int
    seed: int


def _tau_trial(job: _TauJob) -> int:
    x = sample(job.model, job.n, job.seed)
    return len(x) - parse_coder(job.coder)(x)


def _rates(experiment: str, coder: str, model: SourceModel, n: int, alphas, trials: int, seed: int) -> list:
    jobs = [_TauJob(model, coder, n, seed + t) for t in range(trials)]
    taus = _map(_tau_trial, jobs)
    out = []
    for alpha in alphas:
        k = sum(1 for tau in taus if _decide_tau(tau, alpha) is Decision.REJECT)
        lo, hi = _clopper_pearson(k, trials)
        out.append(RateRecord(experiment, coder, model_id(model), n, float(alpha), k, trials, lo, hi))
    return out


def type1_calibration(coder, alphas, n: int, trials: int, seed: int = 0) -> list:
    """Rejection rate of T_phi on uniform samples, one RateRecord per alpha (99% CI)."""
    if trials < 1000:
        raise ValueError("type I calibration needs at least 1000 trials")
    name = coder if isinstance(coder, str) else coder.name
    parse_coder(name)
    return _rates("type1", name, make_uniform(), n, list(alphas), trials, seed)


def power_run(coder, model: SourceModel, alpha: float, n_grid, trials: int, seed: int = 0) -> list:
    """Rejection rate of T_phi on samples from ``model`` for each n."""
    if trials < 1:
        raise ValueError("trials must be at least 1")
    name = coder if isinstance(coder, str) else coder.name
    parse_coder(name)
    out = []
    for n in n_grid:
        out += _rates("power", name, model, n, [alpha], trials, seed)
    return out


# --- config files and CSV ---------------------------------------------------

def load_config(path) -> ExperimentConfig:
    """Read a JSON experiment config (see ``configs/`` for examples)."""
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    return config_from_dict(raw)


def config_from_dict(raw: dict) -> ExperimentConfig:
    known = {"experiment", "model", "method", "n_grid", "trials", "seed", "pvalue", "alphas", "alpha", "out"}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ValueError(f"unknown config keys: {', '.join(unknown)}")
    for key in ("model", "method", "n_grid", "trials"):
        if key not in raw:
            raise ValueError(f"config is missing {key!r}")
    alphas = raw.get("alphas", [raw["alpha"]] if "alpha" in raw else [0.01])
    return ExperimentConfig(
        model=parse_model(raw["model"]),
        method=str(raw["method"]),
        n_grid=tuple(int(n) for n in raw["n_grid"]),
        trials=int(raw["trials"]),
        seed=int(raw.get("seed", 0)),
        pvalue=str(raw.get("pvalue", "bound")),
        experiment=str(raw.get("experiment", "convergence")),
        alphas=tuple(float(a) for a in alphas),
        out=raw.get("out"),
    )


def _write(path, header, rows) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def write_records_csv(records, path) -> None:
    _write(path, RECORD_HEADER, (r.row() for r in records))


def write_summary_csv(summary, path) -> None:
    _write(path, SUMMARY_HEADER, (r.row() for r in summary))


def write_rates_csv(rates, path) -> None:
    _write(path, RATE_HEADER, (r.row() for r in rates))


@dataclass
class RunOutput:
    records: list = field(default_factory=list)
    summary: list = field(default_factory=list)
    rates: list = field(default_factory=list)
    ratio: float | None = None
    ratio_stderr: float | None = None


def run_config(cfg: ExperimentConfig) -> RunOutput:
    """Run any experiment kind and collect everything that goes to CSV."""
    if cfg.experiment == "convergence":
        res = convergence_run(cfg)
        return RunOutput(res.records, res.summary)
    if cfg.experiment == "decimation":
        out = RunOutput()
        for n in cfg.n_grid:
            res = decimation_experiment(cfg.model, cfg.method, n, cfg.trials, cfg.seed, cfg.pvalue)
            out.records += res.records
            out.summary += [res.plain, res.half]
            out.ratio, out.ratio_stderr = res.ratio, res.stderr
        return out
    if cfg.method == "np":
        raise ValueError(f"{cfg.experiment} experiments need a coder method, not np")
    if cfg.experiment == "type1":
        rates = []
        for n in cfg.n_grid:
            rates += type1_calibration(cfg.method, cfg.alphas, n, cfg.trials, cfg.seed)
        return RunOutput(rates=rates)
    rates = []
    for alpha in cfg.alphas:
        rates += power_run(cfg.method, cfg.model, alpha, cfg.n_grid, cfg.trials, cfg.seed)
    return RunOutput(rates=rates)


def write_outputs(out: RunOutput, prefix) -> list:
    """Write ``<prefix>.csv`` and ``<prefix>_summary.csv`` (or ``<prefix>_rates.csv``)."""
    prefix = str(prefix)
    paths = []
    if out.records or not out.rates:
        write_records_csv(out.records, prefix + ".csv")
        write_summary_csv(out.summary, prefix + "_summary.csv")
        paths += [prefix + ".csv", prefix + "_summary.csv"]
    if out.rates:
        write_rates_csv(out.rates, prefix + "_rates.csv")
        paths.append(prefix + "_rates.csv")
    return paths
