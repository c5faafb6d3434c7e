import math

import pytest

from entropytest.coders import KT
from entropytest.experiments import (
    RECORD_HEADER,
    SUMMARY_HEADER,
    ExperimentConfig,
    config_from_dict,
    convergence_run,
    decimate,
    decimation_experiment,
    format_pvalue,
    power_run,
    run_config,
    type1_calibration,
    write_outputs,
)
from entropytest.sources import binary_entropy, make_bernoulli, make_hmm, make_markov, make_uniform, sample
from entropytest.testing import PValue

MARKOV1 = make_markov(1, [0.9, 0.5])


def test_decimate_examples():
    assert decimate("0110") == "01"
    assert decimate("10101") == "111"
    assert len(decimate("0" * 7)) == 4
    with pytest.raises(ValueError):
        decimate("1")


def test_decimate_preserves_iid_frequency():
    x = decimate(sample(make_bernoulli(0.8), 200_000, 3))
    assert abs(1 - x.count_ones() / len(x) - 0.8) <= 0.01


def test_np_convergence_uniform_is_zero():
    res = convergence_run(ExperimentConfig(make_uniform(), "np", (16, 64), 5, seed=1))
    assert all(r.pvalue.value == 1.0 and r.exponent == 0.0 and r.target == 0.0 for r in res.records)


def test_np_convergence_small():
    res = convergence_run(ExperimentConfig(make_bernoulli(0.8), "np", (256, 1024), 30, seed=3))
    target = 1 - binary_entropy(0.8)
    assert res.summary_for(1024).gap < 0.03
    assert all(r.exponent >= 0 for r in res.records)
    assert res.records[0].target == pytest.approx(target)


def test_np_convergence_markov():
    res = convergence_run(ExperimentConfig(MARKOV1, "np", (128, 512), 10, seed=2))
    assert abs(res.summary_for(512).mean_exponent - res.summary_for(512).target) < 0.05


def test_infeasible_combinations():
    with pytest.raises(ValueError):
        convergence_run(ExperimentConfig(MARKOV1, "np", (1024,), 2))
    hmm = make_hmm([[0.9, 0.1], [0.1, 0.9]], [0.7, 0.3])
    with pytest.raises(ValueError):
        convergence_run(ExperimentConfig(hmm, "np", (100,), 2))
    with pytest.raises(ValueError):
        convergence_run(ExperimentConfig(make_bernoulli(0.8), "kt", (100,), 2, pvalue="exact"))
    with pytest.raises(ValueError):
        ExperimentConfig(make_bernoulli(0.8), "kt", (100, 50), 2)
    with pytest.raises(ValueError):
        ExperimentConfig(make_bernoulli(0.8), "kt", (100,), 0)


def test_bound_exponent_identity():
    res = convergence_run(ExperimentConfig(make_bernoulli(0.8), "kt", (4096,), 4, seed=5))
    for r in res.records:
        x = sample(make_bernoulli(0.8), r.n, r.seed)
        assert r.statistic == r.n - KT()(x)
        assert r.exponent == max(0, r.statistic) / r.n


def test_coder_mc_pvalues_run():
    res = convergence_run(ExperimentConfig(make_bernoulli(0.9), "kt", (24,), 3, seed=1, pvalue="mc:M=200"))
    assert all(r.pvalue.method == "monte_carlo" for r in res.records)


def test_exponent_sandwich():
    # finite-n form of 1 - (h + eps) <= -log(pi)/n <= 1 - (h - 2 eps)
    n, p = 4096, 0.8
    res = convergence_run(ExperimentConfig(make_bernoulli(p), "np", (n,), 100, seed=11))
    h = binary_entropy(p)
    sigma = abs(math.log2(p) - math.log2(1 - p)) * math.sqrt(p * (1 - p))
    eps = 4 * sigma / math.sqrt(n)
    inside = [1 - h - eps <= r.exponent <= 1 - h + 2 * eps for r in res.records]
    assert sum(inside) >= 95


def test_decimation_uniform_is_nan():
    res = decimation_experiment(make_uniform(), "np", 256, 5, seed=1)
    assert math.isnan(res.ratio)


def test_decimation_kt_bound():
    res = decimation_experiment(make_bernoulli(0.8), "kt", 1 << 14, 20, seed=1)
    assert 0.45 <= res.ratio <= 0.55


def test_decimation_needs_iid():
    with pytest.raises(ValueError):
        decimation_experiment(MARKOV1, "np", 100, 3)


def test_type1_and_power():
    rates = type1_calibration("kt", [0.01, 0.99], 256, 1000, seed=1)
    assert [r.alpha for r in rates] == [0.01, 0.99]
    for r in rates:
        assert r.rate <= r.alpha and r.ci_low <= r.rate <= r.ci_high
    with pytest.raises(ValueError):
        type1_calibration("kt", [0.01], 64, 10)
    power = power_run("kt", make_bernoulli(0.8), 0.01, [16, 64, 256], 200, seed=1)
    values = [r.rate for r in power]
    assert values[-1] >= 0.99 and values[0] <= values[-1]
    uniform_power = power_run(KT(), make_uniform(), 0.05, [64, 256], 300, seed=2)
    assert all(r.rate <= 0.05 for r in uniform_power)


def test_format_pvalue_below_float_range():
    pv = PValue(value=0.0, log2_value=-5000.0, method="kraft_bound")
    mant, exp = format_pvalue(pv).split("e")
    log10 = -5000 * math.log10(2)
    assert int(exp) == math.floor(log10)
    assert float(mant) == pytest.approx(10 ** (log10 - math.floor(log10)), rel=1e-9)
    assert format_pvalue(PValue(0.125, -3.0, "x")) == "0.125"


def test_csv_schema_and_determinism(tmp_path):
    cfg = config_from_dict({
        "model": "bernoulli:p0=0.8", "method": "np", "n_grid": [64, 128], "trials": 5, "seed": 9,
    })
    a = write_outputs(run_config(cfg), tmp_path / "a")
    b = write_outputs(run_config(cfg), tmp_path / "b")
    for pa, pb in zip(a, b):
        assert open(pa, "rb").read() == open(pb, "rb").read()
    lines = open(a[0]).read().splitlines()
    assert lines[0].split(",") == RECORD_HEADER
    assert len(lines) == 1 + 10
    assert open(a[1]).read().splitlines()[0].split(",") == SUMMARY_HEADER


def test_parallel_matches_serial(tmp_path, monkeypatch):
    cfg = ExperimentConfig(make_bernoulli(0.7), "kt", (128, 256), 6, seed=4)
    serial = write_outputs(run_config(cfg), tmp_path / "s")
    monkeypatch.setenv("ENTROPYTEST_THREADS", "2")
    parallel = write_outputs(run_config(cfg), tmp_path / "p")
    for ps, pp in zip(serial, parallel):
        assert open(ps, "rb").read() == open(pp, "rb").read()
