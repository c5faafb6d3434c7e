"""Compression-based statistical tests for random number generators."""

__version__ = "0.1.0"

from .bits import BitSequence, decode_bits, encode_bits
from .coders import (
    CTW,
    KT,
    LZ78,
    Best,
    CodeLengthFunction,
    Type2P,
    best_code_length,
    ctw_code_length,
    kt_code_length,
    lz78_code_length,
    parse_coder,
    type2p_code_length,
)
from .sources import (
    EntropyEstimate,
    SourceModel,
    entropy_rate,
    log_prob,
    make_bernoulli,
    make_hmm,
    make_markov,
    make_uniform,
    parse_model,
    sample,
    stationary_distribution,
)
from .testing import (
    Decision,
    PValue,
    Statistic,
    TestReport,
    decide,
    np_pvalue_iid,
    np_pvalue_markov,
    pvalue_exact_enum,
    pvalue_kraft_bound,
    pvalue_monte_carlo,
    required_sample_size,
    run_test,
    tau_statistic,
)
