"""Command-line interface.

Exit status: 0 on success (``test``: H0 accepted), 1 when ``test`` rejects
H0, 2 on usage or I/O errors.
"""

from __future__ import annotations

import argparse
import json
import math
import secrets
import sys
from fractions import Fraction

from . import __version__
from .bits import FORMATS, BitSequence, decode_bits, encode_bits
from .coders import DEFAULT_CODER, parse_coder
from .experiments import config_from_dict, format_pvalue, run_config, write_outputs
from .sources import (
    HMM_ENTROPY_N,
    HMM_ENTROPY_TRIALS,
    entropy_rate,
    load_model_file,
    model_from_params,
    model_id,
    parse_model,
    sample,
)
from .testing import (
    ENUM_LIMIT,
    MARKOV_LIMIT,
    Decision,
    PValueMethod,
    coder_pvalue,
    np_pvalue_iid,
    np_pvalue_markov,
    parse_pvalue_method,
    run_test,
)

EXIT_ACCEPT = 0
EXIT_REJECT = 1
EXIT_ERROR = 2


class UsageError(Exception):
    pass


def _seed(args, err) -> int:
    if args.seed is not None:
        return args.seed
    seed = secrets.randbits(63)
    print(f"seed={seed}", file=err)
    return seed


def _read_input(args, stdin) -> BitSequence:
    if getattr(args, "bits", None) is not None:
        data, fmt = args.bits.encode("ascii"), "ascii01"
    else:
        fmt = args.format
        if args.input == "-":
            data = stdin.read()
        else:
            with open(args.input, "rb") as fh:
                data = fh.read()
    return decode_bits(data, fmt, args.max_bits)


def _add_input(p: argparse.ArgumentParser) -> None:
    p.add_argument("input", nargs="?", default="-", help="input file, '-' for stdin (default)")
    p.add_argument("--format", choices=FORMATS, default="raw", help="input encoding (default raw, MSB first)")
    p.add_argument("--max-bits", type=int, default=None, help="truncate the input to this many bits")
    p.add_argument("--bits", default=None, help="inline 0/1 string instead of a file")


def _model_from_args(args):
    if getattr(args, "model_file", None):
        return load_model_file(args.model_file)
    if getattr(args, "model", None):
        return parse_model(args.model)
    if getattr(args, "kind", None):
        params = {"kind": args.kind}
        if args.p0 is not None:
            params["p0"] = args.p0
        if args.order is not None:
            params["order"] = args.order
        for c, v in enumerate(args.p0_ctx or []):
            params[f"p0_ctx{c}"] = v
        return model_from_params(params)
    raise UsageError("no source model given; use --model, --model-file or --kind")


def _add_model(p: argparse.ArgumentParser) -> None:
    p.add_argument("--model", help="inline model, e.g. 'markov:order=1,p0_ctx0=0.9,p0_ctx1=0.5'")
    p.add_argument("--model-file", help="key=value model description file")
    p.add_argument("--kind", choices=("uniform", "bernoulli", "markov"))
    p.add_argument("--p0", type=str, default=None, help="probability of 0 (bernoulli)")
    p.add_argument("--order", type=str, default=None, help="markov order")
    p.add_argument("--p0-ctx", nargs="+", default=None, metavar="P", help="markov P(0|context) for contexts 0, 1, ...")


def _render_pvalue(p, n: int, prefix: str = "pvalue") -> list:
    lines = [
        f"{prefix}={format_pvalue(p)}",
        f"{prefix}_method={p.method}",
        f"{prefix}_log2={p.log2_value!r}",
    ]
    if p.numerator is not None:
        lines.append(f"{prefix}_count={p.numerator}")
        if n <= 64:
            frac = Fraction(p.numerator, p.denominator)
            lines.append(f"{prefix}_fraction={frac.numerator}/{frac.denominator}")
    if p.trials is not None:
        lines += [
            f"{prefix}_trials={p.trials}",
            f"{prefix}_exceed={p.exceed}",
            f"{prefix}_ci99=[{p.ci_low!r}, {p.ci_high!r}]",
        ]
    return lines


# --- subcommands ------------------------------------------------------------

def cmd_test(args, out, err, stdin) -> int:
    coder = parse_coder(args.coder)
    method = parse_pvalue_method(args.pvalue)
    if method.name in ("np-iid", "np-markov"):
        raise UsageError("test uses coder p-values (bound, exact, mc:M=...); use 'pvalue' for NP p-values")
    seed = _seed(args, err) if method.name == "mc" else 0
    x = _read_input(args, stdin)
    report = run_test(coder, x, args.alpha, method, seed)
    threshold = -math.log2(report.alpha)
    print(
        f"{coder.name}: n={report.n} L={report.code_length} tau={report.statistic.value} "
        f"threshold={threshold:.6f} -> {report.decision.value.upper()} H0 at alpha={report.alpha}",
        file=out,
    )
    print("", file=out)
    lines = [
        f"n={report.n}",
        f"coder={coder.name}",
        f"code_length={report.code_length}",
        f"tau={report.statistic.value}",
        f"alpha={report.alpha!r}",
        f"threshold={threshold!r}",
    ]
    lines += _render_pvalue(report.primary, report.n)
    for extra in report.pvalues[1:]:
        lines += _render_pvalue(extra, report.n, prefix="pvalue_bound")
    lines += [f"exponent={report.exponent!r}", f"decision={report.decision.value}"]
    print("\n".join(lines), file=out)
    return EXIT_REJECT if report.decision is Decision.REJECT else EXIT_ACCEPT


def cmd_pvalue(args, out, err, stdin) -> int:
    x = _read_input(args, stdin)
    n = len(x)
    if args.np_iid:
        if args.p0 is None:
            raise UsageError("--np-iid needs --p0")
        p = np_pvalue_iid(float(args.p0), x)
        label = f"np-iid p0={args.p0}"
    elif args.np_markov:
        model = _model_from_args(args)
        p = np_pvalue_markov(model, x, n_limit=args.limit or MARKOV_LIMIT)
        label = f"np-markov {model_id(model)}"
    else:
        if not args.coder:
            raise UsageError("give --coder (with --method) or --np-iid / --np-markov")
        coder = parse_coder(args.coder)
        method = parse_pvalue_method(args.method)
        if method.name == "exact" and args.limit:
            method = PValueMethod("exact", limit=args.limit)
        seed = _seed(args, err) if method.name == "mc" else 0
        p = coder_pvalue(coder, x, method, seed)
        label = f"{coder.name} {method}"
    print(f"{label}: n={n}", file=out)
    lines = [f"n={n}"] + _render_pvalue(p, n) + [f"exponent={p.exponent(n)!r}"]
    print("\n".join(lines), file=out)
    return EXIT_ACCEPT


def cmd_simulate(args, out, err, stdin) -> int:
    model = _model_from_args(args)
    if args.n < 1:
        raise UsageError("-n must be at least 1")
    seed = _seed(args, err)
    x = sample(model, args.n, seed)
    if args.format == "raw" and args.n % 8:
        print(f"note: raw output is zero-padded; read it back with --max-bits {args.n}", file=err)
    data = encode_bits(x, args.format)
    if hasattr(out, "buffer"):
        out.buffer.write(data)
    else:
        out.write(data.decode("latin-1"))
    out.flush()
    return EXIT_ACCEPT


def cmd_entropy(args, out, err, stdin) -> int:
    model = _model_from_args(args)
    seed = _seed(args, err) if model.kind == "hmm" else 0
    est = entropy_rate(model, n_used=args.n_used, trials=args.trials, seed=seed)
    lines = [
        f"model={model_id(model)}",
        f"entropy_rate={est.value!r}",
        f"method={est.method}",
        f"ci_halfwidth={est.ci_halfwidth!r}",
        f"target_exponent={1.0 - est.value!r}",
    ]
    if est.n_used is not None:
        lines += [f"n_used={est.n_used}", f"trials={est.trials}"]
    print("\n".join(lines), file=out)
    return EXIT_ACCEPT


def cmd_experiment(args, out, err, stdin) -> int:
    raw = {}
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            raw = json.load(fh)
    overrides = {
        "experiment": args.experiment,
        "model": args.model,
        "method": args.method,
        "trials": args.trials,
        "pvalue": args.pvalue,
        "out": args.out,
    }
    raw.update({k: v for k, v in overrides.items() if v is not None})
    if args.n_grid:
        raw["n_grid"] = [int(s) for s in args.n_grid.split(",") if s.strip()]
    if args.alpha:
        raw["alphas"] = [float(s) for s in args.alpha.split(",") if s.strip()]
    if args.seed is not None:
        raw["seed"] = args.seed
    elif "seed" not in raw:
        raw["seed"] = _seed(args, err)
    if "trials" in raw and int(raw["trials"]) < 1:
        raise UsageError("--trials must be at least 1")
    if not raw.get("out"):
        raise UsageError("an output prefix is required (--out or 'out' in the config)")
    cfg = config_from_dict(raw)
    result = run_config(cfg)
    paths = write_outputs(result, cfg.out)
    for row in result.summary:
        print(f"n={row.n} mean_exponent={row.mean_exponent:.6f} stderr={row.stderr:.6f} target={row.target:.6f}", file=out)
    for r in result.rates:
        print(f"{r.experiment} {r.method} n={r.n} alpha={r.alpha} rate={r.rate:.4f} ci99=[{r.ci_low:.4f}, {r.ci_high:.4f}]", file=out)
    if result.ratio is not None:
        print(f"decimation_ratio={result.ratio!r} stderr={result.ratio_stderr!r}", file=out)
    for p in paths:
        print(f"wrote {p}", file=out)
    return EXIT_ACCEPT


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="entropytest", description="Compression-based randomness tests.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("test", help="test a bit stream for randomness")
    _add_input(p)
    p.add_argument("--coder", default=DEFAULT_CODER, help=f"lz78, kt, ctw:D=<int>, type2p, best:<list> (default {DEFAULT_CODER})")
    p.add_argument("--alpha", type=float, default=0.01, help="significance level (default 0.01)")
    p.add_argument("--pvalue", default="bound", help="bound, exact, exact:limit=<int> or mc:M=<int> (default bound)")
    p.add_argument("--seed", type=int, default=None, help="seed for Monte Carlo p-values")
    p.set_defaults(func=cmd_test)

    p = sub.add_parser("pvalue", help="compute a single p-value")
    _add_input(p)
    p.add_argument("--coder", help="coder string for coder-statistic p-values")
    p.add_argument("--method", default="bound", help="bound, exact or mc:M=<int> (default bound)")
    p.add_argument("--np-iid", action="store_true", help="Neyman-Pearson p-value against Bernoulli(--p0)")
    p.add_argument("--np-markov", action="store_true", help="Neyman-Pearson p-value against an order-1 markov model")
    p.add_argument("--limit", type=int, default=None, help=f"length limit (exact: {ENUM_LIMIT}, np-markov: {MARKOV_LIMIT})")
    p.add_argument("--seed", type=int, default=None)
    _add_model(p)
    p.set_defaults(func=cmd_pvalue)

    p = sub.add_parser("simulate", help="write a sample from a source model to stdout")
    _add_model(p)
    p.add_argument("-n", type=int, required=True, help="number of bits")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--format", choices=FORMATS, default="raw")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("entropy", help="entropy rate of a source model")
    _add_model(p)
    p.add_argument("--n-used", type=int, default=HMM_ENTROPY_N, help="sample length for hmm estimates")
    p.add_argument("--trials", type=int, default=HMM_ENTROPY_TRIALS, help="samples for hmm estimates")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_entropy)

    p = sub.add_parser("experiment", help="run an exponent / calibration experiment and write CSV")
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--experiment", choices=("convergence", "decimation", "type1", "power"))
    p.add_argument("--model", help="inline model string")
    p.add_argument("--method", help="'np' or a coder string")
    p.add_argument("--n-grid", help="comma-separated lengths")
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--pvalue", help="bound, exact or mc:M=<int>")
    p.add_argument("--alpha", help="comma-separated significance levels")
    p.add_argument("--out", help="output prefix: writes <out>.csv and <out>_summary.csv")
    p.set_defaults(func=cmd_experiment)
    return parser


def main(argv=None, out=None, err=None, stdin=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    stdin = stdin or sys.stdin.buffer
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_ERROR if exc.code not in (0, None) else 0
    try:
        return args.func(args, out, err, stdin)
    except (UsageError, ValueError, OSError, KeyError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"entropytest {args.command}: error: {msg}", file=err)
        return EXIT_ERROR


def run() -> None:
    sys.exit(main())


if __name__ == "__main__":
    run()
