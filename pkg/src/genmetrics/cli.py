"""Command-line front end.

Exit codes: 0 success, 1 usage error, 2 data or validation error.
Machine-readable output goes to stdout (or ``--out``); progress and
diagnostics go to stderr.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .embed_io import FORMATS, EmbeddingError, EmbeddingSet, load_embeddings, prefix, save_embeddings
from .metrics import DEFAULT_A, FAMILIES, MetricConfig, MetricReport, compute_report, scoring_gap
from .nn import ChunkPlan, default_threads
from .synthlab import (
    GaussianSpec,
    SYNTH,
    k_ablation,
    sample_gaussian,
    shift_sweep,
    split_outliers,
    stability_bias,
    variance_sweep,
)

log = logging.getLogger("genmetrics")

EXIT_USAGE = 1
EXIT_DATA = 2

# Options whose value may legitimately start with "-" (e.g. "--grid -3:3:25").
_SIGNED_VALUE_FLAGS = {"--grid", "--outlier-mean", "--mean"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def parse_grid(text: str) -> np.ndarray:
    """``start:stop:count`` (inclusive, evenly spaced) or a comma-separated list."""
    try:
        if ":" in text:
            start, stop, count = text.split(":")
            count = int(count)
            if count < 1:
                raise ValueError
            return np.linspace(float(start), float(stop), count)
        return np.array([float(v) for v in text.split(",") if v.strip()])
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"invalid grid {text!r}; use start:stop:count or a comma-separated list") from None


def parse_int_list(text: str) -> list[int]:
    try:
        values = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid integer list {text!r}") from None
    if not values:
        raise argparse.ArgumentTypeError("empty list")
    return values


def parse_families(text: str) -> list[str]:
    fams = [f.strip().lower() for f in text.split(",") if f.strip()]
    if fams == ["all"]:
        return list(FAMILIES)
    bad = [f for f in fams if f not in FAMILIES]
    if bad or not fams:
        raise argparse.ArgumentTypeError(f"unknown families {bad}; choose from {', '.join(FAMILIES)} or all")
    return fams


def positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value}")
    return value


def positive_float(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
    if not value > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {value}")
    return value


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--threads", type=positive_int, default=None,
                   help="worker threads (default: $GENMETRICS_THREADS or CPU count)")
    p.add_argument("--chunk", type=positive_int, default=1024, help="rows per distance block")
    p.add_argument("--config", default=None,
                   help="JSON file of option defaults; explicit flags take precedence")
    p.add_argument("-v", "--verbose", action="store_true", help="progress messages on stderr")


def _input_opts(p: argparse.ArgumentParser) -> None:
    p.add_argument("--input-format", choices=FORMATS, default=None,
                   help="embedding file format (default: from extension, .npy else rawbin)")
    p.add_argument("--max-samples", type=positive_int, default=None,
                   help="use only the first N rows of each input file")


def _sweep_opts(p: argparse.ArgumentParser, n_default: int = 10000) -> None:
    p.add_argument("--n", type=positive_int, default=n_default, help="samples per set")
    p.add_argument("--dim", type=positive_int, default=64, help="dimensionality")
    p.add_argument("--seed", type=int, default=0, help="base seed")
    p.add_argument("--runs", type=positive_int, default=1, help="repetitions per grid point")
    p.add_argument("--families", type=parse_families, default=list(FAMILIES),
                   help="comma-separated families from ipr,dc,pppr or 'all'")
    p.add_argument("--a", type=positive_float, default=DEFAULT_A, help="P-precision/recall radius multiplier")
    p.add_argument("--out", default=None, help="output file (default: stdout)")
    p.add_argument("--format", choices=("csv", "json"), default=None,
                   help="output format (default: from --out extension, else csv)")
    p.add_argument("--summary", action="store_true", help="CSV rows of mean/std instead of per-run values")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="genmetrics",
                     description="kNN-based fidelity/diversity metrics for generative models.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("compute", help="metrics between a real and a fake embedding file")
    p.add_argument("real_path")
    p.add_argument("fake_path")
    p.add_argument("--family", choices=FAMILIES + ("all",), default="all")
    p.add_argument("--k", type=positive_int, default=None, help="k for all families (default: family default)")
    p.add_argument("--a", type=positive_float, default=DEFAULT_A)
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--no-timing", action="store_true", help="report seconds as 0 for byte-stable output")
    _input_opts(p)
    _common(p)

    p = sub.add_parser("synth", help="write a seeded Gaussian embedding file")
    p.add_argument("--n", type=positive_int, required=True)
    p.add_argument("--dim", type=positive_int, required=True)
    p.add_argument("--mean", type=float, default=0.0, help="mean u of N(u*1, vI)")
    p.add_argument("--var", type=positive_float, default=1.0, help="variance scale v of N(u*1, vI)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=FORMATS, default=None)
    p.add_argument("--dtype-bits", type=int, choices=(32, 64), default=64)
    _common(p)

    p = sub.add_parser("sweep-shift", help="real N(0,I) vs fake N(u*1,I) over a grid of u")
    p.add_argument("--grid", type=parse_grid, default=parse_grid("-3:3:25"), help="u grid")
    p.add_argument("--outlier-mean", type=float, default=None, help="append one outlier from N(m*1,I)")
    p.add_argument("--outlier-role", choices=("real", "fake"), default="real")
    p.add_argument("--k-list", type=parse_int_list, default=None, help="evaluate each family at these k")
    _sweep_opts(p)
    _common(p)

    p = sub.add_parser("sweep-variance", help="real N(0,I) vs fake N(0,vI) over a grid of v")
    p.add_argument("--grid", type=parse_grid, default=parse_grid("0.2:1.5:14"), help="v grid")
    _sweep_opts(p)
    _common(p)

    p = sub.add_parser("stability", help="bias and spread between identical Gaussians")
    p.add_argument("--n-grid", type=parse_int_list, default=[1000, 5000, 10000])
    p.add_argument("--n-true", type=positive_int, default=50000, help="set size for the presumed true value")
    p.add_argument("--runs-true", type=positive_int, default=50, help="runs for the presumed true value")
    _sweep_opts(p)
    p.set_defaults(runs=50)
    _common(p)

    p = sub.add_parser("ablate-k", help="shift sweep repeated over several k")
    p.add_argument("--k-grid", type=parse_int_list, default=[2, 3, 5, 8])
    p.add_argument("--grid", type=parse_grid, default=parse_grid("-3:3:25"), help="u grid")
    p.add_argument("--outlier-mean", type=float, default=-2.0)
    p.add_argument("--no-outlier", action="store_true")
    _sweep_opts(p)
    _common(p)

    p = sub.add_parser("split", help="split embeddings into inliers/outliers by k-NN distance")
    p.add_argument("embeddings_path")
    p.add_argument("--k", type=positive_int, default=5)
    p.add_argument("--ratio", type=float, default=0.05, help="outlier fraction")
    p.add_argument("--out-inliers", required=True)
    p.add_argument("--out-outliers", required=True)
    p.add_argument("--manifest", default=None, help="index manifest path (default: stdout)")
    p.add_argument("--format", choices=FORMATS, default=None, help="output format (default: from extension)")
    _input_opts(p)
    _common(p)

    p = sub.add_parser("gap", help="per-sample PSR minus max-normalised DSR, sorted")
    p.add_argument("real_path")
    p.add_argument("fake_path")
    p.add_argument("--top", type=int, default=None, help="rows with the highest gap")
    p.add_argument("--bottom", type=int, default=None, help="rows with the lowest gap")
    p.add_argument("--k-pppr", type=positive_int, default=4)
    p.add_argument("--a", type=positive_float, default=DEFAULT_A)
    p.add_argument("--k-dc", type=positive_int, default=5)
    _input_opts(p)
    _common(p)

    return parser


def _normalize_argv(argv: list[str]) -> list[str]:
    out, i = [], 0
    while i < len(argv):
        tok = argv[i]
        if tok in _SIGNED_VALUE_FLAGS and i + 1 < len(argv) and argv[i + 1].startswith("-"):
            out.append(f"{tok}={argv[i + 1]}")
            i += 2
            continue
        out.append(tok)
        i += 1
    return out


def _subparser(parser: argparse.ArgumentParser, name: str) -> argparse.ArgumentParser:
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices[name]
    raise KeyError(name)


def parse_args(argv: list[str]) -> argparse.Namespace:
    parser = build_parser()
    argv = _normalize_argv(argv)
    args = parser.parse_args(argv)
    if args.config is None:
        return args
    try:
        with open(args.config) as fh:
            overrides = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        parser.exit(EXIT_USAGE, f"genmetrics: error: cannot read --config: {exc}\n")
    if not isinstance(overrides, dict):
        parser.exit(EXIT_USAGE, "genmetrics: error: --config must hold a JSON object\n")
    sub = _subparser(parser, args.command)
    known = {a.dest: a for a in sub._actions}
    converted = {}
    for key, value in overrides.items():
        dest = key.replace("-", "_")
        if dest not in known or dest in ("config", "help"):
            parser.exit(EXIT_USAGE, f"genmetrics: error: unknown --config key {key!r}\n")
        action = known[dest]
        if action.type is not None and isinstance(value, str):
            try:
                value = action.type(value)
            except argparse.ArgumentTypeError as exc:
                parser.exit(EXIT_USAGE, f"genmetrics: error: --config {key}: {exc}\n")
        converted[dest] = value
    sub.set_defaults(**converted)
    return parser.parse_args(argv)


def _load(path: str, args) -> EmbeddingSet:
    emb = load_embeddings(path, args.input_format, label=Path(path).stem)
    if args.max_samples is not None:
        emb = prefix(emb, args.max_samples)
    return emb


def _plan(args) -> ChunkPlan:
    return ChunkPlan(row_chunk=args.chunk)


def _threads(args) -> int:
    return args.threads if args.threads is not None else default_threads()


def _check_dims(real: EmbeddingSet, fake: EmbeddingSet) -> None:
    if real.dim != fake.dim:
        raise EmbeddingError(f"dimension mismatch: real has D={real.dim}, fake has D={fake.dim}")


def cmd_compute(args) -> int:
    real = _load(args.real_path, args)
    fake = _load(args.fake_path, args)
    _check_dims(real, fake)
    families = FAMILIES if args.family == "all" else (args.family,)
    reports = []
    for fam in families:
        cfg = MetricConfig(fam, k=args.k, a=args.a, plan=_plan(args), threads=_threads(args))
        report = compute_report(real, fake, fam, cfg)
        if args.no_timing:
            report = MetricReport(report.family, report.fidelity, report.diversity, report.f1,
                                  report.config, report.n_real, report.n_fake, 0.0)
        log.info("%s done in %.2fs", fam, report.seconds)
        reports.append(report)
    if args.format == "json":
        for report in reports:
            print(report.to_json())
    else:
        print(",".join(MetricReport.KEYS))
        for report in reports:
            print(report.to_csv_row())
    return 0


def cmd_synth(args) -> int:
    spec = GaussianSpec(args.n, args.dim, args.mean, args.var, args.seed, (SYNTH,))
    emb = sample_gaussian(spec, label="synth")
    save_embeddings(emb, args.out, args.format, dtype_bits=args.dtype_bits)
    print(f"wrote {emb.n}x{emb.dim} to {args.out}", file=sys.stderr)
    return 0


def _write_sweep(result, args, summary: bool) -> int:
    fmt = args.format or ("json" if args.out and args.out.endswith(".json") else "csv")
    text = result.to_json() if fmt == "json" else result.to_csv(summary=summary)
    if args.out:
        with open(args.out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    print(f"{result.config['experiment']}: {len(result.axis_values)} {result.axis_name} points x "
          f"{len(result.values)} series x {result.runs} runs -> {args.out or 'stdout'}", file=sys.stderr)
    return 0


def cmd_sweep_shift(args) -> int:
    result = shift_sweep(args.grid, args.outlier_mean, args.n, args.dim, args.k_list, args.families,
                         args.seed, args.runs, args.outlier_role, args.a, _plan(args), _threads(args))
    return _write_sweep(result, args, args.summary)


def cmd_sweep_variance(args) -> int:
    result = variance_sweep(args.grid, args.n, args.dim, args.families, args.seed, args.runs,
                            args.a, _plan(args), _threads(args))
    return _write_sweep(result, args, args.summary)


def cmd_stability(args) -> int:
    if args.runs < 2:
        raise UsageError("stability needs --runs >= 2")
    result = stability_bias(args.n_grid, args.runs, args.dim, args.families, args.seed,
                            args.n_true, args.runs_true, args.a, _plan(args), _threads(args))
    return _write_sweep(result, args, True)


def cmd_ablate_k(args) -> int:
    outlier = False if args.no_outlier else args.outlier_mean
    result = k_ablation(args.k_grid, args.grid, outlier, args.n, args.dim, args.families, args.seed,
                        args.runs, args.a, _plan(args), _threads(args))
    return _write_sweep(result, args, args.summary)


def cmd_split(args) -> int:
    if not 0 <= args.ratio < 1:
        raise UsageError(f"--ratio must be in [0, 1), got {args.ratio}")
    emb = _load(args.embeddings_path, args)
    split = split_outliers(emb, args.k, args.ratio, _plan(args), _threads(args))
    inliers, outliers = split.apply(emb)
    save_embeddings(inliers, args.out_inliers, args.format)
    manifest = split.manifest()
    manifest["inliers_path"] = args.out_inliers
    manifest["outliers_path"] = None
    if outliers is not None:
        save_embeddings(outliers, args.out_outliers, args.format)
        manifest["outliers_path"] = args.out_outliers
    text = json.dumps(manifest) + "\n"
    if args.manifest:
        Path(args.manifest).write_text(text)
    else:
        sys.stdout.write(text)
    print(f"split {emb.n} rows: {len(split.inlier_indices)} inliers, "
          f"{len(split.outlier_indices)} outliers", file=sys.stderr)
    return 0


def cmd_gap(args) -> int:
    real = _load(args.real_path, args)
    fake = _load(args.fake_path, args)
    _check_dims(real, fake)
    for name in ("top", "bottom"):
        value = getattr(args, name)
        if value is not None and value < 0:
            raise UsageError(f"--{name} must be >= 0")
    plan, threads = _plan(args), _threads(args)
    res = scoring_gap(real, fake,
                      MetricConfig("pppr", k=args.k_pppr, a=args.a, plan=plan, threads=threads),
                      MetricConfig("dc", k=args.k_dc, plan=plan, threads=threads))
    order = res.order
    if args.top is not None or args.bottom is not None:
        m = len(order)
        top = args.top or 0
        bottom = args.bottom or 0
        keep = sorted(set(range(min(top, m))) | set(range(max(m - bottom, 0), m)))
        order = order[keep]
    lines = ["index,psr,dsr_norm,gap"]
    for j in order:
        lines.append(f"{j},{float(res.psr[j])!r},{float(res.dsr_norm[j])!r},{float(res.gap[j])!r}")
    sys.stdout.write("\n".join(lines) + "\n")
    return 0


COMMANDS = {
    "compute": cmd_compute,
    "synth": cmd_synth,
    "sweep-shift": cmd_sweep_shift,
    "sweep-variance": cmd_sweep_variance,
    "stability": cmd_stability,
    "ablate-k": cmd_ablate_k,
    "split": cmd_split,
    "gap": cmd_gap,
}


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"genmetrics {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (EmbeddingError, ValueError, OSError, MemoryError) as exc:
        print(f"genmetrics {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
