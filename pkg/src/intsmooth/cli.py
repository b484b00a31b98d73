"""Command-line harness.

Subcommands: certify, predict, bench, oracle-sweep, gen-dataset, build-cdf.
A simple key=value config file supplies defaults that flags override.
Exit codes: 0 success, 1 usage error, 2 data error, 3 internal error.
"""

from __future__ import annotations

import argparse
import sys
from fractions import Fraction

from . import __version__
from .bench import DEFAULT_RADIUS_GRID, run_bench, run_certify, run_predict
from .certify import CertConfig
from .datasets import generate_blobs, load_dataset, save_dataset_csv, save_dataset_idx
from .dgauss import build_cdf_table, noise_params, save_cdf_table
from .errors import FormatError
from .oracle import (
    CLAMPED,
    WRAPPED,
    TinyDomain,
    certificate_soundness_sweep,
    random_tabular,
)
from .qnn import load_model

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_INTERNAL = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _parse_rational(text: str) -> Fraction:
    try:
        if "/" in text:
            num, den = text.split("/", 1)
            return Fraction(int(num), int(den))
        return Fraction(int(text))
    except (ValueError, ZeroDivisionError) as exc:
        raise UsageError(f"bad rational {text!r}: {exc}") from exc


def _load_config(path) -> dict:
    values = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise FormatError(f"{path}:{lineno}: expected key=value")
            key, _, val = line.partition("=")
            values[key.strip().replace("-", "_")] = val.strip()
    return values


def _build_parser() -> _Parser:
    p = _Parser(prog="intsmooth", description=__doc__)
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def add_common(sp):
        sp.add_argument("--config", help="key=value config file (flags override)")
        sp.add_argument("--sigma", help="noise scale, integer or num/den, lattice units")
        sp.add_argument("--n1", type=int, default=100, help="selection sample count")
        sp.add_argument("--n2", type=int, default=10000, help="estimation sample count")
        sp.add_argument("--alpha", default="1/1000", help="confidence level, rational")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--out", help="output CSV path")
        sp.add_argument("--threads", type=int, default=1)
        sp.add_argument(
            "--pool", type=int, default=0, help="noise pool size (0 = fresh draws)"
        )

    c = sub.add_parser("certify", help="certify every dataset item")
    add_common(c)
    c.add_argument("--model", required=True)
    c.add_argument("--dataset", required=True)
    c.add_argument("--format", default="csv", choices=["csv", "idx"])
    c.add_argument("--radius-grid", help="comma-separated lattice radii for CA curve")
    c.add_argument("--metrics-out", help="write the CA/CP table here")

    c = sub.add_parser("predict", help="prediction sweep over sample counts")
    add_common(c)
    c.add_argument("--model", required=True)
    c.add_argument("--dataset", required=True)
    c.add_argument("--format", default="csv", choices=["csv", "idx"])
    c.add_argument("--n", default="100,1000,10000", help="comma-separated sample counts")

    c = sub.add_parser("bench", help="integer vs float32 forward microbenchmark")
    c.add_argument("--model", required=True)
    c.add_argument("--reps", type=int, default=30)
    c.add_argument("--batch", type=int, default=1024)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--out")

    c = sub.add_parser("oracle-sweep", help="exact certificate soundness sweep")
    c.add_argument("--sigma", default="1,2", help="comma-separated lattice scales")
    c.add_argument("--d", type=int, default=2)
    c.add_argument("--half-width", type=int, default=6)
    c.add_argument("--classes", type=int, default=3)
    c.add_argument("--instances", type=int, default=100)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--mode", default=WRAPPED, choices=[WRAPPED, CLAMPED])
    c.add_argument("--out")

    c = sub.add_parser("gen-dataset", help="generate the synthetic blob dataset")
    c.add_argument("--out", required=True)
    c.add_argument("--seed", type=int, default=7)
    c.add_argument("--item-seed", type=int)
    c.add_argument("--count", type=int, default=300)
    c.add_argument("--d", type=int, default=16)
    c.add_argument("--classes", type=int, default=3)
    c.add_argument("--format", default="csv", choices=["csv", "idx"])

    c = sub.add_parser("build-cdf", help="precompute and serialize a CDF table")
    c.add_argument("--sigma", required=True)
    c.add_argument("--trunc", type=int)
    c.add_argument("--out", required=True)
    return p


def _apply_config(args) -> None:
    if getattr(args, "config", None):
        overrides = _load_config(args.config)
        explicit = {a.lstrip("-").replace("-", "_").split("=")[0] for a in sys.argv[1:]}
        for key, val in overrides.items():
            if not hasattr(args, key):
                raise UsageError(f"unknown config key {key!r}")
            if key in explicit:
                continue  # flags win
            current = getattr(args, key)
            if isinstance(current, int) and not isinstance(current, bool):
                setattr(args, key, int(val))
            else:
                setattr(args, key, val)


def _cert_config(args) -> CertConfig:
    if not args.sigma:
        raise UsageError("--sigma is required (flag or config)")
    sigma = noise_params(_parse_rational(args.sigma))
    return CertConfig(
        sigma=sigma,
        n1=args.n1,
        n2=args.n2,
        alpha=_parse_rational(args.alpha),
        seed=args.seed,
    )


def _cmd_certify(args) -> int:
    model = load_model(args.model)
    dataset = load_dataset(args.dataset, args.format)
    cfg = _cert_config(args)
    grid = DEFAULT_RADIUS_GRID
    if args.radius_grid:
        grid = [int(r) for r in args.radius_grid.split(",")]
    report = run_certify(
        model,
        dataset,
        cfg,
        out_csv=args.out,
        threads=args.threads,
        radius_grid=grid,
        pool_size=args.pool,
    )
    if args.metrics_out:
        with open(args.metrics_out, "w") as fh:
            fh.write(report.to_csv())
    print(
        f"certified {report.certified_count}/{report.total}"
        f" (CP={float(report.certified_percentage):.4f},"
        f" CA(0)={float(report.ca_certified[0]):.4f})"
    )
    return EXIT_OK


def _cmd_predict(args) -> int:
    model = load_model(args.model)
    dataset = load_dataset(args.dataset, args.format)
    cfg = _cert_config(args)
    n_values = [int(n) for n in str(args.n).split(",")]
    summaries = run_predict(
        model, dataset, cfg, n_values, out_csv=args.out, pool_size=args.pool
    )
    for s in summaries:
        print(
            f"n={s.num_samples}: correct={s.correct:.4f}"
            f" wrong={s.wrong:.4f} abstain={s.abstain:.4f}"
        )
    return EXIT_OK


def _cmd_bench(args) -> int:
    model = load_model(args.model)
    report = run_bench(model, args.reps, batch=args.batch, seed=args.seed)
    print(
        f"int {report.int_forward_s * 1e3:.3f} ms vs float {report.float_forward_s * 1e3:.3f} ms"
        f" (ratio {report.speed_ratio:.3f});"
        f" weights {report.weight_bytes_int8}B vs {report.weight_bytes_float32}B;"
        f" container {report.container_bytes_int}B vs {report.container_bytes_float}B"
        f" ({report.container_shrink * 100:.1f}% smaller)"
    )
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(report.to_csv())
    return EXIT_OK


def _cmd_oracle_sweep(args) -> int:
    domain = TinyDomain(d=args.d, half_width=args.half_width)
    sigmas = [_parse_rational(s) for s in args.sigma.split(",")]
    instances = []
    for sigma in sigmas:
        params = noise_params(sigma, trunc=min(args.half_width, 8))
        for i in range(args.instances):
            f = random_tabular(domain, args.classes, seed=args.seed * 100003 + i)
            instances.append((f"s{sigma}_{i}", f, params))
    report = certificate_soundness_sweep(instances, mode=args.mode)
    print(
        f"{args.mode}: {len(report.rows)} certificates checked,"
        f" {report.certified_count} certified,"
        f" violations={report.total_violations}"
    )
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(report.to_csv())
    return EXIT_OK if report.total_violations == 0 else EXIT_INTERNAL


def _cmd_gen_dataset(args) -> int:
    ds = generate_blobs(
        args.seed, args.count, d=args.d, num_classes=args.classes, item_seed=args.item_seed
    )
    if args.format == "csv":
        save_dataset_csv(ds, args.out)
    else:
        save_dataset_idx(ds, args.out)
    print(f"wrote {len(ds)} items (d={ds.d}, classes={ds.num_classes}) to {args.out}")
    return EXIT_OK


def _cmd_build_cdf(args) -> int:
    params = noise_params(_parse_rational(args.sigma), trunc=args.trunc)
    table = build_cdf_table(params)
    save_cdf_table(table, args.out)
    print(f"wrote CDF table (trunc={params.trunc}, {2 * params.trunc + 1} entries) to {args.out}")
    return EXIT_OK


_HANDLERS = {
    "certify": _cmd_certify,
    "predict": _cmd_predict,
    "bench": _cmd_bench,
    "oracle-sweep": _cmd_oracle_sweep,
    "gen-dataset": _cmd_gen_dataset,
    "build-cdf": _cmd_build_cdf,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        _apply_config(args)
        return _HANDLERS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FormatError, FileNotFoundError, ValueError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # pragma: no cover - defensive
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
