"""Command-line entry point (``sadh``).

Exit codes: 0 success, 2 bad config or arguments, 3 data error,
4 numeric failure, 1 anything else.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import dump_config, load_config
from .errors import (
    ConfigError,
    DataError,
    DegenerateVectorError,
    DimensionError,
    MissingEntryError,
    NumericError,
    SadhError,
)

EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 2, 3, 4

log = logging.getLogger("sadh")


def _exit_code(exc: BaseException) -> int:
    from .runner import StageError

    if isinstance(exc, StageError):
        exc = exc.cause
    if isinstance(exc, ConfigError):
        return EXIT_CONFIG
    if isinstance(exc, (NumericError, DegenerateVectorError)):
        return EXIT_NUMERIC
    if isinstance(exc, (DataError, MissingEntryError, DimensionError, FileNotFoundError)):
        return EXIT_DATA
    return 1


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def _ints(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sadh", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    def with_config(sp):
        sp.add_argument("-c", "--config", help="INI config file")
        sp.add_argument("-s", "--set", dest="overrides", action="append", default=[],
                        metavar="SECTION.KEY=VALUE", help="override one config value")
        sp.add_argument("-o", "--output", help="run directory (overrides experiment.output_dir)")
        return sp

    g = sub.add_parser("gen-data", help="write a synthetic dataset as CSV")
    g.add_argument("out_dir")
    g.add_argument("--n-per-class", type=int, default=550)
    g.add_argument("--classes", type=int, default=4)
    g.add_argument("--dim", type=int, default=32)
    g.add_argument("--multi-label-prob", type=float, default=0.0)
    g.add_argument("--noise", type=float, default=0.1)
    g.add_argument("--seed", type=int, default=7)

    for name, text in (
        ("train-semantic", "Stage 1: train the label network"),
        ("build-dict", "build dictionaries from the run's label network"),
        ("train-image", "Stage 2: train the feature network against the run's dictionary"),
        ("eval", "encode and evaluate the run's feature network"),
        ("pipeline", "all stages end to end"),
        ("crossmodal", "bimodal run with a synthetic text modality"),
    ):
        with_config(sub.add_parser(name, help=text))

    a = with_config(sub.add_parser("ablate", help="compare the full, sym, mars and cos variants"))
    a.add_argument("--seeds", type=_ints, default=[0])

    m = with_config(sub.add_parser("sweep-margin", help="MAP as a function of a fixed margin"))
    m.add_argument("--margins", type=_floats, default=[0.0, 0.1, 0.2, 0.3])
    m.add_argument("--seeds", type=_ints, default=[0])

    gc = sub.add_parser("gradcheck", help="finite-difference check of every objective")
    gc.add_argument("--batch", type=int, default=8)
    gc.add_argument("--eps", type=float, default=1e-6)
    gc.add_argument("--tol", type=float, default=1e-4)
    gc.add_argument("--seed", type=int, default=0)

    sc = with_config(sub.add_parser("show-config", help="print the effective config"))
    sc.set_defaults(show=True)
    return p


def _cfg(args):
    overrides = list(args.overrides)
    if args.output:
        overrides.append(f"output_dir={args.output}")
    return load_config(args.config, overrides)


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    from . import runner

    cmd = args.command
    if cmd == "gen-data":
        from .data import generate_synthetic, save_dataset

        ds = generate_synthetic(args.n_per_class, args.classes, args.dim,
                                args.multi_label_prob, args.noise, args.seed)
        f, lab = save_dataset(ds, args.out_dir)
        print(f"wrote {len(ds)} items to {f} and {lab}")
    elif cmd == "gradcheck":
        from .gradcheck import check_all

        reports = check_all(batch=args.batch, eps=args.eps, tolerance=args.tol, seed=args.seed)
        for name, rep in reports.items():
            print(f"{name:12s} {rep}")
        return 0 if all(r.passed for r in reports.values()) else EXIT_NUMERIC
    elif cmd == "show-config":
        sys.stdout.write(dump_config(_cfg(args)))
    elif cmd in ("train-semantic", "build-dict", "train-image", "eval"):
        out = runner.run_stage(_cfg(args), cmd)
        print(f"{cmd}: done ({out})")
    elif cmd == "pipeline":
        res = runner.run_pipeline(_cfg(args))
        print(f"MAP {res.map:.4f} ({res.run_dir})")
    elif cmd == "crossmodal":
        res = runner.run_crossmodal(_cfg(args))
        for (a, b), v in res["maps"].items():
            print(f"{a} -> {b}: MAP {v:.4f}")
        print(f"random ranking baseline: {res['random_baseline']:.4f}")
    elif cmd == "ablate":
        rows = runner.run_ablation_suite(_cfg(args), seeds=args.seeds)
        for r in rows:
            print(f"{r['variant']:5s} mean MAP {r['mean']:.4f}")
    elif cmd == "sweep-margin":
        rows = runner.run_margin_sweep(_cfg(args), args.margins, seeds=args.seeds)
        for r in rows:
            print(f"m={r['margin']:.2f}  semantic {r['map_semantic']:.4f}  image {r['map_image']:.4f}")
    return 0


def main(argv=None) -> int:
    try:
        return run(argv)
    except (SadhError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _exit_code(exc)


if __name__ == "__main__":
    sys.exit(main())
