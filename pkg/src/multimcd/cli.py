"""Command line: ``multimcd {train,eval,ablate,bench}``.

Exit codes: 0 success, 2 configuration error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import logging
import sys

from . import experiments as ex
from .autodiff import AutodiffError
from .data import DataError
from .model import CheckpointError, ModelSpecError

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3


def _n_list(text):
    try:
        values = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    return values


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="multimcd", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat TOML file of run settings")
    common.add_argument("--seed", type=int)
    common.add_argument("--output-dir")
    common.add_argument("--n-classifiers", type=int)
    common.add_argument("--variant", help="full | remove:i-j | duplicate:i-j:k-l (1-based heads)")
    common.add_argument("--n-list", type=_n_list, help="comma-separated head counts for bench")
    common.add_argument("--source-csv")
    common.add_argument("--target-csv")
    common.add_argument("-v", "--verbose", action="store_true")

    sub.add_parser("train", parents=[common], help="train once and write a run directory")
    ev = sub.add_parser("eval", parents=[common], help="score a checkpoint on a dataset")
    ev.add_argument("--checkpoint", required=True)
    sub.add_parser("ablate", parents=[common], help="full vs removed vs duplicated pair terms")
    sub.add_parser("bench", parents=[common], help="epoch time and discrepancy curves versus n")
    return parser


def _config(args) -> ex.RunConfig:
    task = "csv" if (args.source_csv or args.target_csv) else None
    return ex.load_config(
        args.config,
        seed=args.seed,
        output_dir=args.output_dir,
        n_classifiers=args.n_classifiers,
        variant=args.variant,
        n_list=args.n_list,
        task=task,
        source_csv=args.source_csv,
        target_csv=args.target_csv,
    )


def _fmt(v):
    return "unavailable" if v is None else f"{v:.6f}"


def _train(cfg):
    out = ex.run_train(cfg)
    print(f"wrote {out}")


def _eval(cfg, checkpoint):
    r = ex.run_eval(checkpoint, cfg)
    print(f"source accuracy: {_fmt(r['source_accuracy'])}")
    print(f"target accuracy: {_fmt(r['target_accuracy'])}")
    for i, (s, t) in enumerate(zip(r["source_per_head"], r["target_per_head"] or
                                   [None] * len(r["source_per_head"])), start=1):
        print(f"head {i}: source {_fmt(s)} target {_fmt(t)}")
    print(f"target risk: {_fmt(r['target_risk'])}")


def _ablate(cfg):
    header, rows = ex.run_ablation(cfg)
    print(",".join(header))
    for row in rows:
        print(",".join(f"{v:.4f}" if isinstance(v, float) else str(v) for v in row))
    print(f"wrote {cfg.output_dir}/ablation.csv")


def _bench(cfg):
    table, warnings = ex.run_bench(cfg)
    for r in table:
        print(f"n={r.n}: {r.mean_epoch_ms:.3f} ± {r.std_epoch_ms:.3f} ms/epoch "
              f"over {r.epochs_timed} warm epochs")
    for w in warnings:
        print(f"warning: {w}", file=sys.stderr)
    print(f"wrote {cfg.output_dir}/bench.csv and curves.csv")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args)
        if args.command == "train":
            _train(cfg)
        elif args.command == "eval":
            _eval(cfg, args.checkpoint)
        elif args.command == "ablate":
            _ablate(cfg)
        else:
            _bench(cfg)
    except (ex.ConfigError, ModelSpecError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FileNotFoundError, CheckpointError, DataError, AutodiffError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
