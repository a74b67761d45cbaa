"""Command-line entry points.

Exit codes: 0 success, 1 configuration error, 2 runtime failure.
"""

import argparse
import dataclasses
import json
import sys

from . import pipeline
from .errors import InvalidConfig, QipfsegError


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="qipfseg",
        description="Deterministic single-shot uncertainty decomposition "
        "for pixel classifiers, with softmax, MC-dropout, and ensemble baselines.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run the full experiment and write artifacts")
    run.add_argument("--config", required=True, help="key=value config file")
    run.add_argument("--out", required=True, help="output directory")
    run.add_argument("--seed", type=int, default=None, help="override the config seed")

    bench = sub.add_parser("bench", help="kernel backend and scaling benchmarks")
    bench.add_argument("--config", required=True, help="key=value config file")

    exp = sub.add_parser("export-features", help="train and dump features + labels (FTEN)")
    exp.add_argument("--config", required=True)
    exp.add_argument("--out", required=True, help="output FTEN path (labels go to <out>.labels)")

    ev = sub.add_parser("eval", help="evaluate externally supplied FTEN features")
    ev.add_argument("--features", required=True)
    ev.add_argument("--labels", required=True)
    ev.add_argument("--config", required=True)
    ev.add_argument("--out", default=None, help="optional output directory for artifacts")
    return parser


def _print_report(report):
    for name, res in report.methods.items():
        avg = {k: ("NA" if v is None else f"{v:.4f}") for k, v in res.averages.items()}
        print(
            f"{name:11s} PA={avg.get('PA', 'NA')} PU={avg.get('PU', 'NA')} "
            f"PAvPU={avg.get('PAvPU', 'NA')} "
            f"passes/frame={res.forward_passes_per_frame:.0f} "
            f"seconds={report.timings[name]:.3f}"
        )


def main(argv=None):
    args = _build_parser().parse_args(argv)
    try:
        cfg = pipeline.load_config(args.config)
        if getattr(args, "seed", None) is not None:
            cfg = dataclasses.replace(cfg, seed=args.seed)
    except (InvalidConfig, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1

    try:
        if args.command == "run":
            report = pipeline.run_experiment(cfg)
            written = pipeline.export(report, args.out)
            _print_report(report)
            print(f"wrote {len(written)} files to {args.out}")
        elif args.command == "bench":
            backends = pipeline.bench_backends()
            scaling = pipeline.bench_scaling(n_base=cfg.n_max, m_base=cfg.modes,
                                             seed=cfg.seed)
            print(json.dumps({"backends": backends, "scaling": scaling}, indent=2))
        elif args.command == "export-features":
            feats, labels = pipeline.export_features(cfg, args.out)
            print(f"features: {feats}\nlabels: {labels}")
        else:  # eval
            report = pipeline.eval_external(args.features, args.labels, cfg)
            _print_report(report)
            if args.out:
                pipeline.export(report, args.out)
                print(f"artifacts in {args.out}")
    except InvalidConfig as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (QipfsegError, OSError) as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
