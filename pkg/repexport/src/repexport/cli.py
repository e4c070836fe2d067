"""Command line for the representation exporter.

    repexport CORPUS OUTPUT --model MODEL_ID [--device cpu]
    repexport CORPUS OUTPUT --random --dim 256 [--seed 0]
"""
from __future__ import annotations

import argparse
import sys

from .export import ExportError, ExportJob, export_random_reps, export_reps


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="repexport",
        description="Export per-token contextual representations to REP1")
    parser.add_argument("corpus", help="input corpus file (labels ignored)")
    parser.add_argument("output", help="output REP1 path")
    parser.add_argument("--model", help="pretrained model identifier or path")
    parser.add_argument("--device", default="cpu")
    parser.add_argument("--batch-size", type=int, default=16)
    parser.add_argument("--random", action="store_true",
                        help="write seeded random tensors instead of model output")
    parser.add_argument("--dim", type=int, help="dimension for --random mode")
    parser.add_argument("--seed", type=int, default=0)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.random:
            if not args.dim or args.dim < 1:
                print("error: --random requires a positive --dim", file=sys.stderr)
                return 2
            export_random_reps(args.corpus, args.dim, args.seed, args.output)
        else:
            if not args.model:
                print("error: either --model or --random is required", file=sys.stderr)
                return 2
            export_reps(ExportJob(args.corpus, args.output, args.model,
                                  device=args.device, batch_size=args.batch_size))
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except ExportError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
