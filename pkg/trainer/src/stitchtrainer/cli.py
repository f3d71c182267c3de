"""Command-line entry points: train adapters, then run package inference."""

import argparse
import json
import sys
from pathlib import Path

from .errors import TrainerError
from .inference import infer
from .training import TrainConfig, train


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="stitchtrainer", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="fine-tune adapters on a dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config", help="TrainConfig JSON file")
    p.add_argument("--iterations", type=int)
    p.add_argument("--rank", type=int)
    p.add_argument("--seed", type=int)

    p = sub.add_parser("infer", help="generate right halves for packages")
    p.add_argument("--dataset", required=True)
    p.add_argument("--adapters", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--steps", type=int)
    p.add_argument("--seed", type=int, default=0)

    args = parser.parse_args(argv)
    try:
        if args.command == "train":
            cfg = (
                TrainConfig.from_dict(json.loads(Path(args.config).read_text()))
                if args.config
                else TrainConfig()
            )
            if args.iterations is not None:
                cfg.iterations = args.iterations
            if args.rank is not None:
                cfg.rank = args.rank
            if args.seed is not None:
                cfg.seed = args.seed
            path = train(args.dataset, cfg, args.out)
            print(f"adapters written to {path}")
        else:
            written = infer(
                args.dataset,
                args.adapters,
                args.out,
                inference_steps=args.steps,
                seed=args.seed,
            )
            print(f"generated {len(written)} right halves under {args.out}")
    except TrainerError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
