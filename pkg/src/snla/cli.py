"""Command line entry point: ``snla train|eval|pareto|sweep``.

Exit codes: 0 success, 1 configuration error, 2 training divergence, 3 I/O error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys

from .agents import CompatibilityError, TrainingDivergedError
from .environment import ConfigError
from .harness import evaluate_checkpoint, load_config, run_experiment, run_trial
from .nnopt import CheckpointFormatError

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED, EXIT_IO = 0, 1, 2, 3


def _emit(obj):
    print(json.dumps(obj, indent=2, sort_keys=True))


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="snla", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train and test one trial")
    t.add_argument("--config", required=True)
    t.add_argument("--algo")
    t.add_argument("--w1", type=float, help="outage weight")
    t.add_argument("--seed", type=int, help="master seed")
    t.add_argument("--out", help="output directory")

    e = sub.add_parser("eval", help="test a saved checkpoint")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--config", required=True)
    e.add_argument("--seed", type=int)

    pa = sub.add_parser("pareto", help="random-weight trials and their Pareto front")
    pa.add_argument("--config", required=True)
    pa.add_argument("--trials", type=int)

    sw = sub.add_parser("sweep", help="one trial per listed outage weight")
    sw.add_argument("--config", required=True)
    sw.add_argument("--weights", required=True, help="comma separated, e.g. 0.1,0.5,0.9")
    return p


def _load(args):
    cfg = load_config(args.config)
    updates = {}
    if getattr(args, "algo", None):
        updates["algorithm"] = args.algo
    if getattr(args, "out", None):
        updates["output_dir"] = args.out
    if getattr(args, "command", "") == "train" and args.seed is not None:
        updates["master_seed"] = args.seed
    if getattr(args, "trials", None) is not None:
        updates.update(trials=args.trials, weight_list=[])
    if getattr(args, "weights", None):
        try:
            weights = [float(x) for x in args.weights.split(",") if x.strip()]
        except ValueError as exc:
            raise ConfigError("weights", f"cannot parse {args.weights!r}") from exc
        updates.update(weight_list=weights, trials=len(weights))
    if args.command == "pareto" and "weight_list" not in updates:
        updates["weight_list"] = []
    return dataclasses.replace(cfg, **updates) if updates else cfg


def _summary(result, target):
    frac = sum(1 for a in result.episode_availability if a >= target) / len(result.episode_availability)
    return {
        "weight_outage": result.weight_outage,
        "gate_passed": result.gate_passed,
        "gate_episode_fraction": frac,
        "mean_energy_fraction": result.mean_energy_fraction,
        "exceedance_prob": result.exceedance_prob,
        "max_run_length": result.max_run_length,
    }


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _load(args)
        target = cfg.env.availability_target
        if args.command == "train":
            rec = run_trial(cfg, 0, weight=args.w1)
            out = _summary(rec.result, target)
            out.update(checkpoint=rec.checkpoint_path, training_episodes=len(rec.training_reward_trace))
            _emit(out)
        elif args.command == "eval":
            _emit(_summary(evaluate_checkpoint(args.checkpoint, cfg, seed=args.seed), target))
        else:
            records, front = run_experiment(cfg)
            _emit({
                "trials": [dict(_summary(r.result, target), trial=r.trial_index,
                                checkpoint=r.checkpoint_path) for r in records],
                "front": [{"label": p.label, "energy": p.energy, "exceedance": p.exceedance}
                          for p in front],
                "output_dir": cfg.output_dir,
            })
    except CheckpointFormatError as exc:
        print(f"unreadable checkpoint: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ConfigError, CompatibilityError, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TrainingDivergedError as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


def main(argv=None):
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
