"""Command line entry point: ``nsr run [options]``.

A JSON config file (the shape of :class:`RunConfig`, or a ``config.json``
written by a previous run) gives the base settings and flags override it.
Failures print a single ``error: {json}`` line on stderr and exit nonzero.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys

from .agent import WEIGHT_MODES
from .envs import TASKS, EnvSpec
from .exceptions import ConfigValidationError
from .runner import RunConfig, preset_configs, run_experiment

EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_RUNTIME = 1


def _seed_list(text):
    try:
        seeds = [int(s) for s in text.replace(" ", "").split(",") if s]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"seeds must be comma separated integers: {text!r}") from exc
    if not seeds:
        raise argparse.ArgumentTypeError("at least one seed is required")
    return seeds


def build_parser():
    parser = argparse.ArgumentParser(prog="nsr", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="train agents and write metrics")
    run.add_argument("--config", help="JSON file with RunConfig fields")
    run.add_argument("--preset", choices=("fig3", "fig4", "fig5"),
                     help="expand into the named batch of runs")
    run.add_argument("--env", choices=TASKS, help="task name")
    run.add_argument("--weight-mode", choices=WEIGHT_MODES)
    run.add_argument("--reuse-count", type=int)
    run.add_argument("--seeds", type=_seed_list, help="comma separated, e.g. 0,1,2")
    run.add_argument("--epochs", type=int)
    run.add_argument("--out", default=None, help="output root (default: runs)")
    run.add_argument("--jobs", type=int, default=1, help="parallel seed workers")
    run.add_argument("-v", "--verbose", action="store_true", help="log every epoch")
    return parser


def load_config(path) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict):
        raise ConfigValidationError(["config file must hold a JSON object"])
    if "config" in doc and isinstance(doc["config"], dict):
        doc = doc["config"]
    return RunConfig.from_dict(doc)


def config_from_args(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    changes = {}
    if args.env is not None and args.env != cfg.env.task:
        changes["env"] = EnvSpec(task=args.env, max_episode_steps=cfg.env.max_episode_steps,
                                 success_threshold=cfg.env.success_threshold,
                                 action_scale=cfg.env.action_scale)
    for flag, key in (("weight_mode", "weight_mode"), ("reuse_count", "reuse_count"),
                      ("seeds", "seeds"), ("epochs", "epochs"), ("out", "out_dir")):
        value = getattr(args, flag)
        if value is not None:
            changes[key] = value
    if cfg.out_dir is None and "out_dir" not in changes:
        changes["out_dir"] = "runs"
    if "env" in changes or "weight_mode" in changes or "reuse_count" in changes:
        changes.setdefault("name", None)
    return dataclasses.replace(cfg, **changes)


def _error(kind, message, code, **extra):
    print("error: " + json.dumps({"error": kind, "message": message, **extra}), file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(message)s")
    try:
        base = config_from_args(args)
        configs = preset_configs(args.preset, base) if args.preset else [base]
        problems = [f"{c.name}: {v}" for c in configs for v in c.violations()]
        if args.jobs < 1:
            problems.append("--jobs must be >= 1")
        if problems:
            raise ConfigValidationError(problems)
        for cfg in configs:
            report = run_experiment(cfg, jobs=args.jobs)
            mean = report.mean_success()
            print(json.dumps({
                "run": str(cfg.run_dir()),
                "seeds": list(cfg.seeds),
                "final_success_mean": float(mean[-1]),
                "first_epoch_success_0.8": report.first_epoch_reaching(0.8),
            }))
    except ConfigValidationError as exc:
        return _error("config", str(exc), EXIT_CONFIG, violations=list(exc.violations))
    except (json.JSONDecodeError, TypeError, ValueError) as exc:
        return _error("config", str(exc), EXIT_CONFIG)
    except OSError as exc:
        return _error("io", str(exc), EXIT_IO)
    except Exception as exc:  # noqa: BLE001 - last line of defense for the exit-code contract
        return _error("runtime", f"{type(exc).__name__}: {exc}", EXIT_RUNTIME)
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
