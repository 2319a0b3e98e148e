"""Command-line entry point.

Subcommands: train (fit a policy and write checkpoint + log), eval (the
full-detection comparison or the partial-detection loss study), inspect-state
(dump the encoded detection grid and phase state at a chosen time), and
dump-config (print the merged configuration in the config-file format).

Flag values override config-file values which override built-in defaults;
CROSSFLOW_SEED overrides the seed last. All outputs land under --out, which
must already exist.
"""

from __future__ import annotations

import argparse
import os
import sys

from . import __version__
from .agent import train
from .config import (RunConfig, dump_config, grid_from, load_config_file,
                     merge_config, timing_from, train_config_from)
from .controllers import FixedTimeController
from .demand import STREAM_POLICY, sample_demand
from .encoder import encode_state, render_grid
from .geometry import SCENARIOS, build_scenario
from .harness import compare_fd, compare_pd, threshold_report
from .nn import CheckpointError
from .rng import RngStream
from .simulation import DT, TrafficSim

_DEFAULT_FD_CONTROLLERS = ("dqn", "max_pressure", "sotl")

# substream labels for inspect-state
_KEY_INSPECT_DEMAND = 50
_KEY_INSPECT_SIM = 51


def _opt(parser, flag, name=None, **kwargs):
    """Add a flag whose absence leaves the merged config untouched."""
    kwargs.setdefault("default", argparse.SUPPRESS)
    if name:
        kwargs["dest"] = name
    parser.add_argument(flag, **kwargs)


def _add_common(p):
    _opt(p, "--config", name="config_path", metavar="FILE",
         help="flat key=value config file (flags override it)")
    _opt(p, "--scenario",
         help="intersection layout tag: one of "
              + ", ".join(sorted(SCENARIOS))
              + " (default a; eval accepts a comma-separated list)")
    _opt(p, "--seed", type=int,
         help="master seed (default 0; CROSSFLOW_SEED overrides)")
    _opt(p, "--out", help="output directory, must exist (default runs)")
    _opt(p, "--jobs", type=int,
         help="parallel episode workers (default 1)")


def _add_agent(p):
    _opt(p, "--steps", type=int,
         help="training decision steps (default 150000)")
    _opt(p, "--pcv",
         help="detection mode: uniform, or fixed:<rate> (default uniform; "
              "fixed:1.0 trains full detection)")
    _opt(p, "--gamma", type=float,
         help="discount factor (tuned default 0.99)")
    _opt(p, "--lr", type=float,
         help="Adam learning rate (tuned default 1e-4)")
    _opt(p, "--eps-min", type=float,
         help="exploration floor (tuned default 0.01)")
    _opt(p, "--eps-decay-steps", type=int,
         help="steps to reach the exploration floor (tuned default 2000000)")
    _opt(p, "--buffer-capacity", type=int,
         help="replay ring capacity (tuned default 1000000)")
    _opt(p, "--warmup", type=int,
         help="replay fill before updates start (tuned default 100000)")
    _opt(p, "--batch-size", type=int,
         help="minibatch size (tuned default 64)")
    _opt(p, "--tau", type=float,
         help="target-network soft-update rate (tuned default 0.001)")
    _opt(p, "--checkpoint-every", type=int,
         help="periodic checkpoint interval in steps (default 0 = final only)")


def _add_world(p):
    _opt(p, "--min-green", type=float,
         help="minimum green seconds (tuned default 10)")
    _opt(p, "--yellow", type=float,
         help="change-stage seconds (tuned default 3)")
    _opt(p, "--all-red", type=float,
         help="clearance-stage seconds (tuned default 2)")
    _opt(p, "--max-green", type=float,
         help="forced-advance green cap in seconds (default 0 = disabled)")
    _opt(p, "--cell-length", type=float,
         help="detection grid cell length in m (tuned default 8)")
    _opt(p, "--detection-range", type=float,
         help="detection range upstream of the line in m (tuned default 160)")


def _add_eval(p):
    _opt(p, "--mode", choices=("fd", "pd"),
         help="fd: controller comparison; pd: detection-loss study "
              "(default fd)")
    _opt(p, "--episodes", type=int,
         help="episodes per scenario for fd (default 50)")
    _opt(p, "--pairs", type=int,
         help="episode pairs per scenario for pd (default 300)")
    _opt(p, "--controller",
         help="comma-separated controller ids; default "
              + ",".join(_DEFAULT_FD_CONTROLLERS))
    _opt(p, "--checkpoint", metavar="FILE",
         help="trained checkpoint for the dqn controller")
    _opt(p, "--ceiling-acceptable", type=float,
         help="acceptability loss ceiling in %% (default 40)")
    _opt(p, "--ceiling-optimal", type=float,
         help="optimality loss ceiling in %% (default 20)")


def _add_inspect(p):
    _opt(p, "--at", name="at_time", type=float,
         help="simulation time in seconds to inspect (default 0)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="crossflow",
        description="Deep-Q traffic signal control with partial detection "
                    "through connected vehicles.")
    parser.add_argument("--version", action="version",
                        version=f"crossflow {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a policy, write checkpoint "
                                           "and episode log")
    _add_common(p_train)
    _add_agent(p_train)
    _add_world(p_train)
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("eval", help="run the comparison studies, write "
                                         "CSV reports")
    _add_common(p_eval)
    _add_eval(p_eval)
    _add_world(p_eval)
    p_eval.set_defaults(func=cmd_eval)

    p_inspect = sub.add_parser("inspect-state",
                               help="print the detection grid and phase "
                                    "state at a given time")
    _add_common(p_inspect)
    _add_world(p_inspect)
    _add_inspect(p_inspect)
    p_inspect.set_defaults(func=cmd_inspect)

    p_dump = sub.add_parser("dump-config",
                            help="print the merged configuration")
    _add_common(p_dump)
    _add_agent(p_dump)
    _add_world(p_dump)
    _add_eval(p_dump)
    _add_inspect(p_dump)
    p_dump.set_defaults(func=cmd_dump_config)
    return parser


def _gather(args: argparse.Namespace) -> RunConfig:
    values = vars(args).copy()
    values.pop("func", None)
    values.pop("command", None)
    config_path = values.pop("config_path", None)
    file_values = load_config_file(config_path) if config_path else None
    return merge_config(file_values, values)


def _require_out_dir(path: str) -> None:
    if not os.path.isdir(path):
        raise FileNotFoundError(f"output directory {path!r} does not exist")


def _require_checkpoint(path: str) -> None:
    if not path:
        raise FileNotFoundError(
            "the dqn controller needs --checkpoint <file>")
    if not os.path.isfile(path):
        raise FileNotFoundError(f"checkpoint {path!r} does not exist")


def cmd_train(args) -> int:
    cfg = _gather(args)
    _require_out_dir(cfg.out)
    result = train(train_config_from(cfg))
    print(f"trained {result.steps} steps over {result.episodes} episodes")
    print(f"checkpoint: {result.checkpoint_path}")
    print(f"log: {result.log_path}")
    return 0


def cmd_eval(args) -> int:
    cfg = _gather(args)
    _require_out_dir(cfg.out)
    scenarios = cfg.scenario.split(",")
    timing = timing_from(cfg)
    grid = grid_from(cfg)
    if cfg.mode == "pd":
        _require_checkpoint(cfg.checkpoint)
        report = compare_pd(scenarios,
                            {s: cfg.checkpoint for s in scenarios},
                            pairs=cfg.pairs, seed=cfg.seed, timing=timing,
                            out_dir=cfg.out, jobs=cfg.jobs,
                            ceilings=(cfg.ceiling_acceptable,
                                      cfg.ceiling_optimal), grid=grid)
        sys.stdout.write(threshold_report(report))
        return 0
    controllers = (tuple(cfg.controller.split(",")) if cfg.controller
                   else _DEFAULT_FD_CONTROLLERS)
    if "dqn" in controllers:
        _require_checkpoint(cfg.checkpoint)
    report = compare_fd(scenarios, {s: cfg.checkpoint for s in scenarios},
                        episodes=cfg.episodes, seed=cfg.seed,
                        controllers=controllers, timing=timing,
                        out_dir=cfg.out, jobs=cfg.jobs, grid=grid)
    for s in report.summaries:
        print(f"{s.scenario} {s.controller}: mean_total_delay="
              f"{s.mean_total_delay:.3f} (std {s.std_total_delay:.3f}, "
              f"{s.episodes} episodes)")
    return 0


def cmd_inspect(args) -> int:
    cfg = _gather(args)
    inter = build_scenario(cfg.scenario)
    demand = sample_demand(
        inter, RngStream(cfg.seed, (_KEY_INSPECT_DEMAND,)))
    sim = TrafficSim(inter, demand,
                     RngStream(cfg.seed, (_KEY_INSPECT_SIM,)).derive_seed(),
                     timing=timing_from(cfg))
    controller = FixedTimeController()
    controller.reset(inter, sim.timing, RngStream(cfg.seed, (STREAM_POLICY,)))
    obs = sim.observe()
    for _ in range(int(round(cfg.at_time / DT))):
        sim.resolve_forced_advance()
        controller.tick(obs)
        if sim.decision_ready():
            action = controller.decide(obs)
            if action is not None:
                sim.apply_action(action)
        sim.step()
    grid = encode_state(obs, grid_from(cfg))
    print(f"scenario {cfg.scenario} t={sim.time:g}s phase={obs.phase} "
          f"stage={obs.stage} green_elapsed={obs.green_elapsed:g}s "
          f"cv_rate={demand.cv_rate:.3f}")
    print(f"vehicles in network: {sim.n_inserted - sim.n_exited}, "
          f"exited: {sim.n_exited}")
    sys.stdout.write(render_grid(grid, inter))
    return 0


def cmd_dump_config(args) -> int:
    cfg = _gather(args)
    sys.stdout.write(dump_config(cfg))
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, RuntimeError, CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
