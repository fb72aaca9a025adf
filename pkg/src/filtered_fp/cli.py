"""Command-line entry point: single runs, noise sweeps and game inspection."""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from .games import min_p_dominance, potential_reconstruct, pure_nash, gwfp_noise_threshold
from .harness import (MATRIX_ALGOS, POSG_ALGOS, ExperimentConfig, emit_outputs, fp_filter,
                      lffp_config, load_config, resolve_env, resolve_game, sweep_matrix,
                      sweep_posg, with_overrides)
from .learning import StepSchedule, run_fp, write_trace_csv
from .lffp import run_lffp
from .posg import dump_posg

log = logging.getLogger("filtered_fp")


def _eps_list(text: str) -> tuple:
    return tuple(float(x) for x in text.split(",") if x.strip())


def _base_config(args, kind: str) -> ExperimentConfig:
    if args.config:
        cfg = load_config(args.config)
        if cfg.kind != kind:
            raise ValueError(f"config kind is {cfg.kind!r}, expected {kind!r}")
    elif kind == "posg-sweep":
        cfg = ExperimentConfig.posg_defaults()
    else:
        cfg = ExperimentConfig()
    return cfg


def cmd_run_matrix(args) -> int:
    game = resolve_game(args.game)
    filt = fp_filter(args.algo, args.eps, args.assumed_eps)
    trace = run_fp(game, args.eps, filt, StepSchedule.parse(args.schedule), args.iters,
                   args.seed, args.snapshot_stride)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_trace_csv(trace, out / "trace.csv")
    print(f"{args.algo} eps={args.eps} seed={args.seed}: {trace.verdict.kind} "
          f"{trace.verdict.label(game)}")
    return 0


def cmd_run_posg(args) -> int:
    cfg = _base_config(args, "posg-sweep")
    cfg = with_overrides(cfg, env=args.env, env_config=args.env_config, depth=args.depth,
                         xi0=args.xi0, steps=args.steps, horizon=args.horizon,
                         schedule=args.schedule, assumed_eps=args.assumed_eps)
    posg = resolve_env(cfg.env, cfg.env_config)
    trace = run_lffp(posg, args.eps, lffp_config(cfg, args.algo, args.eps), cfg.steps,
                     cfg.horizon, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "episodes.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("episode", "steps_elapsed", "team_reward", "eps", "algo", "seed"))
        for k, (t, r) in enumerate(zip(trace.steps_elapsed, trace.episode_rewards)):
            w.writerow((k, int(t), repr(float(r)), repr(args.eps), args.algo, args.seed))
    print(f"{args.algo} eps={args.eps} seed={args.seed}: {len(trace.episode_rewards)} episodes, "
          f"final-quartile reward {trace.final_quartile_mean():.3f}")
    return 0


def _sweep(args, kind: str) -> int:
    cfg = _base_config(args, kind)
    cfg = with_overrides(
        cfg, base_seed=args.seed, seeds=args.seeds,
        eps_grid=_eps_list(args.eps) if args.eps else None,
        algorithms=tuple(args.algo.split(",")) if args.algo else None,
        schedule=args.schedule, assumed_eps=args.assumed_eps, out=args.out)
    if kind == "matrix-sweep":
        cfg = with_overrides(cfg, game=args.game, iterations=args.iters)
        result = sweep_matrix(cfg, workers=args.workers)
    else:
        cfg = with_overrides(cfg, env=args.env, env_config=args.env_config, depth=args.depth,
                             xi0=args.xi0, steps=args.steps, horizon=args.horizon)
        result = sweep_posg(cfg, workers=args.workers)
    files = emit_outputs(result, cfg.out)
    for a in result.aggregate:
        print(f"{a['algo']:6s} eps={a['eps']:.2f} {a['metric']}={a['value']:.2f} "
              f"+/- {a['two_se']:.2f} (n={a['n']})")
    print(f"wrote {', '.join(str(p) for p in files.values())}")
    return 0


def cmd_show_game(args) -> int:
    if args.env:
        posg = resolve_env(args.env, args.env_config)
        print(f"POSG: {posg.num_states} states, actions {posg.action_counts}, "
              f"{posg.num_signals} signals, gamma {posg.gamma}")
        if args.out:
            out = Path(args.out)
            out.mkdir(parents=True, exist_ok=True)
            dump_posg(posg, out / "posg.json")
            print(f"wrote {out / 'posg.json'}")
        return 0
    game = resolve_game(args.game)
    np.set_printoptions(suppress=True)
    print(f"{game.num_players} players, actions {game.action_counts}")
    for i in range(game.num_players):
        print(f"payoffs of player {i}:\n{game.payoffs[i]}")
    pot = potential_reconstruct(game)
    print("exact potential game" if pot.ok else
          f"not a potential game (cycle {pot.cycle} sums to {pot.cycle_sum:.4g})")
    for eq in pure_nash(game):
        rep = min_p_dominance(game, eq.actions)
        thr = gwfp_noise_threshold(rep.min_p, game.num_players)
        print(f"pure NE {game.label(eq.actions)} strict={eq.strict} min-p={rep.min_p:.4f} "
              f"unfiltered noise threshold={thr:.4f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML or JSON experiment config")
    common.add_argument("--out", default="out", help="output directory")
    common.add_argument("--workers", type=int, default=1)
    common.add_argument("--seed", type=int, default=None, help="run seed / base seed")
    common.add_argument("-v", "--verbose", action="store_true")

    def learn_flags(p, sweep: bool):
        p.add_argument("--eps", type=str if sweep else float, default=None if sweep else 0.0,
                       help="comma-separated grid" if sweep else "true observation noise")
        p.add_argument("--assumed-eps", type=float, default=None,
                       help="filter's noise model (default: the true eps)")
        p.add_argument("--schedule", default=None, help="step sizes as 'c,rho'")

    def posg_flags(p):
        p.add_argument("--env", default=None, help="box, toy or a POSG JSON file")
        p.add_argument("--env-config", default=None, help="box-pushing layout (YAML/JSON)")
        p.add_argument("--depth", type=int, default=None)
        p.add_argument("--xi0", type=float, default=None)
        p.add_argument("--steps", type=int, default=None)
        p.add_argument("--horizon", type=int, default=None)

    parser = argparse.ArgumentParser(
        prog="filtered-fp", description="Fictitious play under noisy action observations.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run-matrix", parents=[common], help="one repeated normal-form run")
    p.add_argument("--game", default="uav")
    p.add_argument("--algo", choices=MATRIX_ALGOS, default="ffp")
    p.add_argument("--iters", type=int, default=10_000)
    p.add_argument("--snapshot-stride", type=int, default=100)
    learn_flags(p, sweep=False)
    p.set_defaults(func=cmd_run_matrix)

    p = sub.add_parser("run-posg", parents=[common], help="one lookahead learning run")
    p.add_argument("--algo", choices=POSG_ALGOS, default="lffp")
    learn_flags(p, sweep=False)
    posg_flags(p)
    p.set_defaults(func=cmd_run_posg)

    p = sub.add_parser("sweep-matrix", parents=[common], help="noise sweep on a matrix game")
    p.add_argument("--game", default=None)
    p.add_argument("--algo", default=None, help="comma-separated: gwfp,ffp")
    p.add_argument("--iters", type=int, default=None)
    p.add_argument("--seeds", type=int, default=None, help="number of seeds")
    learn_flags(p, sweep=True)
    p.set_defaults(func=lambda a: _sweep(a, "matrix-sweep"))

    p = sub.add_parser("sweep-posg", parents=[common], help="noise sweep on a POSG")
    p.add_argument("--algo", default=None, help="comma-separated: lffp,lgwfp")
    p.add_argument("--seeds", type=int, default=None, help="number of seeds")
    learn_flags(p, sweep=True)
    posg_flags(p)
    p.set_defaults(func=lambda a: _sweep(a, "posg-sweep"))

    p = sub.add_parser("show-game", parents=[common], help="inspect a game or POSG")
    p.add_argument("--game", default="uav")
    p.add_argument("--env", default=None)
    p.add_argument("--env-config", default=None)
    p.set_defaults(func=cmd_show_game, out=None)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command in ("run-matrix", "run-posg"):
        if args.seed is None:
            args.seed = 0
        if args.schedule is None and args.command == "run-matrix":
            args.schedule = "0,1"
    try:
        return args.func(args)
    except (ValueError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
