"""Command-line interface.

Subcommands: bench (playout rates), rank (tables from a results CSV),
match (seat-balanced head-to-head), train (self-play with feature
discovery), gen-features (atomic feature files), check (cross-backend
oracle sweep; exits nonzero on any disagreement).
"""

import argparse
import sys

from .agents import LinearPolicy, MctsConfig, build_store, load_policy, \
    save_policy, self_play
from .backends import BACKEND_NAMES, make_backend
from .bench import (
    GreedyPolicyAgent,
    MctsAgent,
    RandomAgent,
    bench_playouts,
    cross_backend_check,
    emit_csv,
    feature_sets_for_label,
    parse_set_label,
    read_results_csv,
    render_markdown,
    run_match,
)
from .features import write_feature_lines
from .games import GAME_NAMES, game
from .ordering import build_implications

_CHECK_SETS = "atomic-1-1,atomic-1-2,atomic-2-2"


def _split(value: str, universe=None, what="name") -> list:
    names = [part.strip() for part in value.split(",") if part.strip()]
    if universe is not None:
        if names == ["all"]:
            return list(universe)
        for name in names:
            if name not in universe:
                raise SystemExit(
                    f"unknown {what} {name!r}; choose from "
                    f"{', '.join(universe)} or 'all'")
    return names


def _implications(game_obj):
    return build_implications(game_obj.players, game_obj.piece_owner)


def cmd_bench(args) -> int:
    games = _split(args.games, GAME_NAMES, "game")
    backends = _split(args.backends, BACKEND_NAMES, "backend")
    results = []
    for game_name in games:
        game_obj = game(game_name)
        if args.policy_file:
            policy, feature_sets = load_policy(args.policy_file)
            labels = [("trained", feature_sets, policy)]
        else:
            labels = [(label, feature_sets_for_label(game_obj, label), None)
                      for label in _split(args.sets)]
        for label, feature_sets, policy in labels:
            for backend_name in backends:
                r = bench_playouts(
                    game_obj, feature_sets, backend_name, label=label,
                    warmup_s=args.warmup, measure_s=args.measure,
                    playouts=args.playouts, seed=args.seed,
                    selector=args.selector, policy=policy)
                results.append(r)
                print(f"{r.game:13s} {r.feature_set:12s} {r.backend:15s} "
                      f"{r.playouts:6d} playouts {r.rate:10.1f}/s "
                      f"prop_evals {r.prop_evals}", flush=True)
    if args.out:
        emit_csv(results, args.out)
        print(f"wrote {args.out}")
    return 0


def cmd_rank(args) -> int:
    results = read_results_csv(args.results)
    if not results:
        print("no results in", args.results)
        return 1
    text = render_markdown(results)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
        print(f"wrote {args.out}")
    else:
        print(text, end="")
    return 0


def _build_agent(spec, game_obj, set_label, iterations):
    parts = spec.split(":")
    kind = parts[0]
    if kind == "random":
        return RandomAgent(spec)
    if kind == "greedy":
        if len(parts) != 2:
            raise SystemExit(f"agent {spec!r}: expected greedy:POLICYFILE")
        policy, feature_sets = load_policy(parts[1])
        store = build_store(game_obj, feature_sets)
        backend = make_backend("naive", store)
        return GreedyPolicyAgent(spec, policy, backend)
    if kind == "mcts":
        backend_name = parts[1] if len(parts) > 1 and parts[1] \
            else "spatternet-jit"
        if backend_name not in BACKEND_NAMES:
            raise SystemExit(f"agent {spec!r}: unknown backend "
                             f"{backend_name!r}")
        if len(parts) > 2:
            policy, feature_sets = load_policy(parts[2])
        else:
            feature_sets = feature_sets_for_label(game_obj, set_label)
            policy = LinearPolicy(game_obj.players)
            for player, fs in feature_sets.items():
                policy.grow(player, len(fs))
        store = build_store(game_obj, feature_sets)
        backend = make_backend(backend_name, store, _implications(game_obj))
        return MctsAgent(spec, policy, backend, iterations=iterations)
    raise SystemExit(f"unknown agent spec {spec!r}; expected random, "
                     f"greedy:FILE, or mcts[:BACKEND[:FILE]]")


def cmd_match(args) -> int:
    game_obj = game(args.game)
    needs_budget = any(spec.split(":")[0] == "mcts"
                       for spec in (args.agent_a, args.agent_b))
    if needs_budget and args.move_seconds is None and args.iterations is None:
        raise SystemExit("mcts agents need --move-seconds or --iterations")
    agent_a = _build_agent(args.agent_a, game_obj, args.set, args.iterations)
    agent_b = _build_agent(args.agent_b, game_obj, args.set, args.iterations)
    if agent_a.name == agent_b.name:
        agent_a.name += "[A]"
        agent_b.name += "[B]"
    result = run_match(game_obj, agent_a, agent_b, args.games,
                       move_seconds=args.move_seconds, seed=args.seed)
    lo, hi = result.interval()
    print(f"{result.game}: {agent_a.name} vs {agent_b.name} over "
          f"{result.games} games")
    print(f"  wins {result.wins}  draws {result.draws}  losses "
          f"{result.losses}")
    print(f"  win rate {result.win_rate:.3f}  95% CI [{lo:.3f}, {hi:.3f}]")
    return 0


def cmd_train(args) -> int:
    game_obj = game(args.game)
    atomic = parse_set_label(args.set)
    config = MctsConfig(iterations=args.iterations)

    def progress(episode, episodes, moves, discovered):
        print(f"episode {episode}/{episodes}: {moves} moves, "
              f"{discovered} features discovered", flush=True)

    result = self_play(game_obj, args.episodes, config, seed=args.seed,
                       atomic=atomic, backend_name=args.backend,
                       discovery=not args.no_discovery, progress=progress)
    save_policy(args.out, result.policy, result.feature_sets)
    sizes = ", ".join(f"player {p}: {len(fs)}"
                      for p, fs in sorted(result.feature_sets.items()))
    print(f"trained {result.episodes} episodes ({result.moves} moves, "
          f"{result.discovered} features discovered)")
    print(f"feature counts: {sizes}")
    print(f"wrote {args.out}")
    return 0


def cmd_gen_features(args) -> int:
    game_obj = game(args.game)
    fs = feature_sets_for_label(game_obj, args.set)[1]
    lines = write_feature_lines(fs)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write("\n".join(lines) + "\n")
        print(f"wrote {len(fs)} features to {args.out}")
    else:
        print("\n".join(lines))
    return 0


def cmd_check(args) -> int:
    games = _split(args.games, GAME_NAMES, "game")
    backends = _split(args.backends, BACKEND_NAMES, "backend")
    if len(backends) < 2:
        raise SystemExit("check needs at least two backends")
    failures = 0
    for game_name in games:
        game_obj = game(game_name)
        for label in _split(args.sets):
            feature_sets = feature_sets_for_label(game_obj, label)
            report = cross_backend_check(
                game_obj, feature_sets, label=label, playouts=args.playouts,
                seed=args.seed, backend_names=tuple(backends))
            status = "ok" if report.ok else "FAIL"
            print(f"{game_name:13s} {label:12s} {report.queries:8d} queries "
                  f"{status}", flush=True)
            for line in report.mismatches + report.eval_violations:
                print(f"  {line}")
            if not report.ok:
                failures += 1
    if failures:
        print(f"{failures} game/set combination(s) disagreed")
        return 1
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spatfeat",
        description="Spatial feature benchmarks, matches, and training.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("bench", help="measure playout rates")
    p.add_argument("--games", default="tictactoe",
                   help="comma-separated games, or 'all'")
    p.add_argument("--sets", default="atomic-1-1",
                   help="comma-separated atomic-L-S labels")
    p.add_argument("--backends", default=",".join(BACKEND_NAMES),
                   help="comma-separated backends, or 'all'")
    p.add_argument("--playouts", type=int, default=None,
                   help="fixed-count mode: run exactly N playouts")
    p.add_argument("--warmup", type=float, default=5.0,
                   help="wall-clock mode warmup seconds")
    p.add_argument("--measure", type=float, default=30.0,
                   help="wall-clock mode measurement seconds")
    p.add_argument("--selector", choices=("uniform", "policy"),
                   default="uniform")
    p.add_argument("--policy-file", default=None,
                   help="bench the trained set/weights from this file")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="CSV output path")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("rank", help="slowdown and rank tables from a CSV")
    p.add_argument("--results", required=True, help="CSV from 'bench --out'")
    p.add_argument("--out", default=None, help="markdown output path")
    p.set_defaults(func=cmd_rank)

    p = sub.add_parser("match", help="seat-balanced head-to-head match")
    p.add_argument("--game", required=True, choices=GAME_NAMES)
    p.add_argument("--agent-a", required=True,
                   help="random | greedy:FILE | mcts[:BACKEND[:FILE]]")
    p.add_argument("--agent-b", required=True)
    p.add_argument("--games", type=int, default=100)
    p.add_argument("--move-seconds", type=float, default=None)
    p.add_argument("--iterations", type=int, default=None,
                   help="per-move search budget when --move-seconds unset")
    p.add_argument("--set", default="atomic-1-2",
                   help="feature set for agents without a policy file")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_match)

    p = sub.add_parser("train", help="self-play training with discovery")
    p.add_argument("--game", required=True, choices=GAME_NAMES)
    p.add_argument("--episodes", type=int, default=50)
    p.add_argument("--iterations", type=int, default=64,
                   help="search iterations per move")
    p.add_argument("--set", default="atomic-1-2",
                   help="starting atomic set label")
    p.add_argument("--backend", default="spatternet-jit",
                   choices=BACKEND_NAMES)
    p.add_argument("--no-discovery", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="policy.spatw")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("gen-features", help="write an atomic feature file")
    p.add_argument("--game", required=True, choices=GAME_NAMES)
    p.add_argument("--set", default="atomic-1-2", help="atomic-L-S label")
    p.add_argument("--out", default=None, help="output path (default stdout)")
    p.set_defaults(func=cmd_gen_features)

    p = sub.add_parser("check", help="cross-backend oracle sweep")
    p.add_argument("--games", default="all")
    p.add_argument("--sets", default=_CHECK_SETS)
    p.add_argument("--backends", default=",".join(BACKEND_NAMES))
    p.add_argument("--playouts", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_check)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
