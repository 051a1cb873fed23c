"""Train a small policy by self-play, save it, and benchmark the backends.

The run is deliberately tiny (a dozen tictactoe episodes) so the whole
script finishes in well under a minute; the same machinery scales to the
long runs behind ``spatfeat train``.

Run with ``python3 demos/train_and_benchmark.py``.
"""

import tempfile
from pathlib import Path

from spatfeat.agents import (
    MctsConfig,
    build_store,
    load_policy,
    save_policy,
    self_play,
)
from spatfeat.backends import BACKEND_NAMES, make_backend
from spatfeat.bench import (
    GreedyPolicyAgent,
    RandomAgent,
    bench_playouts,
    rank_table,
    run_match,
    slowdown_table,
)
from spatfeat.features import write_feature_lines
from spatfeat.games import game
from spatfeat.ordering import build_implications

g = game("tictactoe")

# Self-play: every move runs a short search, the visit distribution is the
# training target, and after each episode both players may add up to two
# discovered features (combinations that correlate with the policy loss).

print("training 12 episodes of tictactoe self-play")
trained = self_play(g, 12, MctsConfig(iterations=48), seed=5,
                    atomic=(1, 2))
for p, fs in sorted(trained.feature_sets.items()):
    print(f"  player {p}: {len(fs)} features after discovery")

# Atomic features have one requirement (one semicolon past the action
# element); anything longer was discovered during training.
discovered = [line for line
              in write_feature_lines(trained.feature_sets[1])[1:]
              if line.count(";") > 1]
if discovered:
    print("  discovered conjunctions for player 1:")
    for line in discovered:
        print("   ", line)

# Policies travel as a single text file: per-player feature blocks plus
# one weight per line, exact float round-trip.

with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "tictactoe.spatw"
    save_policy(path, trained.policy, trained.feature_sets)
    print(f"\nsaved policy to {path.name} "
          f"({path.stat().st_size} bytes)")
    policy, feature_sets = load_policy(path)

# The greedy agent plays the argmax of the reloaded policy with no search
# at all. Even this little training beats uniform random play.

implications = build_implications(g.players, g.piece_owner)
backend = make_backend("naive", build_store(g, feature_sets), implications)
match = run_match(g, GreedyPolicyAgent("greedy", policy, backend),
                  RandomAgent(), 40, seed=3)
print(f"greedy policy vs random over {match.games} games: "
      f"{match.wins} wins, {match.draws} draws, {match.losses} losses")

# Benchmark all four backends on the same fixed playout sequence. Rates
# are playouts per second; slowdown is relative to the naive backend on
# this set; prop_evals counts actual proposition evaluations, where the
# retrieval backends do their saving.

print("\nfixed-count benchmark, 400 tictactoe playouts per backend")
results = [bench_playouts(g, trained.feature_sets, name, playouts=400,
                          seed=8, label="trained")
           for name in BACKEND_NAMES]
slow = slowdown_table(results)
ranks = rank_table(results)
print(f"{'backend':15s} {'rate/s':>9s} {'slowdown':>9s} "
      f"{'prop_evals':>11s} {'rank':>5s}")
for r in results:
    key = (r.game, r.feature_set, r.backend)
    print(f"{r.backend:15s} {r.rate:9.1f} {slow[key]:9.2f} "
          f"{r.prop_evals:11d} {ranks[key]:5d}")
