"""Follow one board position through the whole evaluation pipeline.

Atomic features are generated as text, instantiated into key-indexed
instance tables, and then queried through all four evaluation backends,
which must return identical feature sets. The instrumented run at the end
shows where the retrieval backend saves its work.

Run with ``python3 demos/feature_pipeline.py``; takes a few seconds.
"""

import random

from spatfeat.agents import build_store
from spatfeat.backends import BACKEND_NAMES, EvalCounters, make_backend
from spatfeat.features import generate_atomic, write_feature_lines
from spatfeat.games import game
from spatfeat.ordering import build_implications

g = game("breakthrough")

# Atomic features pair a bare action element with one walked requirement.
# The label "atomic-1-2" used elsewhere means walks up to one turn entry,
# straight runs up to length two.

feature_sets = {p: generate_atomic(g, 1, 2) for p in (1, 2)}
lines = write_feature_lines(feature_sets[1])
print(f"{len(feature_sets[1])} atomic features per player, e.g.")
for line in lines[1:4]:
    print("   ", line)
print("    ...")

# Instantiation grounds every feature at every anchor site, resolves the
# walks, and indexes the surviving instances by (player, from, to) so a
# query touches only the instances that can possibly match its action.

store = build_store(g, feature_sets)
instances = sum(1 for _ in store.instances())
print(f"\ninstantiated into {instances} instances "
      f"across {len(store.proactive)} proactive keys")

# Features whose conditions are purely positional (the reactive last-move
# features here, for instance) need no state inspection at all: they sit
# in the baseline table and their ids are unioned in by key lookup alone.

print(f"plus {len(store.baseline)} baseline keys of always-active ids")

implications = build_implications(g.players, g.piece_owner)
backends = {name: make_backend(name, store, implications)
            for name in BACKEND_NAMES}

# Play a few random opening moves, then ask every backend to evaluate the
# same legal actions. The returned ids index the mover's feature list.

rng = random.Random(4)
state = g.initial_state()
for _ in range(6):
    actions = g.legal_actions(state)
    state = g.apply(state, actions[rng.randrange(len(actions))])

actions = g.legal_actions(state)
print(f"\nposition after six random plies, {len(actions)} legal moves")
action = actions[0]
per_backend = {name: sorted(b.evaluate(state, action))
               for name, b in backends.items()}
reference = per_backend["naive"]
print(f"active features for move {action.from_site}->{action.to_site}: "
      f"{reference}")
for name, active in per_backend.items():
    status = "agrees" if active == reference else f"DISAGREES: {active}"
    print(f"  {name:14s} {status}")

# Count proposition evaluations over the whole move list. The naive
# backend re-tests every condition of every instance; the retrieval
# backend evaluates each proposition of a retrieved net at most once and
# deduces the rest through the implication table.

for name in ("naive", "spatternet"):
    counters = EvalCounters()
    for a in actions:
        backends[name].evaluate(state, a, counters)
    print(f"{name:11s} proposition evaluations for all "
          f"{len(actions)} moves: {counters.prop_evals}")
