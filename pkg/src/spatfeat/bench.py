"""Benchmark and evaluation harness.

Measures playout rates with active-feature computation on every legal
action, derives slowdown and rank tables, runs seat-balanced matches,
sweeps all backends against each other for oracle agreement, and emits
CSV/markdown reports.
"""

import csv
import math
import random
import time
from dataclasses import dataclass, field

from .agents import (
    LinearPolicy,
    MctsConfig,
    build_store,
    distribution_from_features,
    mcts_search,
    policy_distribution,
)
from .backends import BACKEND_NAMES, EvalCounters, make_backend
from .features import generate_atomic
from .instantiate import query_keys
from .ordering import build_implications

CSV_COLUMNS = ("game", "feature_set", "backend", "selector", "playouts",
               "seconds", "rate", "prop_evals")

# Decorrelates the warmup stream from the measured one so the measured
# playout sequence depends on the seed alone.
_WARMUP_SALT = 0x9E3779B97F4A7C15


@dataclass(frozen=True)
class BenchResult:
    game: str
    feature_set: str
    backend: str
    selector: str
    playouts: int
    seconds: float
    prop_evals: int

    @property
    def rate(self) -> float:
        return self.playouts / self.seconds if self.seconds > 0 else 0.0


def parse_set_label(label: str) -> tuple:
    """'atomic-L-S' -> (L, S)."""
    parts = label.split("-")
    if len(parts) == 3 and parts[0] == "atomic":
        try:
            return int(parts[1]), int(parts[2])
        except ValueError:
            pass
    raise ValueError(
        f"unknown feature-set label {label!r}; expected atomic-L-S")


def feature_sets_for_label(game_obj, label: str) -> dict:
    max_len, max_straight = parse_set_label(label)
    return {p: generate_atomic(game_obj, max_len, max_straight)
            for p in range(1, game_obj.players + 1)}


def _set_size_key(label):
    try:
        max_len, max_straight = parse_set_label(label)
    except ValueError:
        return (1, 0, 0, label)
    return (0, max_len, max_straight, label)


def _zero_policy(game_obj, feature_sets) -> LinearPolicy:
    policy = LinearPolicy(game_obj.players)
    for player, fs in feature_sets.items():
        policy.grow(player, len(fs))
    return policy


def _play_one(game_obj, backend, policy, selector, rng, counters):
    state = game_obj.initial_state()
    while not game_obj.is_terminal(state):
        actions = game_obj.legal_actions(state)
        feats = [backend.evaluate(state, a, counters) for a in actions]
        if selector == "policy":
            dist = distribution_from_features(policy.weights[state.mover],
                                              feats)
            idx = rng.choices(range(len(actions)), weights=dist)[0]
        else:
            idx = rng.randrange(len(actions))
        state = game_obj.apply(state, actions[idx])


def bench_playouts(game_obj, feature_sets, backend_name, *, warmup_s=5.0,
                   measure_s=30.0, playouts=None, seed=0, selector="uniform",
                   policy=None, label="custom",
                   implications=None) -> BenchResult:
    """Sequential playout benchmark over one game/set/backend combination.

    With ``playouts`` set, runs exactly that many playouts and reports the
    proposition-evaluation total (bit-reproducible for a fixed seed).
    Otherwise measures wall-clock throughput: warm up for ``warmup_s``,
    then count playouts for ``measure_s``; prop_evals is reported as 0
    because the totals are only meaningful at a fixed count.
    """
    if selector not in ("uniform", "policy"):
        raise ValueError(f"unknown selector {selector!r}")
    store = build_store(game_obj, feature_sets)
    if implications is None:
        implications = build_implications(game_obj.players,
                                          game_obj.piece_owner)
    backend = make_backend(backend_name, store, implications)
    if policy is None:
        policy = _zero_policy(game_obj, feature_sets)

    if playouts is not None:
        if playouts < 1:
            raise ValueError("playouts must be positive")
        counters = EvalCounters()
        rng = random.Random(seed)
        start = time.perf_counter()
        for _ in range(playouts):
            _play_one(game_obj, backend, policy, selector, rng, counters)
        elapsed = time.perf_counter() - start
        return BenchResult(game_obj.name, label, backend_name, selector,
                           playouts, elapsed, counters.prop_evals)

    if warmup_s <= 0 or measure_s <= 0:
        raise ValueError("durations must be positive")
    warm_rng = random.Random(seed ^ _WARMUP_SALT)
    deadline = time.perf_counter() + warmup_s
    while time.perf_counter() < deadline:
        _play_one(game_obj, backend, policy, selector, warm_rng, None)
    rng = random.Random(seed)
    done = 0
    start = time.perf_counter()
    deadline = start + measure_s
    while time.perf_counter() < deadline:
        _play_one(game_obj, backend, policy, selector, rng, None)
        done += 1
    elapsed = time.perf_counter() - start
    return BenchResult(game_obj.name, label, backend_name, selector, done,
                       elapsed, 0)


def slowdown_table(results, baseline_set=None) -> dict:
    """(game, feature_set, backend) -> baseline_rate / rate.

    The per-game baseline is the naive backend on the smallest feature
    set present (or ``baseline_set`` when given); values below 1 are
    speedups over that baseline.
    """
    table = {}
    for game_name in {r.game for r in results}:
        rows = [r for r in results if r.game == game_name]
        if baseline_set is None:
            labels = sorted({r.feature_set for r in rows
                             if r.backend == "naive"}, key=_set_size_key)
            if not labels:
                raise ValueError(f"no naive baseline result for {game_name}")
            base_label = labels[0]
        else:
            base_label = baseline_set
        base = [r for r in rows
                if r.backend == "naive" and r.feature_set == base_label]
        if not base:
            raise ValueError(
                f"missing baseline (naive, {base_label}) for {game_name}")
        base_rate = base[0].rate
        for r in rows:
            key = (r.game, r.feature_set, r.backend)
            table[key] = base_rate / r.rate if r.rate > 0 else math.inf
    return table


def rank_table(results) -> dict:
    """(game, feature_set, backend) -> rank, 1 = highest rate.

    Equal rates share the better rank (competition ranking).
    """
    groups = {}
    for r in results:
        group = groups.setdefault((r.game, r.feature_set), {})
        if r.backend in group:
            raise ValueError(
                f"duplicate result for {(r.game, r.feature_set, r.backend)}")
        group[r.backend] = r.rate
    ranks = {}
    for (game_name, label), rates in groups.items():
        for backend, rate in rates.items():
            better = sum(1 for other in rates.values() if other > rate)
            ranks[(game_name, label, backend)] = 1 + better
    return ranks


def rank_counts(ranks) -> dict:
    """backend -> {rank: times achieved} aggregated over game/set groups."""
    counts = {}
    for (_, _, backend), rank in ranks.items():
        per = counts.setdefault(backend, {})
        per[rank] = per.get(rank, 0) + 1
    return counts


# --- match runner ---

class RandomAgent:
    """Uniform random move choice."""

    def __init__(self, name="random"):
        self.name = name

    def choose(self, game_obj, state, rng, move_seconds=None):
        actions = game_obj.legal_actions(state)
        return actions[rng.randrange(len(actions))]


class GreedyPolicyAgent:
    """Plays the argmax of the linear policy, no search."""

    def __init__(self, name, policy, backend):
        self.name = name
        self.policy = policy
        self.backend = backend

    def choose(self, game_obj, state, rng, move_seconds=None):
        actions = game_obj.legal_actions(state)
        dist = policy_distribution(self.policy, state, actions, self.backend)
        return actions[max(range(len(actions)), key=dist.__getitem__)]


class MctsAgent:
    """Search agent; matches pick the most-visited move."""

    def __init__(self, name, policy, backend, iterations=None, c_puct=2.5,
                 epsilon=0.5):
        self.name = name
        self.policy = policy
        self.backend = backend
        self.iterations = iterations
        self.c_puct = c_puct
        self.epsilon = epsilon

    def choose(self, game_obj, state, rng, move_seconds=None):
        if move_seconds is not None:
            config = MctsConfig(c_puct=self.c_puct, epsilon=self.epsilon,
                                seconds=move_seconds,
                                final_move="max-visits")
        elif self.iterations is not None:
            config = MctsConfig(c_puct=self.c_puct, epsilon=self.epsilon,
                                iterations=self.iterations,
                                final_move="max-visits")
        else:
            raise ValueError(f"agent {self.name}: no per-move budget given")
        result = mcts_search(game_obj, state, self.policy, self.backend,
                             config, rng)
        return result.chosen


@dataclass(frozen=True)
class MatchResult:
    game: str
    agent_a: str
    agent_b: str
    wins: int
    draws: int
    losses: int

    @property
    def games(self) -> int:
        return self.wins + self.draws + self.losses

    @property
    def win_rate(self) -> float:
        """Agent A's score with draws counted as half a win."""
        return (self.wins + 0.5 * self.draws) / self.games

    def interval(self) -> tuple:
        """95% binomial interval for the win rate (normal approximation)."""
        p = self.win_rate
        half = 1.96 * math.sqrt(p * (1.0 - p) / self.games)
        return (p - half, p + half)


def run_match(game_obj, agent_a, agent_b, games, move_seconds=None,
              seed=0) -> MatchResult:
    """Seat-balanced match: A moves first in even-numbered games, B in odd.

    Each game runs from its own seed derived from the master seed, so the
    schedule is reproducible and games are independent.
    """
    if games < 2 or games % 2 != 0:
        raise ValueError("games must be even and at least 2")
    master = random.Random(seed)
    game_seeds = [master.randrange(2 ** 63) for _ in range(games)]
    wins = draws = losses = 0
    for index, game_seed in enumerate(game_seeds):
        rng = random.Random(game_seed)
        first, second = (agent_a, agent_b) if index % 2 == 0 \
            else (agent_b, agent_a)
        state = game_obj.initial_state()
        while not game_obj.is_terminal(state):
            agent = first if state.mover == 1 else second
            state = game_obj.apply(
                state, agent.choose(game_obj, state, rng, move_seconds))
        utils = game_obj.utilities(state)
        score_a = utils[0] if first is agent_a else utils[1]
        if score_a > 0:
            wins += 1
        elif score_a < 0:
            losses += 1
        else:
            draws += 1
    return MatchResult(game_obj.name, agent_a.name, agent_b.name, wins,
                       draws, losses)


# --- cross-backend oracle check ---

@dataclass
class CheckReport:
    game: str
    feature_set: str
    playouts: int
    queries: int
    mismatches: list = field(default_factory=list)
    eval_violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.mismatches and not self.eval_violations


def cross_backend_check(game_obj, feature_sets, *, label, playouts=100,
                        seed=0, backend_names=BACKEND_NAMES,
                        max_reports=5) -> CheckReport:
    """Drive seeded playouts and compare every backend on every query.

    Also enforces the at-most-once evaluation bound on the net backends:
    per query, the proposition-evaluation delta may not exceed the number
    of distinct ordered propositions across the consulted keys. The eager
    net backend runs with deduction self-checks on.
    """
    store = build_store(game_obj, feature_sets)
    implications = build_implications(game_obj.players, game_obj.piece_owner)
    backends = {
        name: make_backend(name, store, implications,
                           debug=(name == "spatternet"))
        for name in backend_names
    }
    counters = {name: EvalCounters() for name in backend_names}
    bounded = [name for name in backend_names
               if name in ("spatternet", "spatternet-jit")]
    reference = backend_names[0]
    rng = random.Random(seed)
    queries = 0
    mismatches = []
    violations = []
    for playout in range(playouts):
        state = game_obj.initial_state()
        while not game_obj.is_terminal(state):
            actions = game_obj.legal_actions(state)
            for action in actions:
                queries += 1
                before = {name: counters[name].prop_evals
                          for name in backend_names}
                answers = {name: backends[name].evaluate(state, action,
                                                      counters[name])
                        for name in backend_names}
                expected = answers[reference]
                for name in backend_names[1:]:
                    if answers[name] != expected and len(mismatches) \
                            < max_reports:
                        mismatches.append(
                            f"playout {playout} action "
                            f"({action.from_site},{action.to_site}): "
                            f"{name} {sorted(answers[name])} != "
                            f"{reference} {sorted(expected)}")
                keys = query_keys(store, state, action)
                for name in bounded:
                    nets = backends[name].nets
                    bound = sum(len(nets[k].props) for k in keys
                                if k in nets)
                    delta = counters[name].prop_evals - before[name]
                    if delta > bound and len(violations) < max_reports:
                        violations.append(
                            f"playout {playout} action "
                            f"({action.from_site},{action.to_site}): {name} "
                            f"evaluated {delta} props, bound {bound}")
            state = game_obj.apply(state, actions[rng.randrange(len(actions))])
    return CheckReport(game_obj.name, label, playouts, queries, mismatches,
                       violations)


# --- reports ---

def emit_csv(results, path):
    try:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(CSV_COLUMNS)
            for r in results:
                writer.writerow([r.game, r.feature_set, r.backend,
                                 r.selector, r.playouts, repr(r.seconds),
                                 f"{r.rate:.6f}", r.prop_evals])
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def read_results_csv(path):
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if tuple(header or ()) != CSV_COLUMNS:
                raise ValueError(f"{path}: unexpected header {header!r}")
            return [BenchResult(game, fset, backend, selector,
                                int(playouts), float(seconds),
                                int(prop_evals))
                    for game, fset, backend, selector, playouts, seconds,
                    _rate, prop_evals in reader]
    except OSError as exc:
        raise OSError(f"cannot read {path}: {exc}") from exc


def render_markdown(results) -> str:
    """Rate/slowdown/rank table plus aggregated rank counts."""
    slow = slowdown_table(results)
    ranks = rank_table(results)
    lines = [
        "| game | feature set | backend | selector | playouts | rate/s "
        "| slowdown | rank |",
        "| --- | --- | --- | --- | ---: | ---: | ---: | ---: |",
    ]
    ordered = sorted(results, key=lambda r: (r.game,
                                             _set_size_key(r.feature_set),
                                             r.backend))
    for r in ordered:
        key = (r.game, r.feature_set, r.backend)
        lines.append(f"| {r.game} | {r.feature_set} | {r.backend} "
                     f"| {r.selector} | {r.playouts} | {r.rate:.1f} "
                     f"| {slow[key]:.2f} | {ranks[key]} |")
    counts = rank_counts(ranks)
    top = max((rank for per in counts.values() for rank in per), default=0)
    lines.append("")
    lines.append("| backend | " + " | ".join(
        f"rank {i}" for i in range(1, top + 1)) + " |")
    lines.append("| --- | " + " | ".join("---:" for _ in range(top)) + " |")
    for backend in sorted(counts):
        per = counts[backend]
        cells = " | ".join(str(per.get(i, 0)) for i in range(1, top + 1))
        lines.append(f"| {backend} | {cells} |")
    return "\n".join(lines) + "\n"


def emit_markdown(results, path):
    try:
        with open(path, "w") as fh:
            fh.write(render_markdown(results))
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
