"""Feature-guided play and training: linear softmax policy, PUCT search,
replay, gradient steps, and feature discovery by instance recombination.

Policies are per-player weight vectors over feature ids. The search uses
the backend to compute each action's active features, both for priors at
expanded nodes and for the policy-sampled half of playout moves, which is
exactly the workload the backends compete on.
"""

from __future__ import annotations

import math
import random
import time
from dataclasses import dataclass, field
from fractions import Fraction

from .features import Feature, FeatureSet, is_reactive, orbit_key, \
    transform_feature
from .games import Game
from .geometry import TWO_PI
from .instantiate import ANY, InstanceStore, evaluate_prop, instantiate, \
    prop_sort_key, query_keys


@dataclass(frozen=True)
class MctsConfig:
    """Search budget and constants; exactly one budget field is set."""

    c_puct: float = 2.5
    epsilon: float = 0.5
    iterations: int | None = None
    seconds: float | None = None
    final_move: str = "proportional"

    def __post_init__(self):
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError("epsilon must lie in [0, 1]")
        if (self.iterations is None) == (self.seconds is None):
            raise ValueError("set exactly one of iterations or seconds")
        if self.iterations is not None and self.iterations < 1:
            raise ValueError("iteration budget must be positive")
        if self.final_move not in ("proportional", "max-visits"):
            raise ValueError(f"unknown final-move rule {self.final_move!r}")


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.005
    rms_decay: float = 0.9
    momentum: float = 0.9
    epsilon: float = 1e-8
    weight_decay: float = 1e-6
    batch: int = 30

    def __post_init__(self):
        for name in ("lr", "rms_decay", "momentum", "epsilon",
                     "weight_decay", "batch"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


class LinearPolicy:
    """Per-player weights plus the optimizer state that travels with them.

    All four arrays stay index-aligned with the player's feature set and
    grow with zeros when features are added.
    """

    def __init__(self, players: int = 2):
        self.players = players
        self.weights = {p: [] for p in range(1, players + 1)}
        self.ms = {p: [] for p in range(1, players + 1)}
        self.mg = {p: [] for p in range(1, players + 1)}
        self.mom = {p: [] for p in range(1, players + 1)}

    def grow(self, player: int, count: int):
        for arr in (self.weights, self.ms, self.mg, self.mom):
            arr[player].extend([0.0] * count)

    def size(self, player: int) -> int:
        return len(self.weights[player])

    def copy(self) -> "LinearPolicy":
        c = LinearPolicy(self.players)
        for p in range(1, self.players + 1):
            c.weights[p] = list(self.weights[p])
            c.ms[p] = list(self.ms[p])
            c.mg[p] = list(self.mg[p])
            c.mom[p] = list(self.mom[p])
        return c


def action_features(backend, state, actions):
    """Active feature ids per action, in the mover's id space."""
    return [backend.evaluate(state, a) for a in actions]


def softmax(logits):
    m = max(logits)
    exps = [math.exp(l - m) for l in logits]
    total = sum(exps)
    return [e / total for e in exps]


def distribution_from_features(weights, feats_per_action):
    logits = [sum(weights[f] for f in feats) for feats in feats_per_action]
    return softmax(logits)


def policy_distribution(policy: LinearPolicy, state, actions, backend):
    """Softmax of summed feature weights per action; a pass carries no
    features and therefore a zero logit."""
    if not actions:
        raise ValueError("need at least one action")
    feats = action_features(backend, state, actions)
    return distribution_from_features(policy.weights[state.mover], feats)


@dataclass
class Experience:
    """One recorded decision: enough to retrain on (feats, pi_mcts) and to
    re-test instance activity for discovery (state, chosen action)."""

    state: object
    actions: tuple
    chosen_index: int
    feats: tuple
    pi_mcts: tuple


class ReplayBuffer:
    """FIFO ring of experience tuples."""

    def __init__(self, capacity: int = 2500):
        self.capacity = capacity
        self._items = []
        self._next = 0

    def append(self, item):
        if len(self._items) < self.capacity:
            self._items.append(item)
        else:
            self._items[self._next] = item
            self._next = (self._next + 1) % self.capacity

    def sample(self, rng, k):
        if not self._items:
            raise ValueError("cannot sample from an empty buffer")
        if k >= len(self._items):
            return list(self._items)
        return rng.sample(self._items, k)

    def __len__(self):
        return len(self._items)

    def __iter__(self):
        return iter(self._items)


def sample_loss(weights, sample) -> float:
    """Cross-entropy between the sample's search distribution and the
    current policy."""
    logits = [sum(weights[f] for f in feats) for feats in sample.feats]
    m = max(logits)
    logz = m + math.log(sum(math.exp(l - m) for l in logits))
    return -sum(p * (l - logz)
                for p, l in zip(sample.pi_mcts, logits) if p > 0.0)


def mean_batch_loss(weights, batch) -> float:
    return sum(sample_loss(weights, s) for s in batch) / len(batch)


def batch_gradient(weights, batch):
    """Analytic gradient of the mean cross-entropy loss: for each action,
    (pi - pi_mcts) spread over its active features."""
    grad = [0.0] * len(weights)
    for sample in batch:
        dist = distribution_from_features(weights, sample.feats)
        for p, target, feats in zip(dist, sample.pi_mcts, sample.feats):
            delta = p - target
            for f in feats:
                grad[f] += delta
    n = len(batch)
    return [g / n for g in grad]


def train_step(policy: LinearPolicy, player: int, batch,
               config: TrainConfig = TrainConfig()) -> LinearPolicy:
    """One centered-RMSProp step on the mean batch loss, then weight decay."""
    if not batch:
        raise ValueError("batch must be non-empty")
    w = policy.weights[player]
    ms, mg, mom = policy.ms[player], policy.mg[player], policy.mom[player]
    grad = batch_gradient(w, batch)
    rho, mu = config.rms_decay, config.momentum
    decay = 1.0 - config.weight_decay
    for i, g in enumerate(grad):
        mg[i] = rho * mg[i] + (1.0 - rho) * g
        ms[i] = rho * ms[i] + (1.0 - rho) * g * g
        mom[i] = mu * mom[i] + config.lr * g / math.sqrt(
            ms[i] - mg[i] * mg[i] + config.epsilon)
        w[i] = (w[i] - mom[i]) * decay
    return policy


class _Node:
    __slots__ = ("state", "actions", "feats", "priors", "children", "n", "w",
                 "total_n", "visits", "value_sum", "terminal_utils")

    def __init__(self, game_obj: Game, state, policy, backend):
        self.state = state
        self.visits = 0
        self.value_sum = 0.0
        if game_obj.is_terminal(state):
            self.terminal_utils = game_obj.utilities(state)
            return
        self.terminal_utils = None
        self.actions = game_obj.legal_actions(state)
        self.feats = action_features(backend, state, self.actions)
        self.priors = distribution_from_features(
            policy.weights[state.mover], self.feats)
        self.children = [None] * len(self.actions)
        self.n = [0] * len(self.actions)
        self.w = [0.0] * len(self.actions)
        self.total_n = 0

    @property
    def value_avg(self):
        return self.value_sum / self.visits if self.visits else 0.0

    def select(self, c_puct):
        if self.total_n == 0:
            # No visit mass yet: the exploration term vanishes for every
            # action, and its limit ranks actions by prior.
            return max(range(len(self.actions)), key=lambda i: self.priors[i])
        sqrt_total = math.sqrt(self.total_n)
        fallback = self.value_avg
        best, best_score = 0, -math.inf
        for i in range(len(self.actions)):
            q = self.w[i] / self.n[i] if self.n[i] else fallback
            score = q + c_puct * self.priors[i] * sqrt_total / (1 + self.n[i])
            if score > best_score:
                best, best_score = i, score
        return best


@dataclass
class SearchResult:
    actions: list
    visits: list
    chosen_index: int
    feats: list

    @property
    def chosen(self):
        return self.actions[self.chosen_index]

    def distribution(self):
        total = sum(self.visits)
        return [v / total for v in self.visits]


def _playout_value(game_obj, state, policy, backend, epsilon, rng):
    current = state
    while not game_obj.is_terminal(current):
        actions = game_obj.legal_actions(current)
        if rng.random() < epsilon:
            action = actions[rng.randrange(len(actions))]
        else:
            dist = policy_distribution(policy, current, actions, backend)
            action = actions[rng.choices(range(len(actions)), dist)[0]]
        current = game_obj.apply(current, action)
    return game_obj.utilities(current)


def mcts_search(game_obj: Game, root_state, policy: LinearPolicy, backend,
                config: MctsConfig, rng) -> SearchResult:
    """PUCT search from a non-terminal state.

    Each iteration descends through expanded nodes, expands exactly one new
    node, estimates it with one mixed-policy playout, and backpropagates
    the terminal utilities, each node scoring from its own mover's side.
    """
    if game_obj.is_terminal(root_state):
        raise ValueError("cannot search a terminal state")
    root = _Node(game_obj, root_state, policy, backend)

    deadline = None
    if config.seconds is not None:
        deadline = time.monotonic() + config.seconds
    iterations = config.iterations
    done = 0
    while True:
        if deadline is not None:
            if time.monotonic() >= deadline and done > 0:
                break
        elif done >= iterations:
            break
        node = root
        path = []
        while True:
            if node.terminal_utils is not None:
                utils = node.terminal_utils
                break
            i = node.select(config.c_puct)
            path.append((node, i))
            child = node.children[i]
            if child is None:
                child = _Node(game_obj, game_obj.apply(node.state,
                                                       node.actions[i]),
                              policy, backend)
                node.children[i] = child
                if child.terminal_utils is not None:
                    utils = child.terminal_utils
                else:
                    utils = _playout_value(game_obj, child.state, policy,
                                           backend, config.epsilon, rng)
                child.visits += 1
                child.value_sum += utils[child.state.mover - 1]
                break
            node = child
        for parent, i in path:
            parent.n[i] += 1
            parent.total_n += 1
            parent.w[i] += utils[parent.state.mover - 1]
            parent.visits += 1
            parent.value_sum += utils[parent.state.mover - 1]
        done += 1

    visits = list(root.n)
    if config.final_move == "max-visits":
        chosen = max(range(len(visits)), key=lambda i: visits[i])
    else:
        chosen = rng.choices(range(len(visits)), visits)[0]
    return SearchResult(root.actions, visits, chosen, root.feats)


def _instance_active(inst, state, action) -> bool:
    if inst.from_key not in (ANY, action.from_site):
        return False
    if inst.to_key not in (ANY, action.to_site):
        return False
    if inst.last_from_key not in (ANY, state.last_from):
        return False
    if inst.last_to_key not in (ANY, state.last_to):
        return False
    return all(evaluate_prop(p, state) for p in inst.props)


def _active_instances(store: InstanceStore, state, action):
    """Instances active for one decision, in a deterministic order."""
    out = []
    for key in query_keys(store, state, action):
        table = store.proactive if len(key) == 3 else store.reactive
        for inst in table.get(key, ()):
            if all(evaluate_prop(p, state) for p in inst.props):
                out.append(inst)
    out.sort(key=lambda i: (i.feature_id, i.from_key, i.to_key,
                            i.last_from_key, i.last_to_key,
                            tuple(sorted(map(prop_sort_key, i.props))),
                            i.provenance))
    return out


def _correlation(xs, ys):
    n = len(xs)
    mx = sum(xs) / n
    my = sum(ys) / n
    vx = sum((x - mx) ** 2 for x in xs)
    vy = sum((y - my) ** 2 for y in ys)
    if vx == 0.0 or vy == 0.0:
        return None
    cov = sum((x - mx) * (y - my) for x, y in zip(xs, ys))
    return cov / math.sqrt(vx * vy)


def _combine_pair(graph, feature_a: Feature, prov_a, feature_b: Feature,
                  prov_b) -> Feature:
    """Express both constituents in the first one's frame and take the
    element union.

    With shared anchor x, frame (ref, reflect) resolves walks from heading
    angle(ref) with turns scaled by reflect; mapping B's frame onto A's
    needs reflect_a*reflect_b and a leading turn of the angle difference
    as seen from A's orientation.
    """
    anchor, ref_a, refl_a = prov_a
    _, ref_b, refl_b = prov_b
    angle_a = graph.directions[anchor][ref_a].angle
    angle_b = graph.directions[anchor][ref_b].angle
    rotation = Fraction(refl_a * (angle_b - angle_a) / TWO_PI)
    rotation = rotation.limit_denominator(360)
    moved = transform_feature(feature_b, rotation, refl_a * refl_b)
    elements = list(dict.fromkeys(feature_a.elements + moved.elements))
    return Feature(tuple(elements))


def discover_features(feature_set: FeatureSet, store: InstanceStore, batch,
                      game_obj: Game, policy: LinearPolicy, player: int,
                      rng) -> list:
    """Up to one new proactive and one new reactive feature, built from
    instance pairs co-active for the chosen action of a sampled state.

    Candidates are scored by how well their activity tracks the per-sample
    loss minus how redundant they are with either constituent; degenerate
    correlations disqualify a candidate.
    """
    if len(batch) < 2:
        return []
    graph = game_obj.graph
    num_rot = graph.max_direction_count()
    existing = {orbit_key(f, num_rot) for f in feature_set}

    probe = batch[rng.randrange(len(batch))]
    active = _active_instances(store, probe.state,
                               probe.actions[probe.chosen_index])
    weights = policy.weights[player]
    losses = [sample_loss(weights, s) for s in batch]

    def activity(inst):
        return [1.0 if _instance_active(inst, s.state,
                                        s.actions[s.chosen_index]) else 0.0
                for s in batch]

    acts = {id(inst): activity(inst) for inst in active}
    best = {False: (-math.inf, None), True: (-math.inf, None)}
    for ai in range(len(active)):
        for bi in range(ai + 1, len(active)):
            a, b = active[ai], active[bi]
            if a.provenance[0] != b.provenance[0]:
                continue
            candidate = _combine_pair(graph, feature_set[a.feature_id],
                                      a.provenance,
                                      feature_set[b.feature_id],
                                      b.provenance)
            key = orbit_key(candidate, num_rot)
            if key in existing:
                continue
            act_a, act_b = acts[id(a)], acts[id(b)]
            cand_act = [x * y for x, y in zip(act_a, act_b)]
            corr_loss = _correlation(cand_act, losses)
            corr_a = _correlation(cand_act, act_a)
            corr_b = _correlation(cand_act, act_b)
            if corr_loss is None or corr_a is None or corr_b is None:
                continue
            score = abs(corr_loss) - max(abs(corr_a), abs(corr_b))
            reactive = is_reactive(candidate)
            if score > best[reactive][0]:
                best[reactive] = (score, candidate)

    return [cand for _, cand in (best[False], best[True])
            if cand is not None]


@dataclass
class SelfPlayResult:
    policy: LinearPolicy
    feature_sets: dict
    store: InstanceStore
    episodes: int
    moves: int
    discovered: int
    buffers: dict = field(repr=False, default=None)


def build_store(game_obj: Game, feature_sets: dict) -> InstanceStore:
    store = InstanceStore()
    for player, fs in feature_sets.items():
        instantiate(fs, game_obj.graph, game_obj, player, store)
    return store


def self_play(game_obj: Game, episodes: int, mcts_config: MctsConfig,
              train_config: TrainConfig = TrainConfig(), seed: int = 0,
              atomic=(2, 4), backend_name: str = "spatternet-jit",
              discovery: bool = True, feature_sets: dict | None = None,
              progress=None) -> SelfPlayResult:
    """Train per-player policies by self-play.

    Every move runs a search, stores the experience for the mover, and
    takes one gradient step per player; after each episode, each player's
    feature set may grow by up to two discovered features, which triggers
    re-instantiation and zero-extended weights.
    """
    from .backends import make_backend
    from .features import generate_atomic
    from .ordering import build_implications

    if episodes < 1:
        raise ValueError("need at least one episode")
    rng = random.Random(seed)
    players = range(1, game_obj.players + 1)
    if feature_sets is None:
        feature_sets = {p: generate_atomic(game_obj, *atomic)
                        for p in players}
    else:
        feature_sets = dict(feature_sets)
    implications = build_implications(game_obj.players, game_obj.piece_owner)
    store = build_store(game_obj, feature_sets)
    backend = make_backend(backend_name, store, implications)
    policy = LinearPolicy(game_obj.players)
    for p in players:
        policy.grow(p, len(feature_sets[p]))
    buffers = {p: ReplayBuffer() for p in players}

    moves = 0
    discovered = 0
    for episode in range(episodes):
        state = game_obj.initial_state()
        while not game_obj.is_terminal(state):
            result = mcts_search(game_obj, state, policy, backend,
                                 mcts_config, rng)
            buffers[state.mover].append(Experience(
                state, tuple(result.actions), result.chosen_index,
                tuple(result.feats), tuple(result.distribution())))
            for p in players:
                if len(buffers[p]):
                    batch = buffers[p].sample(rng, train_config.batch)
                    train_step(policy, p, batch, train_config)
            state = game_obj.apply(state, result.chosen)
            moves += 1
        if discovery:
            grown = False
            for p in players:
                if len(buffers[p]) < 2:
                    continue
                batch = buffers[p].sample(rng, train_config.batch)
                new = discover_features(feature_sets[p], store, batch,
                                        game_obj, policy, p, rng)
                if new:
                    feature_sets[p] = FeatureSet(
                        list(feature_sets[p]) + new)
                    policy.grow(p, len(new))
                    discovered += len(new)
                    grown = True
            if grown:
                store = build_store(game_obj, feature_sets)
                backend = make_backend(backend_name, store, implications)
        if progress is not None:
            progress(episode + 1, episodes, moves, discovered)

    return SelfPlayResult(policy, feature_sets, store, episodes, moves,
                          discovered, buffers)


POLICY_FILE_HEADER = "spatw v1"


def write_policy_lines(policy: LinearPolicy, feature_sets: dict) -> list:
    """Text form of a trained policy: per-player feature block and one
    weight per line."""
    from .features import write_feature_lines

    lines = [POLICY_FILE_HEADER]
    for player in sorted(feature_sets):
        fs = feature_sets[player]
        weights = policy.weights[player]
        if len(weights) != len(fs):
            raise ValueError(
                f"player {player}: {len(weights)} weights for "
                f"{len(fs)} features")
        lines.append(f"player {player}")
        lines.extend(write_feature_lines(fs))
        lines.append("weights")
        lines.extend(repr(w) for w in weights)
    return lines


def read_policy_lines(lines):
    from .features import read_feature_lines

    lines = [ln.rstrip("\n") for ln in lines]
    body = [ln for ln in lines if ln.strip()]
    if not body or body[0].strip() != POLICY_FILE_HEADER:
        raise ValueError(f"policy file must start with {POLICY_FILE_HEADER!r}")
    sections = []
    current = None
    for ln in body[1:]:
        if ln.startswith("player "):
            current = (int(ln.split()[1]), [])
            sections.append(current)
        elif current is None:
            raise ValueError("policy file defines content before any player")
        else:
            current[1].append(ln)
    if not sections:
        raise ValueError("policy file has no player sections")
    feature_sets = {}
    weight_lists = {}
    for player, chunk in sections:
        if "weights" not in chunk:
            raise ValueError(f"player {player} section has no weights block")
        split = chunk.index("weights")
        feature_sets[player] = read_feature_lines(chunk[:split])
        weights = [float(w) for w in chunk[split + 1:]]
        if len(weights) != len(feature_sets[player]):
            raise ValueError(
                f"player {player}: {len(weights)} weights for "
                f"{len(feature_sets[player])} features")
        weight_lists[player] = weights
    policy = LinearPolicy(max(feature_sets))
    for player, weights in weight_lists.items():
        policy.weights[player] = weights
        policy.ms[player] = [0.0] * len(weights)
        policy.mg[player] = [0.0] * len(weights)
        policy.mom[player] = [0.0] * len(weights)
    return policy, feature_sets


def save_policy(path, policy: LinearPolicy, feature_sets: dict):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(write_policy_lines(policy, feature_sets)) + "\n")


def load_policy(path):
    with open(path, encoding="utf-8") as fh:
        return read_policy_lines(fh)
