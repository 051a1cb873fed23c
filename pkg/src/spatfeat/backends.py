"""Four interchangeable evaluators from (state, action) to active features.

All of them answer the same question: which feature ids have at least one
fully satisfied instance under the given state and action. They differ in
how much work they share between instances:

* naive: every retrieved instance checked prop by prop, short-circuiting
  on the first violation;
* tree: instances arranged in a generalisation forest so a specialisation
  only checks the props its parent did not, and a failed parent prunes its
  whole subtree;
* spatternet: per-key networks with a precomputed prop/instance order and
  deduction bitmasks, so no prop is ever evaluated twice in one query;
* spatternet-jit: the same networks, built lazily per key on first use.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass

from .instantiate import (
    ARRAY_EMPTY,
    ARRAY_WHO,
    InstanceStore,
    evaluate_prop,
    prop_sort_key,
    query_keys,
)
from .ordering import ImplicationTable, order_instances, order_propositions

_EMPTY = frozenset()


@dataclass
class EvalCounters:
    """Instrumentation accumulated across queries."""

    prop_evals: int = 0
    instance_visits: int = 0


def _compile_props(props, who_b: int, what_b: int):
    """Flatten props to (kind, shift, mask, value, negated) tuples so the
    hot loops read the state integers directly."""
    out = []
    for p in props:
        if p.array == ARRAY_EMPTY:
            out.append((0, p.site, 1, p.value, p.negated))
        elif p.array == ARRAY_WHO:
            out.append((1, p.site * who_b, (1 << who_b) - 1, p.value, p.negated))
        else:
            out.append((2, p.site * what_b, (1 << what_b) - 1, p.value, p.negated))
    return tuple(out)


def _eval_compiled(cprop, state) -> bool:
    kind, shift, mask, value, negated = cprop
    if kind == 0:
        actual = (state.empty >> shift) & 1
    elif kind == 1:
        actual = (state.who >> shift) & mask
    else:
        actual = (state.what >> shift) & mask
    return (actual == value) != negated


def naive_eval(instances, state, baseline=_EMPTY, counters=None) -> frozenset:
    """Check every instance in order, short-circuiting each conjunction on
    its first violated prop."""
    active = set(baseline)
    evals = 0
    for inst in instances:
        ok = True
        for prop in sorted(inst.props, key=prop_sort_key):
            evals += 1
            if not evaluate_prop(prop, state):
                ok = False
                break
        if ok:
            active.add(inst.feature_id)
    if counters is not None:
        counters.prop_evals += evals
        counters.instance_visits += len(instances)
    return frozenset(active)


class _TreeNode:
    __slots__ = ("residual", "cresidual", "feature_id", "children", "depth",
                 "props")

    def __init__(self, inst, parent):
        base = parent.props if parent else frozenset()
        self.props = inst.props
        self.residual = tuple(sorted(inst.props - base, key=prop_sort_key))
        self.cresidual = None
        self.feature_id = inst.feature_id
        self.children = []
        self.depth = parent.depth + 1 if parent else 0


class TreeForest:
    """Instances arranged by strict prop-set generalisation.

    Each instance hangs under the deepest earlier-inserted instance whose
    props are a strict subset of its own, and stores only the difference.
    """

    __slots__ = ("roots", "_nodes", "_widths")

    def __init__(self, instances):
        self.roots = []
        self._nodes = []
        self._widths = None
        for inst in instances:
            parent = None
            for cand in self._nodes:
                if cand.props < inst.props and (
                        parent is None or cand.depth > parent.depth):
                    parent = cand
            node = _TreeNode(inst, parent)
            (parent.children if parent else self.roots).append(node)
            self._nodes.append(node)

    def _compile(self, state):
        widths = (state.who_params.B, state.what_params.B)
        if self._widths != widths:
            for node in self._nodes:
                node.cresidual = _compile_props(node.residual, *widths)
            self._widths = widths

    def evaluate(self, state, baseline=_EMPTY, counters=None) -> frozenset:
        self._compile(state)
        active = set(baseline)
        evals = 0
        visits = 0
        stack = list(reversed(self.roots))
        while stack:
            node = stack.pop()
            visits += 1
            ok = True
            for cprop in node.cresidual:
                evals += 1
                if not _eval_compiled(cprop, state):
                    ok = False
                    break
            if ok:
                active.add(node.feature_id)
                stack.extend(reversed(node.children))
        if counters is not None:
            counters.prop_evals += evals
            counters.instance_visits += visits
        return frozenset(active)


def tree_build(instances) -> TreeForest:
    return TreeForest(instances)


def tree_eval(forest: TreeForest, state, baseline=_EMPTY,
              counters=None) -> frozenset:
    return forest.evaluate(state, baseline, counters)


class SpatterNet:
    """One key's instances compiled to an ordered, deduction-aware net.

    ``props`` is the evaluation order; each instance is a sorted tuple of
    prop indices plus its feature id. Four masks per prop apply the
    implication table in bulk: on a true evaluation, clear the props it
    proves and the instances requiring something it disproves; on a false
    evaluation, the same using the negation's rows. Sibling masks clear the
    remaining instances of a feature once one instance matches.
    """

    __slots__ = ("props", "instances", "baseline", "true_props", "true_insts",
                 "false_props", "false_insts", "siblings", "_all_props",
                 "_all_insts", "_rows", "_nsiblings", "_pw", "_pt",
                 "_requirers")

    def __init__(self, props, instances, baseline, true_props, true_insts,
                 false_props, false_insts, siblings, requirers):
        self.props = props
        self.instances = instances
        self.baseline = baseline
        self.true_props = true_props
        self.true_insts = true_insts
        self.false_props = false_props
        self.false_insts = false_insts
        self.siblings = siblings
        self._all_props = (1 << len(props)) - 1
        self._all_insts = (1 << len(instances)) - 1
        self._rows = None
        self._nsiblings = tuple(~m for m in siblings)
        self._pw = None
        self._pt = None
        self._requirers = requirers

    def _compile(self, state):
        # One merged row per prop, with the deduction masks pre-inverted,
        # so the hot loop does a single tuple unpack per evaluation. The
        # empty array is one bit wide, so its negation folds into the
        # expected value. Chunk param objects are shared across a game's
        # states, making the identity test a reliable fast path.
        pw, pt = state.who_params, state.what_params
        if self._pw is pw and self._pt is pt:
            return
        if self._rows is None or (pw.B, pt.B) != (self._pw.B, self._pt.B):
            rows = []
            cprops = _compile_props(self.props, pw.B, pt.B)
            for ci, (kind, shift, mask, value, negated) in enumerate(cprops):
                if kind == 0:
                    value ^= negated
                    negated = False
                rows.append((kind, shift, mask, value, negated,
                             ~self.true_props[ci], ~self.true_insts[ci],
                             ~self.false_props[ci], ~self.false_insts[ci]))
            self._rows = tuple(rows)
        self._pw = pw
        self._pt = pt

    def evaluate(self, state, counters=None, debug=False) -> set:
        self._compile(state)
        if counters is not None or debug:
            return self._evaluate_counted(state, counters, debug)
        rows = self._rows
        instances = self.instances
        nsiblings = self._nsiblings
        empty = state.empty
        who = state.who
        what = state.what
        active = set(self.baseline)
        active_p = self._all_props
        active_i = self._all_insts
        i = 0
        while True:
            live = active_i >> i
            if not live:
                break
            i += (live & -live).bit_length() - 1
            idxs, fid = instances[i]
            ok = True
            for ci in idxs:
                bit = 1 << ci
                if not active_p & bit:
                    continue
                active_p &= ~bit
                kind, shift, mask, value, negated, ntp, nti, nfp, nfi = \
                    rows[ci]
                if kind == 0:
                    t = ((empty >> shift) & 1) == value
                elif kind == 1:
                    t = (((who >> shift) & mask) == value) != negated
                else:
                    t = (((what >> shift) & mask) == value) != negated
                if t:
                    active_p &= ntp
                    active_i &= nti
                else:
                    active_p &= nfp
                    active_i &= nfi
                    ok = False
                    break
            if ok:
                active.add(fid)
                active_i &= nsiblings[i]
            i += 1
        return active

    def _evaluate_counted(self, state, counters, debug):
        rows = self._rows
        instances = self.instances
        nsiblings = self._nsiblings
        empty = state.empty
        who = state.who
        what = state.what
        active = set(self.baseline)
        active_p = self._all_props
        active_i = self._all_insts
        evals = 0
        visits = 0
        i = 0
        while True:
            live = active_i >> i
            if not live:
                break
            i += (live & -live).bit_length() - 1
            visits += 1
            idxs, fid = instances[i]
            ok = True
            for ci in idxs:
                bit = 1 << ci
                if not active_p & bit:
                    continue
                active_p &= ~bit
                evals += 1
                kind, shift, mask, value, negated, ntp, nti, nfp, nfi = \
                    rows[ci]
                if kind == 0:
                    t = ((empty >> shift) & 1) == value
                elif kind == 1:
                    t = (((who >> shift) & mask) == value) != negated
                else:
                    t = (((what >> shift) & mask) == value) != negated
                if t:
                    if debug:
                        self._check_deduction(ci, True, active_p, active_i,
                                              state)
                    active_p &= ntp
                    active_i &= nti
                else:
                    if debug:
                        self._check_deduction(ci, False, active_p, active_i,
                                              state)
                    active_p &= nfp
                    active_i &= nfi
                    ok = False
                    break
            if ok:
                active.add(fid)
                active_i &= nsiblings[i]
            i += 1
        if counters is not None:
            counters.prop_evals += evals
            counters.instance_visits += visits
        return active

    def _check_deduction(self, ci, value, active_p, active_i, state):
        """Deduction soundness: every prop a deduction clears after a true
        evaluation must itself be true; every instance a deduction clears
        must evaluate false."""
        prop_mask = self.true_props[ci] if value else self.false_props[ci]
        inst_mask = self.true_insts[ci] if value else self.false_insts[ci]
        cleared = active_p & prop_mask
        while cleared:
            j = (cleared & -cleared).bit_length() - 1
            cleared &= cleared - 1
            if j != ci:
                assert evaluate_prop(self.props[j], state), \
                    f"unsound prop deduction {self.props[ci]} -> {self.props[j]}"
        cleared = active_i & inst_mask
        while cleared:
            j = (cleared & -cleared).bit_length() - 1
            cleared &= cleared - 1
            idxs, _ = self.instances[j]
            assert not all(evaluate_prop(self.props[k], state) for k in idxs), \
                f"unsound instance deduction at prop {self.props[ci]}"


def spatternet_build(instances, prop_order, instance_order,
                     implications: ImplicationTable,
                     baseline=_EMPTY) -> SpatterNet:
    """Assemble a net from precomputed orders and an implication table.

    The orders must be permutations of the instances' props and of the
    instances themselves; the implication table is restricted to the props
    actually present.
    """
    universe = set()
    for inst in instances:
        universe |= inst.props
    if set(prop_order) != universe or len(prop_order) != len(universe):
        raise ValueError("prop order is not a permutation of the props")
    if sorted(map(id, instance_order)) != sorted(map(id, instances)):
        raise ValueError("instance order is not a permutation of the instances")

    prop_index = {p: i for i, p in enumerate(prop_order)}
    requirers: dict = {}
    inst_rows = []
    fids = []
    for i, inst in enumerate(instance_order):
        idxs = tuple(sorted(prop_index[p] for p in inst.props))
        inst_rows.append((idxs, inst.feature_id))
        fids.append(inst.feature_id)
        for p in inst.props:
            requirers[p] = requirers.get(p, 0) | (1 << i)

    def prop_mask(props):
        m = 0
        for q in props:
            j = prop_index.get(q)
            if j is not None:
                m |= 1 << j
        return m

    def inst_mask(props):
        m = 0
        for q in props:
            m |= requirers.get(q, 0)
        return m

    true_props, true_insts, false_props, false_insts = [], [], [], []
    for p in prop_order:
        true_props.append(prop_mask(implications.proves_on_true(p)))
        true_insts.append(inst_mask(implications.disproves_on_true(p)))
        false_props.append(prop_mask(implications.proves_on_false(p)))
        false_insts.append(inst_mask(implications.disproves_on_false(p)))

    by_fid: dict = {}
    for i, fid in enumerate(fids):
        by_fid[fid] = by_fid.get(fid, 0) | (1 << i)
    siblings = [by_fid[fid] for fid in fids]

    return SpatterNet(tuple(prop_order), tuple(inst_rows), frozenset(baseline),
                      tuple(true_props), tuple(true_insts), tuple(false_props),
                      tuple(false_insts), tuple(siblings), requirers)


def build_net_for_bucket(bucket, baseline, implications, heuristic="jw",
                         order_seed=0) -> SpatterNet:
    """Order one key's instances and compile them into a net."""
    dnf: dict = {}
    for inst in bucket:
        dnf.setdefault(inst.feature_id, []).append(set(inst.props))
    prop_order = order_propositions(dnf, implications, heuristic, order_seed)
    instance_order = order_instances(list(bucket), prop_order)
    return spatternet_build(bucket, prop_order, instance_order, implications,
                            baseline)


class _StoreBackend:
    """Shared key-enumeration driver over an InstanceStore."""

    name = "base"

    def __init__(self, store: InstanceStore):
        self.store = store

    def _bucket(self, key):
        table = self.store.proactive if len(key) == 3 else self.store.reactive
        return table.get(key)

    def evaluate(self, state, action, counters=None) -> frozenset:
        active = set()
        baseline = self.store.baseline
        for key in query_keys(self.store, state, action):
            fids = baseline.get(key)
            if fids:
                active |= fids
            bucket = self._bucket(key)
            if bucket:
                active |= self._eval_bucket(key, bucket, state, counters)
        return frozenset(active)

    def _eval_bucket(self, key, bucket, state, counters):
        raise NotImplementedError


class NaiveBackend(_StoreBackend):
    name = "naive"

    def __init__(self, store):
        super().__init__(store)
        self._compiled = {}
        self._widths = None

    def _eval_bucket(self, key, bucket, state, counters):
        widths = (state.who_params.B, state.what_params.B)
        if self._widths != widths:
            self._compiled = {}
            self._widths = widths
        compiled = self._compiled.get(key)
        if compiled is None:
            compiled = tuple(
                (inst.feature_id,
                 _compile_props(sorted(inst.props, key=prop_sort_key), *widths))
                for inst in bucket)
            self._compiled[key] = compiled
        active = set()
        evals = 0
        for fid, cprops in compiled:
            ok = True
            for cprop in cprops:
                evals += 1
                if not _eval_compiled(cprop, state):
                    ok = False
                    break
            if ok:
                active.add(fid)
        if counters is not None:
            counters.prop_evals += evals
            counters.instance_visits += len(compiled)
        return active


class TreeBackend(_StoreBackend):
    name = "tree"

    def __init__(self, store):
        super().__init__(store)
        self._forests = {}

    def _eval_bucket(self, key, bucket, state, counters):
        forest = self._forests.get(key)
        if forest is None:
            forest = tree_build(bucket)
            self._forests[key] = forest
        return forest.evaluate(state, counters=counters)


class SpatterNetBackend(_StoreBackend):
    name = "spatternet"

    def __init__(self, store, implications, heuristic="jw", order_seed=0,
                 debug=False):
        super().__init__(store)
        self.implications = implications
        self.debug = debug
        self.nets = {}
        for key, bucket in list(store.proactive.items()) + list(
                store.reactive.items()):
            self.nets[key] = build_net_for_bucket(
                bucket, store.baseline.get(key, _EMPTY), implications,
                heuristic, order_seed)

    def _eval_bucket(self, key, bucket, state, counters):
        return self.nets[key].evaluate(state, counters, self.debug)


class JitBackend(_StoreBackend):
    """Wraps a per-bucket builder, building one evaluator per key on first
    use. Reads are lock-free; insertion is exclusive."""

    name = "jit"

    def __init__(self, store, builder):
        super().__init__(store)
        self._builder = builder
        self._cache = {}
        self._lock = threading.Lock()
        self.builds = 0

    @property
    def nets(self):
        """Evaluators built so far, by key."""
        return self._cache

    def _eval_bucket(self, key, bucket, state, counters):
        net = self._cache.get(key)
        if net is None:
            with self._lock:
                net = self._cache.get(key)
                if net is None:
                    net = self._builder(bucket, key)
                    self._cache[key] = net
                    self.builds += 1
        return net.evaluate(state, counters=counters)


def jit_wrapper(store, builder) -> JitBackend:
    return JitBackend(store, builder)


class JitSpatterNetBackend(JitBackend):
    name = "spatternet-jit"

    def __init__(self, store, implications, heuristic="jw", order_seed=0):
        def builder(bucket, key):
            return build_net_for_bucket(
                bucket, store.baseline.get(key, _EMPTY), implications,
                heuristic, order_seed)

        super().__init__(store, builder)
        self.implications = implications


BACKEND_NAMES = ("naive", "tree", "spatternet", "spatternet-jit")


def make_backend(name, store, implications=None, heuristic="jw",
                 order_seed=0, debug=False):
    """Backend factory keyed by CLI name."""
    if name == "naive":
        return NaiveBackend(store)
    if name == "tree":
        return TreeBackend(store)
    if name in ("spatternet", "spatternet-jit") and implications is None:
        raise ValueError(f"{name} needs an implication table")
    if name == "spatternet":
        return SpatterNetBackend(store, implications, heuristic, order_seed,
                                 debug)
    if name == "spatternet-jit":
        return JitSpatterNetBackend(store, implications, heuristic, order_seed)
    raise ValueError(f"unknown backend {name!r}")
