"""Backend tests: correctness of each evaluator, their mutual agreement,
and the work-sharing guarantees of the tree and pattern-network forms."""

import random

import pytest

from spatfeat.backends import (
    BACKEND_NAMES,
    EvalCounters,
    JitSpatterNetBackend,
    NaiveBackend,
    SpatterNetBackend,
    TreeBackend,
    build_net_for_bucket,
    jit_wrapper,
    make_backend,
    naive_eval,
    spatternet_build,
    tree_build,
    tree_eval,
)
from spatfeat.features import generate_atomic
from spatfeat.games import game, playout, uniform_selector
from spatfeat.instantiate import (
    ANY,
    ARRAY_EMPTY,
    ARRAY_WHAT,
    ARRAY_WHO,
    FeatureInstance,
    InstanceStore,
    Proposition,
    evaluate_prop,
    instantiate,
)
from spatfeat.ordering import build_implications, order_instances, \
    order_propositions
from spatfeat.state import ActionRecord, GameState, chunk_params_what, \
    chunk_params_who, set_site

IMPL = build_implications(2, {1: 1, 2: 2})


def make_state(contents, mover=1):
    """A small board from a list of per-site (owner, piece) pairs."""
    s = GameState(len(contents), chunk_params_who(2), chunk_params_what(2),
                  mover)
    for site, (owner, piece) in enumerate(contents):
        if owner:
            set_site(s, site, owner, piece)
    return s


def inst(fid, props, to_key=ANY, player=1, from_key=ANY, lfk=ANY, ltk=ANY):
    return FeatureInstance(fid, player, from_key, to_key, lfk, ltk,
                           frozenset(props), (0, 0, 1))


def empty_p(site, negated=False):
    return Proposition(site, ARRAY_EMPTY, 1, negated)


def who_p(site, player, negated=False):
    return Proposition(site, ARRAY_WHO, player, negated)


def what_p(site, piece, negated=False):
    return Proposition(site, ARRAY_WHAT, piece, negated)


def net_for(instances, baseline=frozenset()):
    return build_net_for_bucket(tuple(instances), baseline, IMPL)


class TestNaiveEval:
    def test_active_and_inactive(self):
        state = make_state([(0, 0), (1, 1), (2, 2)])
        instances = [
            inst(0, [empty_p(0)]),
            inst(1, [who_p(1, 1)]),
            inst(2, [who_p(1, 2)]),
        ]
        assert naive_eval(instances, state) == {0, 1}

    def test_baseline_ids_pass_through(self):
        state = make_state([(0, 0)])
        assert naive_eval([], state, baseline={9}) == {9}

    def test_any_satisfied_instance_activates(self):
        state = make_state([(0, 0), (1, 1)])
        instances = [
            inst(0, [who_p(0, 2)]),
            inst(0, [who_p(1, 1)]),
        ]
        assert naive_eval(instances, state) == {0}

    def test_short_circuit_counts(self):
        state = make_state([(1, 1), (0, 0), (0, 0)])
        counters = EvalCounters()
        naive_eval([inst(0, [empty_p(0), empty_p(1), empty_p(2)])], state,
                   counters=counters)
        # Props run in site order, so the occupied site 0 stops the scan.
        assert counters.prop_evals == 1
        assert counters.instance_visits == 1

    def test_full_scan_when_satisfied(self):
        state = make_state([(0, 0), (0, 0), (0, 0)])
        counters = EvalCounters()
        active = naive_eval([inst(3, [empty_p(0), empty_p(1), empty_p(2)])],
                         state, counters=counters)
        assert active == {3}
        assert counters.prop_evals == 3


class TestTreeForest:
    def test_chain_structure(self):
        a, b, c = empty_p(0), empty_p(1), empty_p(2)
        forest = tree_build([inst(0, [a]), inst(1, [a, b]),
                             inst(2, [a, b, c])])
        assert len(forest.roots) == 1
        root = forest.roots[0]
        assert root.feature_id == 0 and len(root.residual) == 1
        child = root.children[0]
        assert child.feature_id == 1 and len(child.residual) == 1
        grandchild = child.children[0]
        assert grandchild.feature_id == 2 and len(grandchild.residual) == 1

    def test_prefers_deepest_parent(self):
        a, b, c = empty_p(0), empty_p(1), empty_p(2)
        forest = tree_build([inst(0, [a]), inst(1, [a, b]),
                             inst(2, [a, b, c])])
        # The three-prop node must hang under the two-prop node, not the
        # root, so it only re-checks one prop.
        assert forest.roots[0].children[0].children[0].feature_id == 2

    def test_equal_props_become_separate_roots(self):
        a = empty_p(0)
        forest = tree_build([inst(0, [a]), inst(1, [a])])
        assert len(forest.roots) == 2

    def test_failed_root_prunes_subtree(self):
        a, b, c = empty_p(0), empty_p(1), empty_p(2)
        forest = tree_build([inst(0, [a]), inst(1, [a, b]),
                             inst(2, [a, b, c])])
        state = make_state([(1, 1), (0, 0), (0, 0)])
        counters = EvalCounters()
        active = tree_eval(forest, state, counters=counters)
        assert active == frozenset()
        assert counters.prop_evals == 1
        assert counters.instance_visits == 1

    def test_partial_chain(self):
        a, b, c = empty_p(0), empty_p(1), empty_p(2)
        forest = tree_build([inst(0, [a]), inst(1, [a, b]),
                             inst(2, [a, b, c])])
        state = make_state([(0, 0), (0, 0), (1, 1)])
        counters = EvalCounters()
        active = tree_eval(forest, state, counters=counters)
        assert active == {0, 1}
        assert counters.prop_evals == 3

    def test_shared_prefix_not_reevaluated(self):
        a, b, c = empty_p(0), empty_p(1), empty_p(2)
        forest = tree_build([inst(0, [a]), inst(1, [a, b]),
                             inst(2, [a, c])])
        state = make_state([(0, 0), (0, 0), (0, 0)])
        counters = EvalCounters()
        active = tree_eval(forest, state, counters=counters)
        assert active == {0, 1, 2}
        # One eval for the shared root prop, one per child residual.
        assert counters.prop_evals == 3

    def test_disjoint_instances_are_roots(self):
        forest = tree_build([inst(0, [empty_p(0)]), inst(1, [empty_p(1)])])
        assert len(forest.roots) == 2
        state = make_state([(0, 0), (1, 1)])
        assert tree_eval(forest, state) == {0}

    def test_baseline_ids_pass_through(self):
        forest = tree_build([inst(0, [empty_p(0)])])
        state = make_state([(1, 1)])
        assert tree_eval(forest, state, baseline={7}) == {7}


class TestSpatterNetBuild:
    def test_rejects_incomplete_prop_order(self):
        instances = [inst(0, [empty_p(0), empty_p(1)])]
        with pytest.raises(ValueError, match="prop order"):
            spatternet_build(instances, [empty_p(0)], instances, IMPL)

    def test_rejects_foreign_props(self):
        instances = [inst(0, [empty_p(0)])]
        with pytest.raises(ValueError, match="prop order"):
            spatternet_build(instances, [empty_p(0), empty_p(1)], instances,
                             IMPL)

    def test_rejects_wrong_instance_order(self):
        instances = [inst(0, [empty_p(0)]), inst(1, [empty_p(0)])]
        with pytest.raises(ValueError, match="instance order"):
            spatternet_build(instances, [empty_p(0)], instances[:1], IMPL)

    def test_empty_bucket_returns_baseline(self):
        net = build_net_for_bucket((), frozenset({4}), IMPL)
        state = make_state([(0, 0)])
        assert net.evaluate(state) == {4}

    def test_masks_follow_implication_table(self):
        a, b = empty_p(0), who_p(0, 1, negated=True)
        instances = [inst(0, [a]), inst(1, [b])]
        net = spatternet_build(instances, [a, b], instances, IMPL)
        ia, ib = net.props.index(a), net.props.index(b)
        # Site 0 empty proves nobody owns it.
        assert net.true_props[ia] >> ib & 1
        # Its falsity proves only its own negation, which is not a prop
        # here, so the mask stays empty.
        assert net.false_props[ia] == 0
        # True disproves nothing these instances need; false kills the
        # instance that requires emptiness.
        assert net.true_insts[ia] == 0
        assert net.false_insts[ia] == 1 << 0
        # The negated ownership prop proves nothing about emptiness.
        assert not net.true_props[ib] >> ia & 1


class TestSpatterNetEvaluate:
    def test_deduction_skips_proven_prop(self):
        a, b = empty_p(0), who_p(0, 1, negated=True)
        net = net_for([inst(0, [a]), inst(1, [b])])
        state = make_state([(0, 0)])
        counters = EvalCounters()
        active = net.evaluate(state, counters, debug=True)
        assert active == {0, 1}
        assert counters.prop_evals == 1

    def test_deduction_kills_disproven_instances(self):
        net = net_for([inst(0, [what_p(0, 1)]), inst(1, [what_p(0, 2)])])
        state = make_state([(1, 1)])
        counters = EvalCounters()
        active = net.evaluate(state, counters, debug=True)
        assert active == {0}
        assert counters.prop_evals == 1

    def test_ownership_chain(self):
        # Seeing the first player's piece settles the piece type, the
        # owner, and non-emptiness in one evaluation.
        instances = [inst(0, [who_p(0, 1)]), inst(1, [what_p(0, 2, True)]),
                     inst(2, [what_p(0, 1)]), inst(3, [empty_p(0, True)])]
        net = net_for(instances)
        state = make_state([(1, 1)])
        counters = EvalCounters()
        active = net.evaluate(state, counters, debug=True)
        assert active == {0, 1, 2, 3}
        assert counters.prop_evals == 1

    def test_false_anchor_still_settles_family(self):
        a = empty_p(0)
        net = net_for([inst(0, [a]), inst(1, [who_p(0, 1, True)])])
        state = make_state([(2, 2)])
        counters = EvalCounters()
        active = net.evaluate(state, counters, debug=True)
        # Empty is false, which proves nothing here, so the ownership prop
        # still needs its own evaluation.
        assert active == {1}
        assert counters.prop_evals == 2

    def test_sibling_instances_stop_after_match(self):
        instances = [inst(0, [empty_p(0)]), inst(0, [empty_p(1)]),
                     inst(0, [empty_p(2)])]
        net = net_for(instances)
        state = make_state([(0, 0), (0, 0), (0, 0)])
        counters = EvalCounters()
        active = net.evaluate(state, counters, debug=True)
        assert active == {0}
        # The first satisfied instance retires the feature's remaining
        # instances without touching their props.
        assert counters.prop_evals == 1
        assert counters.instance_visits == 1

    def test_never_reevaluates_within_query(self):
        rng = random.Random(17)
        sites = 3
        pool = [empty_p(s, n) for s in range(sites) for n in (False, True)]
        pool += [who_p(s, p, n) for s in range(sites) for p in (1, 2)
                 for n in (False, True)]
        pool += [what_p(s, i, n) for s in range(sites) for i in (1, 2)
                 for n in (False, True)]
        legal = [(0, 0), (1, 1), (2, 2)]
        for _ in range(60):
            instances = []
            for fid in range(rng.randint(1, 5)):
                for _ in range(rng.randint(1, 3)):
                    props = rng.sample(pool, rng.randint(1, 4))
                    instances.append(inst(fid, props))
            net = net_for(instances)
            state = make_state([legal[rng.randrange(3)] for _ in range(sites)])
            counters = EvalCounters()
            active = net.evaluate(state, counters, debug=True)
            assert counters.prop_evals <= len(net.props)
            assert active == naive_eval(instances, state)

    def test_agrees_with_naive_and_tree(self):
        rng = random.Random(23)
        sites = 4
        pool = [empty_p(s, n) for s in range(sites) for n in (False, True)]
        pool += [who_p(s, p, n) for s in range(sites) for p in (1, 2)
                 for n in (False, True)]
        legal = [(0, 0), (1, 1), (2, 2)]
        for _ in range(40):
            instances = []
            for fid in range(rng.randint(1, 6)):
                for _ in range(rng.randint(1, 2)):
                    props = rng.sample(pool, rng.randint(1, 5))
                    instances.append(inst(fid, props))
            net = net_for(instances)
            forest = tree_build(instances)
            for _ in range(5):
                state = make_state(
                    [legal[rng.randrange(3)] for _ in range(sites)])
                expected = naive_eval(instances, state)
                assert net.evaluate(state, debug=True) == expected
                assert forest.evaluate(state) == expected

    def test_baseline_ids_survive(self):
        net = build_net_for_bucket((inst(0, [empty_p(0)]),),
                                   frozenset({5}), IMPL)
        state = make_state([(1, 1)])
        assert net.evaluate(state) == {5}


def build_game_store(g, max_len, max_straight):
    fs = generate_atomic(g, max_len, max_straight)
    store = InstanceStore()
    for player in range(1, g.players + 1):
        instantiate(fs, g.graph, g, player, store)
    return store


def assert_backends_agree(g, store, playouts, seed, debug_net=False):
    imps = build_implications(g.players, g.piece_owner)
    backends = [
        NaiveBackend(store),
        TreeBackend(store),
        SpatterNetBackend(store, imps, debug=debug_net),
        JitSpatterNetBackend(store, imps),
    ]
    rng = random.Random(seed)
    compared = 0
    for _ in range(playouts):
        t = playout(g, g.initial_state(), uniform_selector, rng, record=True)
        for state, action in t.steps:
            results = [b.evaluate(state, action) for b in backends]
            assert results[0] == results[1] == results[2] == results[3], \
                (state.mover, action, results)
            compared += 1
    assert compared > 0
    return backends


class TestStoreBackends:
    def test_tictactoe_agreement(self):
        g = game("tictactoe")
        store = build_game_store(g, 1, 2)
        assert_backends_agree(g, store, 12, seed=1, debug_net=True)

    def test_breakthrough_agreement(self):
        g = game("breakthrough")
        store = build_game_store(g, 1, 1)
        assert_backends_agree(g, store, 3, seed=2)

    def test_baseline_only_key(self):
        store = InstanceStore()
        store.baseline[(1, ANY, 4)] = frozenset({2})
        g = game("tictactoe")
        state = g.initial_state()
        backend = NaiveBackend(store)
        assert backend.evaluate(state, ActionRecord(4, 4)) == {2}
        assert backend.evaluate(state, ActionRecord(3, 3)) == frozenset()

    def test_counters_accumulate(self):
        g = game("tictactoe")
        store = build_game_store(g, 1, 1)
        backend = NaiveBackend(store)
        counters = EvalCounters()
        state = g.initial_state()
        backend.evaluate(state, ActionRecord(4, 4), counters)
        first = counters.prop_evals
        assert first > 0
        backend.evaluate(state, ActionRecord(4, 4), counters)
        assert counters.prop_evals == 2 * first

    def test_spatternet_store_never_reevaluates(self):
        g = game("tictactoe")
        store = build_game_store(g, 1, 2)
        imps = build_implications(g.players, g.piece_owner)
        backend = SpatterNetBackend(store, imps, debug=True)
        rng = random.Random(3)
        t = playout(g, g.initial_state(), uniform_selector, rng, record=True)
        for state, action in t.steps:
            for a in (action,):
                counters = EvalCounters()
                backend.evaluate(state, a, counters)
                distinct = sum(
                    len(backend.nets[k].props)
                    for k in backend.nets
                    if k in store.proactive or k in store.reactive)
                assert counters.prop_evals <= distinct

    def test_jit_builds_once_per_key(self):
        g = game("tictactoe")
        store = build_game_store(g, 1, 1)
        imps = build_implications(g.players, g.piece_owner)
        backend = JitSpatterNetBackend(store, imps)
        state = g.initial_state()
        action = ActionRecord(4, 4)
        backend.evaluate(state, action)
        builds = backend.builds
        assert builds > 0
        backend.evaluate(state, action)
        assert backend.builds == builds
        eager = SpatterNetBackend(store, imps)
        assert builds <= len(eager.nets)

    def test_jit_wrapper_counts_builds(self):
        store = InstanceStore()
        store.proactive[(1, ANY, 0)] = (inst(0, [empty_p(0)], to_key=0),)
        built = []

        def builder(bucket, key):
            built.append(key)
            return build_net_for_bucket(bucket, frozenset(), IMPL)

        backend = jit_wrapper(store, builder)
        state = make_state([(0, 0)])
        assert backend.evaluate(state, ActionRecord(0, 0)) == {0}
        assert backend.evaluate(state, ActionRecord(0, 0)) == {0}
        assert built == [(1, ANY, 0)]
        assert backend.builds == 1

    def test_reactive_keys_consulted(self):
        store = InstanceStore()
        store.reactive[(1, ANY, 0, ANY, 1)] = (
            inst(0, [empty_p(2)], to_key=0, ltk=1),)
        backend = NaiveBackend(store)
        state = make_state([(0, 0), (0, 0), (0, 0)])
        state.last_to = 1
        assert backend.evaluate(state, ActionRecord(0, 0)) == {0}
        state.last_to = 2
        assert backend.evaluate(state, ActionRecord(0, 0)) == frozenset()


class TestMakeBackend:
    def test_names(self):
        assert BACKEND_NAMES == ("naive", "tree", "spatternet",
                                 "spatternet-jit")

    def test_factory_types(self):
        store = InstanceStore()
        assert isinstance(make_backend("naive", store), NaiveBackend)
        assert isinstance(make_backend("tree", store), TreeBackend)
        assert isinstance(make_backend("spatternet", store, IMPL),
                          SpatterNetBackend)
        assert isinstance(make_backend("spatternet-jit", store, IMPL),
                          JitSpatterNetBackend)

    def test_spatternet_needs_implications(self):
        with pytest.raises(ValueError, match="implication"):
            make_backend("spatternet", InstanceStore())
        with pytest.raises(ValueError, match="implication"):
            make_backend("spatternet-jit", InstanceStore())

    def test_unknown_backend(self):
        with pytest.raises(ValueError, match="unknown backend"):
            make_backend("gpu", InstanceStore())


class TestOrderIntegration:
    def test_ordered_net_still_sound(self):
        # The net must agree with the naive scan for orders produced by
        # both heuristics and several seeds.
        instances = [
            inst(0, [empty_p(0), empty_p(1)]),
            inst(0, [who_p(0, 1)]),
            inst(1, [who_p(1, 2), empty_p(0, True)]),
            inst(2, [what_p(1, 2), empty_p(0)]),
        ]
        dnf = {}
        for i in instances:
            dnf.setdefault(i.feature_id, []).append(set(i.props))
        states = [make_state(c) for c in (
            [(0, 0), (0, 0)], [(1, 1), (2, 2)], [(2, 2), (2, 2)],
            [(0, 0), (2, 2)], [(1, 1), (0, 0)])]
        for heuristic in ("jw", "jw-deduced"):
            for seed in range(4):
                prop_order = order_propositions(dnf, IMPL, heuristic, seed)
                instance_order = order_instances(instances, prop_order)
                net = spatternet_build(instances, prop_order, instance_order,
                                       IMPL)
                for state in states:
                    assert net.evaluate(state, debug=True) == \
                        naive_eval(instances, state)
