"""Feature instantiation: walks resolved to sites, static filtering, and
key-indexed instance tables.

A feature is instantiated once per anchor site, per reference direction of
that anchor, and per reflection. Conditions decidable from the board alone
(off, conn, regionProx) are settled here: a violated condition discards the
candidate instance, a satisfied one is dropped from it. What survives is a
conjunction of propositions over the empty/who/what arrays, deduplicated
and indexed by the action sites it constrains. Instances whose conditions
all resolved statically make their feature unconditionally active for that
key; those feature ids land in the ``baseline`` table instead.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, replace
from typing import Iterable

from .features import (
    CONN,
    EMPTY,
    ENEMY,
    FRIEND,
    FROM,
    ITEM,
    LAST_FROM,
    LAST_TO,
    OFF,
    REGION_PROX,
    TO,
    Feature,
)
from .geometry import OFF_BOARD, SiteGraph, resolve_walk

logger = logging.getLogger(__name__)

# Key component meaning "unconstrained". Distinct from -1, which action
# records use for "no such site" (e.g. the from of a placement).
ANY = -2

ARRAY_EMPTY = "empty"
ARRAY_WHO = "who"
ARRAY_WHAT = "what"

# Upper bound on the cartesian product of walk endpoints for a single
# (feature, anchor, reference, reflect) expansion; beyond it the expansion
# is skipped and counted.
FORK_CAP = 64


@dataclass(frozen=True)
class Proposition:
    """A single test against one state array: chunk ``site`` of ``array``
    must (not) hold ``value``."""

    site: int
    array: str
    value: int
    negated: bool = False

    def negation(self) -> "Proposition":
        return replace(self, negated=not self.negated)


def evaluate_prop(prop: Proposition, state) -> bool:
    if prop.array == ARRAY_EMPTY:
        actual = 1 if state.is_empty(prop.site) else 0
    elif prop.array == ARRAY_WHO:
        actual = state.owner_at(prop.site)
    else:
        actual = state.piece_at(prop.site)
    return (actual == prop.value) != prop.negated


def prop_sort_key(prop: Proposition):
    """Canonical sort key, used wherever prop iteration order must be
    deterministic."""
    return (prop.site, prop.array, prop.value, prop.negated)


@dataclass(frozen=True)
class FeatureInstance:
    """One resolved placement of a feature.

    Key components are site indices or ANY. ``props`` holds the runtime
    conditions; ``provenance`` records one (anchor, reference direction
    index, reflect) witness that produced the instance.
    """

    feature_id: int
    player: int
    from_key: int
    to_key: int
    last_from_key: int
    last_to_key: int
    props: frozenset
    provenance: tuple

    @property
    def is_reactive(self) -> bool:
        return self.last_from_key != ANY or self.last_to_key != ANY


class InstanceStore:
    """Key-indexed instance tables for one or more player roles.

    ``proactive`` maps (player, from_key, to_key) and ``reactive`` maps
    (player, from_key, to_key, last_from_key, last_to_key) to tuples of
    instances. ``baseline`` maps the same key shapes to the feature ids
    that are active for that key regardless of state. Treat as immutable
    once built.
    """

    __slots__ = ("proactive", "reactive", "baseline", "fork_cap_skips")

    def __init__(self):
        self.proactive = {}
        self.reactive = {}
        self.baseline = {}
        self.fork_cap_skips = 0

    def instances(self):
        for bucket in self.proactive.values():
            yield from bucket
        for bucket in self.reactive.values():
            yield from bucket


def _validate(feature: Feature, graph: SiteGraph, piece_types: int) -> None:
    if feature.id < 0:
        raise ValueError("features must carry dense ids; wrap them in a FeatureSet")
    for e in feature.elements:
        if e.kind == ITEM and not 1 <= e.param <= piece_types:
            raise ValueError(f"piece type {e.param} out of range 1..{piece_types}")
        if e.kind == REGION_PROX and not 0 <= e.param < len(graph.regions):
            raise ValueError(f"region {e.param} not defined for this board")


def _closer_to_region(graph: SiteGraph, site: int, anchor: int, region: int) -> bool:
    if site == OFF_BOARD:
        return False
    dists = graph.region_dist[region]
    ds, da = dists[site], dists[anchor]
    if ds is None:
        return False
    return da is None or ds < da


def _who_props(e, site: int, player: int, players: int, shared: bool):
    if players == 2:
        return (Proposition(site, ARRAY_WHO, 3 - player, e.negated),)
    if not e.negated:
        # "Some player other than 0 or p" has no single chunk value, but
        # its complement is a conjunction of exclusions.
        out = [Proposition(site, ARRAY_WHO, 0, True),
               Proposition(site, ARRAY_WHO, player, True)]
        if shared:
            out.append(Proposition(site, ARRAY_WHO, players + 1, True))
        return tuple(out)
    return tuple(Proposition(site, ARRAY_WHO, q, True)
                 for q in range(1, players + 1) if q != player)


def _expand(feature, graph, anchor, ref, reflect, player, players, shared,
            groups, store):
    endpoint_sets = [sorted(resolve_walk(graph, anchor, ref, reflect, e.walk))
                     for e in feature.elements]
    size = 1
    for eps in endpoint_sets:
        size *= len(eps)
    if size > FORK_CAP:
        store.fork_cap_skips += 1
        logger.debug("fork cap exceeded (%d combinations) for feature %d "
                     "at site %d", size, feature.id, anchor)
        return
    for combo in itertools.product(*endpoint_sets):
        keys = {TO: ANY, FROM: ANY, LAST_TO: ANY, LAST_FROM: ANY}
        props = set()
        ok = True
        for e, site in zip(feature.elements, combo):
            kind = e.kind
            if kind in keys:
                if site == OFF_BOARD or keys[kind] not in (ANY, site):
                    ok = False
                    break
                keys[kind] = site
            elif kind == OFF:
                if (site == OFF_BOARD) == e.negated:
                    ok = False
                    break
            elif kind == CONN:
                truth = (site != OFF_BOARD
                         and len(set(graph.onboard_targets(site))) == e.param)
                if truth == e.negated:
                    ok = False
                    break
            elif kind == REGION_PROX:
                if _closer_to_region(graph, site, anchor, e.param) == e.negated:
                    ok = False
                    break
            elif site == OFF_BOARD:
                # Nothing sits off the board, so an affirmative occupancy
                # test can never hold and a negated one always does.
                if not e.negated:
                    ok = False
                    break
            elif kind == EMPTY:
                props.add(Proposition(site, ARRAY_EMPTY, 1, e.negated))
            elif kind == FRIEND:
                props.add(Proposition(site, ARRAY_WHO, player, e.negated))
            elif kind == ITEM:
                props.add(Proposition(site, ARRAY_WHAT, e.param, e.negated))
            else:
                props.update(_who_props(e, site, player, players, shared))
        if not ok:
            continue
        pset = frozenset(props)
        if any(p.negation() in pset for p in pset):
            continue
        gkey = (feature.id, keys[FROM], keys[TO], keys[LAST_FROM], keys[LAST_TO])
        bucket = groups.setdefault(gkey, [])
        if all(pset != seen for seen, _ in bucket):
            bucket.append((pset, (anchor, ref, reflect)))


def _table_key(player, fk, tk, lfk, ltk):
    if lfk == ANY and ltk == ANY:
        return (player, fk, tk)
    return (player, fk, tk, lfk, ltk)


def instantiate(feature_set: Iterable[Feature], graph: SiteGraph, game_meta,
                player: int, store: InstanceStore | None = None) -> InstanceStore:
    """Resolve every feature into key-indexed instances for one player role.

    ``game_meta`` needs ``players``, ``piece_types`` and ``shared_pieces``
    attributes. Passing an existing ``store`` adds this player's tables to
    it, which is how multi-player stores are assembled.
    """
    players = game_meta.players
    if not 1 <= player <= players:
        raise ValueError(f"player {player} out of range 1..{players}")
    shared = bool(game_meta.shared_pieces)
    features = list(feature_set)
    for f in features:
        _validate(f, graph, game_meta.piece_types)
    if store is None:
        store = InstanceStore()

    groups: dict = {}
    for f in features:
        for anchor in range(graph.num_sites):
            for ref in range(len(graph.directions[anchor])):
                for reflect in (1, -1):
                    _expand(f, graph, anchor, ref, reflect, player, players,
                            shared, groups, store)

    static = set()
    for gkey, bucket in groups.items():
        if any(not pset for pset, _ in bucket):
            fid, fk, tk, lfk, ltk = gkey
            key = _table_key(player, fk, tk, lfk, ltk)
            store.baseline[key] = store.baseline.get(key, frozenset()) | {fid}
            static.add(gkey)

    proactive: dict = {}
    reactive: dict = {}
    for gkey, bucket in groups.items():
        if gkey in static:
            continue
        fid, fk, tk, lfk, ltk = gkey
        for pset, prov in bucket:
            if any(other < pset for other, _ in bucket):
                continue
            inst = FeatureInstance(fid, player, fk, tk, lfk, ltk, pset, prov)
            if lfk == ANY and ltk == ANY:
                proactive.setdefault((player, fk, tk), []).append(inst)
            else:
                reactive.setdefault((player, fk, tk, lfk, ltk), []).append(inst)
    for key, insts in proactive.items():
        store.proactive[key] = tuple(insts)
    for key, insts in reactive.items():
        store.reactive[key] = tuple(insts)
    return store


def _pair_keys(a: int, b: int):
    """The lookup keys compatible with concrete components (a, b); a
    component of -1 means "no such site" and only matches ANY."""
    out = []
    for ka, kb in ((a, b), (ANY, b), (a, ANY)):
        if ka >= 0 or kb >= 0:
            if (ka == ANY or ka >= 0) and (kb == ANY or kb >= 0):
                out.append((ka, kb))
    return out


def retrieve(store: InstanceStore, state, action) -> list:
    """All instances whose keys are compatible with (state, action), for the
    player to move. Proactive tables are visited first, then reactive ones;
    within a table, key enumeration order then insertion order."""
    player = state.mover
    out = []
    pkeys = _pair_keys(action.from_site, action.to_site)
    for fk, tk in pkeys:
        out.extend(store.proactive.get((player, fk, tk), ()))
    lkeys = _pair_keys(state.last_from, state.last_to)
    for fk, tk in pkeys:
        for lfk, ltk in lkeys:
            out.extend(store.reactive.get((player, fk, tk, lfk, ltk), ()))
    return out


def query_keys(store: InstanceStore, state, action) -> list:
    """Every bucket key compatible with (state, action) for the player to
    move: 3-tuple proactive keys first, then 5-tuple reactive keys, in the
    same enumeration order retrieve uses."""
    player = state.mover
    pkeys = _pair_keys(action.from_site, action.to_site)
    keys = [(player, fk, tk) for fk, tk in pkeys]
    lkeys = _pair_keys(state.last_from, state.last_to)
    for fk, tk in pkeys:
        for lfk, ltk in lkeys:
            keys.append((player, fk, tk, lfk, ltk))
    return keys


def baseline_features(store: InstanceStore, state, action) -> frozenset:
    """Feature ids unconditionally active for (state, action)."""
    out = frozenset()
    for key in query_keys(store, state, action):
        out |= store.baseline.get(key, frozenset())
    return out
