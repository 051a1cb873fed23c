"""Proposition implications, generalisation partitioning, and the
evaluation-order heuristics.

The implication table encodes what one proposition's truth value settles
about the others on the same site, given the player and piece-ownership
structure of a game. The ordering routines turn a set of features (each a
disjunction of prop-set conjunctions) into a total order over propositions
and instances that the pattern-network backend evaluates in.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from .instantiate import ARRAY_EMPTY, ARRAY_WHAT, ARRAY_WHO, Proposition

# Proposition-pick heuristics: Jeroslow-Wang weighting of the conjunctions
# the candidate appears in, optionally adding half-weight credit for every
# proposition the candidate settles through the implication table.
JW = "jw"
JW_DEDUCED = "jw-deduced"


def _dedup(props):
    return tuple(dict.fromkeys(props))


class ImplicationTable:
    """What each proposition proves/disproves on the same site.

    Rows are applied literally: only the listed consequences are encoded,
    nothing is semantically closed over. A false proposition behaves as its
    negation's row.
    """

    def __init__(self, players: int, piece_owner: dict):
        self.players = players
        self.piece_owner = dict(piece_owner)
        owned: dict = {}
        for piece, owner in self.piece_owner.items():
            owned.setdefault(owner, []).append(piece)
        for pieces in owned.values():
            pieces.sort()
        self.owned = owned
        self.sole = {p: pieces[0] for p, pieces in owned.items()
                     if len(pieces) == 1}

    def proves_on_true(self, prop: Proposition):
        x = prop.site
        out = [prop]
        pieces = sorted(self.piece_owner)
        if prop.array == ARRAY_EMPTY and not prop.negated:
            out += [Proposition(x, ARRAY_WHO, p, True)
                    for p in range(1, self.players + 1)]
            out += [Proposition(x, ARRAY_WHAT, i, True) for i in pieces]
        elif prop.array == ARRAY_WHO and 1 <= prop.value <= self.players:
            p = prop.value
            if not prop.negated:
                out += [Proposition(x, ARRAY_WHAT, i, True)
                        for i in pieces if self.piece_owner[i] != p]
                if p in self.sole:
                    out.append(Proposition(x, ARRAY_WHAT, self.sole[p]))
                out.append(Proposition(x, ARRAY_EMPTY, 1, True))
            else:
                out += [Proposition(x, ARRAY_WHAT, i, True)
                        for i in self.owned.get(p, ())]
        elif prop.array == ARRAY_WHAT and prop.value in self.piece_owner:
            i = prop.value
            owner = self.piece_owner[i]
            if not prop.negated:
                out.append(Proposition(x, ARRAY_EMPTY, 1, True))
                out += [Proposition(x, ARRAY_WHAT, j, True)
                        for j in pieces if j != i]
                out.append(Proposition(x, ARRAY_WHO, owner))
                out += [Proposition(x, ARRAY_WHO, p, True)
                        for p in range(1, self.players + 1) if p != owner]
            elif self.sole.get(owner) == i:
                out.append(Proposition(x, ARRAY_WHO, owner, True))
        return _dedup(out)

    def disproves_on_true(self, prop: Proposition):
        return _dedup(q.negation() for q in self.proves_on_true(prop))

    def proves_on_false(self, prop: Proposition):
        return self.proves_on_true(prop.negation())

    def disproves_on_false(self, prop: Proposition):
        return self.disproves_on_true(prop.negation())

    def settled_on_true(self, prop: Proposition):
        """Props whose value becomes known when ``prop`` is true, self aside."""
        out = self.proves_on_true(prop) + self.disproves_on_true(prop)
        return _dedup(q for q in out if q != prop)

    def settled_on_false(self, prop: Proposition):
        out = self.proves_on_false(prop) + self.disproves_on_false(prop)
        return _dedup(q for q in out if q != prop)


def build_implications(players: int, piece_owner: dict) -> ImplicationTable:
    return ImplicationTable(players, piece_owner)


def _prop_key(p: Proposition):
    return (p.site, p.array, p.value, p.negated)


@dataclass
class _Disj:
    fid: int
    conjs: list
    removed: int = 0

    def lex_key(self):
        body = tuple(sorted(tuple(sorted(_prop_key(p) for p in c))
                            for c in self.conjs))
        return (body, self.fid)


def _generalises(a: _Disj, b: _Disj) -> bool:
    if not b.conjs:
        return False
    return all(any(ca <= cb for ca in a.conjs) for cb in b.conjs)


def _split(disjs):
    """Ungeneralised/generalised split; mutual-generalisation cycles keep
    their lexicographically least member on the ungeneralised side."""
    keys = [d.lex_key() for d in disjs]
    ungen, gen = [], []
    for i, d in enumerate(disjs):
        dominated = False
        for j, e in enumerate(disjs):
            if i == j:
                continue
            if _generalises(e, d) and (not _generalises(d, e)
                                       or keys[j] < keys[i]):
                dominated = True
                break
        (gen if dominated else ungen).append(d)
    return ungen, gen


def partition(dnf: dict):
    """Split per-feature disjunctions into (ungeneralised, generalised)
    lists of feature ids."""
    disjs = [_Disj(fid, [set(c) for c in conjs])
             for fid, conjs in sorted(dnf.items())]
    ungen, gen = _split(disjs)
    return [d.fid for d in ungen], [d.fid for d in gen]


def _covered(d: _Disj, picked: set) -> bool:
    return any(c & picked for c in d.conjs)


def _cell_score(c: Proposition, cell) -> float:
    return sum(2.0 ** -len(conj) for conj in cell if c in conj)


class _Scorer:
    def __init__(self, heuristic, implications):
        if heuristic not in (JW, JW_DEDUCED):
            raise ValueError(f"unknown heuristic {heuristic!r}")
        if heuristic == JW_DEDUCED and implications is None:
            raise ValueError("the jw-deduced heuristic needs an implication table")
        self.heuristic = heuristic
        self.impl = implications

    def __call__(self, c: Proposition, cell) -> float:
        s = _cell_score(c, cell)
        if self.heuristic == JW_DEDUCED:
            for q in self.impl.settled_on_true(c):
                s += 0.5 * _cell_score(q, cell)
            for q in self.impl.settled_on_false(c):
                s += 0.5 * _cell_score(q, cell)
        return s


def _cells_by_count(disjs, picked):
    """Uncovered disjunctions grouped by conjunction count, ascending."""
    groups: dict = {}
    for d in disjs:
        if not _covered(d, picked):
            groups.setdefault(len(d.conjs), []).append(d)
    return dict(sorted(groups.items()))


def _tiebreak_cells(ungen_by_removed, gen_by_removed, i, j, picked):
    """Cells consulted on ties, in cascade order: the remaining cells of
    the current ungeneralised family, then later ungeneralised families,
    then every generalised family from removed-count 0 up."""
    for ii in sorted(ungen_by_removed):
        if ii < i:
            continue
        for jj, ds in _cells_by_count(ungen_by_removed[ii], picked).items():
            if ii == i and jj <= j:
                continue
            yield [c for d in ds for c in d.conjs]
    for ii in sorted(gen_by_removed):
        for _, ds in _cells_by_count(gen_by_removed[ii], picked).items():
            yield [c for d in ds for c in d.conjs]


def order_propositions(dnf: dict, implications: ImplicationTable | None = None,
                       heuristic: str = JW, rng_seed: int = 0):
    """Total evaluation order over every proposition in ``dnf``.

    ``dnf`` maps feature id to an iterable of prop-set conjunctions. Each
    round covers the ungeneralised disjunctions with the fewest conjunctions
    already removed: forced picks first (single-conjunction, single-prop
    disjunctions), then one pick per uncovered disjunction in ascending
    conjunction count and feature id, scored by the chosen heuristic with
    the cascade of later cells breaking ties and a seeded generator breaking
    the rest.
    """
    score = _Scorer(heuristic, implications)
    rng = random.Random(rng_seed)
    disjs = [_Disj(fid, [set(c) for c in conjs if c])
             for fid, conjs in sorted(dnf.items())]
    disjs = [d for d in disjs if d.conjs]
    ordered: list = []
    picked: set = set()

    while True:
        ungen, gen = _split(disjs)
        ungen_by_removed: dict = {}
        for d in ungen:
            ungen_by_removed.setdefault(d.removed, []).append(d)
        gen_by_removed: dict = {}
        for d in gen:
            gen_by_removed.setdefault(d.removed, []).append(d)
        if not ungen_by_removed:
            break
        i = min(ungen_by_removed)
        family = ungen_by_removed[i]

        for d in family:
            if len(d.conjs) == 1 and len(next(iter(d.conjs))) == 1 \
                    and not _covered(d, picked):
                (c,) = next(iter(d.conjs))
                ordered.append(c)
                picked.add(c)

        for j, ds in _cells_by_count(family, picked).items():
            for d in ds:
                if _covered(d, picked):
                    continue
                cell = [c for e in ds for c in e.conjs
                        if not _covered(e, picked)]
                candidates = sorted({c for conj in d.conjs for c in conj},
                                    key=_prop_key)
                best = _argmax(candidates, lambda c: score(c, cell))
                if len(best) > 1:
                    for tb_cell in _tiebreak_cells(ungen_by_removed,
                                                   gen_by_removed, i, j,
                                                   picked):
                        best = _argmax(best, lambda c: score(c, tb_cell))
                        if len(best) == 1:
                            break
                pick = best[0] if len(best) == 1 else rng.choice(best)
                ordered.append(pick)
                picked.add(pick)

        survivors = []
        for d in disjs:
            kept = []
            for conj in d.conjs:
                reduced = conj - picked
                if reduced:
                    kept.append(reduced)
                else:
                    d.removed += 1
            d.conjs = kept
            if kept:
                survivors.append(d)
        disjs = survivors
    return ordered


def _argmax(candidates, fn):
    scores = [fn(c) for c in candidates]
    top = max(scores)
    return [c for c, s in zip(candidates, scores) if s == top]


def order_instances(instances, prop_order):
    """Sort instances by the position of their last-ordered proposition;
    ties go to the instance with fewer props, then to input order."""
    index = {p: i for i, p in enumerate(prop_order)}
    try:
        keyed = [(max(index[p] for p in inst.props), len(inst.props), pos)
                 for pos, inst in enumerate(instances)]
    except KeyError as e:
        raise ValueError(f"proposition {e.args[0]} missing from order") from e
    return [instances[pos] for _, _, pos in sorted(keyed)]
