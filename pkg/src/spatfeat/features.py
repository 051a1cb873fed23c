"""Feature model: elements, walks, symmetry transforms, the text format,
and atomic feature-set generation.

A feature is a small conjunction of elements.  Action elements (to, from,
lastTo, lastFrom) bind the feature to a move; state elements test one
property of the site a walk leads to (emptiness, ownership, piece type,
being off the board, connectivity, or region proximity).  State elements
come in affirmative and negated variants; action elements are never
negated.  Every feature names at least one to or from position.

Text form, one feature per line:

    feature  := element (";" element)*
    element  := ["!"] kind "@" walk
    kind     := "to" | "from" | "lastTo" | "lastFrom" | "empty" | "friend"
              | "enemy" | "off" | "item#" INT | "conn#" INT | "regionProx#" INT
    walk     := "(" [rot ("," rot)*] ")"
    rot      := ["-"] INT ["/" INT]
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Optional, Sequence

TO = "to"
FROM = "from"
LAST_TO = "lastTo"
LAST_FROM = "lastFrom"
EMPTY = "empty"
FRIEND = "friend"
ENEMY = "enemy"
OFF = "off"
ITEM = "item"
CONN = "conn"
REGION_PROX = "regionProx"

ACTION_KINDS = (TO, FROM, LAST_TO, LAST_FROM)
STATE_KINDS = (EMPTY, FRIEND, ENEMY, OFF, ITEM, CONN, REGION_PROX)
PARAM_KINDS = (ITEM, CONN, REGION_PROX)

_KIND_ORDER = {k: i for i, k in enumerate(ACTION_KINDS + STATE_KINDS)}


class FeatureSyntaxError(ValueError):
    """Raised when feature text does not match the grammar."""

    def __init__(self, message, text, pos):
        super().__init__(f"{message} at position {pos}: {text!r}")
        self.pos = pos


@dataclass(frozen=True)
class FeatureElement:
    kind: str
    walk: tuple  # of Fraction
    negated: bool = False
    param: Optional[int] = None

    def __post_init__(self):
        if self.kind not in _KIND_ORDER:
            raise ValueError(f"unknown element kind {self.kind!r}")
        if self.kind in ACTION_KINDS and self.negated:
            raise ValueError(f"{self.kind} elements cannot be negated")
        if (self.param is not None) != (self.kind in PARAM_KINDS):
            raise ValueError(f"{self.kind} takes {'a' if self.kind in PARAM_KINDS else 'no'} parameter")
        walk = tuple(Fraction(r) for r in self.walk)
        for r in walk:
            if not -1 <= r <= 1:
                raise ValueError(f"rotation {r} outside [-1, 1]")
        object.__setattr__(self, "walk", walk)

    @property
    def is_action(self):
        return self.kind in ACTION_KINDS

    def sort_key(self):
        rots = tuple(((r % 1).numerator, (r % 1).denominator) for r in self.walk)
        return (_KIND_ORDER[self.kind], self.param or 0, self.negated,
                len(self.walk), rots)


@dataclass(frozen=True)
class Feature:
    elements: tuple
    id: int = -1

    def __post_init__(self):
        elements = tuple(self.elements)
        if not any(e.kind in (TO, FROM) for e in elements):
            raise ValueError("a feature needs at least one to or from element")
        object.__setattr__(self, "elements", elements)

    def canonical_key(self):
        """Identity of the feature: element order and full-turn offsets in
        rotations do not matter."""
        return tuple(sorted(e.sort_key() for e in self.elements))

    def __str__(self):
        return serialize_feature(self)


class FeatureSet:
    """An ordered collection of features with dense ids 0..n-1."""

    def __init__(self, features: Iterable[Feature]):
        feats = []
        for i, f in enumerate(features):
            feats.append(Feature(f.elements, i) if f.id != i else f)
        self.features = tuple(feats)

    def __len__(self):
        return len(self.features)

    def __iter__(self):
        return iter(self.features)

    def __getitem__(self, i):
        return self.features[i]

    def texts(self):
        return [serialize_feature(f) for f in self.features]

    @classmethod
    def from_texts(cls, lines: Iterable[str]) -> "FeatureSet":
        return cls(parse_feature(line) for line in lines)


def _fmt_rot(r: Fraction) -> str:
    if r.denominator == 1:
        return str(r.numerator)
    return f"{r.numerator}/{r.denominator}"


def serialize_feature(f: Feature) -> str:
    parts = []
    for e in f.elements:
        kind = e.kind if e.param is None else f"{e.kind}#{e.param}"
        walk = ",".join(_fmt_rot(r) for r in e.walk)
        parts.append(f"{'!' if e.negated else ''}{kind}@({walk})")
    return ";".join(parts)


def parse_feature(text: str, feature_id: int = -1) -> Feature:
    elements = []
    pos = 0
    for chunk in text.split(";"):
        piece = chunk.strip()
        if not piece:
            raise FeatureSyntaxError("empty element", text, pos)
        negated = piece.startswith("!")
        body = piece[1:] if negated else piece
        if "@" not in body:
            raise FeatureSyntaxError("missing '@'", text, pos)
        kind_part, _, walk_part = body.partition("@")
        param = None
        if "#" in kind_part:
            kind_part, _, param_part = kind_part.partition("#")
            try:
                param = int(param_part)
            except ValueError:
                raise FeatureSyntaxError("bad parameter", text, pos) from None
        if kind_part not in _KIND_ORDER:
            raise FeatureSyntaxError(f"unknown kind {kind_part!r}", text, pos)
        if not (walk_part.startswith("(") and walk_part.endswith(")")):
            raise FeatureSyntaxError("walk must be parenthesized", text, pos)
        inner = walk_part[1:-1].strip()
        rotations = []
        if inner:
            for tok in inner.split(","):
                try:
                    rotations.append(Fraction(tok.strip()))
                except (ValueError, ZeroDivisionError):
                    raise FeatureSyntaxError(f"bad rotation {tok!r}", text, pos) from None
        try:
            elements.append(FeatureElement(kind_part, tuple(rotations),
                                           negated=negated, param=param))
        except ValueError as err:
            raise FeatureSyntaxError(str(err), text, pos) from None
        pos += len(chunk) + 1
    return Feature(tuple(elements), feature_id)


def _wrap_rotation(r: Fraction) -> Fraction:
    while r > 1:
        r -= 1
    while r < -1:
        r += 1
    return r


def transform_feature(f: Feature, rotation: Fraction, reflect: int) -> Feature:
    """Rotate and/or reflect a feature.

    Reflection multiplies every rotation by -1; rotation is added to the
    first rotation of every non-empty walk. Empty walks stay put (they
    resolve to the anchor whatever the frame).
    """
    new_elements = []
    for e in f.elements:
        if not e.walk:
            new_elements.append(e)
            continue
        rots = [r * reflect for r in e.walk]
        rots[0] = _wrap_rotation(rots[0] + rotation)
        new_elements.append(FeatureElement(e.kind, tuple(rots),
                                           negated=e.negated, param=e.param))
    return Feature(tuple(new_elements), f.id)


def is_reactive(f: Feature) -> bool:
    return any(e.kind in (LAST_TO, LAST_FROM) for e in f.elements)


def orbit_key(f: Feature, num_rotations: int):
    """Canonical key of the feature modulo rotation (multiples of
    1/num_rotations) and reflection; used to drop symmetric duplicates."""
    keys = []
    for j in range(num_rotations):
        for s in (1, -1):
            keys.append(transform_feature(f, Fraction(j, num_rotations), s)
                        .canonical_key())
    return min(keys)


def _atomic_walks(num_rotations: int, max_len: int, max_straight: int):
    fracs = [Fraction(j, num_rotations) for j in range(num_rotations)]
    walks = [()]
    for length in range(1, max_len + 1):
        walks.extend(itertools.product(fracs, repeat=length))
    zero = Fraction(0)
    for length in range(max_len + 1, max_straight + 1):
        walks.append((zero,) * length)
    return walks


def generate_atomic(game, max_len: int, max_straight: int) -> FeatureSet:
    """All atomic features of a game: one anchor action element plus one
    other element with a walk.

    The second element is either a state test (empty/friend/enemy/off,
    plus item tests when the game has more than one piece type per side)
    or a last-move test (lastTo, and lastFrom in movement games). Walks
    use rotations that are multiples of 1/K, K the game's largest
    direction count, and are at most ``max_len`` steps long, or
    ``max_straight`` when every rotation is zero. Features equal up to
    rotation/reflection are generated once.
    """
    if not 1 <= max_len <= max_straight:
        raise ValueError("need 1 <= max_len <= max_straight")
    k = game.graph.max_direction_count()
    walks = _atomic_walks(k, max_len, max_straight)

    anchors = [FeatureElement(TO, ())]
    if game.movement:
        anchors.append(FeatureElement(FROM, ()))

    second: list = []
    for kind in (EMPTY, FRIEND, ENEMY, OFF):
        for negated in (False, True):
            second.append((kind, negated, None))
    single_type = game.players == 2 and all(
        sum(1 for o in game.piece_owner.values() if o == p) <= 1
        for p in range(1, game.players + 1))
    if not single_type:
        for piece in sorted(game.piece_owner):
            for negated in (False, True):
                second.append((ITEM, negated, piece))
    reactive = [(LAST_TO, False, None)]
    if game.movement:
        reactive.append((LAST_FROM, False, None))

    seen = set()
    out = []
    for anchor in anchors:
        for kind, negated, param in second + reactive:
            for walk in walks:
                f = Feature((anchor,
                             FeatureElement(kind, walk, negated=negated,
                                            param=param)))
                key = orbit_key(f, k)
                if key in seen:
                    continue
                seen.add(key)
                out.append(f)
    return FeatureSet(out)


FEATURE_FILE_HEADER = "spatfeat v1"


def write_feature_lines(fs: FeatureSet) -> list:
    return [FEATURE_FILE_HEADER] + fs.texts()


def read_feature_lines(lines: Iterable[str]) -> FeatureSet:
    lines = [ln.rstrip("\n") for ln in lines]
    body = [ln for ln in lines if ln.strip() and not ln.lstrip().startswith("#")]
    if not body or body[0].strip() != FEATURE_FILE_HEADER:
        raise ValueError(f"feature file must start with {FEATURE_FILE_HEADER!r}")
    return FeatureSet.from_texts(body[1:])
