"""Game state as three bit arrays, plus action records.

Per-site occupancy is stored in an ``empty`` bit array and two chunked bit
arrays: ``who`` holds the owning player per site (0 when empty, P+1 for
shared pieces) and ``what`` holds the piece type per site (0 when empty).
Chunks are B bits wide, where B is the lowest power of two that fits the
required X bits, so a chunk never straddles a machine-word boundary.

The arrays are backed by arbitrary-precision integers; chunk i of array a
lives at bit offset i*B.
"""

from __future__ import annotations

from dataclasses import dataclass

WORD_BITS = 64


@dataclass(frozen=True)
class ChunkParams:
    """X = bits needed per value, B = chunk width (lowest power of two >= X)."""

    X: int
    B: int


def _params(x_bits: int) -> ChunkParams:
    b = 1 << max(0, x_bits - 1).bit_length() if x_bits > 1 else 1
    return ChunkParams(x_bits, b)


def chunk_params_who(players: int) -> ChunkParams:
    """Chunk layout for the who array of a game with ``players`` players.

    Values 0 (empty), 1..P (players), and P+1 (shared) must fit, so
    X = floor(log2(P+1)) + 1.
    """
    if players < 1:
        raise ValueError("player count must be at least 1")
    return _params((players + 1).bit_length())


def chunk_params_what(piece_types: int) -> ChunkParams:
    """Chunk layout for the what array of a game with ``piece_types``
    distinct piece types; X = floor(log2(M)) + 1."""
    if piece_types < 1:
        raise ValueError("piece-type count must be at least 1")
    return _params(piece_types.bit_length())


@dataclass(frozen=True)
class ActionRecord:
    """A move: source and destination site (either may be -1).

    A pass is from_site = to_site = -1. ``tag`` disambiguates aliased
    actions that share from/to; features ignore it, game rules use it.
    """

    from_site: int
    to_site: int
    tag: int = 0

    @property
    def is_pass(self) -> bool:
        return self.from_site == -1 and self.to_site == -1


class GameState:
    """Mutable board state; a value type owned by one simulation.

    ``empty``, ``who``, ``what`` are integers treated as bit/chunk arrays.
    """

    __slots__ = ("num_sites", "who_params", "what_params",
                 "empty", "who", "what", "mover", "last_from", "last_to")

    def __init__(self, num_sites: int, who_params: ChunkParams,
                 what_params: ChunkParams, mover: int = 1):
        self.num_sites = num_sites
        self.who_params = who_params
        self.what_params = what_params
        self.empty = (1 << num_sites) - 1
        self.who = 0
        self.what = 0
        self.mover = mover
        self.last_from = -1
        self.last_to = -1

    def copy(self) -> "GameState":
        c = object.__new__(GameState)
        c.num_sites = self.num_sites
        c.who_params = self.who_params
        c.what_params = self.what_params
        c.empty = self.empty
        c.who = self.who
        c.what = self.what
        c.mover = self.mover
        c.last_from = self.last_from
        c.last_to = self.last_to
        return c

    def is_empty(self, site: int) -> bool:
        return (self.empty >> site) & 1 == 1

    def owner_at(self, site: int) -> int:
        b = self.who_params.B
        return (self.who >> (site * b)) & ((1 << b) - 1)

    def piece_at(self, site: int) -> int:
        b = self.what_params.B
        return (self.what >> (site * b)) & ((1 << b) - 1)

    def __eq__(self, other):
        if not isinstance(other, GameState):
            return NotImplemented
        return (self.empty == other.empty and self.who == other.who
                and self.what == other.what and self.mover == other.mover
                and self.last_from == other.last_from
                and self.last_to == other.last_to)

    def __hash__(self):
        return hash((self.empty, self.who, self.what, self.mover,
                     self.last_from, self.last_to))


def set_site(state: GameState, site: int, owner: int, piece: int) -> GameState:
    """Write one site's occupancy, keeping empty/who/what consistent.

    owner = piece = 0 clears the site. Mutates and returns ``state``.
    """
    if not 0 <= site < state.num_sites:
        raise ValueError(f"site {site} out of range")
    if (owner == 0) != (piece == 0):
        raise ValueError(f"owner {owner} and piece {piece} must be zero together")
    if owner >> state.who_params.X:
        raise ValueError(f"owner {owner} does not fit {state.who_params.X} bits")
    if piece >> state.what_params.X:
        raise ValueError(f"piece {piece} does not fit {state.what_params.X} bits")
    bw = state.who_params.B
    state.who = (state.who & ~(((1 << bw) - 1) << (site * bw))) | (owner << (site * bw))
    bt = state.what_params.B
    state.what = (state.what & ~(((1 << bt) - 1) << (site * bt))) | (piece << (site * bt))
    if owner == 0:
        state.empty |= 1 << site
    else:
        state.empty &= ~(1 << site)
    return state


def consistent(state: GameState) -> bool:
    """empty[i] = 1 exactly when who-chunk(i) = 0 exactly when
    what-chunk(i) = 0, for every site."""
    for s in range(state.num_sites):
        e = state.is_empty(s)
        if e != (state.owner_at(s) == 0) or e != (state.piece_at(s) == 0):
            return False
    return True
