"""Built-in games: Tic-Tac-Toe, Gomoku, Hex, and Breakthrough.

Each game object carries the board graph (augmented with off-board
connections for the feature machinery), piece ownership, and the rules:
legal actions, application, terminal detection, and utilities. States are
the plain bit-array GameState; utilities are per-player in [-1, 1] and the
two-player games here are zero-sum.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

from .geometry import Region, augment_offboard, build_hex_rhombus, build_square_grid
from .state import (
    ActionRecord,
    GameState,
    chunk_params_what,
    chunk_params_who,
    set_site,
)


@dataclass
class Trajectory:
    """A finished (or recorded) playout: the visited (state, action) pairs
    when recording was requested, and terminal utilities per player."""

    steps: list = field(default_factory=list)
    utilities: tuple = ()
    final_state: GameState | None = None


class Game:
    """Rules plus board metadata; subclasses fill in the specifics.

    The object doubles as the game_meta the instantiation and feature
    modules expect (players, piece_types, shared_pieces, piece_owner,
    movement, graph).
    """

    name = "game"
    players = 2
    shared_pieces = False
    movement = False
    piece_owner = {1: 1, 2: 2}

    def __init__(self):
        self.graph = augment_offboard(self._build_graph())
        self.who_params = chunk_params_who(self.players)
        self.what_params = chunk_params_what(self.piece_types)

    @property
    def piece_types(self) -> int:
        return len(self.piece_owner)

    def _build_graph(self):
        raise NotImplementedError

    def initial_state(self) -> GameState:
        return GameState(self.graph.num_sites, self.who_params,
                         self.what_params)

    def legal_actions(self, state) -> list:
        raise NotImplementedError

    def apply(self, state, action) -> GameState:
        raise NotImplementedError

    def is_terminal(self, state) -> bool:
        raise NotImplementedError

    def utilities(self, state) -> tuple:
        """Per-player utilities of a terminal state, index = player - 1."""
        raise NotImplementedError

    def _win_loss(self, winner: int) -> tuple:
        if winner == 0:
            return (0.0, 0.0)
        return (1.0, -1.0) if winner == 1 else (-1.0, 1.0)


class _PlacementGame(Game):
    """Shared rules for place-a-stone games: any empty site is playable,
    placements record from == to, and stones never move."""

    def legal_actions(self, state):
        return [ActionRecord(s, s) for s in range(state.num_sites)
                if state.is_empty(s)]

    def apply(self, state, action):
        nxt = state.copy()
        set_site(nxt, action.to_site, state.mover, state.mover)
        nxt.last_from = action.from_site
        nxt.last_to = action.to_site
        nxt.mover = 3 - state.mover
        return nxt

    def is_terminal(self, state):
        return self._winner(state) != 0 or state.empty == 0

    def utilities(self, state):
        return self._win_loss(self._winner(state))

    def _winner(self, state) -> int:
        raise NotImplementedError


class TicTacToe(_PlacementGame):
    name = "tictactoe"

    _LINES = tuple(
        tuple(lines) for lines in (
            (0, 1, 2), (3, 4, 5), (6, 7, 8),
            (0, 3, 6), (1, 4, 7), (2, 5, 8),
            (0, 4, 8), (2, 4, 6),
        ))

    def _build_graph(self):
        return build_square_grid(3, 3, "cells")

    def _winner(self, state):
        for a, b, c in self._LINES:
            w = state.owner_at(a)
            if w != 0 and w == state.owner_at(b) and w == state.owner_at(c):
                return w
        return 0


class Gomoku(_PlacementGame):
    """Five in a row on the 9x9 vertices of an 8x8 grid, free-style
    (overlines count)."""

    name = "gomoku"
    _SIZE = 9
    _AXES = ((1, 0), (0, 1), (1, 1), (1, -1))

    def _build_graph(self):
        return build_square_grid(self._SIZE - 1, self._SIZE - 1, "vertices")

    def _winner(self, state):
        # Only a line through the last placement can have ended the game.
        last = state.last_to
        if last < 0:
            return 0
        w = state.owner_at(last)
        if w == 0:
            return 0
        n = self._SIZE
        x0, y0 = last % n, last // n
        for dx, dy in self._AXES:
            count = 1
            for sign in (1, -1):
                x, y = x0 + sign * dx, y0 + sign * dy
                while 0 <= x < n and 0 <= y < n \
                        and state.owner_at(y * n + x) == w:
                    count += 1
                    x += sign * dx
                    y += sign * dy
            if count >= 5:
                return w
        return 0


class Hex(_PlacementGame):
    """Hex on a rhombus of hexagonal cells, side 7 by default. Player 1
    connects the two r-sides, player 2 the two q-sides; there are no draws
    and no swap rule."""

    name = "hex"
    _SIDE = 7

    def _build_graph(self):
        n = self._SIDE
        base = build_hex_rhombus(n)
        regions = (
            Region(0, frozenset(range(n))),                        # r = 0
            Region(1, frozenset(range(n * (n - 1), n * n))),       # r = n-1
            Region(2, frozenset(range(0, n * n, n))),              # q = 0
            Region(3, frozenset(range(n - 1, n * n, n))),          # q = n-1
        )
        return base.with_regions(regions)

    def _player_regions(self, player):
        regions = self.graph.regions
        return (regions[0], regions[1]) if player == 1 else (regions[2],
                                                             regions[3])

    def _winner(self, state):
        last = state.last_to
        if last < 0:
            return 0
        w = state.owner_at(last)
        if w == 0:
            return 0
        side_a, side_b = self._player_regions(w)
        seen = {last}
        queue = deque((last,))
        touch_a = last in side_a.sites
        touch_b = last in side_b.sites
        while queue:
            s = queue.popleft()
            for t in self.graph.onboard_targets(s):
                if t not in seen and state.owner_at(t) == w:
                    seen.add(t)
                    queue.append(t)
                    touch_a = touch_a or t in side_a.sites
                    touch_b = touch_b or t in side_b.sites
        return w if touch_a and touch_b else 0


class Breakthrough(Game):
    """Breakthrough on a 6x6 board with two pawn rows per side. Pawns step
    straight or diagonally forward; captures are diagonal only. Reaching
    the far row or eliminating the opponent wins; a player who cannot move
    loses."""

    name = "breakthrough"
    movement = True
    _SIZE = 6

    def _build_graph(self):
        return build_square_grid(self._SIZE, self._SIZE, "cells")

    def initial_state(self):
        state = super().initial_state()
        n = self._SIZE
        for x in range(n):
            for y in (0, 1):
                set_site(state, y * n + x, 1, 1)
            for y in (n - 2, n - 1):
                set_site(state, y * n + x, 2, 2)
        return state

    def legal_actions(self, state):
        n = self._SIZE
        mover = state.mover
        dy = 1 if mover == 1 else -1
        out = []
        for s in range(state.num_sites):
            if state.owner_at(s) != mover:
                continue
            x, y = s % n, s // n
            ty = y + dy
            if not 0 <= ty < n:
                continue
            for dx in (0, -1, 1):
                tx = x + dx
                if not 0 <= tx < n:
                    continue
                t = ty * n + tx
                occupant = state.owner_at(t)
                if dx == 0:
                    if occupant == 0:
                        out.append(ActionRecord(s, t))
                elif occupant != mover:
                    out.append(ActionRecord(s, t))
        return out

    def apply(self, state, action):
        nxt = state.copy()
        mover = state.mover
        set_site(nxt, action.from_site, 0, 0)
        set_site(nxt, action.to_site, mover, mover)
        nxt.last_from = action.from_site
        nxt.last_to = action.to_site
        nxt.mover = 3 - mover
        return nxt

    def _winner(self, state):
        n = self._SIZE
        last = state.last_to
        if last >= 0:
            w = state.owner_at(last)
            if w == 1 and last // n == n - 1:
                return 1
            if w == 2 and last // n == 0:
                return 2
        has = [False, False, False]
        for s in range(state.num_sites):
            o = state.owner_at(s)
            if o:
                has[o] = True
        if not has[1]:
            return 2
        if not has[2]:
            return 1
        return 0

    def is_terminal(self, state):
        if self._winner(state) != 0:
            return True
        # No moves available: the player to move loses.
        return not self.legal_actions(state)

    def utilities(self, state):
        winner = self._winner(state)
        if winner == 0 and not self.legal_actions(state):
            winner = 3 - state.mover
        return self._win_loss(winner)


_GAMES = {g.name: g for g in (TicTacToe, Gomoku, Hex, Breakthrough)}

GAME_NAMES = tuple(sorted(_GAMES))


def game(name: str) -> Game:
    try:
        cls = _GAMES[name]
    except KeyError:
        raise ValueError(f"unknown game {name!r}; choose from {GAME_NAMES}")
    return cls()


def uniform_selector(state, actions, rng):
    return actions[rng.randrange(len(actions))]


def playout(game_obj: Game, state: GameState, selector, rng,
            record: bool = False) -> Trajectory:
    """Play ``state`` to the end with ``selector`` choosing among legal
    actions; optionally record the visited (state, action) pairs."""
    current = state.copy()
    steps = []
    while not game_obj.is_terminal(current):
        actions = game_obj.legal_actions(current)
        action = selector(current, actions, rng)
        if record:
            steps.append((current.copy(), action))
        current = game_obj.apply(current, action)
    return Trajectory(steps, game_obj.utilities(current), current)
