"""Board geometry: site graphs, ordered directions, radials, off-board
augmentation, region distances, and walk resolution.

A board is a graph of sites with real (x, y) coordinates.  Every site
carries an ordered list of directions (orthogonal connections), sorted
clockwise by angle starting from the entry nearest due north.  Angles are
measured in radians, clockwise from north, in [0, 2*pi).

Walks are sequences of rational rotations, each a fraction of a full
clockwise turn applied to the current heading.  After each rotation the
heading is rounded to the nearest direction of the current site; when two
directions are (almost) equally near, the walk forks and both branches are
followed.  Stepping through an off-board direction is absorbing.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

TWO_PI = 2.0 * math.pi

# Sentinel for "off the board". Off-board space is a single absorbing
# pseudo-location, never a synthetic site.
OFF_BOARD = -1

# Absolute tolerance for generic angle comparisons.
ANGLE_TOL = 1e-6

# A radial keeps extending while the heading changes by less than this.
RADIAL_MAX_TURN = 0.25

# A walk forks when the desired rotation lies within this fraction of a
# full turn of the midpoint between the two nearest directions.
WALK_FORK_TOL = 0.02


def angle_cw_from_north(dx: float, dy: float) -> float:
    """Angle of the vector (dx, dy), clockwise from north, in [0, 2*pi)."""
    a = math.atan2(dx, dy)
    if a < 0.0:
        a += TWO_PI
    return a


def circular_distance(a: float, b: float) -> float:
    """Shortest angular distance between two angles, in [0, pi]."""
    d = math.fmod(abs(a - b), TWO_PI)
    return min(d, TWO_PI - d)


@dataclass(frozen=True)
class Direction:
    """One outgoing connection of a site.

    ``target`` is a site index, or OFF_BOARD for artificial connections.
    ``angle`` is computed from the coordinates of source and target for
    on-board connections; off-board connections carry a synthetic angle.
    """

    target: int
    angle: float
    offboard: bool = False


@dataclass(frozen=True)
class Region:
    id: int
    sites: frozenset

    def __post_init__(self):
        if not self.sites:
            raise ValueError("region must be non-empty")


@dataclass(frozen=True)
class Radial:
    """A maximal near-straight chain of sites starting with one orthogonal
    step. Consecutive steps change heading by less than RADIAL_MAX_TURN."""

    sites: tuple

    def __len__(self):
        return len(self.sites)


class SiteGraph:
    """Immutable board graph.

    ``directions[s]`` is a tuple of Direction, sorted clockwise and rotated
    so the entry nearest due north comes first.  ``regions`` and
    ``region_dist`` are attached by ``with_regions`` (empty by default).
    """

    __slots__ = ("num_sites", "coords", "directions", "regions", "region_dist")

    def __init__(self, coords, adjacency, regions=(), extra_directions=None):
        """Build from coordinates and on-board adjacency.

        adjacency: per-site iterable of neighbour site indices.
        extra_directions: optional per-site list of off-board angles.
        """
        coords = tuple((float(x), float(y)) for x, y in coords)
        n = len(coords)
        dir_lists = []
        for s in range(n):
            entries = []
            for t in adjacency[s]:
                if not (0 <= t < n):
                    raise ValueError(f"site {s}: bad neighbour index {t}")
                dx = coords[t][0] - coords[s][0]
                dy = coords[t][1] - coords[s][1]
                entries.append(Direction(t, angle_cw_from_north(dx, dy)))
            if extra_directions is not None:
                for ang in extra_directions[s]:
                    entries.append(Direction(OFF_BOARD, ang % TWO_PI, True))
            dir_lists.append(_sort_directions(entries))
        object.__setattr__(self, "num_sites", n)
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "directions", tuple(dir_lists))
        object.__setattr__(self, "regions", tuple(regions))
        object.__setattr__(
            self, "region_dist",
            tuple(region_distances(self, r) for r in regions))

    def __setattr__(self, name, value):
        raise AttributeError("SiteGraph is immutable")

    def with_regions(self, regions: Sequence[Region]) -> "SiteGraph":
        """Return a copy of this graph with regions (and their distance
        tables) attached."""
        g = object.__new__(SiteGraph)
        for name in ("num_sites", "coords", "directions"):
            object.__setattr__(g, name, getattr(self, name))
        object.__setattr__(g, "regions", tuple(regions))
        object.__setattr__(
            g, "region_dist", tuple(region_distances(g, r) for r in regions))
        return g

    def onboard_targets(self, s: int):
        return [d.target for d in self.directions[s] if not d.offboard]

    def max_direction_count(self) -> int:
        """Largest per-site direction count, off-board included."""
        return max((len(ds) for ds in self.directions), default=0)

    def default_reference_direction(self, s: int) -> int:
        """Index of the direction nearest due north; ties take the smaller
        index. This is the identity rotation for walks at this site."""
        dirs = self.directions[s]
        if not dirs:
            raise ValueError(f"site {s} has no directions")
        best, best_d = 0, circular_distance(dirs[0].angle, 0.0)
        for i in range(1, len(dirs)):
            d = circular_distance(dirs[i].angle, 0.0)
            if d < best_d - ANGLE_TOL:
                best, best_d = i, d
        return best


def _sort_directions(entries):
    """Sort clockwise by angle, then rotate so the entry with the smallest
    circular distance to north leads (ties keep the smaller angle)."""
    entries = sorted(entries, key=lambda d: d.angle)
    if not entries:
        return ()
    best = 0
    best_d = circular_distance(entries[0].angle, 0.0)
    for i in range(1, len(entries)):
        d = circular_distance(entries[i].angle, 0.0)
        if d < best_d - ANGLE_TOL:
            best, best_d = i, d
    return tuple(entries[best:] + entries[:best])


def build_square_grid(width: int, height: int, play_on: str = "cells") -> SiteGraph:
    """Square board. ``cells`` mode yields width x height sites; ``vertices``
    mode yields (width+1) x (height+1) sites on the same unit grid."""
    if width < 1 or height < 1:
        raise ValueError("board dimensions must be at least 1")
    if play_on == "cells":
        nx, ny = width, height
    elif play_on == "vertices":
        nx, ny = width + 1, height + 1
    else:
        raise ValueError(f"play_on must be 'cells' or 'vertices', got {play_on!r}")
    coords = [(x, y) for y in range(ny) for x in range(nx)]

    def idx(x, y):
        return y * nx + x

    adjacency = []
    for y in range(ny):
        for x in range(nx):
            nbrs = []
            for dx, dy in ((0, 1), (1, 0), (0, -1), (-1, 0)):
                tx, ty = x + dx, y + dy
                if 0 <= tx < nx and 0 <= ty < ny:
                    nbrs.append(idx(tx, ty))
            adjacency.append(nbrs)
    return SiteGraph(coords, adjacency)


# Axial neighbour offsets of a hexagonal cell.
_HEX_OFFSETS = ((1, 0), (-1, 0), (0, 1), (0, -1), (1, -1), (-1, 1))


def build_hex_rhombus(side: int) -> SiteGraph:
    """Rhombus of side x side hexagonal cells (the Hex board shape).

    Axial coordinates (q, r) with q in [0, side) and r in [0, side);
    cartesian embedding x = q + r/2, y = r*sqrt(3)/2, so neighbours sit at
    uniform pi/3 angular spacing. The 60-degree (acute) rhombus corners
    have 2 on-board neighbours, the obtuse ones 3.
    """
    if side < 1:
        raise ValueError("side must be at least 1")
    coords = []
    index = {}
    for r in range(side):
        for q in range(side):
            index[(q, r)] = len(coords)
            coords.append((q + 0.5 * r, r * (math.sqrt(3.0) / 2.0)))
    adjacency = []
    for r in range(side):
        for q in range(side):
            nbrs = []
            for dq, dr in _HEX_OFFSETS:
                key = (q + dq, r + dr)
                if key in index:
                    nbrs.append(index[key])
            adjacency.append(nbrs)
    return SiteGraph(coords, adjacency)


def _continuation(graph: SiteGraph, site: int, heading: float, visited=None):
    """Continuation candidates of a radial entering ``site`` with
    ``heading``: on-board directions minimizing the absolute heading change,
    provided it stays under RADIAL_MAX_TURN. Exact ties return several."""
    best = []
    best_d = None
    for d in graph.directions[site]:
        if d.offboard:
            continue
        if visited is not None and d.target in visited:
            continue
        delta = circular_distance(d.angle, heading)
        if best_d is None or delta < best_d - ANGLE_TOL:
            best, best_d = [d], delta
        elif abs(delta - best_d) <= ANGLE_TOL:
            best.append(d)
    if best_d is None or best_d >= RADIAL_MAX_TURN:
        return []
    return best


def compute_radials(graph: SiteGraph):
    """All maximal radials, as a dict (site, direction index) -> tuple of
    Radial. Off-board directions have no radial. Ties fork."""
    out = {}
    for s in range(graph.num_sites):
        for i, d in enumerate(graph.directions[s]):
            if d.offboard:
                continue
            done = []
            stack = [((s, d.target), d.angle)]
            while stack:
                sites, heading = stack.pop()
                conts = _continuation(graph, sites[-1], heading, visited=set(sites))
                if not conts:
                    done.append(Radial(tuple(sites)))
                    continue
                for c in conts:
                    stack.append((sites + (c.target,), c.angle))
            done.sort(key=lambda r: r.sites)
            out[(s, i)] = tuple(done)
    return out


def augment_offboard(graph: SiteGraph) -> SiteGraph:
    """Add artificial off-board connections, in three ordered steps:

    1. a site with exactly two connections at 2*pi/3 gains the third
       connection completing the triangle;
    2. a site where an incoming radial stops gains the continuation of that
       radial, pointing off the board (skipped for sites step 1 changed);
    3. sites modified by step 2 gain extra connections when that makes all
       angular gaps equal, never more than doubling the count they had
       entering this step.
    """
    extra = [[] for _ in range(graph.num_sites)]
    step1_modified = set()
    step2_modified = set()

    for s in range(graph.num_sites):
        dirs = [d for d in graph.directions[s] if not d.offboard]
        if len(dirs) != 2:
            continue
        gap = circular_distance(dirs[0].angle, dirs[1].angle)
        if abs(gap - 2.0 * math.pi / 3.0) <= ANGLE_TOL:
            third = (dirs[1].angle + 2.0 * math.pi / 3.0) % TWO_PI
            if circular_distance(third, dirs[0].angle) <= ANGLE_TOL:
                third = (dirs[0].angle + 2.0 * math.pi / 3.0) % TWO_PI
            extra[s].append(third)
            step1_modified.add(s)

    for s1 in range(graph.num_sites):
        if s1 in step1_modified:
            continue
        for d in graph.directions[s1]:
            if d.offboard:
                continue
            s2 = d.target
            heading = (d.angle + math.pi) % TWO_PI  # the step s2 -> s1
            if _continuation(graph, s1, heading):
                continue  # the radial extends past s1, nothing to add
            if all(circular_distance(heading, a) > ANGLE_TOL for a in extra[s1]):
                extra[s1].append(heading)
                step2_modified.add(s1)

    for s in sorted(step2_modified):
        angles = sorted([d.angle for d in graph.directions[s]] + extra[s])
        added = _uniform_fill(angles, max_added=len(angles))
        extra[s].extend(added)

    return SiteGraph(graph.coords,
                     [graph.onboard_targets(s) for s in range(graph.num_sites)],
                     regions=graph.regions,
                     extra_directions=extra)


def _uniform_fill(angles, max_added):
    """Angles to insert so all circular gaps between ``angles`` become
    equal, inserting at most ``max_added``. Empty when impossible."""
    n = len(angles)
    if n < 2:
        return []
    gaps = [(angles[(i + 1) % n] - angles[i]) % TWO_PI for i in range(n)]
    for m in range(n, 2 * n + 1):
        delta = TWO_PI / m
        counts = []
        for g in gaps:
            k = round(g / delta)
            if k < 1 or abs(g - k * delta) > ANGLE_TOL:
                counts = None
                break
            counts.append(k)
        if counts is None or sum(counts) != m:
            continue
        added = []
        for i, k in enumerate(counts):
            for j in range(1, k):
                added.append((angles[i] + j * delta) % TWO_PI)
        if len(added) <= max_added:
            return added
    return []


def region_distances(graph: SiteGraph, region: Region):
    """Breadth-first hop distance from the region over on-board orthogonal
    connections; 0 inside the region, None where unreachable."""
    dist = [None] * graph.num_sites
    queue = deque()
    for s in region.sites:
        dist[s] = 0
        queue.append(s)
    while queue:
        s = queue.popleft()
        for t in graph.onboard_targets(s):
            if dist[t] is None:
                dist[t] = dist[s] + 1
                queue.append(t)
    return tuple(dist)


def resolve_walk(graph: SiteGraph, anchor: int, reference_dir: int,
                 reflect: int, walk: Sequence[Fraction]):
    """Resolve a walk to its endpoint(s).

    The heading starts at the reference direction's angle. Each step
    multiplies its rotation by ``reflect``, turns the heading clockwise by
    rotation * 2*pi, and rounds to the nearest direction of the current
    site; near-midpoint ties fork the walk. An off-board step is absorbing.

    Returns a frozenset of site indices and/or OFF_BOARD.
    """
    dirs = graph.directions[anchor]
    if not walk:
        return frozenset((anchor,))
    if not (0 <= reference_dir < len(dirs)):
        raise ValueError(f"reference_dir {reference_dir} out of range at site {anchor}")
    branches = [(anchor, dirs[reference_dir].angle)]
    for rot in walk:
        turn = float(rot) * reflect * TWO_PI
        next_branches = []
        for site, heading in branches:
            if site == OFF_BOARD:
                next_branches.append((OFF_BOARD, heading))
                continue
            desired = (heading + turn) % TWO_PI
            for d in _nearest_directions(graph.directions[site], desired):
                if d.offboard:
                    next_branches.append((OFF_BOARD, d.angle))
                else:
                    next_branches.append((d.target, d.angle))
        branches = next_branches
    return frozenset(site for site, _ in branches)


def _nearest_directions(dirs, desired):
    """Directions nearest to the desired heading. Two (or more) are
    returned when the heading falls within WALK_FORK_TOL of a full turn of
    the midpoint between the nearest pair."""
    if not dirs:
        return []
    turns = [circular_distance(d.angle, desired) / TWO_PI for d in dirs]
    best = min(turns)
    return [d for d, t in zip(dirs, turns) if t - best <= 2.0 * WALK_FORK_TOL]
