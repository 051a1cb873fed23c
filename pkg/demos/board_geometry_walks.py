"""Walk the geometry layer: boards, edge augmentation, fractional turns.

Run with ``python3 demos/board_geometry_walks.py``. Everything prints;
nothing is written to disk.
"""

import math
from fractions import Fraction

from spatfeat.geometry import (
    OFF_BOARD,
    Region,
    augment_offboard,
    build_hex_rhombus,
    build_square_grid,
    region_distances,
    resolve_walk,
)

F = Fraction


def site_at(graph, x, y):
    for i, (cx, cy) in enumerate(graph.coords):
        if abs(cx - x) < 1e-9 and abs(cy - y) < 1e-9:
            return i
    raise LookupError(f"no site at ({x}, {y})")


def show_fan(graph, s, title):
    print(f"\n{title}")
    for d in graph.directions[s]:
        where = "off board" if d.offboard else f"site {d.target}"
        print(f"  angle {math.degrees(d.angle):6.1f} deg -> {where}")


def coords_of(graph, sites):
    out = []
    for s in sorted(sites):
        if s == OFF_BOARD:
            out.append("off-board")
        else:
            x, y = graph.coords[s]
            out.append(f"({x:g},{y:g})")
    return "{" + ", ".join(out) + "}"


# A raw 3x3 grid only records real adjacencies, so a corner cell has two
# neighbours. Augmentation completes every fan with off-board directions
# until the spacing is uniform, which is what lets one walk vocabulary
# transfer between boards.

raw = build_square_grid(3, 3, "cells")
aug = augment_offboard(raw)
corner = site_at(aug, 0, 0)
show_fan(raw, corner, "corner of a raw 3x3 grid")
show_fan(aug, corner, "same corner after augmentation")

# Walks are lists of turn fractions, one per step, relative to a reference
# direction. 0 keeps going straight, 1/4 turns a quarter clockwise, and a
# leading entry picks the first step's heading.

centre = site_at(aug, 1, 1)


def walk(graph, s, reflect, turns):
    return coords_of(graph, resolve_walk(
        graph, s, graph.default_reference_direction(s), reflect, turns))


print("\nwalks from the centre (1,1) of the augmented 3x3 board")
print("  [0]        ->", walk(aug, centre, 1, [F(0)]), "(straight north)")
print("  [1/4]      ->", walk(aug, centre, 1, [F(1, 4)]),
      "(quarter turn clockwise)")

# A fraction with no exact matching direction snaps to the nearest one.
# 1/6 of a turn on a square board rounds to the quarter-turn neighbour.

print("  [1/6]      ->", walk(aug, centre, 1, [F(1, 6)]),
      "(rounds to [1/4])")

# Reflection mirrors every turn, so the same walk description covers both
# chiralities of a pattern.

print("  [1/4] refl ->", walk(aug, centre, -1, [F(1, 4)]))

# Multi-step walks turn relative to the previous heading. A half turn
# from the top edge faces south, then 0 keeps going, crossing the board.

top = site_at(aug, 1, 2)
print("\nwalks from the top edge (1,2)")
print("  [1/2, 0]   ->", walk(aug, top, 1, [F(1, 2), F(0)]),
      "(across to the bottom)")

# Off the edge there is exactly one absorbing off-board pseudo-site;
# walking onward never comes back.

print("  [0]        ->", walk(aug, top, 1, [F(0)]))
print("  [0, 1/2]   ->", walk(aug, top, 1, [F(0), F(1, 2)]),
      "(absorbing)")

# On a hex board a quarter turn has no nearest direction: it lands exactly
# between two neighbours, so the walk forks and both ends count.

hexg = augment_offboard(build_hex_rhombus(4))
s = site_at(hexg, 1 + 0.5, math.sqrt(3) / 2)
ref_hex = hexg.default_reference_direction(s)
fork = resolve_walk(hexg, s, ref_hex, 1, [F(-1, 4)])
print("\nhex rhombus, walk [-1/4] from cell (1,1):",
      coords_of(hexg, fork))
print("  matches [-1/6] and [-1/3] together:  ",
      coords_of(hexg, resolve_walk(hexg, s, ref_hex, 1, [F(-1, 6)])
                | resolve_walk(hexg, s, ref_hex, 1, [F(-1, 3)])))

# Regions attach distance fields to a board. Here: steps to the top row
# of a 5x5 grid, printed with the top row at the top.

g5 = build_square_grid(5, 5, "cells")
top_row = Region(0, frozenset(site_at(g5, x, 4) for x in range(5)))
dist = region_distances(g5, top_row)
print("\ndistance to the top row, 5x5 board:")
for y in reversed(range(5)):
    print("  " + " ".join(str(dist[site_at(g5, x, y)]) for x in range(5)))
