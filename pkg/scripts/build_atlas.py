#!/usr/bin/env python3
"""Generate the bundled trilobite/crab atlas from a Robinson-style hierarchy.

The construction
----------------
A square hierarchy of crosses and arms is laid out in "Robinson cells".  Every
Robinson cell becomes a 2x2 block of tiling cells:

* a level-0 cross becomes one trilobite whose orientation is read from its two
  bumped arms;
* any other cell becomes four crabs whose rotations encode the cell label.

Corner rules are the 2x2 windows seen in large hierarchy patches, written with
fine decorations (one label per tile corner point and rotation), so a window is
allowed exactly when it was observed.  The parity table lists the rotation pairs
and anchor-displacement parities of trilobites that face each other across crabs.
The supertile section records how each block of a level-k patch expands into a
level-(k+1) patch.

Usage: python3 scripts/build_atlas.py [--out PATH] [--depth 5]
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from trilocrab.atlas import CRAB, TRILOBITE, load_atlas, validate_atlas
from trilocrab.engine import Placement, Window, parity_violations, patch_of, validate

DIAG = {0: (1, 1), 1: (-1, 1), 2: (-1, -1), 3: (1, -1)}
DIRS = [(1, 0), (0, 1), (-1, 0), (0, -1)]  # E N W S
# crab codes (NE, NW, SW, SE rotations) for one representative of each label orbit,
# chosen by a hill climb so that no crab-only periodic patch exists
CRAB_CODES = [(0, 2, 1, 0), (1, 2, 2, 0), (1, 2, 3, 2), (0, 1, 3, 3), (1, 2, 3, 1)]
# block origin -> trilobite anchor, per rotation (footprint {0,1}^2 turned about the anchor cell)
TRI_OFFSET = {0: (0, 0), 1: (1, 0), 2: (1, 1), 3: (0, 1)}
CORNER_NAMES = {(0, 0): "sw", (1, 0): "se", (1, 1): "ne", (0, 1): "nw"}
TIPS = ((2, 1), (2, 2), (1, 2))


# --- Robinson-style hierarchy ------------------------------------------------------------


def centers(k, d, cx=0, cy=0, out=None):
    out = [] if out is None else out
    out.append((cx, cy, k, d))
    if k > 0:
        h = 2 ** (k - 1)
        for qd in range(4):
            qx, qy = DIAG[qd]
            centers(k - 1, (qd + 2) % 4, cx + qx * h, cy + qy * h, out)
    return out


def bumped(d):
    dx, dy = DIAG[d]
    return {0 if dx > 0 else 2, 1 if dy > 0 else 3}


def hierarchy(k, d):
    """Robinson cell -> label, for the square of half-side 2^k - 1 minus its outer ring."""
    r = 2**k - 1
    cells = {(x, y): {"edges": [None] * 4, "center": None} for x in range(-r, r + 1) for y in range(-r, r + 1)}
    for cx, cy, lv, cd in centers(k, d):
        cells[(cx, cy)]["center"] = lv
        arm = 2**lv - 1
        bump = bumped(cd)
        for a in range(4):
            dx, dy = DIRS[a]
            b = a in bump
            for t in range(arm + 1):
                p = (cx + dx * t, cy + dy * t)
                q = (cx + dx * (t + 1), cy + dy * (t + 1))
                if p in cells:
                    cells[p]["edges"][a] = (b, 1)
                if q in cells:
                    cells[q]["edges"][(a + 2) % 4] = (b, 0)
    out = {}
    for p, c in cells.items():
        if max(abs(p[0]), abs(p[1])) < r:
            tag = () if c["center"] is None else (("X0",) if c["center"] == 0 else ("X",))
            out[p] = (tuple(c["edges"]),) + tag
    return out


def rot_label(lab):
    e = lab[0]
    return ((e[3], e[0], e[1], e[2]),) + lab[1:]


def orbit(lab):
    out = [lab]
    for _ in range(3):
        out.append(rot_label(out[-1]))
    return out


def rot_block(b):
    ne, nw, sw, se = b
    return ((se + 1) % 4, (ne + 1) % 4, (nw + 1) % 4, (sw + 1) % 4)


def is_cross0(lab):
    return lab[1:] == ("X0",)


def cross_rotation(lab):
    b = frozenset(i for i in range(4) if lab[0][i][0])
    return {frozenset({0, 1}): 0, frozenset({1, 2}): 1, frozenset({2, 3}): 2, frozenset({3, 0}): 3}[b]


def crab_encoding(depth):
    labels = set()
    for d in range(4):
        for lab in hierarchy(depth, d).values():
            labels.update(orbit(lab))
    reps, seen = [], set()
    for lab in sorted(labels, key=repr):
        if lab in seen or is_cross0(lab):
            continue
        seen.update(orbit(lab))
        reps.append(lab)
    if len(reps) != len(CRAB_CODES):
        raise SystemExit(f"expected {len(CRAB_CODES)} crab label orbits, found {len(reps)}")
    enc = {}
    for lab, code in zip(reps, CRAB_CODES):
        for member in orbit(lab):
            if enc.setdefault(member, code) != code:
                raise SystemExit("crab code not compatible with the label's symmetry")
            code = rot_block(code)
    if len(set(enc.values())) != len(enc):
        raise SystemExit("crab codes collide")
    return enc


def placements_of(labels, enc):
    """Robinson labels -> tiling placements (block of cell (X, Y) has origin (2X, 2Y))."""
    out = []
    for (x, y), lab in labels.items():
        ox, oy = 2 * x, 2 * y
        if is_cross0(lab):
            r = cross_rotation(lab)
            ax, ay = TRI_OFFSET[r]
            out.append(Placement(TRILOBITE, r, ox + ax, oy + ay))
        else:
            ne, nw, sw, se = enc[lab]
            out += [
                Placement(CRAB, ne, ox + 1, oy + 1),
                Placement(CRAB, nw, ox, oy + 1),
                Placement(CRAB, sw, ox, oy),
                Placement(CRAB, se, ox + 1, oy),
            ]
    return out


# --- atlas text --------------------------------------------------------------------------


def tri_label(p, r):
    return f"T.{p[0]}{p[1]}.{r}"


def crab_label(p, r):
    return f"C.{CORNER_NAMES[p]}.{r}"


def header_sections(name):
    lines = [f"name {name}", "", "[decorations]", "label BLANK BLANK"]
    for r in range(4):
        for p in CORNER_NAMES:
            lines.append(f"label {crab_label(p, r)} {crab_label(p, (r + 1) % 4)}")
    for r in range(4):
        for px in range(3):
            for py in range(3):
                lines.append(f"label {tri_label((px, py), r)} {tri_label((px, py), (r + 1) % 4)}")
    lines += ["", "[tile TRILOBITE]"]
    lines += [f"cell {x} {y}" for x in (0, 1) for y in (0, 1)]
    lines += [f"mark {px} {py} {tri_label((px, py), 0)}" for px in range(3) for py in range(3)]
    lines += [f"tip {x} {y}" for x, y in TIPS]
    lines += ["", "[tile CRAB]", "cell 0 0"]
    lines += [f"mark {p[0]} {p[1]} {crab_label(p, 0)}" for p in CORNER_NAMES]
    return lines


def observed_tuples(draft, patches):
    from trilocrab.engine import rulebook

    rb = rulebook(draft)
    seen = set()
    for p in patches:
        cells = p._cells
        for (x, y) in cells:
            quad = [(x + 1, y + 1), (x, y + 1), (x, y), (x + 1, y)]
            if all(q in cells for q in quad):
                point_cells = [(x + 1, y + 1), (x, y + 1), (x, y), (x + 1, y)]
                seen.add(tuple(rb.contrib[cells[c][1]][i] for i, c in enumerate(point_cells)))
    closed = set()
    for t in seen:
        for r in range(4):
            closed.add(draft.rotate_tuple(t, r))
    return closed


def observed_parity(atlas, patches):

    pairs = set()
    for p in patches:
        b = p._board()
        rb = b.rb
        for c, (pid, s) in b.cells.items():
            if not rb.is_tri[s]:
                continue
            for d in rb.dirs:
                e = b.cells.get((c[0] + d[0], c[1] + d[1]))
                if e is None or e[0] == pid:
                    continue
                hit = b._walk(c, d, {})
                if hit is None:
                    continue
                oa, ob = rb.offset[s], rb.offset[hit[1]]
                dx = hit[0][0] - ob[0] - (c[0] - oa[0])
                dy = hit[0][1] - ob[1] - (c[1] - oa[1])
                pairs.add((rb.rot_of[s], rb.rot_of[hit[1]], dx % 2, dy % 2))
    return pairs


def block_context(di, dj):
    """Class of a block at block offset (di, dj) from a trilobite block."""
    if di % 2 == 0 and dj % 2 == 0:
        return "TRI"
    if di % 2 and dj % 2 == 0:
        return "EW"  # trilobites to the east and west
    if di % 2 == 0 and dj % 2:
        return "NS"  # trilobites to the north and south
    return "-"


FINE_SPAN = {"NS": ([-2, -1, 0, 1, 2, 3], [0, 1]), "EW": ([0, 1], [-2, -1, 0, 1, 2, 3]), "-": ([0, 1], [0, 1])}


def supertile(depth, enc):
    """Template of a rotation-0 super trilobite and the expansion of every crab block."""
    body = None
    rules: dict = {}
    for d in range(4):
        coarse = hierarchy(depth - 1, d)
        fine_pl = placements_of(hierarchy(depth, d), enc)
        fine = {}
        for pl in fine_pl:
            if pl.kind == CRAB:
                fine[(pl.x, pl.y)] = pl
            else:
                for dx in (0, 1):
                    for dy in (0, 1):
                        fine[(pl.x - TRI_OFFSET[pl.rot][0] + dx, pl.y - TRI_OFFSET[pl.rot][1] + dy)] = pl
        lim = 2 ** (depth - 1) - 3
        for (i, j), lab in coarse.items():
            if max(abs(i), abs(j)) > lim:
                continue
            bx, by = 4 * i, 4 * j  # fine image of the block origin (2i, 2j)
            if is_cross0(lab):
                r = cross_rotation(lab)
                found = set()
                for x in range(-2, 4):
                    for y in range(-2, 4):
                        pl = fine[(bx + x, by + y)]
                        found.add((pl.kind, pl.rot, pl.x - bx, pl.y - by))
                # express in the rotation-0 frame
                canon = set()
                for kind, rr, x, y in found:
                    for _ in range(r):
                        x, y = y, 1 - x
                    canon.add((kind, (rr - r) % 4, x, y))
                canon = tuple(sorted(canon))
                if body is None:
                    body = canon
                elif body != canon:
                    raise SystemExit("super trilobite template is not rotation covariant")
            else:
                ctx = block_context(i - 1, j - 1)
                xs, ys = FINE_SPAN[ctx]
                out = tuple(sorted((fine[(bx + x, by + y)].rot, x, y) for x in xs for y in ys))
                key = (enc[lab], ctx)
                if rules.setdefault(key, out) != out:
                    raise SystemExit(f"crab block {key} expands in two different ways")
    return body, rules


def build(depth: int, name: str) -> str:
    enc = crab_encoding(depth + 1)
    draft_text = "\n".join(header_sections(name) + ["", "[corner-rules]", "", "[parity]", "segments axis", ""])
    draft = load_atlas(draft_text)
    patches = []
    for d in range(4):
        pls = placements_of(hierarchy(depth, d), enc)
        patches.append(patch_of(draft, pls))
    tuples = observed_tuples(draft, patches)
    pairs = observed_parity(draft, patches)
    closed_pairs = set()
    for a, b, px, py in pairs:
        for _ in range(4):
            closed_pairs.update({(a, b, px, py), (b, a, px, py)})
            a, b, px, py = (a + 1) % 4, (b + 1) % 4, py, px
    if closed_pairs != pairs:
        raise SystemExit("observed parity table is not closed under rotation and swap")
    body, rules = supertile(depth + 1, enc)

    lines = [
        "# Trilobite and crab atlas, generated by scripts/build_atlas.py; do not edit by hand.",
        f"# {len(tuples)} corner tuples, {len(pairs)} parity pairs, {len(rules)} crab expansion rules.",
    ]
    lines += header_sections(name)
    lines += ["", "[corner-rules]", "# NE NW SW SE"]
    lines += ["allow " + " ".join(t) for t in sorted(tuples)]
    lines += ["", "[parity]", "segments axis", "# oA oB px py"]
    lines += ["pair %d %d %d %d" % p for p in sorted(pairs)]
    lines += ["", "[supertile]", "scale 2", "anchor 0 0"]
    lines += [f"body {k} {r} {x} {y}" for k, r, x, y in body]
    for (code, ctx), out in sorted(rules.items()):
        lines.append("rule %d %d %d %d %s" % (*code, ctx))
        lines += [f"  crab {r} {x} {y}" for r, x, y in out]
    return "\n".join(lines) + "\n"


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default=str(Path(__file__).resolve().parents[1] / "src/trilocrab/data/trilobite-crab.atlas"))
    ap.add_argument("--depth", type=int, default=5)
    ap.add_argument("--name", default="trilobite-crab")
    args = ap.parse_args(argv)
    text = build(args.depth, args.name)
    atlas = load_atlas(text)
    rep = validate_atlas(atlas)
    if not rep.ok:
        print("\n".join(rep.violations), file=sys.stderr)
        return 1
    enc = crab_encoding(args.depth + 1)
    for d in range(4):
        pls = placements_of(hierarchy(args.depth, d), enc)
        p = patch_of(atlas, pls)
        win = p.bbox()
        p = p.with_window(Window(win.x0, win.y0, win.x1, win.y1), "closed")
        bad = validate(p)
        if not bad.ok:
            print(f"hierarchy patch {d} does not validate: {bad.violations[:5]}", file=sys.stderr)
            return 1
        assert not parity_violations(p._board())
    Path(args.out).write_text(text)
    print(f"wrote {args.out}: {len(atlas.corner_rules)} corner tuples, {len(atlas.parity_pairs)} parity pairs")
    return 0


if __name__ == "__main__":
    sys.exit(main())
