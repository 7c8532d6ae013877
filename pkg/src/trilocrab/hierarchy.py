"""Inflation and composition between hierarchy levels, plus chains and half-plane shifts.

Tiles come in 2x2 "blocks": one trilobite, or four crabs whose rotations form a
block code.  Trilobite blocks sit on a lattice of period two blocks.  Relative
to that lattice every other block has one of three position classes: between
two trilobites horizontally ("EW"), vertically ("NS"), or diagonally ("-").

Inflation maps the block at origin O to fine cells around 2*O:

* a trilobite becomes the atlas template (6x6 cells, four trilobites pointing in);
* an "EW" crab block becomes a vertical 2x6 bar, an "NS" block a horizontal 6x2 bar;
* a "-" crab block becomes a single 2x2 block.

Those shapes tile the plane exactly, so inflation is a pure per-block rewrite and
composition is its inverse, checked by inflating back.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .atlas import CRAB, TRILOBITE, Atlas
from .engine import (
    CLOSED,
    Patch,
    Placement,
    PlacementError,
    Window,
    canonical,
    census,
    classify_trilobite,
    patch_of,
    rulebook,
    validate,
)
from .grid import Cell

ALLOWED_CENSUS = frozenset({"TTT", "OTO", "OOO"})
CHAIN_CODES = ("TTO", "OTT")


class HierarchyError(ValueError):
    """``code`` is UNCOMPOSABLE, PRECONDITION_CENSUS, UNINFLATABLE, CHAIN_NOT_SPANNING or SHIFT_INVALID."""

    def __init__(self, code: str, detail: str = ""):
        self.code = code
        self.detail = detail
        super().__init__(f"{code}: {detail}" if detail else code)


@dataclass
class SuperPatch:
    """A composed patch: its tiles stand for supertiles of the given level."""

    patch: Patch
    level: int
    witness: dict[int, tuple[int, ...]] = field(default_factory=dict)  # super trilobite id -> fine ids


def _template(atlas: Atlas):
    if atlas.supertile is None:
        raise HierarchyError("UNINFLATABLE", "atlas has no [supertile] section")
    return atlas.supertile


def block_origin(atlas: Atlas, pl: Placement) -> Cell:
    """Lower-left cell of a trilobite's footprint."""
    cells = [c for c, _ in rulebook(atlas).cells_of(pl)]
    return Cell(min(c.x for c in cells), min(c.y for c in cells))


def block_class(di: int, dj: int) -> str:
    """Position class of a block at block offset (di, dj) from a trilobite block."""
    if di % 2 == 0 and dj % 2 == 0:
        return TRILOBITE
    if di % 2 and dj % 2 == 0:
        return "EW"
    if di % 2 == 0:
        return "NS"
    return "-"


def _phase(atlas: Atlas, pls) -> Cell:
    origins = {block_origin(atlas, pl) for pl in pls if pl.kind == TRILOBITE}
    if not origins:
        raise HierarchyError("UNINFLATABLE", "no trilobite fixes the block lattice")
    o = min(origins)
    for b in origins:
        if (b.x - o.x) % 4 or (b.y - o.y) % 4:
            raise HierarchyError("UNINFLATABLE", f"trilobite blocks {o} and {b} are off the common lattice")
    return o


def _blocks(atlas: Atlas, p: Patch):
    """Yield (origin, class, payload): payload is the trilobite rotation or the crab block code."""
    pls = list(p.placements.values())
    o = _phase(atlas, pls)
    crabs = {}
    out = []
    for pl in pls:
        if pl.kind == TRILOBITE:
            out.append((block_origin(atlas, pl), TRILOBITE, pl.rot))
        else:
            crabs[(pl.x, pl.y)] = pl.rot
    seen = set()
    for (x, y) in sorted(crabs):
        bx = o.x + 2 * ((x - o.x) // 2)
        by = o.y + 2 * ((y - o.y) // 2)
        if (bx, by) in seen:
            continue
        seen.add((bx, by))
        try:
            code = (crabs[(bx + 1, by + 1)], crabs[(bx, by + 1)], crabs[(bx, by)], crabs[(bx + 1, by)])
        except KeyError:
            raise HierarchyError("UNINFLATABLE", f"crab block at {(bx, by)} is incomplete") from None
        cls = block_class((bx - o.x) // 2, (by - o.y) // 2)
        if cls == TRILOBITE:
            raise HierarchyError("UNINFLATABLE", f"crab block at {(bx, by)} sits on the trilobite lattice")
        out.append((Cell(bx, by), cls, code))
    return out


def _inflate_once(atlas: Atlas, p: Patch) -> Patch:
    tpl = _template(atlas)
    s = tpl.scale
    fine: list[Placement] = []
    for origin, cls, payload in _blocks(atlas, p):
        bx, by = s * origin.x, s * origin.y
        if cls == TRILOBITE:
            for kind, r, x, y in tpl.body_for(payload):
                fine.append(Placement(kind, r, bx + x, by + y))
        else:
            rule = tpl.rules.get((payload, cls))
            if rule is None:
                raise HierarchyError("UNINFLATABLE", f"no expansion for crab block {payload} in class {cls}")
            fine += [Placement(CRAB, r, bx + x, by + y) for r, x, y in rule]
    try:
        q = patch_of(atlas, fine)
    except PlacementError as exc:
        raise HierarchyError("UNINFLATABLE", f"expansions overlap at {exc.where}") from None
    box = q.bbox()
    return q.with_window(box, CLOSED) if box else q


def inflate(p: Patch, atlas: Atlas, k: int = 1) -> Patch:
    """Expand every block k times.  The result carries a closed window equal to its bounding box."""
    if k < 0:
        raise ValueError("k must be non-negative")
    for _ in range(k):
        p = _inflate_once(atlas, p)
    return p


def compose(p: Patch, atlas: Atlas) -> SuperPatch:
    """Group trilobites around their common centre block and read off the super patch.

    The fine patch must be exactly the inflation of the result; anything else is
    UNCOMPOSABLE.
    """
    tpl = _template(atlas)
    s = tpl.scale
    codes = census(p)
    bad = sorted(set(codes) - ALLOWED_CENSUS - {"UNDETERMINED"})
    if bad:
        raise HierarchyError("PRECONDITION_CENSUS", f"neighbour codes {bad} present")
    fine = p.placement_set()
    ids = {pl: i for i, pl in p.placements.items()}
    tris = [pl for pl in canonical(fine) if pl.kind == TRILOBITE]
    if not tris:
        raise HierarchyError("UNCOMPOSABLE", "no trilobites")
    bodies = {r: tpl.body_for(r) for r in range(4)}
    matches: dict[tuple[int, int], tuple[int, list[Placement]]] = {}
    owner: dict[Placement, tuple[int, int]] = {}
    for t in tris:
        for r, body in bodies.items():
            for kind, br, x, y in body:
                if kind != TRILOBITE or br != t.rot:
                    continue
                cx, cy = t.x - x, t.y - y
                if cx % s or cy % s:
                    continue
                members = [Placement(k2, r2, cx + x2, cy + y2) for k2, r2, x2, y2 in body]
                if all(m in fine for m in members):
                    prev = matches.get((cx, cy))
                    if prev is not None and prev[0] != r:
                        raise HierarchyError("UNCOMPOSABLE", f"centre {(cx, cy)} matches two orientations")
                    matches[(cx, cy)] = (r, members)
        if t not in {m for _, ms in matches.values() for m in ms}:
            raise HierarchyError("UNCOMPOSABLE", f"trilobite at {(t.x, t.y)} belongs to no complete supertile")
    for c, (_, ms) in matches.items():
        for m in ms:
            if m.kind == TRILOBITE:
                if owner.setdefault(m, c) != c:
                    raise HierarchyError("UNCOMPOSABLE", f"trilobite at {(m.x, m.y)} claimed twice")
    # super trilobites
    sup: list[Placement] = []
    witness_src: dict[Placement, list[Placement]] = {}
    tri_origin_offset = {}
    for r in range(4):
        probe = Placement(TRILOBITE, r, 0, 0)
        tri_origin_offset[r] = block_origin(atlas, probe)
    for (cx, cy), (r, ms) in sorted(matches.items()):
        ox, oy = cx // s, cy // s
        off = tri_origin_offset[r]
        st = Placement(TRILOBITE, r, ox - off.x, oy - off.y)
        sup.append(st)
        witness_src[st] = [m for m in ms if m.kind == TRILOBITE]
    # super crab blocks: every lattice block in range that is not a trilobite
    o = min(Cell(cx // s, cy // s) for cx, cy in matches)
    fine_cells = {}
    for pl in fine:
        if pl.kind == CRAB:
            fine_cells[(pl.x, pl.y)] = pl.rot
    box = p.bbox()
    by_output: dict[str, list] = {}
    for (code, cls), out in tpl.rules.items():
        by_output.setdefault(cls, []).append((code, out))
    for bx in range(o.x + 2 * ((box.x0 // s - 2 - o.x) // 2), box.x1 // s + 3, 2):
        for by in range(o.y + 2 * ((box.y0 // s - 2 - o.y) // 2), box.y1 // s + 3, 2):
            cls = block_class((bx - o.x) // 2, (by - o.y) // 2)
            if cls == TRILOBITE:
                continue
            fx, fy = s * bx, s * by
            hits = []
            for code, out in by_output.get(cls, []):
                if all(fine_cells.get((fx + x, fy + y)) == r for r, x, y in out):
                    hits.append(code)
            if not hits:
                # a block whose expansion falls outside the patch is simply not part of it
                if any((fx + x, fy + y) in fine_cells for _, x, y in by_output[cls][0][1]):
                    raise HierarchyError("UNCOMPOSABLE", f"fine cells around {(fx, fy)} match no crab expansion")
                continue
            if len(hits) > 1:
                raise HierarchyError("UNCOMPOSABLE", f"fine cells around {(fx, fy)} are ambiguous")
            ne, nw, sw, se = hits[0]
            sup += [
                Placement(CRAB, ne, bx + 1, by + 1),
                Placement(CRAB, nw, bx, by + 1),
                Placement(CRAB, sw, bx, by),
                Placement(CRAB, se, bx + 1, by),
            ]
    level = (p.level or 0) + 1
    try:
        sp = patch_of(atlas, sup, level=level)
    except PlacementError as exc:
        raise HierarchyError("UNCOMPOSABLE", f"super tiles overlap at {exc.where}") from None
    sbox = sp.bbox()
    sp = sp.with_window(sbox, CLOSED)
    back = inflate(sp, atlas, 1)
    if back.placement_set() != fine:
        raise HierarchyError("UNCOMPOSABLE", "inflating the composed patch does not reproduce the input")
    sids = {pl: i for i, pl in sp.placements.items()}
    witness = {sids[st]: tuple(sorted(ids[m] for m in ms)) for st, ms in witness_src.items()}
    return SuperPatch(sp, level, witness)


def verify_super_axioms(p_super: Patch | SuperPatch, atlas: Atlas) -> list[tuple]:
    """Violations of the tiling axioms by the super tiles themselves (empty list when clean)."""
    p = p_super.patch if isinstance(p_super, SuperPatch) else p_super
    if p.window is None:
        box = p.bbox()
        p = p.with_window(box, CLOSED)
    out = list(validate(p).violations)
    codes = census(p)
    for code in sorted(set(codes) - ALLOWED_CENSUS - {"UNDETERMINED"}):
        out.append(("census", code))
    return out


# ---------------------------------------------------------------------------------------
# chains and shifts


@dataclass(frozen=True)
class Chain:
    ids: tuple[int, ...]
    step: tuple[int, int]  # anchor displacement between consecutive members

    def __len__(self) -> int:
        return len(self.ids)


def _successor(p: Patch, pid: int, code: str) -> int | None:
    pl = p.placements[pid]
    rb = rulebook(p.atlas)
    tips = rb.tips[pl.rot]
    # follow the first tip that holds a trilobite
    for letter, (tx, ty) in zip(code, tips):
        if letter == "T":
            return p.id_at((pl.x + tx, pl.y + ty))
    return None


def detect_chains(p: Patch) -> list[Chain]:
    """Maximal runs of TTO/OTT trilobites, each the tip neighbour of the previous one,
    with a constant step between consecutive anchors.  The trilobite the last member
    points at closes the chain, whatever its own code."""
    code = {}
    for pid, pl in p.trilobites():
        code[pid] = classify_trilobite(p, pid)
    nxt = {}
    for pid, c in code.items():
        if c in CHAIN_CODES:
            q = _successor(p, pid, c)
            if q is not None and q in code:
                nxt[pid] = q
    chains = []
    used = set()
    has_pred = set(nxt.values())
    starts = sorted(pid for pid in code if code[pid] in CHAIN_CODES and pid not in has_pred)
    pls = p.placements
    for s0 in starts + sorted(set(nxt) - set(starts)):
        if s0 in used:
            continue
        ids = [s0]
        step = None
        cur = s0
        while cur in nxt and nxt[cur] not in used and nxt[cur] not in ids:
            q = nxt[cur]
            d = (pls[q].x - pls[cur].x, pls[q].y - pls[cur].y)
            if step is None:
                step = d
            elif d != step:
                break
            ids.append(q)
            cur = q
        if len(ids) >= 2:
            used.update(ids)
            chains.append(Chain(tuple(ids), step))
    return chains


def _spans(p: Patch, chain: Chain) -> bool:
    w = p.window
    if w is None:
        return False
    pls = [p.placements[i] for i in chain.ids]
    rb = rulebook(p.atlas)
    cells = [c for pl in pls for c, _ in rb.cells_of(pl)]
    sx, sy = chain.step
    reach = max(abs(sx), abs(sy))
    ok = True
    if sx:
        ok &= min(c.x for c in cells) - w.x0 < reach + 2 and w.x1 - max(c.x for c in cells) < reach + 2
    if sy:
        ok &= min(c.y for c in cells) - w.y0 < reach + 2 and w.y1 - max(c.y for c in cells) < reach + 2
    return bool(ok)


def shift_halfplane(p: Patch, chain: Chain, steps: int = 1) -> Patch:
    """Translate everything strictly on the left of the chain by ``steps`` chain steps.

    The chain must run across the whole window.  The result keeps the largest
    window, shrunk along the chain, in which every remaining tile lies entirely;
    it is returned only if it validates.
    """
    if len(chain) < 2 or not _spans(p, chain):
        raise HierarchyError("CHAIN_NOT_SPANNING")
    sx, sy = chain.step
    first = p.placements[chain.ids[0]]
    rb = rulebook(p.atlas)
    chain_cells = {c for i in chain.ids for c, _ in rb.cells_of(p.placements[i])}

    def side(c) -> int:
        # sign of the cross product step x (c - first anchor); chain cells themselves stay put
        v = (c[0] - first.x) * sy - (c[1] - first.y) * sx
        return (v < 0) - (v > 0)

    dx, dy = sx * steps, sy * steps
    moved = []
    for pid, pl in p.placements.items():
        cells = [c for c, _ in rb.cells_of(pl)]
        if pid in chain.ids or any(c in chain_cells for c in cells):
            moved.append(pl)
            continue
        sides = {side(c) for c in cells}
        if sides == {1}:
            moved.append(pl.translated(dx, dy))
        elif 1 in sides:
            raise HierarchyError("SHIFT_INVALID", f"tile at {(pl.x, pl.y)} straddles the chain line")
        else:
            moved.append(pl)
    w = p.window
    m = max(abs(dx), abs(dy))
    for extra in range(0, 4):
        mx = m + extra if dx else 0
        my = m + extra if dy else 0
        w2 = Window(w.x0 + mx, w.y0 + my, w.x1 - mx, w.y1 - my)
        inside, crossing = [], False
        for pl in moved:
            cells = [c for c, _ in rb.cells_of(pl)]
            n_in = sum(c in w2 for c in cells)
            if n_in == len(cells):
                inside.append(pl)
            elif n_in:
                crossing = True
                break
        if not crossing:
            break
    else:
        raise HierarchyError("SHIFT_INVALID", "no clean window after the shift")
    try:
        q = patch_of(p.atlas, inside, w2, CLOSED)
    except PlacementError as exc:
        raise HierarchyError("SHIFT_INVALID", f"shifted tiles overlap at {exc.where}") from None
    rep = validate(q)
    if not rep.ok:
        raise HierarchyError("SHIFT_INVALID", f"{len(rep.violations)} violations, first {rep.violations[0]}")
    return q


# ---------------------------------------------------------------------------------------
# self-check of the substitution


@dataclass
class LevelCheck:
    level: int
    trilobites: int
    census: dict
    valid: bool
    composes_back: bool
    super_violations: int

    @property
    def ok(self) -> bool:
        census_ok = set(self.census) <= ALLOWED_CENSUS
        return (self.valid and census_ok and self.composes_back and self.super_violations == 0
                and self.trilobites == 4 ** self.level)

    def to_json(self) -> dict:
        return {"level": self.level, "trilobites": self.trilobites, "census": self.census, "valid": self.valid,
                "composes_back": self.composes_back, "super_violations": self.super_violations, "ok": self.ok}


def hierarchy_report(atlas: Atlas, max_level: int = 4, strict: bool = False) -> list[LevelCheck]:
    """Inflate a single trilobite level by level and check each result against the axioms,
    the census and composition back to the previous level."""
    prev = patch_of(atlas, [Placement(TRILOBITE, 0, 0, 0)])
    out = []
    for k in range(1, max_level + 1):
        try:
            cur = inflate(prev, atlas, 1)
        except HierarchyError:
            out.append(LevelCheck(k, 0, {}, False, False, -1))
            break
        valid = validate(cur, strict).ok
        codes = census(cur)
        try:
            back = compose(cur, atlas).patch.placement_set() == prev.placement_set()
        except HierarchyError:
            back = False
        sv = len(verify_super_axioms(prev, atlas)) if k >= 2 else 0
        out.append(LevelCheck(k, len(cur.trilobites()), codes, valid, back, sv))
        prev = cur
    return out
