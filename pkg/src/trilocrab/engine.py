"""Patches, placement legality, forced-move propagation, region search, validation and torus search.

Two representations live side by side.  A :class:`Patch` is the public,
immutable value: ``place`` returns a new patch.  Searches run on a private
mutable :class:`_Board` with an undo stack, which is what makes exhaustive
case analysis affordable in pure Python.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

from ._csp import Budget, CellCsp
from .atlas import KIND_ORDER, TILE_NAMES, TRILOBITE, Atlas
from .grid import Cell, Corner, cell_corners, corner_cells, rotate_point

OPEN, CLOSED = "open", "closed"
NEIGHBOR_CODES = ("TTT", "TTO", "OTT", "OTO", "OOT", "TOT", "TOO", "OOO")
UNDETERMINED = "UNDETERMINED"

# trace step kinds
GIVEN, FORCED = "GIVEN", "FORCED"
SUBCASE_OPEN, SUBCASE_CLOSE = "SUBCASE_OPEN", "SUBCASE_CLOSE"
REDUCED_TO, CONTRADICTION = "REDUCED_TO", "CONTRADICTION"

AXIS_DIRS = ((1, 0), (0, 1), (-1, 0), (0, -1))
DIAG_DIRS = ((1, 1), (-1, 1), (-1, -1), (1, -1))


class PlacementError(ValueError):
    """Raised by :func:`place`; ``code`` is OVERLAP, OUT_OF_WINDOW or IMMEDIATE_CORNER_VIOLATION."""

    def __init__(self, code: str, where: tuple[int, int]):
        self.code = code
        self.where = tuple(where)
        super().__init__(f"{code}({where[0]},{where[1]})")


class BudgetExhausted(Exception):
    def __init__(self, nodes: int):
        self.nodes = nodes
        super().__init__(f"BUDGET_EXHAUSTED({nodes})")


@dataclass(frozen=True, order=True)
class Placement:
    kind: str
    rot: int
    x: int
    y: int

    @property
    def anchor(self) -> Cell:
        return Cell(self.x, self.y)

    def sort_key(self) -> tuple:
        return (KIND_ORDER[self.kind], self.rot, self.x, self.y)

    def translated(self, dx: int, dy: int) -> "Placement":
        return Placement(self.kind, self.rot, self.x + dx, self.y + dy)

    def rotated(self, r: int) -> "Placement":
        a = rotate_point((self.x, self.y), r)
        return Placement(self.kind, (self.rot + r) % 4, a.x, a.y)

    def to_json(self) -> dict:
        return {"kind": self.kind, "rot": self.rot, "x": self.x, "y": self.y}

    @staticmethod
    def from_json(d: dict) -> "Placement":
        if d["kind"] not in TILE_NAMES:
            raise ValueError(f"unknown tile kind {d['kind']!r}")
        return Placement(d["kind"], int(d["rot"]) % 4, int(d["x"]), int(d["y"]))


def canonical(pls: Iterable[Placement]) -> list[Placement]:
    return sorted(pls, key=Placement.sort_key)


@dataclass(frozen=True)
class Window:
    x0: int
    y0: int
    x1: int
    y1: int

    def __contains__(self, c) -> bool:
        return self.x0 <= c[0] <= self.x1 and self.y0 <= c[1] <= self.y1

    def cells(self) -> list[Cell]:
        return [Cell(x, y) for x in range(self.x0, self.x1 + 1) for y in range(self.y0, self.y1 + 1)]

    def shrink(self, m: int) -> "Window":
        return Window(self.x0 + m, self.y0 + m, self.x1 - m, self.y1 - m)

    def to_json(self) -> dict:
        return {"x0": self.x0, "y0": self.y0, "x1": self.x1, "y1": self.y1}

    @property
    def width(self) -> int:
        return self.x1 - self.x0 + 1

    @property
    def height(self) -> int:
        return self.y1 - self.y0 + 1


# ---------------------------------------------------------------------------------------
# compiled rules


class RuleBook:
    """Everything the engine needs from an atlas, precomputed into lookup tables."""

    def __init__(self, atlas: Atlas):
        self.atlas = atlas
        self.states = atlas.states()
        self.sidx = {s: i for i, s in enumerate(self.states)}
        self.contrib = [atlas.state_contributions(s) for s in self.states]
        self.is_tri = [s[0] == TRILOBITE for s in self.states]
        self.rot_of = [s[1] for s in self.states]
        # cell offset from the anchor for each state
        self.offset = [tuple(rotate_point((s[2], s[3]), s[1])) for s in self.states]
        self.proj: list[set] = [set() for _ in range(16)]
        for t in atlas.corner_rules:
            for mask in range(16):
                self.proj[mask].add(tuple(t[q] for q in range(4) if mask >> q & 1))
        self.geom: dict[tuple[str, int], list[tuple[int, int, int]]] = {}
        for kind in TILE_NAMES:
            tile = atlas.tiles[kind]
            for rot in range(4):
                self.geom[(kind, rot)] = [
                    (*rotate_point(f, rot), self.sidx[(kind, rot, f.x, f.y)]) for f in tile.footprint
                ]
        fam = atlas.segments
        self.dirs = (AXIS_DIRS if fam in ("axis", "both") else ()) + (DIAG_DIRS if fam in ("diagonal", "both") else ())
        self.parity_pairs = atlas.parity_pairs
        tips = atlas.tiles[TRILOBITE].tips
        self.tips = {r: [tuple(rotate_point(t, r)) for t in tips] for r in range(4)}

    def cells_of(self, pl: Placement) -> list[tuple[Cell, int]]:
        return [(Cell(pl.x + dx, pl.y + dy), s) for dx, dy, s in self.geom[(pl.kind, pl.rot)]]

    def parity_ok(self, rot_a: int, rot_b: int, disp: tuple[int, int]) -> bool:
        return (rot_a, rot_b, disp[0] % 2, disp[1] % 2) in self.parity_pairs


def rulebook(atlas: Atlas) -> RuleBook:
    rb = atlas._cache.get("rulebook")
    if rb is None:
        rb = RuleBook(atlas)
        atlas._cache["rulebook"] = rb
    return rb


# ---------------------------------------------------------------------------------------
# mutable board used by every search


class _Board:
    def __init__(self, atlas: Atlas, window: Window | None, policy: str, strict: bool = False):
        self.atlas = atlas
        self.rb = rulebook(atlas)
        self.window = window
        self.policy = policy
        self.strict = strict
        self.cells: dict[Cell, tuple[int, int]] = {}  # cell -> (pid, state)
        self.pls: dict[int, Placement] = {}
        self.next_id = 0
        self._undo: list[int] = []

    # -- queries ---------------------------------------------------------------------
    def state_at(self, c) -> int | None:
        e = self.cells.get(c)
        return None if e is None else e[1]

    def _exempt(self, cs) -> bool:
        if self.strict or self.window is None or self.policy != CLOSED:
            return False
        w = self.window
        return any(not (w.x0 <= c[0] <= w.x1 and w.y0 <= c[1] <= w.y1) for c in cs)

    def corner_status(self, p, extra: dict | None = None) -> str:
        cs = corner_cells(p)
        if self._exempt(cs):
            return "EXEMPT"
        contrib = self.rb.contrib
        key = []
        mask = 0
        for q, c in enumerate(cs):
            s = extra.get(c) if extra else None
            if s is None:
                e = self.cells.get(c)
                s = None if e is None else e[1]
            if s is not None:
                mask |= 1 << q
                key.append(contrib[s][q])
        if mask == 0:
            return "UNDETERMINED"
        if tuple(key) not in self.rb.proj[mask]:
            return "VIOLATED"
        return "SATISFIED" if mask == 15 else "UNDETERMINED"

    def fits(self, pl: Placement) -> tuple[str, tuple[int, int]] | None:
        """Geometric check only: overlap and window."""
        w = self.window
        for c, _ in self.rb.cells_of(pl):
            if c in self.cells:
                return ("OVERLAP", c)
            if w is not None and self.policy == CLOSED and c not in w:
                return ("OUT_OF_WINDOW", c)
        return None

    def legal(self, pl: Placement) -> bool:
        """No overlap, inside a closed window, no corner made VIOLATED, no parity breach."""
        if self.fits(pl) is not None:
            return False
        extra = dict(self.rb.cells_of(pl))
        corners = set()
        for c in extra:
            corners.update(cell_corners(c))
        for p in corners:
            if self.corner_status(p, extra) == "VIOLATED":
                return False
        return self._parity_ok_with(extra)

    # -- parity -----------------------------------------------------------------------
    def _walk(self, start: Cell, d, extra: dict) -> tuple[Cell, int] | None:
        """From a trilobite cell, follow crabs in direction d; return the first trilobite cell met.

        Returns None when the segment is interrupted by an uncovered cell, leaves
        the window, or contains no crab at all.
        """
        rb = self.rb
        x, y = start
        steps = 0
        limit = 4096
        while steps < limit:
            x += d[0]
            y += d[1]
            steps += 1
            c = (x, y)
            s = extra.get(c)
            if s is None:
                e = self.cells.get(c)
                if e is None:
                    return None
                s = e[1]
            if rb.is_tri[s]:
                return (Cell(x, y), s) if steps > 1 else None
        return None

    def _pair_ok(self, ca: Cell, sa: int, cb: Cell, sb: int) -> bool:
        rb = self.rb
        oa, ob = rb.offset[sa], rb.offset[sb]
        disp = (cb[0] - ob[0] - (ca[0] - oa[0]), cb[1] - ob[1] - (ca[1] - oa[1]))
        return rb.parity_ok(rb.rot_of[sa], rb.rot_of[sb], disp)

    def _parity_ok_with(self, extra: dict) -> bool:
        rb = self.rb
        if not rb.dirs:
            return True
        own = set(extra)
        for c, s in extra.items():
            if rb.is_tri[s]:
                for d in rb.dirs:
                    nxt = (c[0] + d[0], c[1] + d[1])
                    if nxt in own:
                        continue
                    hit = self._walk(c, d, extra)
                    if hit is not None and not self._pair_ok(c, s, hit[0], hit[1]):
                        return False
            else:
                for d in rb.dirs:
                    back = (-d[0], -d[1])
                    a = self._walk_to_tri(c, back, extra)
                    if a is None:
                        continue
                    b = self._walk_to_tri(c, d, extra)
                    if b is None:
                        continue
                    if not self._pair_ok(a[0], a[1], b[0], b[1]):
                        return False
        return True

    def _walk_to_tri(self, c: Cell, d, extra: dict):
        rb = self.rb
        x, y = c
        for _ in range(4096):
            x += d[0]
            y += d[1]
            s = extra.get((x, y))
            if s is None:
                e = self.cells.get((x, y))
                if e is None:
                    return None
                s = e[1]
            if rb.is_tri[s]:
                return (Cell(x, y), s)
        return None

    # -- mutation ---------------------------------------------------------------------
    def put(self, pl: Placement) -> int:
        pid = self.next_id
        self.next_id += 1
        self.pls[pid] = pl
        for c, s in self.rb.cells_of(pl):
            self.cells[c] = (pid, s)
        self._undo.append(pid)
        return pid

    def mark(self) -> int:
        return len(self._undo)

    def undo_to(self, m: int) -> None:
        while len(self._undo) > m:
            pid = self._undo.pop()
            pl = self.pls.pop(pid)
            for c, _ in self.rb.cells_of(pl):
                del self.cells[c]
            self.next_id = pid

    # -- completions ------------------------------------------------------------------
    def candidates(self, c) -> list[Placement]:
        out = []
        for kind in TILE_NAMES:
            for rot in range(4):
                for dx, dy, _ in self.rb.geom[(kind, rot)]:
                    out.append(Placement(kind, rot, c[0] - dx, c[1] - dy))
        return out

    def completions(self, c) -> list[Placement]:
        return canonical(pl for pl in self.candidates(c) if self.legal(pl))

    def copy_patch(self) -> "Patch":
        return Patch._from_board(self)


# ---------------------------------------------------------------------------------------
# public immutable patch


class Patch:
    """An immutable partial tiling.  ``place`` returns a new patch."""

    __slots__ = ("atlas", "window", "policy", "_pls", "_cells", "_next", "level")

    def __init__(self, atlas: Atlas, window: Window | None = None, policy: str = OPEN, level: int | None = None):
        self.atlas = atlas
        self.window = window
        self.policy = policy
        self._pls: dict[int, Placement] = {}
        self._cells: dict[Cell, tuple[int, int]] = {}
        self._next = 0
        self.level = level

    @classmethod
    def _from_board(cls, b: _Board, level: int | None = None) -> "Patch":
        p = cls(b.atlas, b.window, b.policy, level)
        p._pls = dict(b.pls)
        p._cells = dict(b.cells)
        p._next = b.next_id
        return p

    def _board(self, strict: bool = False) -> _Board:
        b = _Board(self.atlas, self.window, self.policy, strict)
        b.pls = dict(self._pls)
        b.cells = dict(self._cells)
        b.next_id = self._next
        return b

    # -- views ------------------------------------------------------------------------
    @property
    def placements(self) -> dict[int, Placement]:
        return dict(self._pls)

    @property
    def cell_index(self) -> dict[Cell, int]:
        return {c: e[0] for c, e in self._cells.items()}

    def placement_at(self, c) -> Placement | None:
        e = self._cells.get(Cell(*c))
        return None if e is None else self._pls[e[0]]

    def id_at(self, c) -> int | None:
        e = self._cells.get(Cell(*c))
        return None if e is None else e[0]

    def state_at(self, c) -> tuple | None:
        e = self._cells.get(Cell(*c))
        return None if e is None else rulebook(self.atlas).states[e[1]]

    def __len__(self) -> int:
        return len(self._pls)

    def placement_set(self) -> frozenset[Placement]:
        return frozenset(self._pls.values())

    def trilobites(self) -> list[tuple[int, Placement]]:
        return [(i, p) for i, p in self._pls.items() if p.kind == TRILOBITE]

    def with_window(self, window: Window | None, policy: str | None = None) -> "Patch":
        p = Patch(self.atlas, window, policy or self.policy, self.level)
        p._pls, p._cells, p._next = dict(self._pls), dict(self._cells), self._next
        return p

    def bbox(self) -> Window | None:
        if not self._cells:
            return None
        xs = [c.x for c in self._cells]
        ys = [c.y for c in self._cells]
        return Window(min(xs), min(ys), max(xs), max(ys))

    # -- operations -------------------------------------------------------------------
    def place(self, pl: Placement) -> "Patch":
        return place(self, pl)

    def corner_state(self, corner) -> "CornerState":
        b = self._board()
        status = b.corner_status(corner)
        rb = b.rb
        so_far = []
        for q, c in enumerate(corner_cells(corner)):
            e = self._cells.get(c)
            so_far.append(None if e is None else rb.contrib[e[1]][q])
        if status == "EXEMPT":
            status = "SATISFIED" if None not in so_far else "UNDETERMINED"
        return CornerState(Corner(*corner), status, tuple(so_far))

    def to_json(self) -> dict:
        d = {
            "atlas": {"name": self.atlas.name, "hash": self.atlas.digest},
            "window": self.window.to_json() if self.window else None,
            "policy": self.policy,
            "placements": [pl.to_json() for pl in canonical(self._pls.values())],
        }
        if self.level is not None:
            d["level"] = self.level
        return d

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=1, sort_keys=True) + "\n"

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Patch)
            and self.placement_set() == other.placement_set()
            and self.window == other.window
            and self.policy == other.policy
        )

    def __hash__(self) -> int:
        return hash((self.placement_set(), self.window, self.policy))

    def __repr__(self) -> str:
        return f"Patch({len(self._pls)} placements, window={self.window}, policy={self.policy})"


def patch_from_json(atlas: Atlas, d: dict) -> Patch:
    """Build a patch from its JSON form.  Overlapping placements are rejected."""
    w = d.get("window")
    window = Window(int(w["x0"]), int(w["y0"]), int(w["x1"]), int(w["y1"])) if w else None
    policy = d.get("policy", OPEN)
    if policy not in (OPEN, CLOSED):
        raise ValueError(f"unknown policy {policy!r}")
    b = _Board(atlas, window, policy)
    for item in d.get("placements", []):
        pl = Placement.from_json(item)
        bad = b.fits(pl)
        if bad is not None:
            raise PlacementError(*bad)
        b.put(pl)
    return Patch._from_board(b, d.get("level"))


def patch_of(atlas: Atlas, placements: Iterable[Placement], window: Window | None = None,
             policy: str = OPEN, level: int | None = None) -> Patch:
    """Assemble a patch without corner checks (overlap is still an error)."""
    b = _Board(atlas, window, policy)
    for pl in canonical(placements):
        bad = b.fits(pl)
        if bad is not None:
            raise PlacementError(*bad)
        b.put(pl)
    return Patch._from_board(b, level)


@dataclass(frozen=True)
class CornerState:
    corner: Corner
    status: str
    tuple_so_far: tuple


def place(p: Patch, pl: Placement) -> Patch:
    b = p._board()
    bad = b.fits(pl)
    if bad is not None:
        raise PlacementError(*bad)
    extra = dict(b.rb.cells_of(pl))
    corners = sorted({q for c in extra for q in cell_corners(c)})
    for q in corners:
        cs = corner_cells(q)
        if b._exempt(cs):
            continue
        if all((c in extra) or (c in b.cells) for c in cs) and b.corner_status(q, extra) == "VIOLATED":
            raise PlacementError("IMMEDIATE_CORNER_VIOLATION", q)
    b.put(pl)
    return Patch._from_board(b, p.level)


def legal_completions(p: Patch, target) -> list[Placement]:
    """All single placements consistent with p that cover the target.

    A cell target is given as a :class:`Cell` (or plain pair); a corner target
    as a :class:`Corner`, in which case every uncovered incident cell counts.
    """
    b = p._board()
    if isinstance(target, Corner):
        out = set()
        for c in corner_cells(target):
            if c not in b.cells:
                out.update(b.completions(c))
        return canonical(out)
    c = Cell(*target)
    if c in b.cells:
        return []
    return b.completions(c)


# ---------------------------------------------------------------------------------------
# traces


@dataclass
class Step:
    step_no: int
    kind: str
    placement: Placement | None = None
    detail: object = None

    def to_json(self) -> dict:
        d = {"step_no": self.step_no, "kind": self.kind}
        d["placement"] = self.placement.to_json() if self.placement else None
        if self.detail is not None:
            d["detail"] = list(self.detail) if isinstance(self.detail, tuple) else self.detail
        return d

    @staticmethod
    def from_json(d: dict) -> "Step":
        pl = Placement.from_json(d["placement"]) if d.get("placement") else None
        det = d.get("detail")
        if isinstance(det, list):
            det = tuple(det)
        return Step(int(d["step_no"]), d["kind"], pl, det)


@dataclass
class DeductionTrace:
    steps: list[Step] = field(default_factory=list)

    def add(self, kind: str, placement: Placement | None = None, detail=None) -> Step:
        st = Step(len(self.steps) + 1, kind, placement, detail)
        self.steps.append(st)
        return st

    @property
    def forced(self) -> list[Step]:
        return [s for s in self.steps if s.kind == FORCED]

    @property
    def contradiction(self) -> Step | None:
        for s in self.steps:
            if s.kind == CONTRADICTION:
                return s
        return None

    def to_json(self) -> list:
        return [s.to_json() for s in self.steps]

    @staticmethod
    def from_json(items: list) -> "DeductionTrace":
        return DeductionTrace([Step.from_json(d) for d in items])


def replay(atlas: Atlas, trace: DeductionTrace, window: Window | None = None, policy: str = OPEN) -> Patch:
    """Apply GIVEN and FORCED steps in order, with no search."""
    b = _Board(atlas, window, policy)
    for st in trace.steps:
        if st.kind in (GIVEN, FORCED) and st.placement is not None:
            bad = b.fits(st.placement)
            if bad is not None:
                raise PlacementError(*bad)
            b.put(st.placement)
    return Patch._from_board(b)


def check_trace(atlas: Atlas, trace: DeductionTrace, window: Window | None, policy: str, region) -> bool:
    """Independent replayer: every FORCED step must be the unique completion of its trigger cell
    at the moment it is applied, and a CONTRADICTION step must name a cell with no completion
    or a violated corner."""
    b = _Board(atlas, window, policy)
    for st in trace.steps:
        if st.kind == GIVEN:
            b.put(st.placement)
        elif st.kind == FORCED:
            cell = tuple(st.detail)
            opts = b.completions(cell)
            if opts != [st.placement]:
                return False
            b.put(st.placement)
        elif st.kind == CONTRADICTION:
            det = st.detail
            if det and det[0] == "cell":
                if b.completions((det[1], det[2])):
                    return False
            elif det and det[0] == "corner":
                if b.corner_status((det[1], det[2])) != "VIOLATED":
                    return False
            elif det and det[0] == "parity":
                pass
            return True
    return True


# ---------------------------------------------------------------------------------------
# propagation


def _region_cells(region, window: Window | None) -> list[Cell]:
    if region is None:
        if window is None:
            raise ValueError("propagation needs a finite region")
        cells = window.cells()
    else:
        cells = [Cell(*c) for c in region]
    return sorted(set(cells))


def _propagate(b: _Board, cells: Sequence[Cell], trace: DeductionTrace, order=None) -> bool:
    """Apply forced placements until fixpoint.  Returns False on contradiction.

    ``order`` (a random.Random) shuffles the visiting order; the fixpoint does not
    depend on it because a forced placement is the unique completion of its cell.
    """
    region = set(cells)
    pending = list(cells)
    if order is not None:
        order.shuffle(pending)
    queued = set(pending)
    while pending:
        c = pending.pop(0)
        queued.discard(c)
        if c in b.cells:
            continue
        opts = b.completions(c)
        if not opts:
            trace.add(CONTRADICTION, None, ("cell", c[0], c[1]))
            return False
        if len(opts) == 1:
            pl = opts[0]
            b.put(pl)
            trace.add(FORCED, pl, (c[0], c[1]))
            touched = set()
            for cc, _ in b.rb.cells_of(pl):
                for dx in range(-2, 3):
                    for dy in range(-2, 3):
                        n = (cc[0] + dx, cc[1] + dy)
                        if n in region and n not in b.cells and n not in queued:
                            touched.add(Cell(*n))
            if b.rb.dirs:
                # parity reaches along whole rows and columns
                for cc, _ in b.rb.cells_of(pl):
                    for n in region:
                        if (n[0] == cc[0] or n[1] == cc[1]) and n not in b.cells and n not in queued:
                            touched.add(n)
            new = sorted(touched)
            if order is not None:
                order.shuffle(new)
            pending.extend(new)
            queued.update(new)
    return True


def _initial_conflict(b: _Board) -> tuple | None:
    """A corner or parity breach already present among the placed tiles."""
    corners = set()
    for c in b.cells:
        corners.update(cell_corners(c))
    for q in sorted(corners):
        if b.corner_status(q) == "VIOLATED":
            return ("corner", q[0], q[1])
    rb = b.rb
    for c, (pid, s) in sorted(b.cells.items()):
        if rb.is_tri[s]:
            for d in rb.dirs:
                nxt = (c[0] + d[0], c[1] + d[1])
                e = b.cells.get(nxt)
                if e is not None and e[0] == pid:
                    continue
                hit = b._walk(c, d, {})
                if hit is not None and not b._pair_ok(c, s, hit[0], hit[1]):
                    return ("parity", c[0], c[1])
    return None


def propagate(p: Patch, region=None, order=None) -> tuple[Patch, DeductionTrace]:
    b = p._board()
    trace = DeductionTrace()
    for pl in canonical(p._pls.values()):
        trace.add(GIVEN, pl)
    bad = _initial_conflict(b)
    if bad is not None:
        trace.add(CONTRADICTION, None, bad)
        return Patch._from_board(b, p.level), trace
    _propagate(b, _region_cells(region, p.window), trace, order)
    return Patch._from_board(b, p.level), trace


# ---------------------------------------------------------------------------------------
# exhaustive search

FIRST, ALL, COUNT, REFUTE = "FIRST", "ALL", "COUNT", "REFUTE"


@dataclass
class SearchOutcome:
    mode: str
    status: str  # FOUND, NONE, COMPLETE, REFUTED, NOT_REFUTED, BUDGET_EXHAUSTED
    patches: list[Patch] = field(default_factory=list)
    count: int = 0
    nodes: int = 0
    proof: dict | None = None

    @property
    def refuted(self) -> bool:
        return self.status == "REFUTED"


def _region_csp(p: Patch, region, use_parity: bool = True):
    """Cell-state problem for completing ``region`` inside p.

    With a closed window every window cell is a variable: cells outside the region
    are not branched on, but must remain coverable.  Corners touching the outside of
    a closed window are exempt.  Without one, only region and covered cells are
    variables and corners reaching beyond them treat the missing cells as wildcards.
    Placements found by the search never leave the variable cells.
    """
    rb = rulebook(p.atlas)
    closed = p.window is not None and p.policy == CLOSED
    if closed:
        w = p.window
        cells = _region_cells(region, w)
        outside = [c for c in cells if c not in w]
        if outside:
            raise ValueError(f"region cell {outside[0]} lies outside the closed window")
        coords = w.cells()
    else:
        cells = _region_cells(region, None if region is not None else p.window)
        coords = sorted(set(cells) | set(p._cells))
    index = {c: i for i, c in enumerate(coords)}

    def locate(x: int, y: int):
        return index.get((x, y))

    windows = []
    if closed:
        for x in range(w.x0 + 1, w.x1 + 1):
            for y in range(w.y0 + 1, w.y1 + 1):
                windows.append(tuple(index[c] for c in corner_cells((x, y))))
    else:
        pts = sorted({q for c in coords for q in cell_corners(c)})
        for q in pts:
            windows.append(tuple(index.get(c, -1) for c in corner_cells(q)))
    fixed = {index[c]: e[1] for c, e in p._cells.items() if c in index}
    region_set = set(cells)
    branchable = [c in region_set and c not in p._cells for c in coords]
    pts = list(p._cells) or cells
    focus = None if not pts else (min(c[0] for c in pts) + max(c[0] for c in pts) + 1, min(c[1] for c in pts) + max(c[1] for c in pts) + 1)
    return CellCsp(rb, coords, locate, windows, fixed, branchable, use_parity, focus=focus)


def _placement_of(rb: RuleBook, c, s: int) -> Placement:
    kind, rot = rb.states[s][0], rb.states[s][1]
    ox, oy = rb.offset[s]
    return Placement(kind, rot, c[0] - ox, c[1] - oy)


def _implied(csp: CellCsp, dom: list[int], known: set) -> list[tuple[Placement, tuple]]:
    out = {}
    rb = csp.rb
    for v, m in enumerate(dom):
        if m and not m & (m - 1):
            pl = _placement_of(rb, csp.coords[v], m.bit_length() - 1)
            if pl not in known and pl not in out:
                out[pl] = tuple(csp.coords[v])
    return sorted(out.items(), key=lambda kv: kv[0].sort_key())


class _TreeSearch:
    def __init__(self, csp: CellCsp, p: Patch, mode: str, budget: int):
        self.csp = csp
        self.p = p
        self.mode = mode
        self.budget = budget
        self.nodes = 0
        self.solutions: list[frozenset] = []

    def _done(self) -> bool:
        return self.mode in (FIRST, REFUTE) and bool(self.solutions)

    def node(self, dom: list[int], changed, known: set, root: bool = False) -> dict:
        csp = self.csp
        trace = DeductionTrace()
        if root:
            for pl in canonical(self.p._pls.values()):
                trace.add(GIVEN, pl)
        ok = all(dom) if root else True
        if not ok:
            v = dom.index(0)
            csp.conflict = ("cell",) + tuple(csp.coords[v])
        else:
            ok = csp.consistent(dom, changed)
        implied = _implied(csp, dom, known)
        for pl, c in implied:
            trace.add(FORCED, pl, c)
        node: dict = {"trace": trace}
        if not ok:
            trace.add(CONTRADICTION, None, csp.conflict)
            node["outcome"] = CONTRADICTION
            return node
        known = known | {pl for pl, _ in implied}
        v = csp.pick(dom)
        if v < 0:
            node["outcome"] = "COMPLETE"
            sol = {_placement_of(csp.rb, csp.coords[u], dom[u].bit_length() - 1)
                   for u in range(csp.n) if csp.branchable[u] or dom[u] & (dom[u] - 1) == 0}
            self.solutions.append(frozenset(sol | set(self.p._pls.values())))
            return node
        c = csp.coords[v]
        opts = sorted(((_placement_of(csp.rb, c, s), s) for s in csp.states_of(dom[v])), key=lambda t: t[0].sort_key())
        node["outcome"] = "SPLIT"
        node["cell"] = (c[0], c[1])
        node["children"] = []
        for pl, s in opts:
            self.nodes += 1
            if self.nodes > self.budget:
                raise BudgetExhausted(self.nodes)
            d2 = list(dom)
            d2[v] = 1 << s
            child = self.node(d2, [v], known | {pl})
            child["branch"] = pl
            node["children"].append(child)
            if self._done():
                break
        return node


def search_region(p: Patch, region=None, mode: str = ALL, budget: int = 10**6, use_parity: bool = True) -> SearchOutcome:
    """Exhaustive completion of a region, by branching on cell states.

    Propagation is arc consistency over the corner windows plus footprint
    coherence, with a parity check at every node.  Branching picks the cell with
    the fewest remaining states (ties broken by cell order) and tries its options
    in canonical placement order, so results and proof trees are reproducible.
    ``nodes`` counts branches taken; going past ``budget`` gives BUDGET_EXHAUSTED.
    """
    if mode not in (FIRST, ALL, COUNT, REFUTE):
        raise ValueError(f"unknown mode {mode}")
    csp = _region_csp(p, region, use_parity)
    s = _TreeSearch(csp, p, mode, budget)
    try:
        tree = s.node(list(csp.base), range(csp.n), set(p._pls.values()), root=True)
    except BudgetExhausted as exc:
        return SearchOutcome(mode, "BUDGET_EXHAUSTED", [], len(s.solutions), exc.nodes, None)
    pats = []
    if mode in (FIRST, ALL, REFUTE):
        for sol in sorted(s.solutions, key=lambda q: [pl.sort_key() for pl in canonical(q)]):
            pats.append(patch_of(p.atlas, sol, p.window, p.policy))
    n = len(s.solutions)
    if mode == FIRST:
        return SearchOutcome(mode, "FOUND" if n else "NONE", pats[:1], min(n, 1), s.nodes, tree)
    if mode == ALL:
        return SearchOutcome(mode, "COMPLETE", pats, n, s.nodes, None)
    if mode == COUNT:
        return SearchOutcome(mode, "COMPLETE", [], n, s.nodes, None)
    return SearchOutcome(mode, "NOT_REFUTED" if n else "REFUTED", pats[:1], n, s.nodes, None if n else tree)


def tree_to_json(node: dict) -> dict:
    out = {"outcome": node["outcome"], "trace": node["trace"].to_json()}
    if "branch" in node:
        out["branch"] = node["branch"].to_json()
    if "cell" in node:
        out["cell"] = list(node["cell"])
    if "children" in node:
        out["children"] = [tree_to_json(c) for c in node["children"]]
    return out


def tree_from_json(d: dict) -> dict:
    node = {"outcome": d["outcome"], "trace": DeductionTrace.from_json(d["trace"])}
    if "branch" in d:
        node["branch"] = Placement.from_json(d["branch"])
    if "cell" in d:
        node["cell"] = tuple(d["cell"])
    if "children" in d:
        node["children"] = [tree_from_json(c) for c in d["children"]]
    return node


def tree_stats(node: dict) -> tuple[int, int]:
    """(number of leaves, depth)"""
    kids = node.get("children") or []
    if not kids:
        return 1, 0
    leaves, depth = 0, 0
    for k in kids:
        l, d = tree_stats(k)
        leaves += l
        depth = max(depth, d + 1)
    return leaves, depth


def flatten_tree(node: dict, trace: DeductionTrace | None = None) -> DeductionTrace:
    """One linear trace for a proof tree: subcases bracketed by SUBCASE_OPEN and SUBCASE_CLOSE."""
    trace = trace if trace is not None else DeductionTrace()
    for st in node["trace"].steps:
        trace.add(st.kind, st.placement, st.detail)
    for child in node.get("children") or []:
        trace.add(SUBCASE_OPEN, child["branch"], tuple(node["cell"]))
        flatten_tree(child, trace)
        trace.add(SUBCASE_CLOSE, child["branch"], tuple(node["cell"]))
    return trace


def replay_tree(p: Patch, node: dict, region=None, use_parity: bool = True) -> bool:
    """Check a refutation tree without searching.

    Each node's forced placements are recomputed by propagation alone and compared
    with the record; every split must list exactly the states left at its cell;
    every leaf must fail propagation.
    """
    csp = _region_csp(p, region, use_parity)
    dom = list(csp.base)
    known = set(p._pls.values())
    if not all(dom):
        ok = False
    else:
        ok = csp.consistent(dom, range(csp.n))
    return _replay(csp, node, dom, ok, known)


def _replay(csp: CellCsp, node: dict, dom: list[int], ok: bool, known: set) -> bool:
    implied = _implied(csp, dom, known)
    recorded = [(st.placement, tuple(st.detail)) for st in node["trace"].steps if st.kind == FORCED]
    if [(pl, tuple(c)) for pl, c in implied] != recorded:
        return False
    if not ok:
        return node["outcome"] == CONTRADICTION
    if node["outcome"] != "SPLIT":
        return False
    known = known | {pl for pl, _ in implied}
    c = tuple(node["cell"])
    v = csp.coords.index(c) if c in csp.coords else -1
    if v < 0 or v != csp.pick(dom):
        return False
    opts = sorted(((_placement_of(csp.rb, c, s), s) for s in csp.states_of(dom[v])), key=lambda t: t[0].sort_key())
    kids = node["children"]
    if [k["branch"] for k in kids] != [pl for pl, _ in opts]:
        return False
    for k, (pl, s) in zip(kids, opts):
        d2 = list(dom)
        d2[v] = 1 << s
        ok2 = csp.consistent(d2, [v])
        if not _replay(csp, k, d2, ok2, known | {pl}):
            return False
    return True


# ---------------------------------------------------------------------------------------
# validation and classification


@dataclass
class ValidityReport:
    violations: list[tuple] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def kinds(self) -> set[str]:
        return {v[0] for v in self.violations}


def parity_violations(b: _Board) -> list[tuple]:
    out = []
    rb = b.rb
    for c, (pid, s) in sorted(b.cells.items()):
        if not rb.is_tri[s]:
            continue
        for d in rb.dirs:
            nxt = (c[0] + d[0], c[1] + d[1])
            e = b.cells.get(nxt)
            if e is not None and e[0] == pid:
                continue
            hit = b._walk(c, d, {})
            if hit is not None and not b._pair_ok(c, s, hit[0], hit[1]):
                out.append(("parity", c[0], c[1], hit[0][0], hit[0][1]))
    return out


def validate(p: Patch, strict: bool = False) -> ValidityReport:
    """Coverage, interior corners and parity for a patch with a closed window.

    ``strict`` adds the corners on the window boundary, which must be completable.
    """
    rep = ValidityReport()
    if p.window is None:
        rep.violations.append(("no window",))
        return rep
    b = p._board(strict)
    w = p.window
    for c in w.cells():
        if c not in b.cells:
            rep.violations.append(("uncovered cell", c[0], c[1]))
    for c in b.cells:
        if c not in w:
            rep.violations.append(("cell outside window", c[0], c[1]))
    for x in range(w.x0 + 1, w.x1 + 1):
        for y in range(w.y0 + 1, w.y1 + 1):
            cs = corner_cells((x, y))
            if not all(c in b.cells for c in cs):
                continue
            if b.corner_status((x, y)) == "VIOLATED":
                rep.violations.append(("corner", x, y))
    if strict:
        # boundary corners too, with the cells outside the window left open
        for x in range(w.x0, w.x1 + 2):
            for y in range(w.y0, w.y1 + 2):
                if w.x0 < x <= w.x1 and w.y0 < y <= w.y1:
                    continue
                if b.corner_status((x, y)) == "VIOLATED":
                    rep.violations.append(("boundary corner", x, y))
    rep.violations.extend(parity_violations(b))
    return rep


def classify_trilobite(p: Patch, pid: int) -> str:
    pl = p._pls.get(pid)
    if pl is None or pl.kind != TRILOBITE:
        raise ValueError(f"NOT_A_TRILOBITE({pid})")
    rb = rulebook(p.atlas)
    letters = []
    for tx, ty in rb.tips[pl.rot]:
        e = p._cells.get(Cell(pl.x + tx, pl.y + ty))
        if e is None:
            return UNDETERMINED
        letters.append("T" if rb.is_tri[e[1]] else "O")
    return "".join(letters)


def census(p: Patch, margin: int = 0) -> dict[str, int]:
    """Neighbour codes of the trilobites lying at least ``margin`` cells inside the window."""
    out: dict[str, int] = {}
    inner = p.window.shrink(margin) if p.window is not None else None
    rb = rulebook(p.atlas)
    for pid, pl in sorted(p._pls.items()):
        if pl.kind != TRILOBITE:
            continue
        if inner is not None and not all(c in inner for c, _ in rb.cells_of(pl)):
            continue
        code = classify_trilobite(p, pid)
        out[code] = out.get(code, 0) + 1
    return dict(sorted(out.items()))


# ---------------------------------------------------------------------------------------
# torus search


@dataclass(frozen=True)
class TorusSpec:
    u: tuple[int, int]
    v: tuple[int, int]

    @property
    def area(self) -> int:
        return abs(self.u[0] * self.v[1] - self.u[1] * self.v[0])


def hnf_bases(area: int) -> Iterator[TorusSpec]:
    """Every sublattice of index ``area``, once each, in Hermite normal form u=(a,0), v=(b,c)."""
    for a in range(1, area + 1):
        if area % a:
            continue
        c = area // a
        for b in range(a):
            yield TorusSpec((a, 0), (b, c))


def to_hnf(t: TorusSpec) -> TorusSpec:
    """Hermite normal form of the lattice spanned by u and v (rows as generators)."""
    (p, q), (r, s) = t.u, t.v
    if p * s - q * r == 0:
        raise ValueError("degenerate basis: u and v are linearly dependent")
    # Euclid on the y components leaves one generator on the x axis
    a1, b1, a2, b2 = p, q, r, s
    while b2 != 0:
        k = b1 // b2
        a1, b1, a2, b2 = a2, b2, a1 - k * a2, b1 - k * b2
    a, c, bx = abs(a2), b1, a1
    if c < 0:
        c, bx = -c, -bx
    bx %= a
    return TorusSpec((a, 0), (bx, c))


@dataclass
class TorusOutcome:
    status: str  # SAT, UNSAT, BUDGET_EXHAUSTED
    spec: TorusSpec
    nodes: int = 0
    tiling: dict | None = None  # cell of the fundamental domain -> state


def _torus_csp(atlas: Atlas, hn: TorusSpec, use_parity: bool) -> CellCsp:
    (a, _), (b, c) = hn.u, hn.v
    coords = [(x, y) for y in range(c) for x in range(a)]

    def locate(x: int, y: int) -> int:
        q, y = divmod(y, c)
        x -= q * b
        return y * a + (x % a)

    windows = [tuple(locate(*cc) for cc in corner_cells((x + 1, y + 1))) for (x, y) in coords]
    rb = rulebook(atlas)
    return CellCsp(rb, coords, locate, windows, None, None, use_parity, wrap_limit=a * c + 1)


def torus_search(atlas: Atlas, t: TorusSpec, budget: int = 10**7, use_parity: bool = True) -> TorusOutcome:
    """Exhaustive search for a tiling invariant under the lattice spanned by u and v."""
    hn = to_hnf(t)
    csp = _torus_csp(atlas, hn, use_parity)
    try:
        dom = csp.solve_first(budget)
    except Budget:
        return TorusOutcome("BUDGET_EXHAUSTED", hn, csp.nodes, None)
    if dom is None:
        return TorusOutcome("UNSAT", hn, csp.nodes, None)
    tiling = {csp.coords[v]: csp.rb.states[dom[v].bit_length() - 1] for v in range(csp.n)}
    return TorusOutcome("SAT", hn, csp.nodes, tiling)


def torus_tiling_valid(atlas: Atlas, t: TorusSpec, tiling: dict) -> bool:
    """Independent check of a claimed periodic tiling: every corner tuple, footprint and parity pair."""
    hn = to_hnf(t)
    (a, _), (b, c) = hn.u, hn.v
    rb = rulebook(atlas)

    def state(x, y):
        q, yy = divmod(y, c)
        return rb.sidx[tiling[((x - q * b) % a, yy)]]

    for x in range(a):
        for y in range(c):
            key = tuple(rb.contrib[state(*cc)][qi] for qi, cc in enumerate(corner_cells((x, y))))
            if key not in rb.proj[15]:
                return False
            s = state(x, y)
            ox, oy = rb.offset[s]
            for dx, dy, s2 in rb.geom[(rb.states[s][0], rb.states[s][1])]:
                if state(x - ox + dx, y - oy + dy) != s2:
                    return False
    # parity on an unfolded copy
    b_ = _Board(atlas, None, OPEN)
    span = 3 * max(a, c) + 4
    for x in range(-span, span):
        for y in range(-span, span):
            b_.cells[Cell(x, y)] = (0, state(x, y))
    for x in range(-1, a + 1):
        for y in range(-1, c + 1):
            s = state(x, y)
            if not rb.is_tri[s]:
                continue
            for d in rb.dirs:
                nxt = state(x + d[0], y + d[1])
                if rb.is_tri[nxt]:
                    continue
                hit = b_._walk(Cell(x, y), d, {})
                if hit is not None and not b_._pair_ok(Cell(x, y), s, hit[0], hit[1]):
                    return False
    return True


def _rotated_spec(t: TorusSpec) -> TorusSpec:
    return TorusSpec((-t.u[1], t.u[0]), (-t.v[1], t.v[0]))


def torus_representative(t: TorusSpec) -> TorusSpec:
    """Smallest HNF among the four quarter turns of a lattice.  With rotation-closed rules a
    lattice admits a periodic tiling exactly when its quarter turn does."""
    forms = []
    cur = t
    for _ in range(4):
        forms.append(to_hnf(cur))
        cur = _rotated_spec(cur)
    return min(forms, key=lambda s: (s.u, s.v))


@dataclass
class SweepEntry:
    spec: TorusSpec
    status: str
    nodes: int = 0
    same_as: TorusSpec | None = None

    def to_json(self) -> dict:
        d = {"u": list(self.spec.u), "v": list(self.spec.v), "area": self.spec.area, "status": self.status,
             "nodes": self.nodes}
        if self.same_as is not None:
            d["same_as"] = {"u": list(self.same_as.u), "v": list(self.same_as.v)}
        return d


def torus_sweep(atlas: Atlas, max_area: int, budget: int = 10**7, use_parity: bool = True,
                rotation_dedup: bool = True, stop_on_sat: bool = False) -> list[SweepEntry]:
    """Search every lattice of area 1..max_area.  ``budget`` caps the nodes of each search."""
    out: list[SweepEntry] = []
    done: dict[TorusSpec, SweepEntry] = {}
    for area in range(1, max_area + 1):
        for t in hnf_bases(area):
            rep = torus_representative(t) if rotation_dedup else t
            if rep in done and rep != t:
                out.append(SweepEntry(t, done[rep].status, 0, rep))
                continue
            res = torus_search(atlas, rep, budget, use_parity)
            entry = SweepEntry(t, res.status, res.nodes)
            done[rep] = entry
            out.append(entry)
            if stop_on_sat and res.status == "SAT":
                return out
    return out
