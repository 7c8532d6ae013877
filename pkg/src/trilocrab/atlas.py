"""Load, validate and query the tile atlas.

The atlas file is the single source of truth for the rules: tile footprints,
corner decorations, the allowed corner meetings, the parity table and the
supertile data used by the hierarchy module.  The engine is generic over any
atlas that passes :func:`validate_atlas`.
"""

from __future__ import annotations

import hashlib
import itertools
import os
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable

from .grid import (
    Cell,
    Rotation,
    parity,
    rotate_lattice_point,
    rotate_point,
    rotate_quadrant_tuple,
)

BLANK = "BLANK"
TRILOBITE = "TRILOBITE"
CRAB = "CRAB"
TILE_NAMES = (TRILOBITE, CRAB)
KIND_ORDER = {TRILOBITE: 0, CRAB: 1}
SECTIONS = ("decorations", "tile TRILOBITE", "tile CRAB", "corner-rules", "parity", "supertile")
SEGMENT_FAMILIES = ("axis", "diagonal", "both")
CONTEXTS = ("NS", "EW", "-")

DEFAULT_ATLAS_NAME = "trilobite-crab.atlas"


class AtlasError(ValueError):
    """Malformed atlas text.  Carries the 1-based line and column of the problem."""

    def __init__(self, message: str, line: int = 0, column: int = 0):
        self.line = line
        self.column = column
        where = f"line {line}, column {column}: " if line else ""
        super().__init__(where + message)


@dataclass(frozen=True)
class TileKind:
    name: str
    footprint: tuple[Cell, ...]
    # rotation-0 marks keyed by lattice point relative to the anchor cell's lower-left corner
    marks: dict[tuple[int, int], str]
    tips: tuple[Cell, ...] = ()

    def cells(self, rot: int) -> tuple[Cell, ...]:
        return tuple(rotate_point(f, rot) for f in self.footprint)

    def lattice_points(self) -> set[tuple[int, int]]:
        pts = set()
        for fx, fy in self.footprint:
            pts.update({(fx, fy), (fx + 1, fy), (fx, fy + 1), (fx + 1, fy + 1)})
        return pts


@dataclass(frozen=True)
class SupertileTemplate:
    scale: int
    body: tuple[tuple[str, int, int, int], ...]  # (kind, rot, x, y) for a rotation-0 super trilobite
    anchor: tuple[int, int]  # designated fine anchor of the reference trilobite
    rules: dict[tuple[tuple[int, int, int, int], str], tuple[tuple[int, int, int], ...]]

    def body_for(self, rot: int) -> list[tuple[str, int, int, int]]:
        """Body of a super trilobite of the given rotation.

        Offsets are fine cells relative to ``scale`` times the super block origin.
        The rotation-0 body is turned about the centre of the fine 2x2 block at
        offset (0, 0), the lattice point (1, 1).  A placement turns with its
        anchor cell, so the anchor is mapped as a cell and the rotation adds.
        """
        out = []
        for kind, r, x, y in self.body:
            for _ in range(rot % 4):
                x, y = 1 - y, x
            out.append((kind, (r + rot) % 4, x, y))
        return out


@dataclass
class Atlas:
    name: str
    digest: str
    decorations: list[str]
    rot_action: dict[str, str]
    tiles: dict[str, TileKind]
    corner_rules: set[tuple[str, str, str, str]]
    parity_pairs: set[tuple[int, int, int, int]]
    segments: str = "axis"
    supertile: SupertileTemplate | None = None
    source: str = ""
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    # ---- rotation action on labels -------------------------------------------------
    def rotate_label(self, label: str, r: int = 1) -> str:
        for _ in range(r % 4):
            label = self.rot_action[label]
        return label

    def rotate_tuple(self, t: tuple[str, ...], r: int = 1) -> tuple[str, ...]:
        moved = rotate_quadrant_tuple(t, r)
        return tuple(self.rotate_label(x, r) for x in moved)

    # ---- oriented classes ----------------------------------------------------------
    def oriented_marks(self, kind: str, rot: int) -> dict[tuple[int, int], str]:
        """Lattice point (relative to the anchor) -> decoration, for a tile at a rotation."""
        key = ("marks", kind, rot)
        if key not in self._cache:
            tile = self.tiles[kind]
            self._cache[key] = {
                tuple(rotate_lattice_point(p, rot)): self.rotate_label(lab, rot) for p, lab in tile.marks.items()
            }
        return self._cache[key]

    def oriented_classes(self) -> list[tuple[str, int]]:
        """Distinct (kind, rotation) classes up to translation."""
        seen = {}
        for kind in TILE_NAMES:
            for rot in range(4):
                cells = self.tiles[kind].cells(rot)
                mx = min(c.x for c in cells)
                my = min(c.y for c in cells)
                shape = frozenset((c.x - mx, c.y - my) for c in cells)
                marks = frozenset(((p[0] - mx, p[1] - my), lab) for p, lab in self.oriented_marks(kind, rot).items())
                seen.setdefault((kind, shape, marks), (kind, rot))
        return sorted(seen.values(), key=lambda kr: (KIND_ORDER[kr[0]], kr[1]))

    # ---- cell states ---------------------------------------------------------------
    def states(self) -> list[tuple[str, int, int, int]]:
        """Cell states: (kind, rot, fx, fy) with (fx, fy) a rotation-0 footprint offset."""
        if "states" not in self._cache:
            out = []
            for kind in TILE_NAMES:
                for rot in range(4):
                    for f in self.tiles[kind].footprint:
                        out.append((kind, rot, f[0], f[1]))
            self._cache["states"] = out
        return self._cache["states"]

    def state_contributions(self, state: tuple[str, int, int, int]) -> tuple[str, str, str, str]:
        """Decoration a cell in this state shows when it sits in quadrant NE, NW, SW, SE of a corner."""
        key = ("contrib", state)
        if key not in self._cache:
            kind, rot, fx, fy = state
            marks = self.oriented_marks(kind, rot)
            cx, cy = rotate_point((fx, fy), rot)  # cell offset from the anchor
            # NE quadrant: corner is the cell's lower-left point; NW: lower-right; SW: upper-right; SE: upper-left
            pts = ((cx, cy), (cx + 1, cy), (cx + 1, cy + 1), (cx, cy + 1))
            self._cache[key] = tuple(marks[p] for p in pts)
        return self._cache[key]


# ---------------------------------------------------------------------------------------
# parsing


def _tokens(line: str) -> list[tuple[str, int]]:
    out = []
    col = 0
    for part in line.split():
        col = line.index(part, col)
        out.append((part, col + 1))
        col += len(part)
    return out


def _int(tok: tuple[str, int], lineno: int) -> int:
    try:
        return int(tok[0])
    except ValueError:
        raise AtlasError(f"expected an integer, got {tok[0]!r}", lineno, tok[1]) from None


def load_atlas(source_text: str, name: str | None = None) -> Atlas:
    """Parse atlas text.  Structural problems raise AtlasError; rule problems are left to validate_atlas."""
    section = None
    seen_sections: set[str] = set()
    atlas_name = name or "atlas"
    decorations: list[str] = []
    rot_action: dict[str, str] = {}
    footprints: dict[str, list[Cell]] = {t: [] for t in TILE_NAMES}
    marks: dict[str, dict[tuple[int, int], str]] = {t: {} for t in TILE_NAMES}
    tips: dict[str, list[Cell]] = {t: [] for t in TILE_NAMES}
    mark_lines: list[tuple[str, int, int]] = []
    rules: set[tuple[str, str, str, str]] = set()
    rule_lines: list[tuple[tuple[str, ...], int, int]] = []
    pairs: set[tuple[int, int, int, int]] = set()
    segments = "axis"
    scale = None
    body: list[tuple[str, int, int, int]] = []
    anchor = None
    crab_rules: dict = {}
    current_rule = None

    for lineno, raw in enumerate(source_text.splitlines(), start=1):
        line = raw.split("#", 1)[0].rstrip()
        if not line.strip():
            continue
        stripped = line.strip()
        if stripped.startswith("[") and stripped.endswith("]"):
            section = stripped[1:-1].strip()
            if section not in SECTIONS:
                raise AtlasError(f"unknown section [{section}]", lineno, line.index("[") + 1)
            if section in seen_sections:
                raise AtlasError(f"duplicate section [{section}]", lineno, 1)
            seen_sections.add(section)
            current_rule = None
            continue
        toks = _tokens(line)
        key = toks[0][0]
        if section is None:
            if key == "name" and len(toks) == 2:
                atlas_name = name or toks[1][0]
                continue
            raise AtlasError("content before the first section", lineno, toks[0][1])
        if section == "decorations":
            if key != "label" or len(toks) != 3:
                raise AtlasError("expected 'label NAME QUARTER_TURN_IMAGE'", lineno, toks[0][1])
            decorations.append(toks[1][0])
            rot_action[toks[1][0]] = toks[2][0]
        elif section.startswith("tile "):
            tname = section[5:]
            if key == "cell" and len(toks) == 3:
                footprints[tname].append(Cell(_int(toks[1], lineno), _int(toks[2], lineno)))
            elif key == "mark" and len(toks) == 4:
                p = (_int(toks[1], lineno), _int(toks[2], lineno))
                marks[tname][p] = toks[3][0]
                mark_lines.append((toks[3][0], lineno, toks[3][1]))
            elif key == "tip" and len(toks) == 3:
                tips[tname].append(Cell(_int(toks[1], lineno), _int(toks[2], lineno)))
            else:
                raise AtlasError(f"unrecognised tile line {stripped!r}", lineno, toks[0][1])
        elif section == "corner-rules":
            if key != "allow" or len(toks) != 5:
                raise AtlasError("expected 'allow NE NW SW SE'", lineno, toks[0][1])
            t = tuple(tok[0] for tok in toks[1:])
            rules.add(t)  # type: ignore[arg-type]
            rule_lines.append((t, lineno, toks[1][1]))
        elif section == "parity":
            if key == "segments" and len(toks) == 2:
                if toks[1][0] not in SEGMENT_FAMILIES:
                    raise AtlasError(f"unknown segment family {toks[1][0]!r}", lineno, toks[1][1])
                segments = toks[1][0]
            elif key == "pair" and len(toks) == 5:
                a, b, px, py = (_int(t, lineno) for t in toks[1:])
                if not (0 <= a < 4 and 0 <= b < 4 and px in (0, 1) and py in (0, 1)):
                    raise AtlasError("pair values out of range", lineno, toks[1][1])
                pairs.add((a, b, px, py))
            else:
                raise AtlasError("expected 'segments FAMILY' or 'pair oA oB px py'", lineno, toks[0][1])
        elif section == "supertile":
            if key == "scale" and len(toks) == 2:
                scale = _int(toks[1], lineno)
            elif key == "anchor" and len(toks) == 3:
                anchor = (_int(toks[1], lineno), _int(toks[2], lineno))
            elif key == "body" and len(toks) == 5:
                if toks[1][0] not in TILE_NAMES:
                    raise AtlasError(f"unknown tile {toks[1][0]!r}", lineno, toks[1][1])
                body.append((toks[1][0], _int(toks[2], lineno) % 4, _int(toks[3], lineno), _int(toks[4], lineno)))
                current_rule = None
            elif key == "rule" and len(toks) == 6:
                code = tuple(_int(t, lineno) % 4 for t in toks[1:5])
                ctx = toks[5][0]
                if ctx not in CONTEXTS:
                    raise AtlasError(f"unknown context {ctx!r}", lineno, toks[5][1])
                current_rule = (code, ctx)
                if current_rule in crab_rules:
                    raise AtlasError("duplicate rule", lineno, toks[0][1])
                crab_rules[current_rule] = []
            elif key == "crab" and len(toks) == 4:
                if current_rule is None:
                    raise AtlasError("'crab' line outside a rule", lineno, toks[0][1])
                crab_rules[current_rule].append(tuple(_int(t, lineno) for t in toks[1:4]))
            else:
                raise AtlasError(f"unrecognised supertile line {stripped!r}", lineno, toks[0][1])

    missing = [s for s in SECTIONS if s not in seen_sections and s != "supertile"]
    if missing:
        raise AtlasError(f"missing section [{missing[0]}]")
    for t in TILE_NAMES:
        if not footprints[t]:
            raise AtlasError(f"footprint empty for {t}")
        if Cell(0, 0) not in footprints[t]:
            raise AtlasError(f"footprint of {t} does not contain the origin")
    declared = set(decorations)
    if BLANK not in declared:
        raise AtlasError("BLANK must be declared")
    for lab, img in rot_action.items():
        if img not in declared:
            raise AtlasError(f"rotation image {img!r} of {lab!r} is not declared")
    for lab, lineno, col in mark_lines:
        if lab not in declared:
            raise AtlasError(f"undeclared decoration {lab!r}", lineno, col)
    for t, lineno, col in rule_lines:
        for lab in t:
            if lab not in declared:
                raise AtlasError(f"undeclared decoration {lab!r}", lineno, col)

    tiles = {
        t: TileKind(t, tuple(footprints[t]), dict(marks[t]), tuple(tips[t])) for t in TILE_NAMES
    }
    template = None
    if scale is not None:
        template = SupertileTemplate(
            scale=scale,
            body=tuple(body),
            anchor=anchor or (0, 0),
            rules={k: tuple(v) for k, v in crab_rules.items()},
        )
    digest = hashlib.sha256(source_text.encode("utf-8")).hexdigest()[:16]
    return Atlas(
        name=atlas_name,
        digest=digest,
        decorations=decorations,
        rot_action=rot_action,
        tiles=tiles,
        corner_rules=rules,
        parity_pairs=pairs,
        segments=segments,
        supertile=template,
        source=source_text,
    )


def bundled_atlas_path() -> Path:
    return Path(str(resources.files("trilocrab") / "data" / DEFAULT_ATLAS_NAME))


def default_atlas_path() -> Path:
    env = os.environ.get("TRILOCRAB_ATLAS")
    return Path(env) if env else bundled_atlas_path()


def load_atlas_file(path: str | os.PathLike | None = None) -> Atlas:
    p = Path(path) if path is not None else default_atlas_path()
    return load_atlas(p.read_text(encoding="utf-8"))


def load_bundled_atlas() -> Atlas:
    return load_atlas_file(bundled_atlas_path())


# ---------------------------------------------------------------------------------------
# validation


@dataclass
class ValidationReport:
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def add(self, msg: str) -> None:
        self.violations.append(msg)


def _connected(cells: Iterable[tuple[int, int]]) -> bool:
    cells = set(cells)
    if not cells:
        return False
    start = next(iter(cells))
    seen = {start}
    stack = [start]
    while stack:
        x, y = stack.pop()
        for n in ((x + 1, y), (x - 1, y), (x, y + 1), (x, y - 1)):
            if n in cells and n not in seen:
                seen.add(n)
                stack.append(n)
    return seen == cells


def validate_atlas(a: Atlas) -> ValidationReport:
    rep = ValidationReport()
    # rotation action must be a permutation of order dividing 4 that fixes BLANK
    for lab in a.decorations:
        if a.rotate_label(lab, 4) != lab:
            rep.add(f"rotation action on {lab!r} does not have order dividing 4")
    if a.rot_action.get(BLANK) != BLANK:
        rep.add("BLANK is not fixed by rotation")
    if len(set(a.rot_action.values())) != len(a.rot_action):
        rep.add("rotation action on decorations is not a bijection")
    for t in a.tiles.values():
        if not _connected(t.footprint):
            rep.add(f"footprint of {t.name} is disconnected")
        if len(set(t.footprint)) != len(t.footprint):
            rep.add(f"footprint of {t.name} repeats a cell")
        missing = t.lattice_points() - set(t.marks)
        if missing:
            rep.add(f"{t.name} has unmarked lattice points {sorted(missing)}")
        extra = set(t.marks) - t.lattice_points()
        if extra:
            rep.add(f"{t.name} marks points outside its closed footprint {sorted(extra)}")
        cells = set(t.footprint)
        for tip in t.tips:
            if tip in cells:
                rep.add(f"{t.name} tip {tuple(tip)} lies inside the footprint")
    if a.rot_action.get(BLANK) == BLANK:
        if (BLANK, BLANK, BLANK, BLANK) in a.corner_rules:
            rep.add("uncovered corner permitted: the all-BLANK tuple is allowed")
    for t in sorted(a.corner_rules):
        try:
            img = a.rotate_tuple(t)
        except KeyError as exc:  # label without a rotation image
            rep.add(f"corner tuple {t} uses a label with no rotation image: {exc}")
            continue
        if img not in a.corner_rules:
            rep.add(f"corner rules not closed under rotation: {t} is allowed but its quarter turn {img} is not")
    for (oa, ob, px, py) in sorted(a.parity_pairs):
        if (ob, oa, px, py) not in a.parity_pairs:
            rep.add(f"parity table asymmetric: ({oa},{ob},{px},{py}) present but ({ob},{oa},{px},{py}) missing")
        if ((oa + 1) % 4, (ob + 1) % 4, py, px) not in a.parity_pairs:
            rep.add(f"parity table not closed under rotation at ({oa},{ob},{px},{py})")
    # a tile's rotated marks must agree with the rotated labels wherever two rotations share geometry
    for kind, tile in a.tiles.items():
        for rot in range(4):
            m = a.oriented_marks(kind, rot)
            for p, lab in tile.marks.items():
                q = tuple(rotate_lattice_point(p, rot))
                if m.get(q) != a.rotate_label(lab, rot):
                    rep.add(f"{kind} rotation {rot} mark at {q} does not follow the rotation action")
    n = len(a.oriented_classes())
    if n != 8:
        rep.add(f"expected 8 oriented tile classes, found {n}")
    st = a.supertile
    if st is not None:
        tri = [b for b in st.body if b[0] == TRILOBITE]
        if len(tri) != 4:
            rep.add(f"supertile body has {len(tri)} trilobites, expected 4")
    return rep


def corner_tuple_allowed(a: Atlas, t: tuple[str, str, str, str]) -> bool:
    return tuple(t) in a.corner_rules


def placements_covering(a: Atlas, c: tuple[int, int]):
    """Every (kind, rotation, anchor) whose footprint covers cell c, in canonical order."""
    from .engine import Placement  # local import keeps the module graph acyclic

    out = []
    for kind, rot in itertools.product(TILE_NAMES, range(4)):
        for off in a.tiles[kind].cells(rot):
            out.append(Placement(kind, rot, c[0] - off.x, c[1] - off.y))
    return sorted(set(out))


def parity_allowed(a: Atlas, rot_a: int, rot_b: int, disp: tuple[int, int]) -> bool:
    p = parity(disp)
    return (rot_a % 4, rot_b % 4, p.px, p.py) in a.parity_pairs


def rotation_of(r: int | Rotation) -> int:
    return r.quarter_turns if isinstance(r, Rotation) else r % 4
