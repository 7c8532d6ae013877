"""ASCII and SVG pictures of patches and deduction traces.

The ASCII glyphs are the ones used in lemma suites, so a rendered window can be
pasted into a suite file: ``> ^ < v`` mark the anchor of a trilobite facing in
rotation 0..3, ``#`` its other cells, ``0``-``3`` a crab and ``.`` an empty cell.
In the SVG a placement is coloured by the step that introduced it.
"""

from __future__ import annotations

from .atlas import TRILOBITE
from .engine import (
    CONTRADICTION,
    FORCED,
    GIVEN,
    REDUCED_TO,
    SUBCASE_CLOSE,
    SUBCASE_OPEN,
    DeductionTrace,
    Patch,
    Placement,
    Window,
    rulebook,
)

TRI_GLYPH = {0: ">", 1: "^", 2: "<", 3: "v"}
PALETTE = {
    GIVEN: "#000000",
    FORCED: "#808080",
    SUBCASE_OPEN: "#1f4fd1",
    REDUCED_TO: "#2a9d3a",
    CONTRADICTION: "#d62728",
}
CELL = 20


def _frame(patch: Patch | None, window: Window | None, extra=()) -> Window:
    if window is not None:
        return window
    if patch is not None and patch.window is not None:
        return patch.window
    box = patch.bbox() if patch is not None else None
    cells = [c for c in extra]
    if box is not None:
        cells += [(box.x0, box.y0), (box.x1, box.y1)]
    if not cells:
        return Window(0, 0, 0, 0)
    xs, ys = [c[0] for c in cells], [c[1] for c in cells]
    return Window(min(xs), min(ys), max(xs), max(ys))


def _trace_layers(trace: DeductionTrace) -> tuple[list[tuple[Placement, str]], list[tuple[int, int]]]:
    """Placements with the kind of the step that first showed them, and contradiction cells."""
    seen: dict[Placement, str] = {}
    bad: list[tuple[int, int]] = []
    for st in trace.steps:
        if st.kind == CONTRADICTION:
            if st.detail and len(st.detail) >= 3:
                bad.append((int(st.detail[1]), int(st.detail[2])))
            continue
        if st.placement is None or st.kind == SUBCASE_CLOSE or st.placement in seen:
            continue
        seen[st.placement] = st.kind
    return list(seen.items()), bad


def render_ascii(patch: Patch | None = None, window: Window | None = None,
                 trace: DeductionTrace | None = None) -> str:
    atlas = patch.atlas if patch is not None else None
    items: list[tuple[Placement, str]] = []
    bad: list = []
    if patch is not None:
        items = [(pl, GIVEN) for pl in patch.placements.values()]
    if trace is not None:
        extra, bad = _trace_layers(trace)
        items += extra
    w = _frame(patch, window, bad)
    grid: dict[tuple[int, int], str] = {}
    if items:
        rb = rulebook(atlas)
        for pl, _ in items:
            for c, _s in rb.cells_of(pl):
                grid[tuple(c)] = "#" if pl.kind == TRILOBITE else str(pl.rot)
            grid[(pl.x, pl.y)] = TRI_GLYPH[pl.rot] if pl.kind == TRILOBITE else str(pl.rot)
    for c in bad:
        grid[c] = "!"
    rows = []
    for y in range(w.y1, w.y0 - 1, -1):
        rows.append("".join(grid.get((x, y), ".") for x in range(w.x0, w.x1 + 1)))
    return "\n".join(rows) + "\n"


def _tri_arrow(pl: Placement, cells, px) -> str:
    """A triangle inside the trilobite pointing at its middle tip."""
    xs = [c[0] for c in cells]
    ys = [c[1] for c in cells]
    cx, cy = (min(xs) + max(xs) + 1) / 2, (min(ys) + max(ys) + 1) / 2
    # the middle tip sits diagonally outside one corner; rotation 0 points north-east
    dx, dy = [(1, 1), (-1, 1), (-1, -1), (1, -1)][pl.rot]
    tip = (cx + 0.8 * dx, cy + 0.8 * dy)
    left = (cx - 0.5 * dy, cy + 0.5 * dx)
    right = (cx + 0.5 * dy, cy - 0.5 * dx)
    return " ".join(f"{px(x, y)[0]},{px(x, y)[1]}" for x, y in (tip, left, right))


def render_svg(patch: Patch | None = None, window: Window | None = None,
               trace: DeductionTrace | None = None) -> str:
    atlas = patch.atlas if patch is not None else None
    items: list[tuple[Placement, str]] = []
    bad: list = []
    if patch is not None:
        items = [(pl, GIVEN) for pl in patch.placements.values()]
    if trace is not None:
        extra, bad = _trace_layers(trace)
        known = {pl for pl, _ in items}
        items += [(pl, k) for pl, k in extra if pl not in known]
    w = _frame(patch, window, bad)
    width, height = w.width * CELL, w.height * CELL

    def px(x: float, y: float) -> tuple[str, str]:
        return _num((x - w.x0) * CELL), _num((w.y1 + 1 - y) * CELL)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="#ffffff"/>',
        '<g stroke="#dddddd" stroke-width="1">',
    ]
    for i in range(w.width + 1):
        out.append(f'<line x1="{i * CELL}" y1="0" x2="{i * CELL}" y2="{height}"/>')
    for j in range(w.height + 1):
        out.append(f'<line x1="0" y1="{j * CELL}" x2="{width}" y2="{j * CELL}"/>')
    out.append("</g>")
    if items:
        rb = rulebook(atlas)
        for pl, kind in sorted(items, key=lambda t: t[0].sort_key()):
            color = PALETTE.get(kind, PALETTE[GIVEN])
            cells = [tuple(c) for c, _ in rb.cells_of(pl)]
            xs = [c[0] for c in cells]
            ys = [c[1] for c in cells]
            x0, y0 = px(min(xs), max(ys) + 1)
            wd, ht = (max(xs) - min(xs) + 1) * CELL, (max(ys) - min(ys) + 1) * CELL
            if pl.kind == TRILOBITE:
                out.append(f'<rect x="{x0}" y="{y0}" width="{wd - 2}" height="{ht - 2}" '
                           f'transform="translate(1,1)" fill="{color}" data-kind="{kind}"/>')
                out.append(f'<polygon points="{_tri_arrow(pl, cells, px)}" fill="#ffffff"/>')
            else:
                out.append(f'<rect x="{x0}" y="{y0}" width="{wd - 6}" height="{ht - 6}" '
                           f'transform="translate(3,3)" fill="none" stroke="{color}" stroke-width="2" '
                           f'data-kind="{kind}"/>')
                # a dot in the corner the crab's rotation points to
                dx, dy = [(1, 1), (0, 1), (0, 0), (1, 0)][pl.rot]
                cx, cy = px(pl.x + 0.25 + 0.5 * dx, pl.y + 0.25 + 0.5 * dy)
                out.append(f'<circle cx="{cx}" cy="{cy}" r="2.5" fill="{color}"/>')
    for c in bad:
        x0, y0 = px(c[0], c[1] + 1)
        out.append(f'<rect x="{x0}" y="{y0}" width="{CELL}" height="{CELL}" fill="none" '
                   f'stroke="{PALETTE[CONTRADICTION]}" stroke-width="3" data-kind="{CONTRADICTION}"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _num(v: float) -> str:
    r = round(v, 2)
    return str(int(r)) if r == int(r) else f"{r:.2f}".rstrip("0")


def render(patch: Patch | None = None, fmt: str = "ascii", window: Window | None = None,
           trace: DeductionTrace | None = None) -> str:
    if fmt == "ascii":
        return render_ascii(patch, window, trace)
    if fmt == "svg":
        return render_svg(patch, window, trace)
    raise ValueError(f"unknown format {fmt!r}")


__all__ = ["render", "render_ascii", "render_svg", "PALETTE", "FORCED"]
