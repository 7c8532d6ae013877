"""Deliberately broken variants of an atlas, used to check that ``prove`` notices.

Each function takes atlas source text and returns modified source text.
"""

from __future__ import annotations

from .atlas import BLANK, load_atlas


def _section_bounds(lines: list[str], name: str) -> tuple[int, int]:
    start = lines.index(f"[{name}]")
    end = next((i for i in range(start + 1, len(lines)) if lines[i].startswith("[")), len(lines))
    return start, end


def drop_one_tuple(text: str, index: int = 0) -> str:
    """Remove a single allowed corner tuple (breaking rotation closure)."""
    lines = text.splitlines()
    allow = [i for i, ln in enumerate(lines) if ln.startswith("allow ")]
    del lines[allow[index % len(allow)]]
    return "\n".join(lines) + "\n"


def drop_tuple_orbit(text: str, index: int = 0) -> str:
    """Remove a corner tuple together with its rotated copies, so the rules stay rotation-closed."""
    atlas = load_atlas(text)
    lines = text.splitlines()
    allow = [i for i, ln in enumerate(lines) if ln.startswith("allow ")]
    t = tuple(lines[allow[index % len(allow)]].split()[1:])
    orbit = set()
    for _ in range(4):
        orbit.add(t)
        t = atlas.rotate_tuple(t)
    keep = [ln for ln in lines if not (ln.startswith("allow ") and tuple(ln.split()[1:]) in orbit)]
    return "\n".join(keep) + "\n"


def permit_all_blank(text: str) -> str:
    """Allow the corner where four uncovered cells meet."""
    lines = text.splitlines()
    _, end = _section_bounds(lines, "corner-rules")
    lines.insert(end, f"allow {BLANK} {BLANK} {BLANK} {BLANK}")
    return "\n".join(lines) + "\n"


def weaken_parity(text: str) -> str:
    """Accept every orientation pair at every displacement parity."""
    lines = text.splitlines()
    start, end = _section_bounds(lines, "parity")
    body = [ln for ln in lines[start + 1:end] if not ln.startswith("pair ")]
    pairs = [f"pair {a} {b} {x} {y}" for a in range(4) for b in range(4) for x in range(2) for y in range(2)]
    lines[start + 1:end] = body[:-1] + pairs + body[-1:] if body and body[-1] == "" else body + pairs
    return "\n".join(lines) + "\n"


MUTATIONS = {
    "drop-one-tuple": drop_one_tuple,
    "drop-tuple-orbit": drop_tuple_orbit,
    "permit-all-blank": permit_all_blank,
    "weaken-parity": weaken_parity,
}
