import itertools
import json

import pytest

from trilocrab.engine import (
    CLOSED,
    CONTRADICTION,
    GIVEN,
    OPEN,
    Patch,
    Placement,
    PlacementError,
    Window,
    canonical,
    census,
    check_trace,
    classify_trilobite,
    legal_completions,
    patch_from_json,
    patch_of,
    place,
    propagate,
    replay,
    rulebook,
    validate,
)
from trilocrab.grid import Corner, corner_cells

T, C = "TRILOBITE", "CRAB"


def _bad_fourth_crab(atlas):
    """Three crabs around the origin that are fine together, and a fourth that is not."""
    rb = rulebook(atlas)
    cells = corner_cells((0, 0))
    for rots in itertools.product(range(4), repeat=4):
        labels = tuple(rb.contrib[rb.sidx[(C, r, 0, 0)]][q] for q, r in enumerate(rots))
        if labels in atlas.corner_rules:
            continue
        if labels[:3] in rb.proj[0b0111]:
            return [Placement(C, r, *c) for r, c in zip(rots, cells)]
    raise AssertionError("no example")


def test_place_is_immutable(atlas):
    p = Patch(atlas)
    q = place(p, Placement(T, 0, 0, 0))
    assert len(p) == 0 and len(q) == 1


def test_overlap(atlas):
    p = place(Patch(atlas), Placement(T, 0, 0, 0))
    with pytest.raises(PlacementError) as exc:
        place(p, Placement(C, 0, 1, 1))
    assert exc.value.code == "OVERLAP"


def test_out_of_window(atlas):
    p = Patch(atlas, Window(0, 0, 1, 1), CLOSED)
    with pytest.raises(PlacementError) as exc:
        place(p, Placement(T, 0, 1, 1))
    assert exc.value.code == "OUT_OF_WINDOW"
    # an open window does not confine placements
    place(Patch(atlas, Window(0, 0, 1, 1), OPEN), Placement(T, 0, 1, 1))


def test_immediate_corner_violation(atlas):
    pls = _bad_fourth_crab(atlas)
    p = Patch(atlas)
    for pl in pls[:3]:
        p = place(p, pl)
    with pytest.raises(PlacementError) as exc:
        place(p, pls[3])
    assert exc.value.code == "IMMEDIATE_CORNER_VIOLATION"
    assert tuple(exc.value.where) == (0, 0)
    assert p.corner_state(Corner(0, 0)).status != "VIOLATED"


def test_json_round_trip(atlas, level):
    p = level(2)
    d = json.loads(p.dumps())
    assert set(d) == {"atlas", "window", "policy", "placements"}
    assert d["atlas"] == {"name": atlas.name, "hash": atlas.digest}
    assert patch_from_json(atlas, d) == p
    assert set(d["placements"][0]) == {"kind", "rot", "x", "y"}


def test_json_rejects_overlap(atlas):
    d = {"window": None, "policy": "open",
         "placements": [{"kind": T, "rot": 0, "x": 0, "y": 0}, {"kind": C, "rot": 0, "x": 1, "y": 0}]}
    with pytest.raises(PlacementError):
        patch_from_json(atlas, d)


def test_classify(atlas, level):
    p = patch_of(atlas, [Placement(T, 0, 0, 0)])
    assert classify_trilobite(p, 0) == "UNDETERMINED"
    q = patch_of(atlas, [Placement(T, 0, 0, 0), Placement(C, 0, 5, 5)])
    with pytest.raises(ValueError, match="NOT_A_TRILOBITE"):
        classify_trilobite(q, 1)
    r = level(2)
    assert {classify_trilobite(r, pid) for pid, _ in r.trilobites()} == {"OOO"}
    # tip order: (2,1), (2,2), (1,2) for a trilobite facing rotation 0
    s = patch_of(atlas, [Placement(T, 0, 0, 0), Placement(T, 0, 2, 1), Placement(C, 0, 1, 2)])
    assert classify_trilobite(s, 0) == "TTO"


def test_legal_completions_of_covered_cell_is_empty(atlas):
    p = patch_of(atlas, [Placement(T, 0, 0, 0)])
    assert legal_completions(p, (1, 1)) == []


def test_legal_completions_respect_window(atlas):
    p = Patch(atlas, Window(0, 0, 0, 0), CLOSED)
    assert all(pl.kind == C for pl in legal_completions(p, (0, 0)))


def test_corner_target(atlas):
    p = patch_of(atlas, [Placement(T, 0, 0, 0)])
    got = legal_completions(p, Corner(2, 2))
    cells = set()
    for c in corner_cells((2, 2)):
        cells |= set(legal_completions(p, c))
    assert set(got) == cells


def test_propagate_fills_a_hole(atlas, level):
    r = level(2)
    inner = r.window.shrink(3)
    hole = [pl for pl in canonical(r.placement_set()) if pl.kind == C and (pl.x, pl.y) in inner][:3]
    keep = r.placement_set() - set(hole)
    p = patch_of(atlas, keep, r.window, CLOSED)
    q, trace = propagate(p)
    assert q.placement_set() == r.placement_set()
    assert len(trace.forced) == 3
    assert [s.kind for s in trace.steps[: len(keep)]] == [GIVEN] * len(keep)
    assert check_trace(atlas, trace, p.window, CLOSED, None)
    assert replay(atlas, trace, p.window, CLOSED) == q


def test_propagate_reports_contradiction(atlas):
    pls = _bad_fourth_crab(atlas)
    p = patch_of(atlas, pls)
    _, trace = propagate(p, region=[(5, 5)])
    assert trace.contradiction is not None
    assert trace.steps[-1].kind == CONTRADICTION


def test_validate_and_census(atlas, level):
    r = level(3)
    assert validate(r).ok
    assert census(r) == {"OOO": 64}
    broken = patch_of(atlas, set(r.placement_set()) - {canonical(r.placement_set())[0]}, r.window, CLOSED)
    assert "uncovered cell" in validate(broken).kinds()


def test_strict_corners_checks_the_boundary(level, permissive):
    assert validate(level(2), strict=True).ok
    # an atlas in which no corner may have crab labels in both its SW and SE cells:
    # two crabs side by side in a 2x1 window have no interior corner, so only strict
    # mode notices that the corners above and below them can never be completed
    from conftest import permissive_atlas_text
    from trilocrab.atlas import load_atlas

    text = "\n".join(ln for ln in permissive_atlas_text().splitlines()
                     if not (ln.startswith("allow ") and ln.split()[3:5] == ["A", "A"]))
    tight = load_atlas(text + "\n")
    p = patch_of(tight, [Placement(C, 0, 0, 0), Placement(C, 0, 1, 0)], Window(0, 0, 1, 0), CLOSED)
    assert validate(p).ok
    assert validate(p, strict=True).kinds() == {"boundary corner"}
    q = patch_of(permissive, [Placement(C, 0, 0, 0), Placement(C, 0, 1, 0)], Window(0, 0, 1, 0), CLOSED)
    assert validate(q, strict=True).ok
