"""Property suites: the engine against brute force, and its symmetries."""

import random

import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

import oracle
from trilocrab.engine import (
    ALL,
    CLOSED,
    COUNT,
    FIRST,
    OPEN,
    REFUTE,
    Patch,
    Placement,
    PlacementError,
    Window,
    canonical,
    legal_completions,
    patch_of,
    propagate,
    replay,
    replay_tree,
    rulebook,
    search_region,
)

T, C = "TRILOBITE", "CRAB"
ORACLE_CASES = 10_000
TARGETS_PER_EXAMPLE = 4


@st.composite
def windows_from_hierarchy(draw, level, junk=True):
    """A window cut from a real tiling, with some tiles removed and perhaps a stray tile added."""
    r = level(3)
    w = r.window
    wd, ht = draw(st.integers(2, 7)), draw(st.integers(2, 7))
    x0 = draw(st.integers(w.x0, w.x1 - wd + 1))
    y0 = draw(st.integers(w.y0, w.y1 - ht + 1))
    win = Window(x0, y0, x0 + wd - 1, y0 + ht - 1)
    rb = rulebook(r.atlas)
    inside = [pl for pl in canonical(r.placement_set()) if all(c in win for c, _ in rb.cells_of(pl))]
    keep = [pl for pl in inside if draw(st.booleans())]
    if junk and draw(st.integers(0, 3)) == 0:
        extra = Placement(draw(st.sampled_from((T, C))), draw(st.integers(0, 3)),
                          draw(st.integers(x0, x0 + wd - 1)), draw(st.integers(y0, y0 + ht - 1)))
        if all(c in win for c, _ in rb.cells_of(extra)):
            try:
                patch_of(r.atlas, keep + [extra])
                keep.append(extra)
            except PlacementError:
                pass
    policy = draw(st.sampled_from((OPEN, CLOSED)))
    return patch_of(r.atlas, keep, win, policy)


def test_legal_completions_match_brute_force(atlas, level):
    seen = {"cases": 0, "nonempty": 0}

    @settings(max_examples=ORACLE_CASES // TARGETS_PER_EXAMPLE, deadline=None,
              suppress_health_check=list(HealthCheck))
    @given(windows_from_hierarchy(level), st.randoms(use_true_random=False))
    def check(p, rnd):
        w = p.window
        cells = [c for c in w.cells()]
        for _ in range(TARGETS_PER_EXAMPLE):
            c = rnd.choice(cells)
            got = set(legal_completions(p, c))
            want = oracle.legal_completions(atlas, list(p.placement_set()), w, p.policy, c)
            assert got == want, (c, p.to_json())
            seen["cases"] += 1
            seen["nonempty"] += bool(got)

    check()
    assert seen["cases"] >= ORACLE_CASES
    # the comparison is not dominated by trivial empty answers
    assert seen["nonempty"] >= ORACLE_CASES // 4


@settings(max_examples=150, deadline=None, suppress_health_check=list(HealthCheck))
@given(st.data())
def test_search_all_matches_brute_force(level, data):
    atlas = level(1).atlas
    p = data.draw(windows_from_hierarchy(level, junk=False))
    w = p.window
    cov = set(p.cell_index)
    free = [c for c in w.cells() if c not in cov]
    region = free[: data.draw(st.integers(0, 5))]
    q = p.with_window(None, OPEN)  # open search: unknown cells beyond the region act as wildcards
    res = search_region(q, region, ALL)
    got = {pp.placement_set() for pp in res.patches}
    want = oracle.all_completions(atlas, list(p.placement_set()), None, OPEN, region)
    assert got == want


@settings(max_examples=60, deadline=None, suppress_health_check=list(HealthCheck))
@given(st.data())
def test_refute_agrees_with_all(level, data):
    p = data.draw(windows_from_hierarchy(level))
    region = [c for c in p.window.cells() if c not in p.cell_index][: data.draw(st.integers(1, 8))]
    everything = search_region(p, region, ALL, budget=10**5)
    counted = search_region(p, region, COUNT, budget=10**5)
    ref = search_region(p, region, REFUTE, budget=10**5)
    first = search_region(p, region, FIRST, budget=10**5)
    assert counted.count == everything.count == len(everything.patches)
    assert (ref.status == "REFUTED") == (everything.count == 0)
    assert (first.status == "NONE") == (everything.count == 0)
    if everything.count:
        assert first.patches[0] in everything.patches
        assert ref.patches[0] in everything.patches
    else:
        assert replay_tree(p, ref.proof, region)


@settings(max_examples=80, deadline=None, suppress_health_check=list(HealthCheck))
@given(st.data())
def test_propagation_is_confluent(level, data):
    p = data.draw(windows_from_hierarchy(level))
    base, trace = propagate(p)
    for seed in range(3):
        other, tr2 = propagate(p, order=random.Random(data.draw(st.integers(0, 10**6)) + seed))
        assert (trace.contradiction is None) == (tr2.contradiction is None)
        if trace.contradiction is None:
            assert other.placement_set() == base.placement_set()


@settings(max_examples=80, deadline=None, suppress_health_check=list(HealthCheck))
@given(st.data())
def test_propagation_replays(level, data):
    p = data.draw(windows_from_hierarchy(level))
    q, trace = propagate(p)
    if trace.contradiction is None:
        assert replay(p.atlas, trace, p.window, p.policy) == q


def _rotate_patch(p: Patch, r: int) -> Patch:
    w = p.window
    corners = [(w.x0, w.y0), (w.x1, w.y1)]
    from trilocrab.grid import rotate_point

    rc = [rotate_point(c, r) for c in corners]
    xs, ys = [c[0] for c in rc], [c[1] for c in rc]
    win = Window(min(xs), min(ys), max(xs), max(ys))
    return patch_of(p.atlas, [pl.rotated(r) for pl in p.placement_set()], win, p.policy)


@settings(max_examples=120, deadline=None, suppress_health_check=list(HealthCheck))
@given(st.data())
def test_c4_equivariance(level, data):
    from trilocrab.grid import rotate_point

    p = data.draw(windows_from_hierarchy(level))
    r = data.draw(st.integers(1, 3))
    q = _rotate_patch(p, r)
    c = data.draw(st.sampled_from(p.window.cells()))
    a = {pl.rotated(r) for pl in legal_completions(p, c)}
    b = set(legal_completions(q, rotate_point(c, r)))
    assert a == b
    pa, ta = propagate(p)
    pb, tb = propagate(q)
    assert (ta.contradiction is None) == (tb.contradiction is None)
    if ta.contradiction is None:
        assert {pl.rotated(r) for pl in pa.placement_set()} == pb.placement_set()
    region = [cc for cc in p.window.cells() if cc not in p.cell_index][:6]
    na = search_region(p, region, COUNT, budget=10**5)
    nb = search_region(q, [rotate_point(cc, r) for cc in region], COUNT, budget=10**5)
    assert na.count == nb.count


@pytest.mark.parametrize("r", [1, 2, 3])
def test_rotated_hierarchy_is_valid(level, r):
    from trilocrab.engine import validate

    assert validate(_rotate_patch(level(2), r)).ok
