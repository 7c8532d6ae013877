import pytest

from conftest import C, T
from trilocrab.engine import (
    ALL,
    CLOSED,
    COUNT,
    FIRST,
    OPEN,
    REFUTE,
    Placement,
    Window,
    patch_of,
    replay_tree,
    search_region,
    tree_from_json,
    tree_to_json,
    validate,
)


def test_modes_agree(atlas):
    p = patch_of(atlas, [Placement(T, 0, 0, 0)], Window(-1, -1, 2, 2), CLOSED)
    every = search_region(p, None, ALL)
    assert every.status == "COMPLETE" and every.count == len(every.patches) > 0
    assert search_region(p, None, COUNT).count == every.count
    first = search_region(p, None, FIRST)
    assert first.status == "FOUND" and first.patches[0] in every.patches
    assert search_region(p, None, REFUTE).status == "NOT_REFUTED"
    for q in every.patches:
        assert validate(q).ok


def test_results_are_deterministic(atlas):
    p = patch_of(atlas, [Placement(T, 1, 0, 0)], Window(-2, -1, 2, 2), CLOSED)
    a = [q.dumps() for q in search_region(p, None, ALL).patches]
    b = [q.dumps() for q in search_region(p, None, ALL).patches]
    assert a == b


def test_refutation_carries_a_checkable_proof(atlas):
    p = patch_of(atlas, [Placement(T, 0, 0, 0), Placement(T, 0, 2, 0)], Window(-1, -1, 4, 2), CLOSED)
    res = search_region(p, None, REFUTE)
    assert res.refuted and res.proof is not None
    assert replay_tree(p, res.proof)
    assert replay_tree(p, tree_from_json(tree_to_json(res.proof)))


def test_tampered_proof_is_rejected(atlas):
    p = patch_of(atlas, [Placement(T, 0, 0, 0), Placement(T, 0, 2, 0)], Window(-1, -1, 4, 2), CLOSED)
    res = search_region(p, None, REFUTE)
    q = patch_of(atlas, [Placement(T, 0, 0, 0)], Window(-1, -1, 4, 2), CLOSED)
    # the same tree does not close a satisfiable problem
    assert not replay_tree(q, res.proof)


def test_budget_is_not_refutation(atlas):
    p = patch_of(atlas, [Placement(T, 0, 0, 0)], Window(-3, -3, 4, 4), CLOSED)
    res = search_region(p, None, REFUTE, budget=1)
    assert res.status == "BUDGET_EXHAUSTED" and not res.refuted


def test_empty_region(atlas):
    p = patch_of(atlas, [])
    assert search_region(p, [], ALL).count == 1


def test_closed_region_must_lie_in_window(atlas):
    p = patch_of(atlas, [], Window(0, 0, 1, 1), CLOSED)
    with pytest.raises(ValueError):
        search_region(p, [(5, 5)], ALL)


def test_open_search_lets_tiles_leave_nothing_uncovered(atlas):
    p = patch_of(atlas, [Placement(C, 0, 0, 0)], None, OPEN)
    res = search_region(p, [(1, 0)], ALL)
    assert res.count > 0
    for q in res.patches:
        assert (1, 0) in q.cell_index


def test_unknown_mode(atlas):
    with pytest.raises(ValueError):
        search_region(patch_of(atlas, []), [], "SOME")
