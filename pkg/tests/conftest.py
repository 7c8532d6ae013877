import functools
import itertools

import pytest

from trilocrab.atlas import load_atlas, load_bundled_atlas
from trilocrab.engine import Placement, patch_of
from trilocrab.hierarchy import inflate

T, C = "TRILOBITE", "CRAB"


def permissive_atlas_text(parity: bool = True) -> str:
    """One label besides BLANK; every corner allowed except four uncovered cells."""
    lines = ["name permissive", "[decorations]", "label BLANK BLANK", "label A A", "[tile TRILOBITE]"]
    lines += [f"cell {x} {y}" for x in (0, 1) for y in (0, 1)]
    lines += [f"mark {x} {y} A" for x in range(3) for y in range(3)]
    lines += ["tip 2 1", "tip 2 2", "tip 1 2", "[tile CRAB]", "cell 0 0"]
    lines += [f"mark {x} {y} A" for x in (0, 1) for y in (0, 1)]
    lines += ["[corner-rules]"]
    for t in itertools.product(("BLANK", "A"), repeat=4):
        if t != ("BLANK",) * 4:
            lines.append("allow " + " ".join(t))
    lines += ["[parity]", "segments axis"]
    if parity:
        lines += [f"pair {a} {b} {x} {y}" for a in range(4) for b in range(4) for x in (0, 1) for y in (0, 1)]
    return "\n".join(lines) + "\n"


@functools.lru_cache(maxsize=None)
def _atlas():
    return load_bundled_atlas()


@functools.lru_cache(maxsize=None)
def _level(k):
    a = _atlas()
    return inflate(patch_of(a, [Placement(T, 0, 0, 0)]), a, k)


@pytest.fixture(scope="session")
def atlas():
    return _atlas()


@pytest.fixture(scope="session")
def level():
    return _level


@pytest.fixture(scope="session")
def permissive():
    return load_atlas(permissive_atlas_text())


def chain_patch(atlas, n: int = 6, extra=(), pad: int = 0):
    """A staircase of rotation-0 trilobites, each at the middle tip of the last,
    filled out with crabs.  Under the permissive atlas this is a legal patch that
    carries one spanning chain with step (2, 1)."""
    from trilocrab.engine import CLOSED, Window

    tris = [Placement(T, 0, 2 * i, i) for i in range(n)] + list(extra)
    cov = {(t.x + dx, t.y + dy) for t in tris for dx in (0, 1) for dy in (0, 1)}
    w = Window(0, -2, 2 * n - 1 + pad, n + 2)
    crabs = [Placement(C, 0, x, y) for (x, y) in w.cells() if (x, y) not in cov]
    return patch_of(atlas, tris + crabs, w, CLOSED)


# -- acceptance summary ------------------------------------------------------------------------
# Acceptance tests call ``record`` with one line each; the lines are repeated at the end of the run.
# Property-suite outcomes are remembered so the acceptance check can reuse them.

ACCEPTANCE: dict[int, str] = {}
PROPERTY_OUTCOMES: dict[str, str] = {}


def record(n: int, ok: bool, detail: str) -> None:
    ACCEPTANCE[n] = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"


def pytest_runtest_logreport(report):
    if report.nodeid.startswith("tests/test_properties.py") and report.when == "call":
        PROPERTY_OUTCOMES[report.nodeid] = report.outcome


def pytest_collection_modifyitems(items):
    # acceptance checks go last so they can reuse the property-suite outcomes
    items.sort(key=lambda it: it.nodeid.startswith("tests/test_acceptance.py"))


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
