"""Lemma suites: parsing, wildcard expansion and machine verification.

A lemma is a seed configuration drawn as a glyph grid plus a claim about it:

``forbidden``     every concrete expansion of the seed is impossible;
``alternatives``  the frontier cells ``?`` can only be completed in the listed ways;
``classified``    the first trilobite of the seed only takes the listed neighbour codes.

A candidate configuration is *realizable* when it occurs (up to rotation and
translation) in the level-4 hierarchy patch, and *refuted at radius r* when no
completion exists of the closed window reaching r cells beyond it.  Verification
never relies on anything weaker than those two facts; a candidate that is
neither gives an inconclusive result.
"""

from __future__ import annotations

import itertools
import multiprocessing as mp
from dataclasses import dataclass, field
from pathlib import Path

from .atlas import CRAB, TILE_NAMES, TRILOBITE, Atlas
from .engine import (
    CLOSED,
    REFUTE,
    Patch,
    Placement,
    PlacementError,
    Window,
    canonical,
    classify_trilobite,
    flatten_tree,
    legal_completions,
    place,
    patch_of,
    rulebook,
    search_region,
    tree_stats,
)

VERIFIED, FAILED, INCONCLUSIVE = "VERIFIED", "FAILED", "INCONCLUSIVE"
FORBIDDEN, ALTERNATIVES, CLASSIFIED = "forbidden", "alternatives", "classified"
DEFAULT_RADII = (1, 2, 3)
DEFAULT_BUDGET = 200_000

# glyph meanings understood by the parser
FREE, FRONTIER, COVERED = "FREE", "FRONTIER", "COVERED"
ANY_TRILOBITE, COVER_TRILOBITE, ANY_CRAB, ANY = "ANY_TRILOBITE", "COVER_TRILOBITE", "ANY_CRAB", "ANY"
WILDCARDS = (ANY_TRILOBITE, COVER_TRILOBITE, ANY_CRAB, ANY)


class SuiteError(ValueError):
    def __init__(self, msg: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {msg}" if line else msg)


@dataclass(frozen=True)
class Pattern:
    """Fixed placements, wildcard cells (cell -> wildcard kind) and frontier cells."""

    fixed: tuple[Placement, ...]
    wild: tuple[tuple[tuple[int, int], str], ...] = ()
    frontier: tuple[tuple[int, int], ...] = ()


@dataclass
class Lemma:
    name: str
    expect: str
    cases: list[Pattern]
    alternatives: list[frozenset] = field(default_factory=list)
    codes: frozenset = frozenset()
    radii: tuple[int, ...] = DEFAULT_RADII
    title: str = ""
    chain: bool = False


@dataclass
class Suite:
    lemmas: list[Lemma]
    legend: dict[str, tuple]


# ---------------------------------------------------------------------------------------
# parsing


def _glyph_meaning(tokens: list[str], lineno: int) -> tuple:
    kind = tokens[0]
    if kind in (FREE, FRONTIER, COVERED) + WILDCARDS and len(tokens) == 1:
        return (kind,)
    if kind in TILE_NAMES and len(tokens) == 2 and tokens[1] in "0123":
        return (kind, int(tokens[1]))
    raise SuiteError(f"bad legend entry {' '.join(tokens)!r}", lineno)


def _read_grid(rows: list[str], legend: dict, origin: tuple[int, int], lineno: int):
    fixed, wild, frontier, covered = [], [], [], []
    h = len(rows)
    for i, row in enumerate(rows):
        y = origin[1] + (h - 1 - i)
        for j, ch in enumerate(row):
            x = origin[0] + j
            if ch not in legend:
                raise SuiteError(f"glyph {ch!r} is not in the legend", lineno + i)
            m = legend[ch]
            if m[0] == FREE:
                continue
            if m[0] == FRONTIER:
                frontier.append((x, y))
            elif m[0] == COVERED:
                covered.append((x, y))
            elif m[0] in WILDCARDS:
                wild.append(((x, y), m[0]))
            else:
                fixed.append(Placement(m[0], m[1], x, y))
    return fixed, wild, frontier, covered


def parse_suite(text: str) -> Suite:
    legend: dict[str, tuple] = {}
    lemmas: list[Lemma] = []
    cur: dict | None = None
    grid_rows: list[str] | None = None
    grid_start = 0
    grid_target = None
    origin = (0, 0)

    def finish_grid():
        nonlocal grid_rows
        fixed, wild, frontier, covered = _read_grid(grid_rows, legend, origin, grid_start)
        if grid_target == "case":
            cur["cases"].append(Pattern(tuple(canonical(fixed)), tuple(sorted(wild)), tuple(sorted(frontier))))
            cur["covered"].append(covered)
        else:
            cur["alts"].append((fixed, wild, frontier, grid_start))
        grid_rows = None

    def finish_lemma():
        if cur is None:
            return
        if not cur["cases"]:
            raise SuiteError(f"lemma {cur['name']} has no seed grid", cur["line"])
        if cur["expect"] is None:
            raise SuiteError(f"lemma {cur['name']} has no 'expect' line", cur["line"])
        alts = []
        if cur["expect"] == ALTERNATIVES:
            front = set(cur["cases"][0].frontier)
            if not front:
                raise SuiteError(f"lemma {cur['name']} marks no frontier cells", cur["line"])
            seed = set(cur["cases"][0].fixed)
            for fixed, wild, frontier, ln in cur["alts"]:
                if wild or frontier:
                    raise SuiteError("alternative grids must be fully concrete", ln)
                extra = frozenset(p for p in fixed if p not in seed)
                alts.append(extra)
        lemmas.append(Lemma(
            name=cur["name"], expect=cur["expect"], cases=cur["cases"], alternatives=alts,
            codes=frozenset(cur["codes"]), radii=tuple(cur["radii"]), title=cur["title"], chain=cur["chain"],
        ))

    lines = text.splitlines()
    for lineno, raw in enumerate(lines, start=1):
        line = raw.rstrip()
        if grid_rows is None and line.lstrip().startswith("#"):
            continue
        if grid_rows is not None:
            if line.strip() == "end":
                finish_grid()
            else:
                grid_rows.append(line.strip())
            continue
        if not line.strip():
            continue
        toks = line.split()
        key = toks[0]
        if key.startswith("[") and line.strip().endswith("]"):
            head = line.strip()[1:-1].split()
            if len(head) != 2 or head[0] != "lemma":
                raise SuiteError(f"unknown section {line.strip()}", lineno)
            finish_lemma()
            cur = {"name": head[1], "expect": None, "cases": [], "alts": [], "codes": [], "covered": [],
                   "radii": list(DEFAULT_RADII), "title": "", "line": lineno, "chain": False}
            origin = (0, 0)
            continue
        if cur is None:
            if key == "legend" and len(toks) >= 3 and len(toks[1]) == 1:
                legend[toks[1]] = _glyph_meaning(toks[2:], lineno)
                continue
            raise SuiteError(f"unexpected line before the first lemma: {line.strip()!r}", lineno)
        if key == "expect":
            if len(toks) != 2 or toks[1] not in (FORBIDDEN, ALTERNATIVES, CLASSIFIED):
                raise SuiteError("expect must be forbidden, alternatives or classified", lineno)
            cur["expect"] = toks[1]
        elif key == "radii":
            try:
                cur["radii"] = sorted({int(t) for t in toks[1:]})
            except ValueError:
                raise SuiteError("radii must be integers", lineno) from None
            if not cur["radii"] or cur["radii"][0] < 0:
                raise SuiteError("radii must be non-negative", lineno)
        elif key == "title":
            cur["title"] = line.split(None, 1)[1] if len(toks) > 1 else ""
        elif key == "codes":
            cur["codes"] = toks[1:]
        elif key == "chain":
            cur["chain"] = True
        elif key == "origin" and len(toks) == 3:
            origin = (int(toks[1]), int(toks[2]))
        elif key in ("case", "alt"):
            grid_rows = []
            grid_start = lineno + 1
            grid_target = "case" if key == "case" else "alt"
        else:
            raise SuiteError(f"unrecognised line {line.strip()!r}", lineno)
    if grid_rows is not None:
        raise SuiteError("grid not closed with 'end'", len(lines))
    finish_lemma()
    names = [lm.name for lm in lemmas]
    if len(set(names)) != len(names):
        raise SuiteError("duplicate lemma name")
    return Suite(lemmas, legend)


def load_suite(path) -> Suite:
    return parse_suite(Path(path).read_text())


def bundled_suite_path() -> Path:
    from importlib.resources import files

    return Path(str(files("trilocrab") / "data" / "lemmas.suite"))


# ---------------------------------------------------------------------------------------
# wildcard expansion


def _options(atlas: Atlas, cell, kind: str) -> list[Placement]:
    x, y = cell
    rb = rulebook(atlas)
    if kind == ANY_TRILOBITE:
        return [Placement(TRILOBITE, r, x, y) for r in range(4)]
    if kind == ANY_CRAB:
        return [Placement(CRAB, r, x, y) for r in range(4)]
    out = []
    kinds = (TRILOBITE,) if kind == COVER_TRILOBITE else TILE_NAMES
    for k in kinds:
        for r in range(4):
            for dx, dy, _ in rb.geom[(k, r)]:
                out.append(Placement(k, r, x - dx, y - dy))
    return canonical(out)


def expand_wildcards(atlas: Atlas, pattern: Pattern) -> list[tuple[Placement, ...]]:
    """Concrete seeds, in canonical order.  Combinations whose tiles overlap are dropped;
    combinations with a disallowed corner are kept (they fall at the first radius)."""
    base = patch_of(atlas, pattern.fixed)
    choices = []
    for cell, kind in pattern.wild:
        opts = [pl for pl in _options(atlas, cell, kind)]
        choices.append(opts)
    out = []
    for combo in itertools.product(*choices):
        p = base
        try:
            for pl in combo:
                if pl in p.placement_set():
                    continue
                bad = p._board().fits(pl)
                if bad is not None:
                    raise PlacementError(*bad)
                p = patch_of(atlas, list(p.placement_set()) + [pl])
        except PlacementError:
            continue
        out.append(tuple(canonical(p.placement_set())))
    uniq = sorted(set(out), key=lambda s: [pl.sort_key() for pl in s])
    return uniq


# ---------------------------------------------------------------------------------------
# realizability


def reference_patch(atlas: Atlas, level: int = 4) -> Patch | None:
    """inflate(single trilobite, level), or None when the atlas cannot produce a valid one
    (then nothing counts as realizable)."""
    key = ("reference", level)
    if key not in atlas._cache:
        from .engine import validate
        from .hierarchy import HierarchyError, inflate

        seed = patch_of(atlas, [Placement(TRILOBITE, 0, 0, 0)])
        try:
            ref = inflate(seed, atlas, level)
        except (HierarchyError, PlacementError, KeyError):
            ref = None
        if ref is not None and not validate(ref).ok:
            ref = None
        atlas._cache[key] = ref
    return atlas._cache[key]


def _ref_index(atlas: Atlas) -> tuple[set, dict]:
    key = ("reference-index",)
    if key not in atlas._cache:
        ref = reference_patch(atlas)
        pls = ref.placement_set() if ref is not None else frozenset()
        by_kr: dict = {}
        for pl in canonical(pls):
            by_kr.setdefault((pl.kind, pl.rot), []).append(pl)
        atlas._cache[key] = (pls, by_kr)
    return atlas._cache[key]


def find_occurrence(atlas: Atlas, config) -> tuple[int, int, int] | None:
    """(rotation, dx, dy) carrying the configuration into the reference patch, if any."""
    config = canonical(config)
    if not config:
        return (0, 0, 0)
    pls, by_kr = _ref_index(atlas)
    for r in range(4):
        rot = [pl.rotated(r) for pl in config]
        first = rot[0]
        for cand in by_kr.get((first.kind, first.rot), []):
            dx, dy = cand.x - first.x, cand.y - first.y
            if all(q.translated(dx, dy) in pls for q in rot):
                return (r, dx, dy)
    return None


def congruent_subset(small, big) -> bool:
    """Is a rotated and translated copy of ``small`` contained in ``big``?"""
    small = canonical(small)
    bigset = set(big)
    if not small:
        return True
    for r in range(4):
        rot = [pl.rotated(r) for pl in small]
        f = rot[0]
        for cand in bigset:
            if cand.kind != f.kind or cand.rot != f.rot:
                continue
            dx, dy = cand.x - f.x, cand.y - f.y
            if all(q.translated(dx, dy) in bigset for q in rot):
                return True
    return False


# ---------------------------------------------------------------------------------------
# verification


@dataclass
class CaseResult:
    seed: tuple[Placement, ...]
    status: str  # REFUTED, REDUCED, REALIZABLE, SURVIVES, BUDGET_EXHAUSTED
    radius: int | None = None
    nodes: int = 0
    reduced_to: int | None = None
    witness: tuple | None = None
    proof_leaves: int = 0
    proof_depth: int = 0
    trace: list | None = None

    def to_json(self) -> dict:
        d = {"seed": [pl.to_json() for pl in self.seed], "status": self.status, "radius": self.radius,
             "nodes": self.nodes}
        if self.reduced_to is not None:
            d["reduced_to"] = self.reduced_to
        if self.witness is not None:
            d["witness"] = {"rot": self.witness[0], "dx": self.witness[1], "dy": self.witness[2]}
        if self.status == "REFUTED":
            d["proof"] = {"leaves": self.proof_leaves, "depth": self.proof_depth}
        return d


@dataclass
class LemmaResult:
    name: str
    expect: str
    status: str
    cases: list[CaseResult] = field(default_factory=list)
    found: list | None = None  # alternatives or codes actually established
    detail: str = ""
    vacuous: bool = False

    def to_json(self) -> dict:
        d = {"name": self.name, "expect": self.expect, "status": self.status,
             "cases": [c.to_json() for c in self.cases]}
        if self.found is not None:
            d["found"] = self.found
        if self.detail:
            d["detail"] = self.detail
        if self.vacuous:
            d["vacuous"] = True
        radii = [c.radius for c in self.cases if c.status == "REFUTED"]
        if radii:
            d["closing_radius"] = max(radii)
        d["reduced"] = sorted(i for i, c in enumerate(self.cases) if c.status == "REDUCED")
        return d


def _window_around(pls, r: int) -> Window:
    p_cells = [c for pl in pls for c in _cells_of(pl)]
    xs = [c[0] for c in p_cells]
    ys = [c[1] for c in p_cells]
    return Window(min(xs) - r, min(ys) - r, max(xs) + r, max(ys) + r)


_RB = {}


def _cells_of(pl: Placement):
    rb = _RB.get("rb")
    return [c for c, _ in rb.cells_of(pl)]


def refute_case(atlas: Atlas, seed, radii, budget: int, keep_trace: bool = False) -> CaseResult:
    """Try each radius in turn; the first one with no completion closes the case."""
    _RB["rb"] = rulebook(atlas)
    seed = tuple(canonical(seed))
    nodes = 0
    last = "SURVIVES"
    for r in radii:
        w = _window_around(seed, r)
        try:
            p = patch_of(atlas, seed, w, CLOSED)
        except PlacementError:
            return CaseResult(seed, "REFUTED", r, nodes)
        out = search_region(p, None, REFUTE, budget=max(budget - nodes, 0))
        nodes += out.nodes
        if out.status == "REFUTED":
            leaves, depth = tree_stats(out.proof)
            tr = flatten_tree(out.proof).to_json() if keep_trace else None
            return CaseResult(seed, "REFUTED", r, nodes, proof_leaves=leaves, proof_depth=depth, trace=tr)
        if out.status == "BUDGET_EXHAUSTED":
            return CaseResult(seed, "BUDGET_EXHAUSTED", r, nodes)
        last = "SURVIVES"
    return CaseResult(seed, last, radii[-1] if radii else None, nodes)


def _case_job(args):
    atlas_text, seed, radii, budget, mode = args
    atlas = _atlas_from_text(atlas_text)
    if mode == "realize-or-refute":
        occ = find_occurrence(atlas, seed)
        if occ is not None:
            return CaseResult(tuple(canonical(seed)), "REALIZABLE", None, 0, witness=occ)
    return refute_case(atlas, seed, radii, budget)


_ATLAS_CACHE: dict = {}


def _atlas_from_text(text: str) -> Atlas:
    a = _ATLAS_CACHE.get(text)
    if a is None:
        from .atlas import load_atlas

        a = load_atlas(text)
        _ATLAS_CACHE[text] = a
    return a


def _run_jobs(atlas: Atlas, jobs: list[tuple], workers: int) -> list[CaseResult]:
    _ATLAS_CACHE.setdefault(atlas.source, atlas)
    full = [(atlas.source,) + j for j in jobs]
    if workers <= 1 or len(full) <= 1:
        return [_case_job(j) for j in full]
    ctx = mp.get_context("fork") if "fork" in mp.get_all_start_methods() else mp.get_context()
    with ctx.Pool(workers) as pool:
        return pool.map(_case_job, full, chunksize=1)


def _frontier_candidates(atlas: Atlas, seed, frontier) -> list[frozenset]:
    """Every way to cover the frontier cells by successive legal placements, as sets of
    new placements.  This is the product of legal completions, cell by cell."""
    base = patch_of(atlas, seed)
    out: set[frozenset] = set()

    def grow(p: Patch, added: tuple):
        todo = [c for c in frontier if p.placement_at(c) is None]
        if not todo:
            out.add(frozenset(added))
            return
        for pl in legal_completions(p, todo[0]):
            try:
                q = place(p, pl)
            except PlacementError:
                continue
            grow(q, added + (pl,))

    grow(base, ())
    return sorted(out, key=lambda s: [pl.sort_key() for pl in canonical(s)])


def _alt_json(s) -> list:
    return [pl.to_json() for pl in canonical(s)]


def run_lemma(lemma: Lemma, atlas: Atlas, budget: int = DEFAULT_BUDGET, workers: int = 1) -> LemmaResult:
    if lemma.expect == FORBIDDEN:
        return _run_forbidden(lemma, atlas, budget, workers)
    if lemma.expect == ALTERNATIVES:
        return _run_alternatives(lemma, atlas, budget, workers)
    return _run_classified(lemma, atlas, budget, workers)


def _run_forbidden(lemma: Lemma, atlas: Atlas, budget: int, workers: int) -> LemmaResult:
    seeds: list[tuple] = []
    for pat in lemma.cases:
        seeds += expand_wildcards(atlas, pat)
    results: list[CaseResult | None] = [None] * len(seeds)
    jobs, where = [], []
    for i, s in enumerate(seeds):
        # a later seed containing a copy of an earlier one is closed by reduction
        for j in range(i):
            if congruent_subset(seeds[j], s) and len(seeds[j]) < len(s):
                results[i] = CaseResult(s, "REDUCED", reduced_to=j)
                break
        if results[i] is None:
            jobs.append((s, lemma.radii, budget, "realize-or-refute"))
            where.append(i)
    for i, res in zip(where, _run_jobs(atlas, jobs, workers)):
        results[i] = res
    # reductions only count when their target really was refuted
    for r in results:
        if r.status == "REDUCED" and results[r.reduced_to].status not in ("REFUTED", "REDUCED"):
            r.status = "SURVIVES"
    status = VERIFIED
    statuses = {r.status for r in results}
    if "REALIZABLE" in statuses:
        status = FAILED
    elif "BUDGET_EXHAUSTED" in statuses or "SURVIVES" in statuses:
        status = FAILED if "SURVIVES" in statuses and "BUDGET_EXHAUSTED" not in statuses else INCONCLUSIVE
    return LemmaResult(lemma.name, lemma.expect, status, results, vacuous=not seeds,
                       detail="no concrete seeds" if not seeds else "")


def _run_alternatives(lemma: Lemma, atlas: Atlas, budget: int, workers: int) -> LemmaResult:
    pat = lemma.cases[0]
    seeds = expand_wildcards(atlas, pat)
    if len(seeds) != 1:
        return LemmaResult(lemma.name, lemma.expect, INCONCLUSIVE, detail="alternatives lemmas need a concrete seed")
    seed = seeds[0]
    cands = _frontier_candidates(atlas, seed, pat.frontier)
    jobs = [(tuple(seed) + tuple(c), lemma.radii, budget, "realize-or-refute") for c in cands]
    res = _run_jobs(atlas, jobs, workers)
    real = {c for c, r in zip(cands, res) if r.status == "REALIZABLE"}
    unresolved = [c for c, r in zip(cands, res) if r.status not in ("REALIZABLE", "REFUTED")]
    listed = set(lemma.alternatives)
    found = [_alt_json(c) for c in cands if c in real]
    if unresolved:
        status = INCONCLUSIVE
        detail = f"{len(unresolved)} candidate(s) neither realized nor refuted"
        if real - listed or (listed - set(cands)):
            status, detail = FAILED, "listed alternatives differ from the realizable ones"
    elif real == listed:
        status, detail = VERIFIED, f"{len(real)} alternative(s)"
    else:
        status = FAILED
        detail = f"realizable {len(real)}, listed {len(listed)}, missing {len(listed - real)}, extra {len(real - listed)}"
    return LemmaResult(lemma.name, lemma.expect, status, res, found=found, detail=detail)


def _run_classified(lemma: Lemma, atlas: Atlas, budget: int, workers: int) -> LemmaResult:
    pat = lemma.cases[0]
    seeds = expand_wildcards(atlas, pat)
    rb = rulebook(atlas)
    results, codes_seen, unresolved = [], set(), 0
    for seed in seeds:
        tri = next((pl for pl in seed if pl.kind == TRILOBITE), None)
        if tri is None:
            return LemmaResult(lemma.name, lemma.expect, INCONCLUSIVE, detail="seed has no trilobite")
        tips = [(tri.x + tx, tri.y + ty) for tx, ty in rb.tips[tri.rot]]
        cands = _frontier_candidates(atlas, seed, tips)
        jobs = [(tuple(seed) + tuple(c), lemma.radii, budget, "realize-or-refute") for c in cands]
        res = _run_jobs(atlas, jobs, workers)
        for c, r in zip(cands, res):
            p = patch_of(atlas, tuple(seed) + tuple(c))
            pid = next(i for i, pl in p.placements.items() if pl == tri)
            code = classify_trilobite(p, pid)
            if r.status == "REALIZABLE":
                codes_seen.add(code)
            elif r.status != "REFUTED":
                unresolved += 1
        results += res
    found = sorted(codes_seen)
    if not codes_seen <= set(lemma.codes):
        status, detail = FAILED, f"realizable codes {found} exceed {sorted(lemma.codes)}"
    elif unresolved:
        status, detail = INCONCLUSIVE, f"{unresolved} tip completion(s) unresolved"
    else:
        status, detail = VERIFIED, f"codes {found}"
    return LemmaResult(lemma.name, lemma.expect, status, results, found=found, detail=detail)


def run_chain_lemma(lemma: Lemma, atlas: Atlas, budget: int = DEFAULT_BUDGET, workers: int = 1) -> LemmaResult:
    """Chains grow from TTO/OTT trilobites.  When every such seed is refuted there is no
    chain-bearing window at all, and the chain claim holds vacuously (flagged as such)."""
    res = _run_forbidden(lemma, atlas, budget, workers)
    if res.status == VERIFIED:
        res.vacuous = True
        res.detail = "no chain-bearing window exists: every chain seed is refuted"
        return res
    # some chain seed survives: look for real chains in hierarchy windows
    from .hierarchy import detect_chains

    ref = reference_patch(atlas)
    chains = detect_chains(ref) if ref is not None else []
    if chains:
        res.detail = f"{len(chains)} chain(s) in the reference patch"
    return res


@dataclass
class SuiteReport:
    status: str
    results: list[LemmaResult]
    vacuous: bool = False

    def to_json(self) -> dict:
        return {"status": self.status, "vacuous": self.vacuous, "lemmas": [r.to_json() for r in self.results]}


def run_all(suite: Suite, atlas: Atlas, budget: int = DEFAULT_BUDGET, workers: int = 1) -> SuiteReport:
    """Run every lemma in file order.  An empty suite passes, flagged as vacuous."""
    if not suite.lemmas:
        return SuiteReport(VERIFIED, [], vacuous=True)
    results = []
    for lm in suite.lemmas:
        runner = run_chain_lemma if lm.chain else run_lemma
        results.append(runner(lm, atlas, budget, workers))
    st = {r.status for r in results}
    status = FAILED if FAILED in st else INCONCLUSIVE if INCONCLUSIVE in st else VERIFIED
    return SuiteReport(status, results)
