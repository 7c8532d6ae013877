"""Command line interface.

Exit codes: 0 pass, 1 verified failure, 2 input error, 3 inconclusive (budget).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .atlas import TRILOBITE, AtlasError, default_atlas_path, load_atlas_file, validate_atlas
from .engine import (
    ALL,
    COUNT,
    FIRST,
    REFUTE,
    DeductionTrace,
    Placement,
    PlacementError,
    TorusSpec,
    Window,
    patch_from_json,
    patch_of,
    search_region,
    torus_search,
    torus_sweep,
    tree_to_json,
    validate,
)
from .hierarchy import HierarchyError, compose, detect_chains, hierarchy_report, inflate, shift_halfplane
from .lemmas import (
    DEFAULT_BUDGET,
    FAILED,
    INCONCLUSIVE,
    VERIFIED,
    SuiteError,
    bundled_suite_path,
    load_suite,
    refute_case,
    run_all,
)
from .render import render

EXIT_PASS, EXIT_FAIL, EXIT_INPUT, EXIT_INCONCLUSIVE = 0, 1, 2, 3
DEFAULT_TORUS_AREA = 16


class InputError(Exception):
    pass


def _atlas(args):
    try:
        return load_atlas_file(args.atlas)
    except FileNotFoundError as exc:
        raise InputError(f"atlas file not found: {exc.filename}") from None
    except AtlasError as exc:
        raise InputError(f"atlas error: {exc}") from None


def _read_json(path: str) -> dict:
    try:
        text = sys.stdin.read() if path == "-" else Path(path).read_text()
        return json.loads(text)
    except FileNotFoundError:
        raise InputError(f"file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON ({exc})") from None


def _load_patch(atlas, path: str | None):
    if path is None:
        return patch_of(atlas, [Placement(TRILOBITE, 0, 0, 0)])
    d = _read_json(path)
    try:
        return patch_from_json(atlas, d)
    except (PlacementError, KeyError, ValueError, TypeError) as exc:
        raise InputError(f"{path}: bad patch ({exc})") from None


def _emit(text: str, out: str | None) -> None:
    if out and out != "-":
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _dump(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=True) + "\n"


# ---------------------------------------------------------------------------------------
# commands


def cmd_atlas_validate(args) -> int:
    a = _atlas(args)
    rep = validate_atlas(a)
    n = len(a.oriented_classes())
    print(f"atlas {a.name} ({a.digest}): {n} oriented tile classes, {len(a.corner_rules)} corner tuples, "
          f"{len(a.parity_pairs)} parity pairs")
    for e in rep.violations:
        print(f"  error: {e}")
    print("OK" if rep.ok else "INVALID")
    return EXIT_PASS if rep.ok else EXIT_FAIL


def _status_exit(status: str) -> int:
    return {VERIFIED: EXIT_PASS, FAILED: EXIT_FAIL, INCONCLUSIVE: EXIT_INCONCLUSIVE}[status]


def prove_report(atlas, suite, budget: int, workers: int, torus_area: int, strict: bool = False):
    """Everything ``prove`` checks, as (report dict, exit code, proof picture)."""
    report: dict = {"atlas": {"name": atlas.name, "hash": atlas.digest}, "budget": budget}
    arep = validate_atlas(atlas)
    report["atlas_validation"] = {"ok": arep.ok, "errors": list(arep.violations)}
    levels = hierarchy_report(atlas, 4, strict) if arep.ok else []
    report["hierarchy"] = [lv.to_json() for lv in levels]
    hier_ok = bool(levels) and len(levels) == 4 and all(lv.ok for lv in levels)
    srep = run_all(suite, atlas, budget, workers)
    report["lemmas"] = srep.to_json()
    sweep = torus_sweep(atlas, torus_area, budget=max(budget, 1)) if arep.ok else []
    tstat = {e.status for e in sweep}
    report["torus"] = {
        "max_area": torus_area,
        "entries": [e.to_json() for e in sweep],
        "sat": sum(e.status == "SAT" for e in sweep),
        "unsat": sum(e.status == "UNSAT" for e in sweep),
        "budget_exhausted": sum(e.status == "BUDGET_EXHAUSTED" for e in sweep),
    }
    achieved = 0
    for area in range(1, torus_area + 1):
        if sweep and all(e.status == "UNSAT" for e in sweep if e.spec.area == area):
            achieved = area
        else:
            break
    report["torus"]["unsat_through_area"] = achieved
    failed = (not arep.ok) or (not hier_ok) or srep.status == FAILED or "SAT" in tstat
    inconclusive = srep.status == INCONCLUSIVE or "BUDGET_EXHAUSTED" in tstat
    status = FAILED if failed else INCONCLUSIVE if inconclusive else VERIFIED
    report["status"] = status
    return report, _status_exit(status), _proof_picture(atlas, suite, srep, budget)


def _proof_picture(atlas, suite, srep, budget: int) -> str:
    """The largest refutation among the lemma cases, drawn from its flattened proof tree."""
    best = None
    for lm, res in zip(suite.lemmas, srep.results):
        for case in res.cases:
            if case.status == "REFUTED" and (best is None or case.proof_leaves > best[1].proof_leaves):
                best = (lm, case)
    if best is None:
        return render(None, "svg", Window(0, 0, 19, 27))
    lm, case = best
    full = refute_case(atlas, case.seed, (case.radius,), budget, keep_trace=True)
    trace = DeductionTrace.from_json(full.trace or [])
    xs = [c[0] for pl in case.seed for c, _ in atlas._cache["rulebook"].cells_of(pl)]
    ys = [c[1] for pl in case.seed for c, _ in atlas._cache["rulebook"].cells_of(pl)]
    r = case.radius
    w = Window(min(xs) - r, min(ys) - r, max(xs) + r, max(ys) + r)
    return render(patch_of(atlas, case.seed), "svg", w, trace)


def cmd_prove(args) -> int:
    atlas = _atlas(args)
    try:
        suite = load_suite(args.suite or bundled_suite_path())
    except FileNotFoundError as exc:
        raise InputError(f"suite file not found: {exc.filename}") from None
    except SuiteError as exc:
        raise InputError(f"suite error: {exc}") from None
    if args.radii:
        for lm in suite.lemmas:
            lm.radii = tuple(sorted(set(args.radii)))
    report, code, svg = prove_report(atlas, suite, args.budget, args.workers, args.torus_area, args.strict_corners)
    out = Path(args.out or "prove-out")
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(_dump(report))
    (out / "proof.svg").write_text(svg)
    for lm in report["lemmas"]["lemmas"]:
        extra = f" (closing radius {lm['closing_radius']})" if "closing_radius" in lm else ""
        flag = " [vacuous]" if lm.get("vacuous") else ""
        print(f"{lm['status']:<12} {lm['name']:<14} {lm['expect']}{extra}{flag}")
    levels = report["hierarchy"]
    print(f"hierarchy: {sum(lv['ok'] for lv in levels)}/4 levels clean")
    t = report["torus"]
    print(f"torus: {t['unsat']} UNSAT, {t['sat']} SAT, {t['budget_exhausted']} over budget; "
          f"UNSAT through area {t['unsat_through_area']}")
    if not report["atlas_validation"]["ok"]:
        for e in report["atlas_validation"]["errors"]:
            print(f"atlas error: {e}")
    print(f"{report['status']}  (report in {out}/report.json)")
    return code


def cmd_inflate(args) -> int:
    atlas = _atlas(args)
    p = _load_patch(atlas, args.patch)
    try:
        q = inflate(p, atlas, args.k)
    except HierarchyError as exc:
        print(f"{exc.code}: {exc}", file=sys.stderr)
        return EXIT_FAIL
    _emit(q.dumps(), args.out)
    rep = validate(q, args.strict_corners)
    return EXIT_PASS if rep.ok else EXIT_FAIL


def cmd_compose(args) -> int:
    atlas = _atlas(args)
    p = _load_patch(atlas, args.patch)
    try:
        sp = compose(p, atlas)
    except HierarchyError as exc:
        print(f"{exc.code}: {exc}", file=sys.stderr)
        return EXIT_FAIL
    d = sp.patch.to_json()
    d["level"] = sp.level
    d["witness"] = {str(k): list(v) for k, v in sorted(sp.witness.items())}
    _emit(_dump(d), args.out)
    return EXIT_PASS


def cmd_shift(args) -> int:
    atlas = _atlas(args)
    p = _load_patch(atlas, args.patch)
    chains = detect_chains(p)
    if not chains:
        print("CHAIN_NOT_SPANNING: no chain in the patch", file=sys.stderr)
        return EXIT_FAIL
    if not 0 <= args.chain < len(chains):
        raise InputError(f"chain index {args.chain} out of range (found {len(chains)})")
    try:
        q = shift_halfplane(p, chains[args.chain], args.steps)
    except HierarchyError as exc:
        print(f"{exc.code}: {exc}", file=sys.stderr)
        return EXIT_FAIL
    _emit(q.dumps(), args.out)
    return EXIT_PASS


def cmd_torus(args) -> int:
    atlas = _atlas(args)
    if args.max_area is not None:
        sweep = torus_sweep(atlas, args.max_area, args.budget, use_parity=not args.no_parity)
        for e in sweep:
            print(f"area {e.spec.area:>3}  u={e.spec.u} v={e.spec.v}  {e.status}")
        st = {e.status for e in sweep}
        return EXIT_FAIL if "SAT" in st else EXIT_INCONCLUSIVE if "BUDGET_EXHAUSTED" in st else EXIT_PASS
    if args.basis is None or len(args.basis) != 4:
        raise InputError("give four integers u1 u2 v1 v2, or --max-area")
    u1, u2, v1, v2 = args.basis
    t = TorusSpec((u1, u2), (v1, v2))
    if t.area == 0:
        raise InputError("degenerate basis: u and v are linearly dependent")
    res = torus_search(atlas, t, args.budget, use_parity=not args.no_parity)
    print(f"{res.status}  u={res.spec.u} v={res.spec.v} area={t.area} nodes={res.nodes}")
    if res.status == "SAT" and args.out:
        tiling = [{"x": c[0], "y": c[1], "state": list(s)} for c, s in sorted(res.tiling.items())]
        Path(args.out).write_text(_dump({"u": list(res.spec.u), "v": list(res.spec.v), "cells": tiling}))
    return {"UNSAT": EXIT_PASS, "SAT": EXIT_FAIL}.get(res.status, EXIT_INCONCLUSIVE)


def cmd_render(args) -> int:
    window = Window(*args.window) if args.window else None
    if args.empty:
        w, h = args.empty
        if w <= 0 or h <= 0:
            raise InputError("--empty needs a positive width and height")
        _emit(render(None, args.format, Window(0, 0, w - 1, h - 1)), args.out)
        return EXIT_PASS
    if not args.patch:
        raise InputError("render needs a patch file or --empty W H")
    atlas = _atlas(args)
    p = _load_patch(atlas, args.patch)
    trace = None
    if args.trace:
        d = _read_json(args.trace)
        steps = d.get("steps", d) if isinstance(d, dict) else d
        try:
            trace = DeductionTrace.from_json(steps)
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"{args.trace}: bad trace ({exc})") from None
    _emit(render(p, args.format, window, trace), args.out)
    return EXIT_PASS


def cmd_search(args) -> int:
    atlas = _atlas(args)
    p = _load_patch(atlas, args.patch)
    region = Window(*args.region).cells() if args.region else None
    try:
        res = search_region(p, region, args.mode, args.budget)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    out = {"mode": res.mode, "status": res.status, "count": res.count, "nodes": res.nodes,
           "patches": [q.to_json() for q in res.patches[: args.limit]]}
    if res.proof is not None and args.proof:
        out["proof"] = tree_to_json(res.proof)
    _emit(_dump(out), args.out)
    if res.status == "BUDGET_EXHAUSTED":
        return EXIT_INCONCLUSIVE
    if res.status in ("NOT_REFUTED", "NONE"):
        return EXIT_FAIL
    return EXIT_PASS


# ---------------------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--atlas", default=None,
                        help="atlas file (default: $TRILOCRAB_ATLAS, else the bundled atlas)")
    common.add_argument("--out", default=None, help="output file (prove: output directory)")
    common.add_argument("--strict-corners", action="store_true",
                        help="also check corners on the boundary of closed windows")

    ap = argparse.ArgumentParser(prog="trilocrab", description="Trilobite-and-crab tiling engine.")
    sub = ap.add_subparsers(dest="command", required=True)

    at = sub.add_parser("atlas", help="atlas utilities")
    atsub = at.add_subparsers(dest="atlas_command", required=True)
    v = atsub.add_parser("validate", parents=[common], help="check the atlas axioms")
    v.set_defaults(func=cmd_atlas_validate)

    pr = sub.add_parser("prove", parents=[common], help="validate, run the lemma suite and the torus sweep")
    pr.add_argument("--suite", default=None, help="lemma suite (default: the bundled suite)")
    pr.add_argument("--budget", type=int, default=DEFAULT_BUDGET, help="search nodes per case (default %(default)s)")
    pr.add_argument("--workers", type=int, default=1)
    pr.add_argument("--radii", type=int, nargs="+", default=None, help="override every lemma's radius schedule")
    pr.add_argument("--torus-area", type=int, default=DEFAULT_TORUS_AREA,
                    help="sweep all torus bases up to this area (default %(default)s)")
    pr.set_defaults(func=cmd_prove)

    inf = sub.add_parser("inflate", parents=[common], help="inflate a patch k times")
    inf.add_argument("patch", nargs="?", default=None, help="patch JSON (default: a single trilobite)")
    inf.add_argument("-k", "--k", type=int, default=1)
    inf.set_defaults(func=cmd_inflate)

    co = sub.add_parser("compose", parents=[common], help="compose a patch into supertiles")
    co.add_argument("patch")
    co.set_defaults(func=cmd_compose)

    sh = sub.add_parser("shift", parents=[common], help="shift the half-plane beside a chain")
    sh.add_argument("patch")
    sh.add_argument("--chain", type=int, default=0, help="index of the chain to use")
    sh.add_argument("--steps", type=int, default=1)
    sh.set_defaults(func=cmd_shift)

    to = sub.add_parser("torus", parents=[common], help="periodic tiling search on a torus")
    to.add_argument("basis", type=int, nargs="*", help="u1 u2 v1 v2")
    to.add_argument("--budget", type=int, default=10**7)
    to.add_argument("--max-area", type=int, default=None, help="sweep every basis up to this area")
    to.add_argument("--no-parity", action="store_true", help="ignore the parity table")
    to.set_defaults(func=cmd_torus)

    re_ = sub.add_parser("render", parents=[common], help="draw a patch or trace")
    re_.add_argument("patch", nargs="?", default=None)
    re_.add_argument("--trace", default=None, help="trace JSON to colour by step kind")
    re_.add_argument("--format", choices=("ascii", "svg"), default="ascii")
    re_.add_argument("--window", type=int, nargs=4, metavar=("X0", "Y0", "X1", "Y1"), default=None)
    re_.add_argument("--empty", type=int, nargs=2, metavar=("W", "H"), default=None,
                     help="draw an empty W x H window")
    re_.set_defaults(func=cmd_render)

    se = sub.add_parser("search", parents=[common], help="search completions of a patch")
    se.add_argument("patch")
    se.add_argument("--mode", choices=(FIRST, ALL, COUNT, REFUTE), default=FIRST)
    se.add_argument("--region", type=int, nargs=4, metavar=("X0", "Y0", "X1", "Y1"), default=None)
    se.add_argument("--budget", type=int, default=10**6)
    se.add_argument("--limit", type=int, default=10, help="patches to print")
    se.add_argument("--proof", action="store_true", help="include the refutation tree")
    se.set_defaults(func=cmd_search)
    return ap


def main(argv: list[str] | None = None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_PASS
    if getattr(args, "atlas", None) is None:
        args.atlas = os.environ.get("TRILOCRAB_ATLAS") or str(default_atlas_path())
    if getattr(args, "workers", 1) < 1:
        print("error: --workers must be at least 1", file=sys.stderr)
        return EXIT_INPUT
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
