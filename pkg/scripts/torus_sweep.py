"""Sweep every torus basis up to a given area and write the outcomes as JSON.

    python3 scripts/torus_sweep.py --max-area 24 --out torus-24.json
"""

from __future__ import annotations

import argparse
import json
import time

from trilocrab.atlas import load_atlas_file
from trilocrab.engine import torus_sweep


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--atlas", default=None)
    ap.add_argument("--max-area", type=int, default=16)
    ap.add_argument("--budget", type=int, default=10**7, help="nodes per basis")
    ap.add_argument("--no-parity", action="store_true")
    ap.add_argument("--out", default=None)
    args = ap.parse_args()
    atlas = load_atlas_file(args.atlas)
    t0 = time.perf_counter()
    sweep = torus_sweep(atlas, args.max_area, args.budget, use_parity=not args.no_parity)
    elapsed = time.perf_counter() - t0
    by_area: dict[int, dict[str, int]] = {}
    for e in sweep:
        row = by_area.setdefault(e.spec.area, {})
        row[e.status] = row.get(e.status, 0) + 1
    for area, row in sorted(by_area.items()):
        print(f"area {area:>3}: " + ", ".join(f"{k} {v}" for k, v in sorted(row.items())))
    print(f"{len(sweep)} bases in {elapsed:.1f}s")
    if args.out:
        with open(args.out, "w") as fh:
            json.dump({"max_area": args.max_area, "parity": not args.no_parity,
                       "entries": [e.to_json() for e in sweep]}, fh, indent=1, sort_keys=True)
    statuses = {e.status for e in sweep}
    return 1 if "SAT" in statuses else 3 if "BUDGET_EXHAUSTED" in statuses else 0


if __name__ == "__main__":
    raise SystemExit(main())
