"""Cell-state constraint solver shared by region search and torus search.

Every variable is a cell whose domain is a bitmask over the atlas cell states
(kind, rotation, footprint offset).  Three kinds of constraint act on it:

* corner windows: the four cells around a lattice point must show an allowed
  decoration tuple (enforced to generalized arc consistency);
* footprint coherence: a trilobite cell state needs its three sibling cells in
  the matching sibling states;
* parity: trilobites facing each other across a run of crabs must form an
  allowed (rotation, rotation, displacement parity) triple.  This one is only
  checked, never propagated.
"""

from __future__ import annotations

from typing import Callable


class Budget(Exception):
    pass


def state_windows(rb) -> list[tuple[int, int, int, int]]:
    """All (NE, NW, SW, SE) state quadruples whose decorations form an allowed tuple."""
    cached = getattr(rb, "_state_windows", None)
    if cached is not None:
        return cached
    by_label: list[dict] = [dict() for _ in range(4)]
    for s in range(len(rb.states)):
        for q in range(4):
            by_label[q].setdefault(rb.contrib[s][q], []).append(s)
    wins = set()
    for t in rb.atlas.corner_rules:
        lists = [by_label[q].get(t[q], []) for q in range(4)]
        for s0 in lists[0]:
            for s1 in lists[1]:
                for s2 in lists[2]:
                    for s3 in lists[3]:
                        wins.add((s0, s1, s2, s3))
    rb._state_windows = sorted(wins)
    rb._revise_cache = {}
    return rb._state_windows


class CellCsp:
    """``coords`` lists the variables; ``locate`` maps any cell to a variable index or None."""

    def __init__(self, rb, coords: list[tuple[int, int]], locate: Callable, windows: list[tuple],
                 fixed: dict[int, int] | None = None, branchable: list[bool] | None = None,
                 use_parity: bool = True, wrap_limit: int | None = None, focus: tuple | None = None):
        self.rb = rb
        self.coords = coords
        self.locate = locate
        self.n = len(coords)
        self.ns = len(rb.states)
        self.full = (1 << self.ns) - 1
        self.wins = state_windows(rb)
        self.cache = rb._revise_cache
        self.windows = windows
        self.branchable = branchable if branchable is not None else [True] * self.n
        self.use_parity = use_parity and bool(rb.dirs)
        self.wrap_limit = wrap_limit
        self.tri_mask = sum(1 << s for s in range(self.ns) if rb.is_tri[s])
        self.var_windows: list[list[int]] = [[] for _ in range(self.n)]
        for k, w in enumerate(windows):
            for v in w:
                if v >= 0 and k not in self.var_windows[v]:
                    self.var_windows[v].append(k)
        # sibling requirements per (variable, state); None marks an impossible state
        self.sib: list[list] = []
        self.nbr: list[set] = []
        for v, (x, y) in enumerate(coords):
            row = []
            nb = set()
            for s in range(self.ns):
                kind, rot = rb.states[s][0], rb.states[s][1]
                ox, oy = rb.offset[s]
                req = []
                for dx, dy, s2 in rb.geom[(kind, rot)]:
                    if s2 == s:
                        continue
                    u = locate(x + dx - ox, y + dy - oy)
                    if u is None or u == v:
                        req = None
                        break
                    req.append((u, s2))
                    nb.add(u)
                row.append(req)
            self.sib.append(row)
            self.nbr.append(nb)
        self.base = [self.full] * self.n
        for v in range(self.n):
            m = 0
            for s in range(self.ns):
                if self.sib[v][s] is not None:
                    m |= 1 << s
            self.base[v] = m
        for v, s in (fixed or {}).items():
            self.base[v] &= 1 << s
        self.conflict: tuple | None = None
        self.nodes = 0
        # branching prefers cells near the focus (the seed), ties by variable order
        if focus is None:
            self.order = list(range(self.n))
        else:
            fx, fy = focus
            self.order = sorted(range(self.n), key=lambda v: (abs(2 * coords[v][0] + 1 - fx) + abs(2 * coords[v][1] + 1 - fy), v))

    # -- propagation --------------------------------------------------------------------
    def _revise(self, d0, d1, d2, d3):
        key = (d0, d1, d2, d3)
        r = self.cache.get(key)
        if r is None:
            n0 = n1 = n2 = n3 = 0
            for s0, s1, s2, s3 in self.wins:
                if d0 >> s0 & 1 and d1 >> s1 & 1 and d2 >> s2 & 1 and d3 >> s3 & 1:
                    n0 |= 1 << s0
                    n1 |= 1 << s1
                    n2 |= 1 << s2
                    n3 |= 1 << s3
            r = (n0, n1, n2, n3)
            if len(self.cache) < 3_000_000:
                self.cache[key] = r
        return r

    def propagate(self, dom: list[int], changed) -> bool:
        """Arc consistency from the changed variables.  On failure ``conflict`` names the cell."""
        full = self.full
        queue = list(changed)
        inq = set(queue)
        windows = self.windows
        while queue:
            v = queue.pop()
            inq.discard(v)
            # footprint coherence for v
            m = dom[v]
            keep = 0
            mm, s = m, 0
            sibv = self.sib[v]
            while mm:
                if mm & 1:
                    ok = True
                    for u, s2 in sibv[s]:
                        if not dom[u] >> s2 & 1:
                            ok = False
                            break
                    if ok:
                        keep |= 1 << s
                mm >>= 1
                s += 1
            if keep != m:
                if not keep:
                    self.conflict = ("cell",) + tuple(self.coords[v])
                    return False
                dom[v] = keep
                for u in self.nbr[v]:
                    if u not in inq:
                        inq.add(u)
                        queue.append(u)
            # a fixed trilobite cell fixes its siblings
            if keep & (keep - 1) == 0:
                s = keep.bit_length() - 1
                for u, s2 in sibv[s]:
                    if dom[u] != 1 << s2:
                        dom[u] = 1 << s2
                        if u not in inq:
                            inq.add(u)
                            queue.append(u)
            for k in self.var_windows[v]:
                w = windows[k]
                cur = [dom[u] if u >= 0 else full for u in w]
                new = self._revise(*cur)
                if w[0] == w[1] or w[0] == w[2] or w[0] == w[3] or w[1] == w[2] or w[1] == w[3] or w[2] == w[3]:
                    merged: dict[int, int] = {}
                    for u, nm in zip(w, new):
                        merged[u] = merged.get(u, full) & nm
                    new = tuple(merged[u] for u in w)
                for u, nm in zip(w, new):
                    if u < 0:
                        continue
                    nm &= dom[u]
                    if nm != dom[u]:
                        if not nm:
                            self.conflict = ("cell",) + tuple(self.coords[u])
                            return False
                        dom[u] = nm
                        if u not in inq:
                            inq.add(u)
                            queue.append(u)
                        for u2 in self.nbr[u]:
                            if u2 not in inq:
                                inq.add(u2)
                                queue.append(u2)
        return True

    def start(self) -> list[int] | None:
        dom = list(self.base)
        for v in range(self.n):
            if not dom[v]:
                self.conflict = ("cell",) + tuple(self.coords[v])
                return None
        if not self.propagate(dom, range(self.n)):
            return None
        return dom

    # -- parity -------------------------------------------------------------------------
    def parity_ok(self, dom: list[int]) -> bool:
        rb = self.rb
        tri = self.tri_mask
        limit = self.wrap_limit or 10**6
        for v in range(self.n):
            m = dom[v]
            if m & (m - 1) or not m & tri:
                continue
            s = m.bit_length() - 1
            x, y = self.coords[v]
            ox, oy = rb.offset[s]
            for d in rb.dirs:
                nx, ny = x + d[0], y + d[1]
                u = self.locate(nx, ny)
                if u is None:
                    continue
                first = dom[u]
                if first & (first - 1) or first & tri:
                    continue
                k = 1
                while k <= limit:
                    k += 1
                    nx, ny = nx + d[0], ny + d[1]
                    u = self.locate(nx, ny)
                    if u is None:
                        break
                    m2 = dom[u]
                    if m2 & (m2 - 1):
                        if m2 & ~tri & self.full:
                            break
                        if not any(
                            rb.parity_ok(rb.rot_of[s], rb.rot_of[s2],
                                         (nx - rb.offset[s2][0] - (x - ox), ny - rb.offset[s2][1] - (y - oy)))
                            for s2 in range(self.ns) if m2 >> s2 & 1
                        ):
                            self.conflict = ("parity", x, y)
                            return False
                        break
                    s2 = m2.bit_length() - 1
                    if rb.is_tri[s2]:
                        o2 = rb.offset[s2]
                        if not rb.parity_ok(rb.rot_of[s], rb.rot_of[s2], (nx - o2[0] - (x - ox), ny - o2[1] - (y - oy))):
                            self.conflict = ("parity", x, y)
                            return False
                        break
        return True

    def consistent(self, dom: list[int], changed) -> bool:
        if not self.propagate(dom, changed):
            return False
        return not self.use_parity or self.parity_ok(dom)

    # -- branching ----------------------------------------------------------------------
    def pick(self, dom: list[int]) -> int:
        best, bc = -1, 99
        for v in self.order:
            m = dom[v]
            if m & (m - 1) and self.branchable[v]:
                c = bin(m).count("1")
                if c < bc:
                    best, bc = v, c
                    if c == 2:
                        break
        return best

    def states_of(self, m: int) -> list[int]:
        out = []
        s = 0
        while m:
            if m & 1:
                out.append(s)
            m >>= 1
            s += 1
        return out

    def solve_first(self, budget: int) -> list[int] | None:
        """Plain depth-first search (used by the torus search)."""
        dom = self.start()
        if dom is None:
            return None
        if self.use_parity and not self.parity_ok(dom):
            return None
        return self._dfs(dom, budget)

    def _dfs(self, dom, budget):
        v = self.pick(dom)
        if v < 0:
            return dom
        for s in self.states_of(dom[v]):
            self.nodes += 1
            if self.nodes > budget:
                raise Budget()
            d2 = list(dom)
            d2[v] = 1 << s
            if self.consistent(d2, [v]):
                r = self._dfs(d2, budget)
                if r is not None:
                    return r
        return None
