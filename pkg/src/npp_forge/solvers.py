"""Desk-scale solvers used as independent oracles.

``solve_array`` and ``solve_inv_system`` run interval branch-and-prune with
outward-rounded float intervals. ``solve_poly_box`` bisects the bounding box
using a natural interval extension. ``nonneg_rank_search`` looks for small
nonnegative factorizations.
"""

from __future__ import annotations

import math
import random
from collections import deque
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

from .etr_inv import Add, EtrInvSystem, Inv
from .exact_geometry import lp_feasible, matrix_rank
from .inv_array import ColInv, EtrInvArray, RowPair, RowTriple
from .polynomial import PolySystem

_INF = math.inf


@dataclass
class SolveConfig:
    tolerance: float = 1e-9
    max_depth: int = 200
    sample_budget: int = 64
    seed: int = 0
    max_boxes: int = 200_000
    jobs: int = 1

    def __post_init__(self):
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if self.max_depth < 1:
            raise ValueError("depth must be at least 1")


@dataclass
class SolveResult:
    solutions: list  # list of dicts or matrices (midpoints)
    residuals: list  # max residual per solution
    incomplete: bool = False
    continuum: bool = False
    boxes: int = 0
    notes: list = field(default_factory=list)

    @property
    def empty(self):
        return not self.solutions and not self.incomplete


def _down(x):
    return x - (abs(x) * 4e-16 + 5e-324)


def _up(x):
    return x + (abs(x) * 4e-16 + 5e-324)


class _CSP:
    """Interval constraint store over float boxes.

    Linear constraints are ``sum c_i x_i = b``; inversion constraints are
    ``(la*x_a + ca) * (lb*x_b + cb) = 1``.
    """

    def __init__(self, nvars, lo, hi):
        self.n = nvars
        self.lo0, self.hi0 = list(lo), list(hi)
        self.lin = []
        self.inv = []
        self.watch = [[] for _ in range(nvars)]

    def add_linear(self, idxs, coefs, b):
        self.lin.append((tuple(idxs), tuple(float(c) for c in coefs), float(b)))
        for i in set(idxs):
            self.watch[i].append(("l", len(self.lin) - 1))

    def add_inv(self, a, b, la=1.0, ca=0.0, lb=1.0, cb=0.0):
        self.inv.append((a, float(la), float(ca), b, float(lb), float(cb)))
        for i in {a, b}:
            self.watch[i].append(("i", len(self.inv) - 1))

    def _revise_lin(self, c, lo, hi, changed):
        idxs, coefs, b = c
        k = len(idxs)
        tlo = [0.0] * k
        thi = [0.0] * k
        for t in range(k):
            i, ct = idxs[t], coefs[t]
            if ct > 0:
                tlo[t], thi[t] = ct * lo[i], ct * hi[i]
            else:
                tlo[t], thi[t] = ct * hi[i], ct * lo[i]
        for t in range(k):
            rl = rh = 0.0
            for s in range(k):
                if s != t:
                    rl += tlo[s]
                    rh += thi[s]
            nlo, nhi = _down(b - rh), _up(b - rl)
            ct = coefs[t]
            if ct != 1:
                nlo, nhi = (nlo / ct, nhi / ct) if ct > 0 else (nhi / ct, nlo / ct)
                nlo, nhi = _down(nlo), _up(nhi)
            i = idxs[t]
            if not self._tighten(i, nlo, nhi, lo, hi, changed):
                return False
            if ct > 0:
                tlo[t], thi[t] = ct * lo[i], ct * hi[i]
            else:
                tlo[t], thi[t] = ct * hi[i], ct * lo[i]
        return True

    @staticmethod
    def _affine(l, c, lo, hi):
        a, b = l * lo + c, l * hi + c
        return (_down(a), _up(b)) if a <= b else (_down(b), _up(a))

    def _revise_inv_side(self, a, la, ca, b, lb, cb, lo, hi, changed):
        ylo, yhi = self._affine(lb, cb, lo[b], hi[b])
        if ylo <= 0:
            return True
        tlo, thi = _down(1.0 / yhi), _up(1.0 / ylo)
        nlo, nhi = (tlo - ca) / la, (thi - ca) / la
        if nlo > nhi:
            nlo, nhi = nhi, nlo
        return self._tighten(a, _down(nlo), _up(nhi), lo, hi, changed)

    def _revise_inv(self, c, lo, hi, changed):
        a, la, ca, b, lb, cb = c
        if not self._revise_inv_side(a, la, ca, b, lb, cb, lo, hi, changed):
            return False
        return self._revise_inv_side(b, lb, cb, a, la, ca, lo, hi, changed)

    @staticmethod
    def _tighten(i, nlo, nhi, lo, hi, changed):
        ol, oh = lo[i], hi[i]
        if nlo > ol:
            lo[i] = nlo
        if nhi < oh:
            hi[i] = nhi
        if lo[i] > hi[i]:
            return False
        w_old = oh - ol
        if w_old > 0 and w_old - (hi[i] - lo[i]) > 1e-3 * w_old:
            changed.append(i)
        return True

    def propagate(self, lo, hi, limit=None):
        for i in range(self.n):
            if lo[i] > hi[i]:
                return False
        nc = len(self.lin) + len(self.inv)
        queue = deque(("l", k) for k in range(len(self.lin)))
        queue.extend(("i", k) for k in range(len(self.inv)))
        queued = set(queue)
        budget = limit or 60 * (nc + 1)
        steps = 0
        while queue and steps < budget:
            item = queue.popleft()
            queued.discard(item)
            steps += 1
            changed = []
            kind, k = item
            ok = (self._revise_lin(self.lin[k], lo, hi, changed) if kind == "l"
                  else self._revise_inv(self.inv[k], lo, hi, changed))
            if not ok:
                return False
            for i in changed:
                for w in self.watch[i]:
                    if w not in queued and w != item:
                        queued.add(w)
                        queue.append(w)
        return True


class _Problem:
    """Exact description: ``sum c_i x_i = b`` rows and ``x_a * x_b = 1`` pairs, box [1/2, 2]."""

    def __init__(self, nvars):
        self.n = nvars
        self.lin = []  # (idxs, coefs, b) with Fraction data
        self.inv = []  # (a, b)

    def add_linear(self, idxs, coefs, b):
        self.lin.append((tuple(idxs), tuple(Fraction(c) for c in coefs), Fraction(b)))

    def add_inv(self, a, b):
        self.inv.append((a, b))

    def residuals(self, x):
        out = []
        for idxs, coefs, b in self.lin:
            out.append(abs(sum(float(c) * x[i] for i, c in zip(idxs, coefs)) - float(b)))
        for a, b in self.inv:
            out.append(abs(x[a] * x[b] - 1.0))
        for v in x:
            out.append(max(0.0, 0.5 - v, v - 2.0))
        return out


class _Echelon:
    """Incremental reduced row echelon form over Fractions."""

    def __init__(self):
        self.rows = {}  # pivot -> (coefs dict including pivot with 1, rhs)

    def add(self, coefs: dict, rhs: Fraction) -> bool:
        """Add an equation; False if it contradicts the current rows."""
        vec = {i: Fraction(c) for i, c in coefs.items() if c}
        rhs = Fraction(rhs)
        for p in [i for i in vec if i in self.rows]:
            f = vec.get(p)
            if not f:
                continue
            prow, prhs = self.rows[p]
            for j, v in prow.items():
                nv = vec.get(j, 0) - f * v
                if nv:
                    vec[j] = nv
                else:
                    vec.pop(j, None)
            rhs -= f * prhs
        # rows may have introduced further pivots; repeat until clean
        while any(i in self.rows for i in vec):
            for p in [i for i in vec if i in self.rows]:
                f = vec.get(p)
                if not f:
                    continue
                prow, prhs = self.rows[p]
                for j, v in prow.items():
                    nv = vec.get(j, 0) - f * v
                    if nv:
                        vec[j] = nv
                    else:
                        vec.pop(j, None)
                rhs -= f * prhs
        if not vec:
            return rhs == 0
        piv = min(vec)
        inv = 1 / vec[piv]
        vec = {j: v * inv for j, v in vec.items()}
        rhs *= inv
        for q, (row, qrhs) in list(self.rows.items()):
            f = row.get(piv)
            if f:
                for j, v in vec.items():
                    nv = row.get(j, 0) - f * v
                    if nv:
                        row[j] = nv
                    else:
                        row.pop(j, None)
                self.rows[q] = (row, qrhs - f * rhs)
        self.rows[piv] = (vec, rhs)
        return True

    def form(self, i):
        """``x_i = const + sum coef_f x_f`` over free variables."""
        if i in self.rows:
            row, rhs = self.rows[i]
            return rhs, {j: -v for j, v in row.items() if j != i}
        return Fraction(0), {i: Fraction(1)}


def _odd_cycle_vars(n, pairs):
    adj = [[] for _ in range(n)]
    for a, b in pairs:
        adj[a].append(b)
        adj[b].append(a)
    color = [None] * n
    pinned = []
    for s in range(n):
        if color[s] is not None or not adj[s]:
            continue
        comp, odd = [s], False
        color[s] = 0
        q = deque([s])
        while q:
            u = q.popleft()
            for w in adj[u]:
                if color[w] is None:
                    color[w] = color[u] ^ 1
                    comp.append(w)
                    q.append(w)
                elif color[w] == color[u]:
                    odd = True
        if odd:
            pinned.extend(comp)
    return pinned


@dataclass
class _Reduced:
    csp: _CSP
    members: list  # per original variable: (rep index | None, lam, const) as floats

    def expand(self, z):
        return [c if r is None else lam * z[r] + c for r, lam, c in self.members]


def _reduce(problem: _Problem):
    """Exact linear presolve.

    Every variable is written as an affine function of free parameters; fixed
    values propagate through inversions until nothing changes. Variables whose
    forms are proportional collapse onto one representative. Returns ``None``
    when the constraints are contradictory.
    """
    half, two = Fraction(1, 2), Fraction(2)
    ech = _Echelon()
    for idxs, coefs, b in problem.lin:
        acc = {}
        for i, c in zip(idxs, coefs):
            acc[i] = acc.get(i, 0) + c
        if not ech.add(acc, b):
            return None
    for i in _odd_cycle_vars(problem.n, problem.inv):
        if not ech.add({i: 1}, 1):
            return None
    while True:
        forms = [ech.form(i) for i in range(problem.n)]
        new = []
        for i, (c, lin) in enumerate(forms):
            if not lin and not half <= c <= two:
                return None
        for a, b in problem.inv:
            (ca, la), (cb, lb) = forms[a], forms[b]
            if not la and not lb:
                if ca * cb != 1:
                    return None
            elif not la:
                new.append((b, 1 / ca))
            elif not lb:
                new.append((a, 1 / cb))
            elif la == lb and ca == cb:
                new.append((a, Fraction(1)))
        if not new:
            break
        for i, v in new:
            if v <= 0 or not ech.add({i: 1}, v):
                return None
    # group proportional forms
    reps, members, key_of = [], [], {}
    rep_form = []
    for i, (c, lin) in enumerate(forms):
        if not lin:
            members.append((None, 0.0, float(c)))
            continue
        lead_var = min(lin)
        lead = lin[lead_var]
        key = tuple(sorted((j, v / lead) for j, v in lin.items()))
        if key not in key_of:
            key_of[key] = len(reps)
            reps.append(i)
            rep_form.append((c, lead))
        r = key_of[key]
        rc, rlead = rep_form[r]
        lam = lead / rlead
        members.append((r, lam, c - lam * rc))
    nz = len(reps)
    lo, hi = [0.5] * nz, [2.0] * nz
    exact_members = members
    for r, lam, c in exact_members:
        if r is None:
            continue
        a, b = (half - c) / lam, (two - c) / lam
        if a > b:
            a, b = b, a
        lo[r] = max(lo[r], _down(float(a)))
        hi[r] = min(hi[r], _up(float(b)))
    csp = _CSP(nz, lo, hi)
    seen = set()
    for idxs, coefs, b in problem.lin:
        acc, rhs = {}, b
        for i, cf in zip(idxs, coefs):
            r, lam, c = exact_members[i]
            rhs -= cf * c
            if r is not None:
                acc[r] = acc.get(r, 0) + cf * lam
        items = tuple(sorted((r, v) for r, v in acc.items() if v))
        if not items:
            continue
        # normalise so duplicates are detected
        lead = items[0][1]
        key = (tuple((r, v / lead) for r, v in items), rhs / lead)
        if key in seen:
            continue
        seen.add(key)
        csp.add_linear([r for r, _ in items], [v for _, v in items], rhs)
    for a, b in problem.inv:
        ra, la, ca = exact_members[a]
        rb, lb, cb = exact_members[b]
        if ra is None or rb is None:
            continue
        csp.add_inv(ra, rb, la, ca, lb, cb)
    fmembers = [(r, float(lam), float(c)) for r, lam, c in exact_members]
    return _Reduced(csp, fmembers)


def _widest(lo, hi):
    best, bw = -1, -1.0
    for i in range(len(lo)):
        w = hi[i] - lo[i]
        if w > bw:
            best, bw = i, w
    return best, bw


def _split(lo, hi, tol=None):
    """Bisect the first variable wider than ``tol`` (the widest if ``tol`` is None).

    Cell order puts source-like variables first; derived variables tend to be
    wide only because of interval overestimation, so splitting them is wasteful.
    """
    if tol is None:
        i, _ = _widest(lo, hi)
    else:
        i = next(k for k in range(len(lo)) if hi[k] - lo[k] > tol)
    mid = 0.5 * (lo[i] + hi[i])
    a_hi = list(hi)
    a_hi[i] = mid
    b_lo = list(lo)
    b_lo[i] = mid
    return (list(lo), a_hi), (b_lo, list(hi))


def _dfs(csp, box, tol, depth, node_limit):
    """Depth-first search for one solution box; returns ``(point | None, exhausted)``."""
    stack = [(box[0], box[1], 0)]
    nodes = 0
    while stack:
        lo, hi, d = stack.pop()
        nodes += 1
        if nodes > node_limit:
            return None, False
        if not csp.propagate(lo, hi):
            continue
        _, w = _widest(lo, hi)
        if w <= tol or d >= depth:
            return [0.5 * (a + b) for a, b in zip(lo, hi)], True
        a, b = _split(lo, hi, tol)
        stack.append((b[0], b[1], d + 1))
        stack.append((a[0], a[1], d + 1))
    return None, True


def _dfs_task(args):
    csp, box, tol, depth, limit = args
    return _dfs(csp, box, tol, depth, limit)


def _branch_and_prune(problem: _Problem, config: SolveConfig) -> SolveResult:
    red = _reduce(problem)
    if red is None:
        return SolveResult([], [], notes=["linear presolve proved the system infeasible"])
    csp = red.csp
    tol = float(config.tolerance)
    level = [(list(csp.lo0), list(csp.hi0))]
    done, notes = [], []
    boxes, incomplete, continuum = 0, False, False
    if csp.n == 0:
        level = []
        done.append([])
    for depth in range(config.max_depth + 1):
        if not level:
            break
        nxt = []
        for lo, hi in level:
            boxes += 1
            if not csp.propagate(lo, hi):
                continue
            _, w = _widest(lo, hi)
            if w <= tol or depth == config.max_depth:
                if w > tol:
                    incomplete = True
                done.append([0.5 * (a + b) for a, b in zip(lo, hi)])
                continue
            nxt.extend(_split(lo, hi, tol))
        level = nxt
        if not level:
            break
        if boxes > config.max_boxes:
            incomplete = True
            notes.append("box budget exhausted")
            break
        if len(level) > config.sample_budget:
            # tiny clusters are isolated (often tangential) roots, not families
            spread = []
            for comp in _components(level):
                pt = _polish_cluster(problem, red, [level[b] for b in comp], tol)
                if pt is None:
                    spread.extend(level[b] for b in comp)
                else:
                    done.append(pt)
            level = spread
            if len(level) <= config.sample_budget:
                continue
            continuum = True
            rng = random.Random(config.seed)
            picks = sorted(rng.sample(range(len(level)), config.sample_budget))
            tasks = [(csp, level[p], tol, config.max_depth, 4000) for p in picks]
            if config.jobs > 1:
                with ProcessPoolExecutor(config.jobs) as ex:
                    results = list(ex.map(_dfs_task, tasks))
            else:
                results = [_dfs_task(t) for t in tasks]
            for pt, exhausted in results:
                if pt is not None:
                    done.append(pt)
                elif not exhausted:
                    incomplete = True
            notes.append(f"sampled {len(picks)} of {len(level)} live boxes")
            level = []
            break
    if level:
        incomplete = True
    sols = [red.expand(z) for z in _merge(done, 100 * tol, lambda z: max(problem.residuals(red.expand(z)), default=0.0))]
    res = [max(problem.residuals(s), default=0.0) for s in sols]
    return SolveResult(sols, res, incomplete, continuum, boxes, notes)


CLUSTER_DIAMETER = 1e-2


def _components(boxes, slack=CLUSTER_DIAMETER / 10):
    """Groups of boxes closer than ``slack`` in every coordinate, as sorted index lists.

    Propagation shrinks boxes, so neighbours around one root rarely touch.
    """
    parent = list(range(len(boxes)))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for a in range(len(boxes)):
        la, ha = boxes[a]
        for b in range(a + 1, len(boxes)):
            lb, hb = boxes[b]
            if all(l1 <= h2 + slack and l2 <= h1 + slack for l1, h1, l2, h2 in zip(la, ha, lb, hb)):
                parent[find(a)] = find(b)
    groups: dict = {}
    for a in range(len(boxes)):
        groups.setdefault(find(a), []).append(a)
    return sorted(groups.values())


def _polish_cluster(problem, red, boxes, tol, starts=8):
    """Single root inside a small cluster of boxes, or ``None``.

    Bounded least squares runs from several box midpoints; the cluster counts
    as one root when every run reaches residual ``tol`` at the same point.
    """
    from scipy.optimize import least_squares

    n = len(boxes[0][0])
    lo = [min(b[0][i] for b in boxes) for i in range(n)]
    hi = [max(b[1][i] for b in boxes) for i in range(n)]
    if max((h - l for l, h in zip(lo, hi)), default=0.0) > CLUSTER_DIAMETER:
        return None

    def signed(z):
        x = red.expand(z)
        out = [sum(float(c) * x[i] for i, c in zip(idxs, coefs)) - float(b) for idxs, coefs, b in problem.lin]
        out.extend(x[a] * x[b] - 1.0 for a, b in problem.inv)
        return out or [0.0]

    step = max(1, len(boxes) // starts)
    picks = [boxes[k] for k in range(0, len(boxes), step)][:starts]
    found = []
    for blo, bhi in picks:
        z0 = [0.5 * (a + b) for a, b in zip(blo, bhi)]
        width = [max(h - l, 1e-300) for l, h in zip(lo, hi)]
        try:
            # at a tangential root the gradient vanishes faster than the residual,
            # so only the step size may stop the iteration
            fit = least_squares(signed, z0, bounds=(lo, [l + w for l, w in zip(lo, width)]),
                                xtol=1e-15, ftol=None, gtol=None, max_nfev=2000)
        except ValueError:
            return None
        z = [float(v) for v in fit.x]
        if max(problem.residuals(red.expand(z)), default=0.0) > tol:
            return None
        found.append(z)
    merged = _merge(found, max(100 * tol, 1e-6))
    return merged[0] if len(merged) == 1 else None


def _merge(points, radius, score=None):
    """Cluster points within ``radius`` (max norm), keeping the lowest score per cluster."""
    order = sorted(points, key=lambda p: (score(p), p)) if score else sorted(points)
    out = []
    for p in order:
        if any(max((abs(a - b) for a, b in zip(p, q)), default=0.0) <= radius for q in out):
            continue
        out.append(p)
    return sorted(out)


def _array_problem(array: EtrInvArray) -> _Problem:
    m, n = array.m, array.n
    csp = _Problem(m * n)

    def at(i, j):
        return (i - 1) * n + (j - 1)

    for c in array.constraints:
        if isinstance(c, (RowPair, RowTriple)):
            idxs = [at(i, j) for i, j in c.cells()]
            csp.add_linear(idxs, [1] * len(idxs), Fraction(5, 2))
        elif isinstance(c, ColInv):
            csp.add_inv(at(c.i, c.col), at(c.j, c.col))
    return csp


def solve_array(array: EtrInvArray, config: SolveConfig | None = None) -> SolveResult:
    """Solutions are returned as m x n float matrices (box midpoints)."""
    config = config or SolveConfig()
    res = _branch_and_prune(_array_problem(array), config)
    n = array.n
    res.solutions = [[s[i * n:(i + 1) * n] for i in range(array.m)] for s in res.solutions]
    return res


def solve_inv_system(system: EtrInvSystem, config: SolveConfig | None = None) -> SolveResult:
    """Solutions are returned as ``{variable: float}`` dicts."""
    config = config or SolveConfig()
    idx = {v: k for k, v in enumerate(system.variables)}
    nv = len(idx)
    csp = _Problem(nv)
    for c in system.constraints:
        if isinstance(c, Add):
            acc = {}
            for v, s in ((c.x, 1), (c.y, 1), (c.z, -1)):
                acc[idx[v]] = acc.get(idx[v], 0) + s
            items = [(i, s) for i, s in acc.items() if s]
            if not items:
                continue
            csp.add_linear([i for i, _ in items], [s for _, s in items], 0)
        else:
            csp.add_inv(idx[c.x], idx[c.y])
    res = _branch_and_prune(csp, config)
    res.solutions = [dict(zip(system.variables, s)) for s in res.solutions]
    return res


# --- polynomial boxes -------------------------------------------------------------

def _ipow(lo, hi, k):
    if k == 1:
        return lo, hi
    a, b = lo ** k, hi ** k
    if k % 2 == 0:
        if lo <= 0 <= hi:
            return 0.0, _up(max(a, b))
        return _down(min(a, b)), _up(max(a, b))
    return _down(a), _up(b)


def _imul(a, b):
    ps = (a[0] * b[0], a[0] * b[1], a[1] * b[0], a[1] * b[1])
    return _down(min(ps)), _up(max(ps))


def _poly_range(p, lo, hi):
    tl = th = 0.0
    for e, c in p.terms.items():
        c = float(c)
        r = (c, c)
        for i, k in e:
            r = _imul(r, _ipow(lo[i], hi[i], k))
        tl, th = _down(tl + r[0]), _up(th + r[1])
    return tl, th


def solve_poly_box(system: PolySystem, config: SolveConfig | None = None) -> SolveResult:
    """Points of ``V(F)`` in ``[-L, L]^n``; solutions are ``{variable: float}`` dicts."""
    config = config or SolveConfig()
    tol = float(config.tolerance)
    L = float(system.bound)
    names = list(system.variables)
    nv = len(names)
    polys = [p for p in system.polynomials if not p.is_zero()]
    if any(p.is_constant() for p in polys):
        return SolveResult([], [], boxes=0)
    if not polys:
        return _grid_samples(names, L, config)
    level = [([-L] * nv, [L] * nv)]
    done, boxes, incomplete, continuum, notes = [], 0, False, False, []
    for depth in range(config.max_depth + 1):
        nxt = []
        for lo, hi in level:
            boxes += 1
            ranges = [_poly_range(p, lo, hi) for p in polys]
            if any(r[0] > tol or r[1] < -tol for r in ranges):
                continue
            mid = [0.5 * (a + b) for a, b in zip(lo, hi)]
            _, w = _widest(lo, hi)
            if all(max(abs(r[0]), abs(r[1])) <= tol for r in ranges) or w <= 1e-15 * max(1.0, L):
                done.append(mid)
                continue
            if depth == config.max_depth:
                incomplete = True
                continue
            nxt.extend(_split(lo, hi))
        level = nxt
        if not level:
            break
        if boxes > config.max_boxes:
            incomplete = True
            break
        if len(level) > config.sample_budget and nv > 1 or len(level) > 64 * config.sample_budget:
            continuum = True
            notes.append(f"sampled {config.sample_budget} of {len(level)} live boxes")
            rng = random.Random(config.seed)
            for p in sorted(rng.sample(range(len(level)), min(config.sample_budget, len(level)))):
                pt = _poly_dfs(polys, level[p], tol, config.max_depth - depth)
                if pt is not None:
                    done.append(pt)
            level = []
            break
    if level:
        incomplete = True
    def resid(x):
        return max(abs(float(p.evaluate(x))) for p in polys)

    sols = _merge([x for x in done if resid(x) <= tol], max(100 * tol, 1e-7), resid)
    keep = [(x, resid(x)) for x in sols]
    return SolveResult([dict(zip(names, s)) for s, _ in keep], [r for _, r in keep],
                       incomplete, continuum, boxes, notes)


def _poly_dfs(polys, box, tol, depth):
    stack = [(box[0], box[1], 0)]
    nodes = 0
    while stack and nodes < 20000:
        lo, hi, d = stack.pop()
        nodes += 1
        ranges = [_poly_range(p, lo, hi) for p in polys]
        if any(r[0] > tol or r[1] < -tol for r in ranges):
            continue
        if all(max(abs(r[0]), abs(r[1])) <= tol for r in ranges) or d >= depth:
            return [0.5 * (a + b) for a, b in zip(lo, hi)]
        a, b = _split(lo, hi)
        stack.append((b[0], b[1], d + 1))
        stack.append((a[0], a[1], d + 1))
    return None


def _grid_samples(names, L, config):
    nv = len(names)
    if nv == 0:
        return SolveResult([{}], [0.0], continuum=True, notes=["every point of the box is a solution"])
    per = max(2, int(round(config.sample_budget ** (1.0 / nv))))
    axis = [-L + 2 * L * t / (per - 1) for t in range(per)]
    pts = [[]]
    for _ in range(nv):
        pts = [p + [a] for p in pts for a in axis]
    return SolveResult([dict(zip(names, p)) for p in pts], [0.0] * len(pts), continuum=True,
                       notes=["every point of the box is a solution"])


# --- nonnegative factorization ---------------------------------------------------

@dataclass
class RankSearchResult:
    status: str  # "found", "impossible" or "not_found"
    V: list | None = None
    W: list | None = None
    reason: str = ""

    @property
    def found(self):
        return self.status == "found"


def _frac_matrix(M):
    return [[Fraction(x) for x in row] for row in M]


def _matmul(A, B):
    return [[sum((A[i][t] * B[t][j] for t in range(len(B))), Fraction(0)) for j in range(len(B[0]))]
            for i in range(len(A))]


def nonneg_rank_search(M, k: int, config: SolveConfig | None = None, starts: int = 60) -> RankSearchResult:
    config = config or SolveConfig()
    M = _frac_matrix(M)
    m, n = len(M), len(M[0]) if M else 0
    if k < 1:
        raise ValueError("k must be positive")
    if any(x < 0 for row in M for x in row):
        raise ValueError("matrix has a negative entry")
    zero = Fraction(0)
    if all(x == 0 for row in M for x in row):
        return RankSearchResult("found", [[zero] * k for _ in range(m)], [[zero] * n for _ in range(k)],
                                "zero matrix")
    r = matrix_rank(M)
    if r > k:
        return RankSearchResult("impossible", reason=f"rank {r} exceeds {k}")
    if k >= n:
        V = [row + [zero] * (k - n) for row in M]
        W = [[Fraction(int(i == j)) for j in range(n)] for i in range(k)]
        return RankSearchResult("found", V, W, "columns of M")
    if k >= m:
        V = [[Fraction(int(i == j)) for j in range(k)] for i in range(m)]
        W = [list(row) for row in M] + [[zero] * n for _ in range(k - m)]
        return RankSearchResult("found", V, W, "rows of M")
    if r == 1:
        col = next(j for j in range(n) if any(M[i][j] for i in range(m)))
        piv = next(i for i in range(m) if M[i][col])
        c = [M[i][col] for i in range(m)]
        V = [[c[i]] + [zero] * (k - 1) for i in range(m)]
        W = [[M[piv][j] / c[piv] for j in range(n)]] + [[zero] * n for _ in range(k - 1)]
        return RankSearchResult("found", V, W, "rank one")
    return _anls_search(M, k, config, starts)


def _anls_search(M, k, config, starts):
    import numpy as np
    from scipy.optimize import nnls

    m, n = len(M), len(M[0])
    A = np.array([[float(x) for x in row] for row in M])
    rng = np.random.default_rng(config.seed)
    scale = max(float(A.max()), 1.0)
    for _ in range(starts):
        V = rng.random((m, k)) * scale
        W = np.zeros((k, n))
        for _ in range(400):
            for j in range(n):
                W[:, j] = nnls(V, A[:, j])[0]
            for i in range(m):
                V[i, :] = nnls(W.T, A[i, :])[0]
            if np.abs(V @ W - A).max() < 1e-12:
                break
        if np.abs(V @ W - A).max() > 1e-6:
            continue
        for den in (1, 2, 3, 4, 6, 8, 12, 16, 24, 32, 64, 128, 1024, 10**6):
            Vq = [[Fraction(float(x)).limit_denominator(den) for x in row] for row in V]
            if any(x < 0 for row in Vq for x in row):
                continue
            Wq = _solve_w(Vq, M)
            if Wq is not None:
                return RankSearchResult("found", Vq, Wq, "alternating least squares, exact completion")
    return RankSearchResult("not_found", reason=f"no factorization after {starts} starts")


def _solve_w(V, M):
    m, k = len(V), len(V[0])
    cols = []
    for j in range(len(M[0])):
        res = lp_feasible(V, [M[i][j] for i in range(m)])
        if not res.feasible:
            return None
        cols.append(res.x)
    return [[cols[j][t] for j in range(len(cols))] for t in range(k)]
