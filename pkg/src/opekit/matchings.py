"""Wick contractions: perfect matchings of field slots, free OPE coefficients
and the merged-matching representation of nested products.

A slot is one field factor of one vertex.  The free coefficient is the sum
over perfect matchings of products of pair weights (a hafnian); pairs of
slots on the same vertex, and pairs of two root slots, weigh zero.

Normalization: the outgoing operator is a plain monomial, so a hafnian over
its slots counts each distinct assignment once per permutation of equal
factors.  All free coefficients are divided by that multiplicity factor,
which makes the one-point coefficient the identity and makes sums over
canonical intermediate operators reproduce the Taylor expansion exactly.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from itertools import product
from math import factorial

import numpy as np

from .multiindex import mi_add, mi_factorial, mi_sub, multi_indices, norm
from .propagator import propagator_derivative
from .trees import TreeError, WeightedTree


def perfect_matchings(n: int):
    """All perfect matchings of range(n) as lists of pairs (i, j), i < j."""
    if n % 2:
        return
    if n == 0:
        yield []
        return
    for j in range(1, n):
        rest = [k for k in range(1, n) if k != j]
        for sub in perfect_matchings(n - 2):
            yield [(0, j)] + [(rest[a], rest[b]) for a, b in sub]


def double_factorial_odd(k: int) -> int:
    """(2k-1)!!, the number of perfect matchings of 2k objects."""
    out = 1
    for i in range(1, 2 * k, 2):
        out *= i
    return out


def monomial_weight(alpha, beta, dx):
    """d^alpha_x (x - x_R)^beta / beta!  evaluated at x - x_R = dx."""
    gamma = mi_sub(beta, alpha)
    if gamma is None:
        return 0.0
    dx = np.asarray(dx, dtype=float)
    val = np.ones(dx.shape[:-1])
    for mu, g in enumerate(gamma):
        if g:
            val = val * dx[..., mu] ** g
    val = val / mi_factorial(gamma)
    return val if val.ndim else float(val)


def _pair_weight_leaves(alpha, beta, dx, m, cache):
    """d^alpha_{x_v} d^beta_{x_w} Delta(x_v - x_w) at x_v - x_w = dx."""
    gamma = mi_add(alpha, beta)
    key = (id(dx), gamma)
    if key not in cache:
        cache[key] = propagator_derivative(gamma, dx, m)
    sign = -1.0 if norm(beta) % 2 else 1.0
    return sign * cache[key]


def _hafnian(entries, n):
    """Hafnian of a symmetric table; entries[(i, j)] for i < j, missing = 0."""
    memo = {}
    adj = [[] for _ in range(n)]
    for (i, j) in entries:
        adj[i].append(j)

    def haf(mask):
        if mask == 0:
            return 1.0
        if mask in memo:
            return memo[mask]
        i = (mask & -mask).bit_length() - 1
        total = 0.0
        rest = mask & ~(1 << i)
        for j in adj[i]:
            if rest >> j & 1:
                sub = haf(rest & ~(1 << j))
                if sub is not None:
                    total = total + entries[(i, j)] * sub
        memo[mask] = total
        return total

    return haf((1 << n) - 1)


def free_coefficient(ops, points, target, m: float, root_point=None, scales=None):
    """Free OPE coefficient (C_0)_{ops}^{target}(points; root_point).

    Points may be arrays of shape (n, 4); the result then broadcasts.
    No validation of the geometry is done here.
    """
    if root_point is None:
        root_point = points[-1]
    slots = []
    for v, op in enumerate(ops):
        for alpha in op.factors:
            slots.append((v, alpha))
    n_leaf = len(slots)
    for beta in target.factors:
        slots.append((None, beta))
    n = len(slots)
    if n % 2 or target.n_factors > n_leaf:
        return 0.0
    pts = [np.asarray(p, dtype=float) for p in points]
    xr = np.asarray(root_point, dtype=float)
    diffs = {}
    deriv_cache = {}
    entries = {}
    for i in range(n):
        vi, ai = slots[i]
        if vi is None:
            continue
        for j in range(i + 1, n):
            vj, aj = slots[j]
            if vj == vi:
                continue
            if vj is None:
                key = (vi, None)
                if key not in diffs:
                    diffs[key] = pts[vi] - xr
                w = monomial_weight(ai, aj, diffs[key])
            else:
                key = (vi, vj)
                if key not in diffs:
                    diffs[key] = pts[vi] - pts[vj]
                w = _pair_weight_leaves(ai, aj, diffs[key], m, deriv_cache)
            if np.isscalar(w) and w == 0.0:
                continue
            entries[(i, j)] = w
    value = _hafnian(entries, n)
    weight = 1.0 / target.symmetry_factor()
    if scales is not None:
        for s in scales:
            weight *= s
    return value * weight


def free_ope(tree: WeightedTree, m: float) -> float:
    """Free coefficient of a tree whose only internal vertex is the root."""
    if tree.internal_nonroot:
        raise TreeError("free_ope needs a tree whose only internal vertex is the root")
    leaves = tree.ch(tree.root)
    return free_coefficient(
        [tree.op(v) for v in leaves],
        [tree.point(v) for v in leaves],
        tree.op(tree.root),
        m,
        root_point=tree.point(tree.root),
        scales=[tree.scale(v) for v in leaves],
    )


# ---------------------------------------------------------------------------
# merged matchings with Taylor weights
# ---------------------------------------------------------------------------


def taylor_operator(f_derivative, x, y, d):
    """T^d_{x->y} f = sum_{|v|=d} (x-y)^v / v! d^v f(y).

    ``f_derivative(v)`` returns d^v f evaluated at y.
    """
    if d < 0:
        return 0.0
    dx = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    total = 0.0
    for v in multi_indices(d):
        total += monomial_weight((0, 0, 0, 0), v, dx) * f_derivative(v)
    return total


def _chain_polynomial(alpha, chain_points, start_point, degrees):
    """Nested Taylor expansion along a chain of ancestors.

    Returns {gamma: coefficient}: applying T^{d_1-|alpha|}_{x_0->x_1} then
    T^{d_2-d_1}_{x_1->x_2} ... to d^alpha f yields
    sum_gamma coefficient * d^gamma f(x_last).
    """
    poly = {tuple(alpha): 1.0}
    prev_deg = norm(alpha)
    prev_point = np.asarray(start_point, dtype=float)
    for point, d in zip(chain_points, degrees):
        step = d - prev_deg
        if step < 0:
            return {}
        dx = prev_point - np.asarray(point, dtype=float)
        new = {}
        for b in multi_indices(step):
            c = monomial_weight((0, 0, 0, 0), b, dx)
            if c == 0.0:
                continue
            for g, cg in poly.items():
                key = mi_add(g, b)
                new[key] = new.get(key, 0.0) + cg * c
        poly = new
        prev_deg = d
        prev_point = np.asarray(point, dtype=float)
    return poly


class _MergedEvaluator:
    def __init__(self, tree: WeightedTree, D: dict, m: float):
        self.tree = tree
        self.m = m
        self.D = {u: int(D[u]) for u in tree.internal_nonroot}
        self.slots = []
        for v in tree.leaves:
            for alpha in tree.op(v).factors:
                self.slots.append((v, alpha))
        self.n_leaf = len(self.slots)
        for beta in tree.op(tree.root).factors:
            self.slots.append((tree.root, beta))
        self.chains = {}
        for v in tree.leaves:
            self.chains[v] = [u for u in tree.an(v) if u != tree.root]
        self.entry_cache = {}
        self.deriv_cache = {}

    def separating(self, v, w):
        """(chain above v, chain above w) of internal non-root vertices
        separating the two slots, nearest first."""
        if w == self.tree.root:
            return self.chains[v], []
        av, aw = self.chains[v], self.chains[w]
        sv, sw = set(av), set(aw)
        return [u for u in av if u not in sw], [u for u in aw if u not in sv]

    def entry(self, i, j, degrees):
        key = (i, j, degrees)
        if key in self.entry_cache:
            return self.entry_cache[key]
        tree = self.tree
        (v, a), (w, b) = self.slots[i], self.slots[j]
        cv, cw = self.separating(v, w)
        dv = degrees[:len(cv)]
        dw = degrees[len(cv):]
        pv = _chain_polynomial(a, [tree.point(u) for u in cv], tree.point(v), dv)
        end_v = tree.point(cv[-1]) if cv else tree.point(v)
        if w == tree.root:
            dx = end_v - tree.point(w)
            val = 0.0
            for g, c in pv.items():
                val += c * monomial_weight(g, b, dx)
        else:
            pw = _chain_polynomial(b, [tree.point(u) for u in cw], tree.point(w), dw)
            end_w = tree.point(cw[-1]) if cw else tree.point(w)
            ends = (cv[-1] if cv else v, cw[-1] if cw else w)
            combined = {}
            for gv, c1 in pv.items():
                for gw, c2 in pw.items():
                    sign = -1.0 if norm(gw) % 2 else 1.0
                    g = mi_add(gv, gw)
                    combined[g] = combined.get(g, 0.0) + sign * c1 * c2
            val = 0.0
            for g, c in combined.items():
                dkey = (ends, g)
                if dkey not in self.deriv_cache:
                    self.deriv_cache[dkey] = propagator_derivative(g, end_v - end_w, self.m)
                val += c * self.deriv_cache[dkey]
        self.entry_cache[key] = val
        return val

    def matchings(self, first=None):
        """Perfect matchings of slots with same-vertex and root-root pairs pruned."""
        n = len(self.slots)
        root = self.tree.root

        def allowed(i, j):
            vi, vj = self.slots[i][0], self.slots[j][0]
            return vi != vj

        def rec(remaining):
            if not remaining:
                yield []
                return
            i = remaining[0]
            for j in remaining[1:]:
                if allowed(i, j):
                    rest = [k for k in remaining[1:] if k != j]
                    for sub in rec(rest):
                        yield [(i, j)] + sub

        if n % 2 or self.tree.op(root).n_factors > self.n_leaf:
            return
        order = list(range(n))
        if first is None:
            yield from rec(order)
        else:
            i, j = first
            rest = [k for k in order if k not in (i, j)]
            for sub in rec(rest):
                yield [(i, j)] + sub

    def matching_value(self, sigma):
        tree = self.tree
        seps = []
        members = {u: [] for u in self.D}
        for p, (i, j) in enumerate(sigma):
            v, w = self.slots[i][0], self.slots[j][0]
            if v == tree.root:
                i, j = j, i
                v, w = w, v
            cv, cw = self.separating(v, w)
            seps.append(((i, j), cv + cw))
            for u in cv + cw:
                members[u].append(p)
        # degree assignments: for every u, sum over its pairs of (d + 1) = D_u
        per_vertex = []
        for u, pairs in members.items():
            k = len(pairs)
            if k == 0:
                if self.D[u] != 0:
                    return 0.0
                continue
            per_vertex.append((u, pairs, list(_compositions(self.D[u] - k, k))))
        total = 0.0
        for choice in product(*[c for _, _, c in per_vertex]):
            deg = {}
            for (u, pairs, _), comp in zip(per_vertex, choice):
                for p, d in zip(pairs, comp):
                    deg[(p, u)] = d
            term = 1.0
            for p, ((i, j), chain) in enumerate(seps):
                val = self.entry(i, j, tuple(deg[(p, u)] for u in chain))
                if val == 0.0:
                    term = 0.0
                    break
                term = term * val
            total += term
        return total


def _compositions(total, k):
    """Ordered k-tuples of non-negative integers summing to total."""
    if total < 0:
        return
    if k == 1:
        yield (total,)
        return
    for first in range(total + 1):
        for rest in _compositions(total - first, k - 1):
            yield (first,) + rest


def merged_contraction(tree: WeightedTree, D: dict, m: float, workers: int = 1) -> float:
    """prod_{u internal, non-root} sum_{[A_u] = D_u} of the free contraction of
    the tree, evaluated by merged matchings of leaf and root slots with
    nested Taylor weights on merged pairs.

    The Taylor-weighted sum runs over matchings of the external slots only;
    the count |I_u|! of re-labellings of the intermediate slots is compensated
    by the multiplicity normalization of the intermediate operators (see the
    module docstring), so no extra symmetry factor appears.
    """
    missing = [u for u in tree.internal_nonroot if u not in D]
    if missing:
        raise TreeError(f"no dimension given for internal vertices {missing}")
    ev = _MergedEvaluator(tree, D, m)
    scale = 1.0 / tree.op(tree.root).symmetry_factor()
    for v in tree.leaves:
        scale *= tree.scale(v)
    n = len(ev.slots)
    if n == 0:
        return scale * (1.0 if all(d == 0 for d in ev.D.values()) else 0.0)
    if workers <= 1:
        return scale * sum(ev.matching_value(s) for s in ev.matchings())

    firsts = [(0, j) for j in range(1, n) if ev.slots[0][0] != ev.slots[j][0]]

    def part(first):
        local = _MergedEvaluator(tree, D, m)
        return sum(local.matching_value(s) for s in local.matchings(first))

    with ThreadPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(part, firsts))
    return scale * sum(parts)


def merged_entry(tree: WeightedTree, slot_a, slot_b, degrees: dict, m: float) -> float:
    """Single Taylor-weighted pair weight M_pi for slots (vertex, alpha).

    ``degrees`` maps each separating internal vertex to its degree d^u_pi.
    """
    ev = _MergedEvaluator(tree, {u: 0 for u in tree.internal_nonroot}, m)
    i = ev.slots.index(tuple(slot_a)) if tuple(slot_a) in ev.slots else None
    j = ev.slots.index(tuple(slot_b)) if tuple(slot_b) in ev.slots else None
    if i is None or j is None:
        raise TreeError("slot not found in tree")
    v, w = ev.slots[i][0], ev.slots[j][0]
    if v == tree.root:
        i, j, v, w = j, i, w, v
    cv, cw = ev.separating(v, w)
    return ev.entry(i, j, tuple(int(degrees[u]) for u in cv + cw))
