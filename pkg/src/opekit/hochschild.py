"""The boundary operator b on truncated coefficient cochains.

An N-cochain is a function of N points returning components
f(x_1..x_N)_{A_1..A_N}^B.  Every composition inside b sums over an
intermediate operator C; those sums run over all C of dimension at most
D_max, which replaces the convergence condition on the domain of b by an
explicit truncation.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import sqrt
from typing import Callable

import numpy as np

from .matchings import free_coefficient, merged_contraction
from .multiindex import IDENTITY, CompositeOp, enumerate_ops, enumerate_ops_upto
from .trees import build_tree

REL_TOL = 1e-12


class DomainError(ValueError):
    """Points outside the nested-separation domain."""


def _dist(a, b) -> float:
    return float(np.linalg.norm(np.asarray(a, dtype=float) - np.asarray(b, dtype=float)))


def _less(a, b) -> bool:
    return b - a > REL_TOL * max(abs(a), abs(b))


def in_domain(points) -> bool:
    """Membership in F_N: r_{1,i-1} < r_{i-1,i} < r_{i-2,i} < ... < r_{1,i}."""
    n = len(points)
    for a in range(n):
        for b in range(a + 1, n):
            if _dist(points[a], points[b]) == 0.0:
                return False
    for i in range(3, n + 1):
        chain = [_dist(points[0], points[i - 2])]
        chain += [_dist(points[j - 1], points[i - 1]) for j in range(i - 1, 0, -1)]
        if not all(_less(x, y) for x, y in zip(chain, chain[1:])):
            return False
    return True


def _check_domain(points):
    if not in_domain(points):
        raise DomainError(f"points are not in F_{len(points)}")


@dataclass(frozen=True)
class TruncatedCochain:
    """N-cochain with evaluator(points, ins, out) -> float."""

    N: int
    evaluator: Callable
    D_max: int = 6
    name: str = "f"
    cheap: bool = False  # evaluate before the free coefficient it multiplies

    def __call__(self, points, ins, out) -> float:
        return self.evaluator(tuple(tuple(map(float, p)) for p in points), tuple(ins), out)

    def __add__(self, other):
        return linear_combination([(1.0, self), (1.0, other)])


def linear_combination(terms) -> TruncatedCochain:
    N = terms[0][1].N
    if any(f.N != N for _, f in terms):
        raise ValueError("cochains of different arity")

    def ev(points, ins, out):
        return sum(a * f(points, ins, out) for a, f in terms)

    return TruncatedCochain(N, ev, max(f.D_max for _, f in terms), "lin", all(f.cheap for _, f in terms))


def zero_cochain(N: int) -> TruncatedCochain:
    return TruncatedCochain(N, lambda points, ins, out: 0.0, 0, "0", True)


def identity_cochain() -> TruncatedCochain:
    return TruncatedCochain(1, lambda points, ins, out: 1.0 if ins[0] == out else 0.0, 0, "id", True)


def rank_one_cochain(rng, max_dim: int = 2) -> TruncatedCochain:
    """Position-independent f_A^C = a_A c^C with random a, c on dims <= max_dim."""
    basis = enumerate_ops_upto(max_dim)
    a = dict(zip(basis, rng.normal(size=len(basis))))
    c = dict(zip(basis, rng.normal(size=len(basis))))

    def ev(points, ins, out):
        return a.get(ins[0], 0.0) * c.get(out, 0.0)

    f = TruncatedCochain(1, ev, max_dim, "rank1", True)
    object.__setattr__(f, "support", (a, c))
    return f


def _feasible(counts) -> bool:
    """Slot counts of leaves then root admit a perfect matching without
    same-vertex pairs."""
    total = sum(counts)
    return total % 2 == 0 and all(2 * n <= total for n in counts)


@lru_cache(maxsize=200_000)
def _free(ops: tuple, points: tuple, target: CompositeOp, m: float) -> float:
    counts = [op.n_factors for op in ops] + [target.n_factors]
    if not _feasible(counts):
        return 0.0
    return float(free_coefficient(list(ops), [np.array(p) for p in points], target, m))


def free_cochain(m: float, D_max: int = 6) -> TruncatedCochain:
    """The two-point free coefficient C_0(x_1, x_2) as a 2-cochain."""

    def ev(points, ins, out):
        return _free(tuple(ins), tuple(points), out, m)

    return TruncatedCochain(2, ev, D_max, "C0")


def _intermediates(D_max):
    return enumerate_ops_upto(D_max)


def b_apply(f: TruncatedCochain, points, ins, out, D_max: int, m: float, check=True) -> float:
    """(b f)(x_1..x_{N+1})_{ins}^{out}, all intermediate sums cut at D_max."""
    N = f.N
    points = [tuple(map(float, p)) for p in points]
    ins = list(ins)
    if len(points) != N + 1 or len(ins) != N + 1:
        raise ValueError(f"b of an {N}-cochain needs {N + 1} points and operators")
    if check:
        _check_domain(points)
    Cs = _intermediates(D_max)
    A1, last = ins[0], ins[-1]

    def product(c0_args, f_args):
        # order the two factors so the cheaper one can short-circuit
        if f.cheap:
            fv = f(*f_args)
            return fv * _free(*c0_args) if fv != 0.0 else 0.0
        c0 = _free(*c0_args)
        return c0 * f(*f_args) if c0 != 0.0 else 0.0

    total = 0.0
    # C_0(x_1, x_{N+1}) (id (x) f(x_2..x_{N+1}))
    for C in Cs:
        if _feasible([A1.n_factors, C.n_factors, out.n_factors]):
            total += product(((A1, C), (points[0], points[-1]), out, m), (points[1:], ins[1:], C))
    # sum_i (-1)^i f(.. omit x_i ..)(.. C_0(x_i, x_{i+1}) ..)
    for i in range(1, N + 1):
        sign = -1.0 if i % 2 else 1.0
        Ai, Aj = ins[i - 1], ins[i]
        sub_pts = points[: i - 1] + points[i:]
        for C in Cs:
            if _feasible([Ai.n_factors, Aj.n_factors, C.n_factors]):
                sub_ins = ins[: i - 1] + [C] + ins[i + 1:]
                total += sign * product(((Ai, Aj), (points[i - 1], points[i]), C, m), (sub_pts, sub_ins, out))
    # (-1)^{N+1} C_0(x_N, x_{N+1}) (f(x_1..x_N) (x) id)
    sign = -1.0 if (N + 1) % 2 else 1.0
    for C in Cs:
        if _feasible([C.n_factors, last.n_factors, out.n_factors]):
            total += sign * product(((C, last), (points[-2], points[-1]), out, m), (points[:-1], ins[:-1], C))
    return total


def b(f: TruncatedCochain, D_max: int, m: float) -> TruncatedCochain:
    """b f as a cochain of arity N + 1 (no domain check on inner calls)."""

    def ev(points, ins, out):
        return b_apply(f, points, ins, out, D_max, m, check=False)

    return TruncatedCochain(f.N + 1, ev, D_max, f"b{f.name}")


def b_squared_residual(f: TruncatedCochain, points, ins, out, D_max: int, m: float) -> float:
    """|b(b f)| at the given points and components."""
    _check_domain(points)
    return abs(b_apply(b(f, D_max, m), points, ins, out, D_max, m))


# ---------------------------------------------------------------------------
# associativity defect of the free coefficients and truncation tails
# ---------------------------------------------------------------------------


def _pair_tree(a, b_, c, out, points, inner_first: bool, inner_op=IDENTITY):
    """Three-leaf tree: the inner vertex merges (a, b) at x_2 (inner_first)
    or (b, c) at x_3."""
    x1, x2, x3 = (list(map(float, p)) for p in points)
    if inner_first:
        recs = [
            {"id": 0, "parent": 3, "point": x1, "op": a},
            {"id": 1, "parent": 3, "point": x2, "op": b_},
            {"id": 2, "parent": 4, "point": x3, "op": c},
            {"id": 3, "parent": 4, "point": x2, "op": inner_op},
            {"id": 4, "parent": None, "point": x3, "op": out},
        ]
    else:
        recs = [
            {"id": 0, "parent": 4, "point": x1, "op": a},
            {"id": 1, "parent": 3, "point": x2, "op": b_},
            {"id": 2, "parent": 3, "point": x3, "op": c},
            {"id": 3, "parent": 4, "point": x3, "op": inner_op},
            {"id": 4, "parent": None, "point": x3, "op": out},
        ]
    return build_tree(recs)


def defect_shells(ins, out, points, D: int, m: float):
    """Per-dimension contributions of the two factorizations of the free
    three-point coefficient: (left shells, right shells), d = 0..D.

    left:  sum_{[C]=d} C_{A1 A2}^C(x1,x2) C_{C A3}^B(x2,x3)
    right: sum_{[C]=d} C_{A2 A3}^C(x2,x3) C_{A1 C}^B(x1,x3)
    """
    pts = tuple(tuple(map(float, p)) for p in points)
    left, right = _defect_shells(tuple(ins), out, pts, int(D), float(m))
    return list(left), list(right)


@lru_cache(maxsize=4096)
def _defect_shells(ins, out, points, D, m):
    a, b_, c = ins
    t_left = _pair_tree(a, b_, c, out, points, True)
    t_right = _pair_tree(a, b_, c, out, points, False)
    left = tuple(merged_contraction(t_left, {3: d}, m) for d in range(D + 1))
    right = tuple(merged_contraction(t_right, {3: d}, m) for d in range(D + 1))
    return left, right


def associativity_defect(ins, out, points, D: int, m: float) -> float:
    """Phi^D = right - left factorization, both truncated at D."""
    left, right = defect_shells(ins, out, points, D, m)
    return sum(right) - sum(left)


def separation_ratios(points):
    """(r12 / r23, r23 / r13): the expansion parameters of the two factorizations."""
    r12 = _dist(points[0], points[1])
    r23 = _dist(points[1], points[2])
    r13 = _dist(points[0], points[2])
    return r12 / r23, r23 / r13


def shell_tail(values, ratio: float, extra: int = 8, safety: float = 2.0) -> float:
    """Bound on sum_{d > D} |s_d| from explicitly computed shells s_0..s_{D+extra}.

    The first ``extra`` tail shells are summed exactly; beyond that the
    tail is closed geometrically with ratio sqrt(ratio), which dominates the
    ratio^d (d+1)^p decay of the shells for large d.
    """
    D = len(values) - 1 - extra
    explicit = sum(abs(v) for v in values[D + 1:])
    q = sqrt(ratio)
    last = max(abs(v) for v in values[-2:])
    return safety * (explicit + last * q / (1.0 - q))


def b_squared_tail_bound(f: TruncatedCochain, points, ins, out, D_max: int, m: float, extra: int = 8) -> float:
    """Truncation tail for b(b f) with f a position-independent 1-cochain.

    b(b f) = Phi (f(x)1(x)1 + 1(x)f(x)1 + 1(x)1(x)f) - f Phi, with Phi the
    associativity defect of the free coefficients; every Phi^D is bounded by
    the tails of its two factorizations.
    """
    if f.N != 1:
        raise ValueError("the tail bound is implemented for 1-cochains")
    ra, rb = separation_ratios(points)
    basis = enumerate_ops_upto(max(D_max, f.D_max))
    support = list(basis)

    def phi_tail(i1, o):
        left, right = defect_shells(i1, o, points, D_max + extra, m)
        return shell_tail(left, ra, extra) + shell_tail(right, rb, extra)

    total = 0.0
    for pos in range(3):
        for C in support:
            w = f([points[pos]], [ins[pos]], C)
            if w == 0.0:
                continue
            new = list(ins)
            new[pos] = C
            total += abs(w) * phi_tail(tuple(new), out)
    for C in support:
        w = f([points[-1]], [C], out)
        if w == 0.0:
            continue
        total += abs(w) * phi_tail(tuple(ins), C)
    return total


# ---------------------------------------------------------------------------
# the first-order cocycle condition
# ---------------------------------------------------------------------------


def _cocycle_terms(ins, out, points, D_max, m, dims=None):
    """(const, ops, points, target) terms of b C_1 with C_1 inside."""
    A1, A2, A3 = ins
    x1, x2, x3 = (np.array(p, dtype=float) for p in points)
    terms = []
    dims = range(D_max + 1) if dims is None else dims
    for d in dims:
        for C in enumerate_ops(d):
            # C_0(x2,x3)(C_1(x1,x2) (x) id)
            k = _free((C, A3), (tuple(x2), tuple(x3)), out, m)
            if k != 0.0:
                terms.append((k, [A1, A2], [x1, x2], C))
            # - C_0(x1,x3)(id (x) C_1(x2,x3))
            k = _free((A1, C), (tuple(x1), tuple(x3)), out, m)
            if k != 0.0:
                terms.append((-k, [A2, A3], [x2, x3], C))
            # C_1(x2,x3)(C_0(x1,x2) (x) id)
            k = _free((A1, A2), (tuple(x1), tuple(x2)), C, m)
            if k != 0.0:
                terms.append((k, [C, A3], [x2, x3], out))
            # - C_1(x1,x3)(id (x) C_0(x2,x3))
            k = _free((A2, A3), (tuple(x2), tuple(x3)), C, m)
            if k != 0.0:
                terms.append((-k, [A1, C], [x1, x3], out))
    return terms


@dataclass(frozen=True)
class CocycleResult:
    residual: float
    sigma: float
    tail: float
    value: float


def cocycle_residual_C1(points, ins, out, D_max: int, quad=None, m: float = 1.0,
                        tail_shells: int = 2) -> CocycleResult:
    """(b C_1)(x_1, x_2, x_3) with all intermediate sums cut at D_max.

    The tail estimate uses the magnitudes of the last ``tail_shells``
    dimensions of the individual (non-cancelling) terms, closed
    geometrically with the larger separation ratio.
    """
    from .recursion import first_order_combination
    _check_domain(points)
    if any(op.dimension > 2 for op in list(ins) + [out]):
        raise ValueError("cocycle residual is limited to operators of dimension <= 2")
    terms = _cocycle_terms(ins, out, points, D_max, m)
    val = first_order_combination(terms, m, quad) if terms else None
    value = val.value if val else 0.0
    sigma = val.error if val else 0.0
    ratio = max(separation_ratios(points))
    q = sqrt(ratio)
    shells = []
    for d in range(max(0, D_max - tail_shells + 1), D_max + 1):
        mags = 0.0
        for t in _cocycle_terms(ins, out, points, D_max, m, dims=[d]):
            mags += abs(first_order_combination([t], m, quad).value)
        shells.append(mags)
    tail = 2.0 * max(shells) * q / (1.0 - q) if shells else 0.0
    return CocycleResult(abs(value), sigma, tail, value)
