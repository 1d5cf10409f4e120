"""Multi-indices, canonical composite operators and the operator string grammar.

A composite operator is a normal-ordered monomial of derivatives of the
scalar field, labelled by a tuple of multi-indices in N^4.  Factors commute,
so operators are stored with their factors sorted.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from functools import lru_cache
from itertools import product
from math import factorial, prod

MultiIndex = tuple  # 4-tuple of non-negative ints

ZERO = (0, 0, 0, 0)


def as_multiindex(entries) -> MultiIndex:
    alpha = tuple(int(a) for a in entries)
    if len(alpha) != 4:
        raise ValueError(f"multi-index needs 4 entries, got {len(alpha)}")
    if any(a < 0 for a in alpha):
        raise ValueError(f"multi-index entries must be non-negative: {alpha}")
    return alpha


def norm(alpha) -> int:
    """Total derivative order |alpha|."""
    return sum(alpha)


def mi_factorial(alpha) -> int:
    return prod(factorial(a) for a in alpha)


def mi_add(alpha, beta) -> MultiIndex:
    return tuple(a + b for a, b in zip(alpha, beta))


def mi_sub(alpha, beta):
    """alpha - beta, or None when some component would be negative."""
    out = tuple(a - b for a, b in zip(alpha, beta))
    if any(c < 0 for c in out):
        return None
    return out


@lru_cache(maxsize=None)
def multi_indices(k: int) -> tuple:
    """All multi-indices of norm k, in lexicographic order."""
    out = []
    for a in range(k + 1):
        for b in range(k - a + 1):
            for c in range(k - a - b + 1):
                out.append((a, b, c, k - a - b - c))
    return tuple(out)


@lru_cache(maxsize=None)
def multi_indices_upto(k: int) -> tuple:
    return tuple(sorted(a for j in range(k + 1) for a in multi_indices(j)))


@dataclass(frozen=True, order=True)
class CompositeOp:
    """Canonical composite operator; the empty factor tuple is the identity."""

    factors: tuple = ()

    def __post_init__(self):
        canon = tuple(sorted(as_multiindex(f) for f in self.factors))
        object.__setattr__(self, "factors", canon)

    @classmethod
    def of(cls, *factors) -> "CompositeOp":
        return cls(tuple(factors))

    @classmethod
    def power(cls, k: int) -> "CompositeOp":
        return cls((ZERO,) * k)

    @property
    def n_factors(self) -> int:
        return len(self.factors)

    @property
    def dimension(self) -> int:
        return sum(1 + norm(a) for a in self.factors)

    def is_identity(self) -> bool:
        return not self.factors

    def symmetry_factor(self) -> int:
        """Product of factorials of the multiplicities of equal factors."""
        return prod(factorial(c) for c in Counter(self.factors).values())

    def __str__(self) -> str:
        return format_op(self)

    def __repr__(self) -> str:
        return f"CompositeOp({format_op(self)!r})"


IDENTITY = CompositeOp()
PHI = CompositeOp.power(1)
PHI2 = CompositeOp.power(2)
PHI4 = CompositeOp.power(4)


def dimension(op: CompositeOp) -> int:
    """Engineering dimension: sum over factors of 1 + |alpha|."""
    return op.dimension


def canonicalize(factors) -> CompositeOp:
    return CompositeOp(tuple(factors))


def _multisets(n: int, total: int, floor: tuple):
    """Non-decreasing sequences of n multi-indices with summed norm ``total``,
    each element >= floor lexicographically."""
    if n == 0:
        if total == 0:
            yield ()
        return
    for alpha in multi_indices_upto(total):
        if alpha < floor:
            continue
        rest = total - norm(alpha)
        for tail in _multisets(n - 1, rest, alpha):
            yield (alpha,) + tail


@lru_cache(maxsize=None)
def enumerate_ops(d: int) -> tuple:
    """Every canonical operator of dimension exactly d.

    Ordered by number of factors, then lexicographically by factor tuple.
    """
    if d < 0:
        raise ValueError("dimension must be non-negative")
    if d == 0:
        return (IDENTITY,)
    out = []
    for n in range(1, d + 1):
        ops = sorted(set(_multisets(n, d - n, ZERO)))
        out.extend(CompositeOp(f) for f in ops)
    return tuple(out)


def enumerate_ops_upto(d: int) -> tuple:
    return tuple(op for k in range(d + 1) for op in enumerate_ops(k))


# ---------------------------------------------------------------------------
# operator strings
#
#   op      := "1" | factor ("*" factor)*
#   factor  := "phi" ["^" n] | "d[" n "," n "," n "," n "]phi"
#   oplist  := op ("," op)*
# ---------------------------------------------------------------------------


class ParseError(ValueError):
    """Malformed operator string; ``offset`` is the byte offset of the fault."""

    def __init__(self, message: str, text: str, offset: int):
        self.text = text
        self.offset = offset
        super().__init__(f"{message} at byte {offset}: {text!r}")


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.data = text.encode("utf-8")
        self.pos = 0

    def error(self, message):
        raise ParseError(message, self.text, self.pos)

    def skip_ws(self):
        while self.pos < len(self.data) and self.data[self.pos] in b" \t":
            self.pos += 1

    def peek(self, token: bytes) -> bool:
        self.skip_ws()
        return self.data.startswith(token, self.pos)

    def expect(self, token: bytes):
        if not self.peek(token):
            self.error(f"expected {token.decode()!r}")
        self.pos += len(token)

    def number(self) -> int:
        self.skip_ws()
        start = self.pos
        while self.pos < len(self.data) and 48 <= self.data[self.pos] <= 57:
            self.pos += 1
        if start == self.pos:
            self.error("expected a non-negative integer")
        return int(self.data[start:self.pos])

    def factor(self) -> list:
        if self.peek(b"phi"):
            self.pos += 3
            if self.peek(b"^"):
                self.pos += 1
                k = self.number()
                if k == 0:
                    self.error("power must be positive")
                return [ZERO] * k
            return [ZERO]
        if self.peek(b"d["):
            self.pos += 2
            alpha = [self.number()]
            for _ in range(3):
                self.expect(b",")
                alpha.append(self.number())
            self.expect(b"]")
            self.expect(b"phi")
            return [tuple(alpha)]
        self.error("expected 'phi' or 'd['")

    def op(self) -> CompositeOp:
        self.skip_ws()
        if self.peek(b"1"):
            self.pos += 1
            return IDENTITY
        factors = self.factor()
        while self.peek(b"*"):
            self.pos += 1
            factors += self.factor()
        return CompositeOp(tuple(factors))

    def end(self):
        self.skip_ws()
        if self.pos != len(self.data):
            self.error("unexpected trailing input")


def parse_op(text: str) -> CompositeOp:
    p = _Parser(text)
    op = p.op()
    p.end()
    return op


def parse_op_list(text: str) -> list:
    p = _Parser(text)
    ops = [p.op()]
    while p.peek(b","):
        p.pos += 1
        ops.append(p.op())
    p.end()
    return ops


def format_op(op: CompositeOp) -> str:
    if op.is_identity():
        return "1"
    parts = []
    counts = Counter(op.factors)
    for alpha in sorted(counts):
        k = counts[alpha]
        if alpha == ZERO:
            parts.append("phi" if k == 1 else f"phi^{k}")
        else:
            parts.extend([f"d[{alpha[0]},{alpha[1]},{alpha[2]},{alpha[3]}]phi"] * k)
    return "*".join(parts)


def signed_permutation_action(alpha, perm, signs):
    """Image of a multi-index under x'_mu = signs[mu] * x[perm[mu]].

    Returns (alpha', sign) with alpha'_mu = alpha[perm[mu]] and
    sign = prod_mu signs[mu]**alpha'_mu.
    """
    new = tuple(alpha[perm[mu]] for mu in range(4))
    sign = prod(signs[mu] ** new[mu] for mu in range(4))
    return new, sign


def all_signed_permutations():
    from itertools import permutations
    for perm in permutations(range(4)):
        for signs in product((1, -1), repeat=4):
            yield perm, signs
