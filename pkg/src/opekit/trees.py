"""Weighted rooted trees encoding nested products of OPE coefficients.

Every vertex carries a point in R^4 and a composite operator.  Leaves are the
external points, the root carries the outgoing operator, and every internal
vertex sits at the point of one of its children.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .multiindex import CompositeOp, PHI4, parse_op

LAGRANGIAN_SCALE = 1.0 / 24.0  # O_L = phi^4 / 4!


class TreeError(ValueError):
    """Raised when a tree description violates the weighted-tree rules."""


@dataclass(frozen=True)
class WeightedTree:
    root: int
    parent: dict
    points: dict
    ops: dict
    # extra scalar weight per leaf (1/24 for interaction leaves)
    scales: dict = field(default_factory=dict)

    # -- relational queries -------------------------------------------------

    @property
    def vertices(self) -> list:
        return sorted(self.points)

    def ch(self, v) -> list:
        return sorted(w for w, p in self.parent.items() if p == v)

    def pa(self, v):
        return self.parent.get(v)

    def sb(self, v) -> list:
        p = self.pa(v)
        if p is None:
            return []
        return [w for w in self.ch(p) if w != v]

    def an(self, v) -> list:
        """Proper ancestors, nearest first."""
        out = []
        p = self.pa(v)
        while p is not None:
            out.append(p)
            p = self.pa(p)
        return out

    def de(self, v) -> list:
        """Proper descendants."""
        out = []
        stack = list(self.ch(v))
        while stack:
            w = stack.pop()
            out.append(w)
            stack.extend(self.ch(w))
        return sorted(out)

    def is_leaf(self, v) -> bool:
        return v != self.root and not self.ch(v)

    @property
    def leaves(self) -> list:
        return [v for v in self.vertices if self.is_leaf(v)]

    @property
    def internal(self) -> list:
        """Internal vertices, root included."""
        return [v for v in self.vertices if not self.is_leaf(v)]

    @property
    def internal_nonroot(self) -> list:
        return [v for v in self.internal if v != self.root]

    def point(self, v) -> np.ndarray:
        return np.asarray(self.points[v], dtype=float)

    def op(self, v) -> CompositeOp:
        return self.ops[v]

    def scale(self, v) -> float:
        return self.scales.get(v, 1.0)

    def dist(self, v, w) -> float:
        return float(np.linalg.norm(self.point(v) - self.point(w)))

    def branches(self) -> dict:
        """Leaf -> path of internal non-root vertices from its parent upwards."""
        return {leaf: [u for u in self.an(leaf) if u != self.root] for leaf in self.leaves}

    def constant_branches(self) -> list:
        """Branches along which the point is constant, leaf included.

        Exactly one such branch descends from each child of the root.
        """
        out = []
        for leaf, path in self.branches().items():
            x = self.points[leaf]
            if all(tuple(self.points[u]) == tuple(x) for u in path):
                out.append(path)
        return out

    def default_branch(self) -> list:
        return self.constant_branches()[0]

    def xi(self, v) -> float:
        """Separation ratio of an internal non-root vertex."""
        if v == self.root or self.is_leaf(v):
            raise TreeError(f"separation ratio is defined only for internal non-root vertices, got {v}")
        near = max(self.dist(e, v) for e in self.ch(v))
        far = min(self.dist(e, v) for e in self.sb(v))
        return near / far

    def subtree_at(self, u) -> "WeightedTree":
        """Tree whose root is u and whose leaves are the children of u."""
        kids = self.ch(u)
        parent = {w: u for w in kids}
        points = {w: self.points[w] for w in kids + [u]}
        ops = {w: self.ops[w] for w in kids + [u]}
        scales = {w: self.scales[w] for w in kids if w in self.scales}
        return WeightedTree(u, parent, points, ops, scales)

    def without_below(self, u) -> "WeightedTree":
        """Tree with everything strictly below u removed; u becomes a leaf."""
        gone = set(self.de(u))
        keep = [v for v in self.vertices if v not in gone]
        return WeightedTree(
            self.root,
            {v: p for v, p in self.parent.items() if v in keep},
            {v: self.points[v] for v in keep},
            {v: self.ops[v] for v in keep},
            {v: s for v, s in self.scales.items() if v in keep and v != u},
        )

    def to_description(self) -> list:
        from .multiindex import format_op
        return [
            {
                "id": v,
                "parent": self.parent.get(v),
                "point": [float(c) for c in self.points[v]],
                "op": format_op(self.ops[v]),
            }
            for v in self.vertices
        ]


def _validate(tree: WeightedTree):
    verts = set(tree.points)
    if tree.root not in verts:
        raise TreeError("root is not a vertex")
    if tree.root in tree.parent:
        raise TreeError("root must not have a parent")
    for v, p in tree.parent.items():
        if v not in verts or p not in verts:
            raise TreeError(f"parent link {v}->{p} refers to an unknown vertex")
    if set(tree.parent) != verts - {tree.root}:
        raise TreeError("every non-root vertex needs exactly one parent")
    # connectivity / acyclicity: every vertex must reach the root
    for v in verts:
        seen = set()
        w = v
        while w != tree.root:
            if w in seen:
                raise TreeError(f"cycle through vertex {v}")
            seen.add(w)
            w = tree.parent[w]
    for v in verts:
        c = np.asarray(tree.points[v], dtype=float)
        if c.shape != (4,) or not np.all(np.isfinite(c)):
            raise TreeError(f"vertex {v} needs a finite 4-vector point")
    if not tree.ch(tree.root):
        raise TreeError("root has no children")
    for v in tree.internal_nonroot:
        if len(tree.ch(v)) + 1 <= 2:
            raise TreeError(f"internal vertex {v} has degree 2")
    for v in tree.internal:
        if not any(tree.dist(v, w) == 0.0 for w in tree.ch(v)):
            raise TreeError(f"point of internal vertex {v} is not the point of one of its children")
    leaves = tree.leaves
    for i, a in enumerate(leaves):
        for b in leaves[i + 1:]:
            if tree.dist(a, b) == 0.0:
                raise TreeError(f"leaves {a} and {b} share a point")


def _coerce_op(op):
    if isinstance(op, CompositeOp):
        return op
    return parse_op(str(op))


def build_tree(description) -> WeightedTree:
    """Validated tree from a list of {id, parent, point, op} records.

    A JSON string or a dict with a "vertices" key is also accepted.
    """
    if isinstance(description, str):
        description = json.loads(description)
    if isinstance(description, dict):
        description = description["vertices"]
    roots = [rec for rec in description if rec.get("parent") is None]
    if len(roots) != 1:
        raise TreeError(f"need exactly one root, got {len(roots)}")
    ids = [rec["id"] for rec in description]
    if len(set(ids)) != len(ids):
        raise TreeError("duplicate vertex ids")
    tree = WeightedTree(
        root=roots[0]["id"],
        parent={rec["id"]: rec["parent"] for rec in description if rec.get("parent") is not None},
        points={rec["id"]: tuple(float(c) for c in rec["point"]) for rec in description},
        ops={rec["id"]: _coerce_op(rec["op"]) for rec in description},
        scales={rec["id"]: float(rec["scale"]) for rec in description if "scale" in rec},
    )
    _validate(tree)
    return tree


def star_tree(ops, points, target, root_point=None) -> WeightedTree:
    """Tree whose only internal vertex is the root: leaves 0..N-1, root N."""
    n = len(ops)
    if root_point is None:
        root_point = points[-1]
    recs = [{"id": i, "parent": n, "point": list(points[i]), "op": ops[i]} for i in range(n)]
    recs.append({"id": n, "parent": None, "point": list(root_point), "op": target})
    return build_tree(recs)


def split_tree(ops, points, target, split: int, inner) -> WeightedTree:
    """The two-level tree: leaves 0..M-1 under an inner vertex at x_M,
    which sits next to leaves M..N-1 under the root at x_N."""
    n = len(ops)
    if not 1 <= split < n:
        raise TreeError("split index must satisfy 1 <= M < N")
    u, root = n, n + 1
    recs = [{"id": i, "parent": u if i < split else root, "point": list(points[i]), "op": ops[i]}
            for i in range(n)]
    recs.append({"id": u, "parent": root, "point": list(points[split - 1]), "op": inner})
    recs.append({"id": root, "parent": None, "point": list(points[-1]), "op": target})
    return build_tree(recs)


def _next_id(tree):
    return max(tree.points) + 1


def graft(tree: WeightedTree, mode: str, v, y, A_u=None, lagrangian=PHI4) -> WeightedTree:
    """Attach an interaction leaf (lagrangian, y) to the tree.

    at_vertex:     the new leaf hangs from v.
    above_child:   v's parent edge is split by a new vertex u with weight
                   (A_u, x_v); the leaf hangs from u.
    below_vertex:  v's parent edge is split by a new vertex u with weight
                   (A_v, x_v), v is re-weighted to (A_u, x_v), and the leaf
                   hangs from u.  At the root a new root u is created.
    """
    if v not in tree.points:
        raise TreeError(f"unknown vertex {v}")
    parent = dict(tree.parent)
    points = dict(tree.points)
    ops = dict(tree.ops)
    scales = dict(tree.scales)
    root = tree.root
    leaf = _next_id(tree)
    points[leaf] = tuple(float(c) for c in y)
    ops[leaf] = lagrangian
    scales[leaf] = LAGRANGIAN_SCALE
    if mode == "at_vertex":
        if tree.is_leaf(v):
            raise TreeError("at_vertex graft needs an internal vertex")
        parent[leaf] = v
    elif mode == "above_child":
        if A_u is None:
            raise TreeError("above_child graft needs the operator A_u")
        if v == tree.root:
            raise TreeError("above_child graft needs a vertex with a parent edge")
        u = leaf + 1
        points[u] = tree.points[v]
        ops[u] = _coerce_op(A_u)
        parent[u] = tree.parent[v]
        parent[v] = u
        parent[leaf] = u
    elif mode == "below_vertex":
        if A_u is None:
            raise TreeError("below_vertex graft needs the operator A_u")
        if tree.is_leaf(v):
            raise TreeError("below_vertex graft needs an internal vertex")
        u = leaf + 1
        points[u] = tree.points[v]
        ops[u] = tree.ops[v]
        ops[v] = _coerce_op(A_u)
        if v == tree.root:
            root = u
        else:
            parent[u] = tree.parent[v]
        parent[v] = u
        parent[leaf] = u
    else:
        raise TreeError(f"unknown graft mode {mode!r}")
    out = WeightedTree(root, parent, points, ops, scales)
    _validate(out)
    return out
