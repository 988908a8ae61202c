"""Location spaces, rate families and BRW models.

Tree vertices are reduced words over the alphabet ``0..d-1``: the tree T_d is
the Cayley graph of the free product of ``d`` copies of Z/2, so a vertex is a
tuple with no two consecutive equal letters and its neighbours are obtained by
appending or cancelling one letter.  The root ``o`` is the empty tuple.
Finite-graph vertices are plain integers.

Besides the explicit vertex view, models expose a *class graph*: a partition
of the vertices that is equitable for the moment matrix, so that expected
counts, taboo sums and the generational process can be computed on classes
instead of vertices.  On a tree whose rates are modified at most at a single
anchor vertex the classes are the spheres around the anchor, which is what
makes series of order ~200 on T_d tractable.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, replace
from typing import Hashable, Mapping, Union

import numpy as np
import scipy.sparse as sp

from .rates import ZERO, Constant, RateFunction, decaying, rate_from_dict

Vertex = Union[int, tuple]

ROOT: tuple = ()

DEFAULT_BALL_CAP = 2_000_000


class ModelError(ValueError):
    """Invalid model, vertex or scenario description."""


# ---------------------------------------------------------------------------
# spaces

@dataclass(frozen=True)
class HomogeneousTree:
    d: int

    def __post_init__(self):
        if not isinstance(self.d, (int, np.integer)) or self.d < 3:
            raise ModelError(f"homogeneous tree needs integer degree d >= 3, got {self.d!r}")

    def check_vertex(self, x) -> tuple:
        if not isinstance(x, tuple):
            raise ModelError(f"tree vertex must be a tuple word, got {x!r}")
        prev = None
        for letter in x:
            if not (isinstance(letter, (int, np.integer)) and 0 <= letter < self.d):
                raise ModelError(f"letter {letter!r} out of range for T_{self.d}")
            if letter == prev:
                raise ModelError(f"tree word {x!r} is not reduced")
            prev = letter
        return x

    def adjacent(self, x: tuple) -> list[tuple]:
        last = x[-1] if x else None
        out = []
        for i in range(self.d):
            out.append(x[:-1] if i == last else x + (i,))
        return out

    @staticmethod
    def distance(x: tuple, y: tuple) -> int:
        p = 0
        for a, b in zip(x, y):
            if a != b:
                break
            p += 1
        return len(x) + len(y) - 2 * p

    def ball_size(self, radius: int) -> int:
        if radius < 0:
            return 0
        return 1 + self.d * ((self.d - 1) ** radius - 1) // (self.d - 2)

    def to_dict(self) -> dict:
        return {"tree": {"d": int(self.d)}}


@dataclass(frozen=True)
class FiniteGraph:
    n: int
    edges: tuple = ()

    def __post_init__(self):
        if self.n < 1:
            raise ModelError("finite graph needs at least one vertex")
        edges = tuple(sorted({(int(a), int(b)) for a, b in self.edges}))
        for a, b in edges:
            if not (0 <= a < self.n and 0 <= b < self.n):
                raise ModelError(f"edge {(a, b)} references a missing vertex")
            if a == b:
                raise ModelError("self-loops are given by the loop rate, not the edge list")
        object.__setattr__(self, "edges", edges)
        adj = [[] for _ in range(self.n)]
        for a, b in edges:
            adj[a].append(b)
        object.__setattr__(self, "_adj", tuple(tuple(a) for a in adj))

    def check_vertex(self, x) -> int:
        if isinstance(x, bool) or not isinstance(x, (int, np.integer)) or not 0 <= x < self.n:
            raise ModelError(f"vertex {x!r} not in finite graph of size {self.n}")
        return int(x)

    def adjacent(self, x: int) -> list[int]:
        return list(self._adj[x])

    def to_dict(self) -> dict:
        return {"graph": {"n": self.n, "edges": [list(e) for e in self.edges]}}


SpaceSpec = Union[HomogeneousTree, FiniteGraph]


def parse_vertex(space: SpaceSpec, text) -> Vertex:
    """Parse ``"o"`` / ``"0.2.1"`` for trees and integers for finite graphs."""
    if isinstance(space, HomogeneousTree):
        if isinstance(text, (tuple, list)):
            word = tuple(int(i) for i in text)
        elif text in ("o", "", None):
            word = ROOT
        else:
            try:
                word = tuple(int(i) for i in str(text).split("."))
            except ValueError as exc:
                raise ModelError(f"cannot parse tree vertex {text!r}") from exc
        return space.check_vertex(word)
    try:
        return space.check_vertex(int(text))
    except (TypeError, ValueError) as exc:
        raise ModelError(f"cannot parse graph vertex {text!r}") from exc


def format_vertex(x: Vertex) -> str:
    if isinstance(x, tuple):
        return "o" if not x else ".".join(str(i) for i in x)
    return str(x)


# ---------------------------------------------------------------------------
# rates

@dataclass(frozen=True)
class Override:
    """Replacement rates at one source vertex; None fields inherit the base."""

    edge: RateFunction | None = None
    loop: RateFunction | None = None


@dataclass(frozen=True)
class RateFamily:
    edge: RateFunction
    loop: RateFunction | None = None
    overrides: tuple = ()  # sorted ((vertex, Override), ...)

    def __post_init__(self):
        items = self.overrides.items() if isinstance(self.overrides, Mapping) else self.overrides
        ov = tuple(sorted(((v, o) for v, o in items), key=lambda p: _vertex_key(p[0])))
        object.__setattr__(self, "overrides", ov)
        object.__setattr__(self, "_ov", dict(ov))

    def override_at(self, x: Vertex) -> Override | None:
        return self._ov.get(x)

    @property
    def support(self) -> tuple:
        return tuple(v for v, _ in self.overrides)

    def edge_rate(self, x: Vertex) -> RateFunction:
        ov = self._ov.get(x)
        if ov is not None and ov.edge is not None:
            return ov.edge
        return self.edge

    def loop_rate(self, x: Vertex) -> RateFunction:
        ov = self._ov.get(x)
        if ov is not None and ov.loop is not None:
            return ov.loop
        return self.loop if self.loop is not None else ZERO

    def scaled(self, c: float) -> "RateFamily":
        def sc(rf):
            return None if rf is None else rf.scaled(c)

        return RateFamily(
            sc(self.edge), sc(self.loop),
            tuple((v, Override(sc(o.edge), sc(o.loop))) for v, o in self.overrides),
        )


def _vertex_key(v):
    return (len(v), v) if isinstance(v, tuple) else (0, (v,))


@dataclass(frozen=True)
class BrwModel:
    space: SpaceSpec
    rates: RateFamily
    lam: float = 1.0

    def __post_init__(self):
        if not (self.lam > 0 and math.isfinite(self.lam)):
            raise ModelError(f"lambda must be positive, got {self.lam}")
        for v in self.rates.support:
            self.space.check_vertex(v)
        if not math.isfinite(max_row_moment(self)):
            raise ModelError("row sums of the moment matrix must be finite")

    def with_lambda(self, lam: float) -> "BrwModel":
        return replace(self, lam=lam)

    def scaled(self, c: float) -> "BrwModel":
        return replace(self, rates=self.rates.scaled(c))


def rate_of(model: BrwModel, x: Vertex, y: Vertex) -> RateFunction:
    space = model.space
    x = space.check_vertex(x)
    y = space.check_vertex(y)
    if x == y:
        return model.rates.loop_rate(x)
    if y in space.adjacent(x):
        return model.rates.edge_rate(x)
    return ZERO


def neighbors(model: BrwModel, x: Vertex) -> list[tuple[Vertex, RateFunction]]:
    """All targets with a non-zero rate from ``x``, self-loop first when present."""
    x = model.space.check_vertex(x)
    out = []
    loop = model.rates.loop_rate(x)
    if not loop.is_zero:
        out.append((x, loop))
    edge = model.rates.edge_rate(x)
    if not edge.is_zero:
        out.extend((y, edge) for y in model.space.adjacent(x))
    return out


def max_row_moment(model: BrwModel) -> float:
    """sup over sources of the lambda-scaled expected offspring count."""
    space, rates = model.space, model.rates

    def row(x):
        deg = space.d if isinstance(space, HomogeneousTree) else len(space.adjacent(x))
        return deg * rates.edge_rate(x).first_moment() + rates.loop_rate(x).first_moment()

    if isinstance(space, HomogeneousTree):
        # the base row is attained at any vertex outside the (finite) support
        base = space.d * rates.edge.first_moment() + (rates.loop.first_moment() if rates.loop else 0.0)
        vals = [base] + [row(v) for v in rates.support]
    else:
        vals = [row(x) for x in range(space.n)]
    return model.lam * max(vals)


@dataclass
class MomentMatrix:
    vertices: list
    index: dict
    matrix: sp.csr_matrix  # lambda * k_xy on the ball

    def __getitem__(self, pair):
        x, y = pair
        return self.matrix[self.index[x], self.index[y]]


def ball(space: SpaceSpec, center: Vertex, radius: int) -> list:
    seen = {center: 0}
    order = [center]
    queue = deque([center])
    while queue:
        x = queue.popleft()
        if seen[x] == radius:
            continue
        for y in space.adjacent(x):
            if y not in seen:
                seen[y] = seen[x] + 1
                order.append(y)
                queue.append(y)
    return order


def moment_matrix_ball(model: BrwModel, center: Vertex, radius: int,
                       cap: int = DEFAULT_BALL_CAP) -> MomentMatrix:
    if radius < 0:
        raise ModelError("radius must be >= 0")
    space = model.space
    center = space.check_vertex(center)
    if isinstance(space, HomogeneousTree) and space.ball_size(radius) > cap:
        raise ModelError(f"ball of radius {radius} in T_{space.d} has "
                         f"{space.ball_size(radius)} vertices (cap {cap})")
    verts = ball(space, center, radius)
    index = {v: i for i, v in enumerate(verts)}
    rows, cols, vals = [], [], []
    for v in verts:
        i = index[v]
        for y, rf in neighbors(model, v):
            j = index.get(y)
            if j is not None:
                rows.append(i)
                cols.append(j)
                vals.append(model.lam * rf.first_moment())
    n = len(verts)
    mat = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    return MomentMatrix(verts, index, mat)


def is_local_modification(a: BrwModel, b: BrwModel) -> bool:
    """Whether two rate families differ at finitely many sources only.

    Overlays are finite by construction, so on a tree this reduces to equal
    bases; on a finite graph every pair of families qualifies.
    """
    if a.space != b.space:
        raise ModelError("local modification needs both models on the same space")
    if isinstance(a.space, FiniteGraph):
        return True
    ra, rb = a.rates, b.rates
    loop_a = ra.loop if ra.loop is not None else ZERO
    loop_b = rb.loop if rb.loop is not None else ZERO
    return _same_rate(ra.edge, rb.edge) and _same_rate(loop_a, loop_b)


def _same_rate(p: RateFunction, q: RateFunction) -> bool:
    if p.is_zero and q.is_zero:
        return True
    return p == q


# ---------------------------------------------------------------------------
# class graphs

class ClassGraph:
    """Equitable partition of the vertex set.

    ``transitions(c)`` lists ``(target_class, multiplicity, rate)``: an
    individual in class ``c`` places offspring into each of ``multiplicity``
    distinct vertices of ``target_class`` with that rate.
    """

    def class_of(self, x: Vertex) -> Hashable:
        raise NotImplementedError

    def transitions(self, c) -> tuple:
        raise NotImplementedError

    def is_singleton(self, c) -> bool:
        raise NotImplementedError

    def local_kernel(self, start, radius: int, cap: int = DEFAULT_BALL_CAP):
        """Classes within ``radius`` steps of ``start`` with the lambda-free
        lumped kernel ``L[c, c'] = sum multiplicity * first_moment``."""
        seen = {start: 0}
        order = [start]
        queue = deque([start])
        while queue:
            c = queue.popleft()
            if seen[c] == radius:
                continue
            for tgt, _, _ in self.transitions(c):
                if tgt not in seen:
                    seen[tgt] = seen[c] + 1
                    order.append(tgt)
                    queue.append(tgt)
                    if len(order) > cap:
                        raise ModelError(f"class ball exceeds cap {cap}")
        index = {c: i for i, c in enumerate(order)}
        rows, cols, vals = [], [], []
        for c in order:
            i = index[c]
            for tgt, mult, rf in self.transitions(c):
                j = index.get(tgt)
                if j is not None:
                    rows.append(i)
                    cols.append(j)
                    vals.append(mult * rf.first_moment())
        n = len(order)
        mat = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
        return order, index, mat


class VertexClasses(ClassGraph):
    """Trivial partition: every vertex is its own class."""

    def __init__(self, model: BrwModel):
        self.model = model
        self._cache: dict = {}

    def class_of(self, x):
        return self.model.space.check_vertex(x)

    def is_singleton(self, c) -> bool:
        return True

    def transitions(self, c) -> tuple:
        out = self._cache.get(c)
        if out is None:
            out = tuple((y, 1, rf) for y, rf in neighbors(self.model, c))
            if len(self._cache) < 1_000_000:
                self._cache[c] = out
        return out


class RadialClasses(ClassGraph):
    """Spheres around ``anchor`` for tree models modified at most at the anchor."""

    def __init__(self, model: BrwModel, anchor: tuple = ROOT):
        space = model.space
        if not isinstance(space, HomogeneousTree):
            raise ModelError("radial classes need a tree space")
        if any(v != anchor for v in model.rates.support):
            raise ModelError("radial classes need overrides confined to the anchor")
        self.model = model
        self.anchor = anchor
        d = space.d
        r = model.rates
        loop0, edge0 = r.loop_rate(anchor), r.edge_rate(anchor)
        loop, edge = (r.loop if r.loop is not None else ZERO), r.edge
        self._t0 = tuple(t for t in ((0, 1, loop0), (1, d, edge0)) if not t[2].is_zero)
        self._edge, self._loop, self._d = edge, loop, d

    def class_of(self, x) -> int:
        x = self.model.space.check_vertex(x)
        return HomogeneousTree.distance(x, self.anchor)

    def is_singleton(self, c) -> bool:
        return c == 0

    def transitions(self, c: int) -> tuple:
        if c == 0:
            return self._t0
        out = []
        if not self._loop.is_zero:
            out.append((c, 1, self._loop))
        if not self._edge.is_zero:
            out.append((c - 1, 1, self._edge))
            out.append((c + 1, self._d - 1, self._edge))
        return tuple(out)


class MatrixClasses(ClassGraph):
    """Class graph of a raw non-negative kernel ``K`` given as a square matrix.

    Entries are used as the lambda-free moments ``k_xy`` directly.
    """

    def __init__(self, kernel):
        mat = sp.csr_matrix(kernel, dtype=float)
        if mat.shape[0] != mat.shape[1]:
            raise ModelError("kernel must be square")
        if mat.nnz and mat.data.min() < 0:
            raise ModelError("kernel entries must be non-negative")
        mat.eliminate_zeros()
        self.matrix = mat
        self.n = mat.shape[0]

    def class_of(self, x) -> int:
        if not (isinstance(x, (int, np.integer)) and 0 <= x < self.n):
            raise ModelError(f"vertex {x!r} outside kernel of size {self.n}")
        return int(x)

    def is_singleton(self, c) -> bool:
        return True

    def transitions(self, c) -> tuple:
        lo, hi = self.matrix.indptr[c], self.matrix.indptr[c + 1]
        return tuple((int(j), 1, Constant(float(w)))
                     for j, w in zip(self.matrix.indices[lo:hi], self.matrix.data[lo:hi]))

    def local_kernel(self, start, radius: int, cap: int = DEFAULT_BALL_CAP):
        order = list(range(self.n))
        return order, {c: c for c in order}, self.matrix


def class_graph(model: BrwModel, anchor: Vertex | None = None) -> ClassGraph:
    """Coarsest built-in partition compatible with ``anchor`` being a singleton.

    For trees: radial around the single override vertex, or around ``anchor``
    when there are no overrides; explicit vertices otherwise.
    """
    space = model.space
    if isinstance(space, FiniteGraph):
        return VertexClasses(model)
    support = model.rates.support
    if not support:
        return RadialClasses(model, ROOT if anchor is None else space.check_vertex(anchor))
    if len(support) == 1 and (anchor is None or anchor == support[0]):
        return RadialClasses(model, support[0])
    return VertexClasses(model)


# ---------------------------------------------------------------------------
# scenarios

SCENARIOS = ("homtree", "treeloop", "agelooptree", "homloops")


@dataclass(frozen=True)
class Scenario:
    """Named tree models with a finite modification at the root ``o``.

    * ``homtree``: constant rate ``k`` along every edge.
    * ``treeloop``: homtree plus a constant loop ``k_oo`` at the root.
    * ``agelooptree``: edges ``k e^{-alpha t}`` off the root, root edges
      ``k e^{-alpha_o t}`` and root loop ``k_oo e^{-alpha_o t}``.
    * ``homloops``: a loop ``k_star`` at every vertex; rates decay with
      ``alpha`` everywhere except at the root, which decays with ``alpha_o``.
    """

    name: str
    d: int
    k: float = 1.0
    k_oo: float = 0.0
    k_star: float = 0.0
    alpha: float = 0.0
    alpha_o: float | None = None

    def __post_init__(self):
        if self.name not in SCENARIOS:
            raise ModelError(f"unknown scenario {self.name!r}; expected one of {SCENARIOS}")
        HomogeneousTree(self.d)
        if self.alpha_o is None:
            object.__setattr__(self, "alpha_o", self.alpha)
        if not self.k > 0:
            raise ModelError("scenario rate k must be positive")
        if self.k_oo < 0 or self.k_star < 0 or self.alpha < 0 or self.alpha_o < 0:
            raise ModelError("scenario parameters must be non-negative")
        if self.name in ("homtree", "treeloop") and (self.alpha or self.alpha_o):
            raise ModelError(f"{self.name} has constant rates; use agelooptree/homloops for ageing")
        if self.name == "homtree" and self.k_oo:
            raise ModelError("homtree has no root loop; use treeloop")
        if self.name != "homloops" and self.k_star:
            raise ModelError("k_star only applies to homloops")
        if self.name == "homloops" and self.k_oo:
            raise ModelError("homloops uses k_star for loops, not k_oo")

    def rates(self) -> RateFamily:
        k, a, ao = self.k, self.alpha, self.alpha_o
        if self.name == "homtree":
            return RateFamily(Constant(k))
        if self.name == "treeloop":
            return RateFamily(Constant(k), None, ((ROOT, Override(loop=Constant(self.k_oo))),))
        if self.name == "agelooptree":
            ov = Override(edge=decaying(k, ao), loop=decaying(self.k_oo, ao))
            return RateFamily(decaying(k, a), None, ((ROOT, ov),))
        ov = Override(edge=decaying(k, ao), loop=decaying(self.k_star, ao))
        return RateFamily(decaying(k, a), decaying(self.k_star, a), ((ROOT, ov),))

    def model(self, lam: float = 1.0) -> BrwModel:
        return BrwModel(HomogeneousTree(self.d), self.rates(), lam)

    def base(self) -> "Scenario":
        """The transitive model this scenario locally modifies."""
        if self.name in ("homtree", "treeloop"):
            return Scenario("homtree", self.d, self.k)
        if self.name == "agelooptree":
            return replace(self, k_oo=0.0, alpha_o=self.alpha)
        return replace(self, alpha_o=self.alpha)

    def scaled(self, c: float) -> "Scenario":
        return replace(self, k=self.k * c, k_oo=self.k_oo * c, k_star=self.k_star * c)

    def to_dict(self) -> dict:
        return {"scenario": self.name, "d": int(self.d), "k": self.k, "k_oo": self.k_oo,
                "k_star": self.k_star, "alpha": self.alpha, "alpha_o": self.alpha_o}


def single_site(k: float = 1.0, alpha: float = 0.0, lam: float = 1.0) -> BrwModel:
    """Branching process on one site with breeding intensity ``lam k e^{-alpha t}``."""
    return BrwModel(FiniteGraph(1), RateFamily(ZERO, decaying(k, alpha)), lam)


# ---------------------------------------------------------------------------
# JSON

def scenario_from_dict(data: Mapping) -> Scenario:
    fields_ = {k: data[k] for k in ("d", "k", "k_oo", "k_star", "alpha", "alpha_o") if k in data}
    if "d" in fields_:
        fields_["d"] = int(fields_["d"])
    return Scenario(str(data["scenario"]), **fields_)


def model_from_dict(data: Mapping) -> BrwModel:
    """Build a model from the JSON schema (explicit or named scenario)."""
    try:
        lam = float(data.get("lambda", 1.0))
        if "scenario" in data:
            return scenario_from_dict(data).model(lam)
        space_d = data["space"]
        if "tree" in space_d:
            space: SpaceSpec = HomogeneousTree(int(space_d["tree"]["d"]))
        elif "graph" in space_d:
            g = space_d["graph"]
            space = FiniteGraph(int(g["n"]), tuple(tuple(e) for e in g.get("edges", ())))
        else:
            raise ModelError("space must be 'tree' or 'graph'")
        base = data.get("base", {})
        edge = rate_from_dict(base["edge"]) if base.get("edge") else ZERO
        loop = rate_from_dict(base["loop"]) if base.get("loop") else None
        ovs = []
        for item in data.get("overrides", ()):
            v = parse_vertex(space, item["vertex"])
            ovs.append((v, Override(
                rate_from_dict(item["edge"]) if item.get("edge") else None,
                rate_from_dict(item["loop"]) if item.get("loop") else None,
            )))
        return BrwModel(space, RateFamily(edge, loop, tuple(ovs)), lam)
    except (KeyError, TypeError) as exc:
        raise ModelError(f"malformed model description: {exc}") from exc


def model_to_dict(model: BrwModel) -> dict:
    r = model.rates
    return {
        "space": model.space.to_dict(),
        "base": {"edge": r.edge.to_dict(), "loop": r.loop.to_dict() if r.loop else None},
        "overrides": [
            {"vertex": format_vertex(v),
             "edge": o.edge.to_dict() if o.edge else None,
             "loop": o.loop.to_dict() if o.loop else None}
            for v, o in r.overrides
        ],
        "lambda": model.lam,
    }
