"""Quadrilateral meshes stored as forests of refinement trees.

Coordinates are exact rationals (:class:`fractions.Fraction`), so repeated
halving never drifts and geometric keys (vertices, edges) hash exactly.
Element ids are assigned in creation order and children are always created
in the order SW, SE, NW, NE.
"""
from __future__ import annotations

import dataclasses
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable


class MeshError(ValueError):
    """Raised for invalid mesh input or a structural violation."""


class IrregularMeshError(MeshError):
    """An active edge sees a neighbour more than one level finer."""


def _to_fraction(v) -> Fraction:
    if isinstance(v, Fraction):
        return v
    try:
        return Fraction(v)
    except (OverflowError, ValueError, TypeError) as exc:
        raise MeshError(f"non-finite coordinate {v!r}") from exc


@dataclass(frozen=True, order=True)
class Point2:
    x: Fraction
    y: Fraction

    def __post_init__(self):
        object.__setattr__(self, "x", _to_fraction(self.x))
        object.__setattr__(self, "y", _to_fraction(self.y))

    def as_float(self) -> tuple[float, float]:
        return float(self.x), float(self.y)


@dataclass(frozen=True, order=True)
class EdgeKey:
    """Geometric edge with lexicographically sorted endpoints."""

    a: Point2
    b: Point2

    @classmethod
    def of(cls, p: Point2, q: Point2) -> "EdgeKey":
        if p == q:
            raise MeshError("degenerate edge")
        return cls(p, q) if p < q else cls(q, p)

    @property
    def midpoint(self) -> Point2:
        return Point2((self.a.x + self.b.x) / 2, (self.a.y + self.b.y) / 2)


@dataclass(frozen=True)
class ElementNode:
    id: int
    level: int
    x0: Fraction
    y0: Fraction
    x1: Fraction
    y1: Fraction
    parent: int | None = None
    children: tuple[int, ...] = ()

    @property
    def active(self) -> bool:
        return not self.children

    @property
    def corners(self) -> tuple[Point2, Point2, Point2, Point2]:
        """Corners counterclockwise from the south-west one."""
        return (Point2(self.x0, self.y0), Point2(self.x1, self.y0),
                Point2(self.x1, self.y1), Point2(self.x0, self.y1))

    @property
    def area(self) -> Fraction:
        return (self.x1 - self.x0) * (self.y1 - self.y0)

    @property
    def diameter(self) -> float:
        return float(max(self.x1 - self.x0, self.y1 - self.y0))

    def contains(self, pt: Point2) -> bool:
        """Point lies in the closed rectangle."""
        return self.x0 <= pt.x <= self.x1 and self.y0 <= pt.y <= self.y1

    def side(self, name: str) -> EdgeKey:
        sw, se, ne, nw = self.corners
        return {"S": EdgeKey.of(sw, se), "E": EdgeKey.of(se, ne),
                "N": EdgeKey.of(nw, ne), "W": EdgeKey.of(sw, nw)}[name]


SIDES = ("S", "E", "N", "W")


@dataclass(frozen=True)
class Mesh:
    roots: tuple[int, ...]
    nodes: dict[int, ElementNode] = field(hash=False, compare=False)
    singularities: tuple[Point2, ...] = ()
    refinement_count: int = 0

    def __eq__(self, other):
        if not isinstance(other, Mesh):
            return NotImplemented
        return (self.roots == other.roots and self.nodes == other.nodes
                and self.singularities == other.singularities
                and self.refinement_count == other.refinement_count)

    __hash__ = None

    @property
    def domain_area(self) -> Fraction:
        return sum((self.nodes[r].area for r in self.roots), Fraction(0))

    @property
    def domain_diameter(self) -> float:
        xs = [c for r in self.roots for c in (self.nodes[r].x0, self.nodes[r].x1)]
        ys = [c for r in self.roots for c in (self.nodes[r].y0, self.nodes[r].y1)]
        return float(max(max(xs) - min(xs), max(ys) - min(ys)))

    def in_closure(self, pt: Point2) -> bool:
        return any(self.nodes[r].contains(pt) for r in self.roots)

    def element(self, eid: int) -> ElementNode:
        return self.nodes[eid]

    def ancestor_at_level(self, eid: int, level: int) -> ElementNode:
        e = self.nodes[eid]
        while e.level > level:
            e = self.nodes[e.parent]
        return e


def _make_mesh(rects: Iterable[tuple], singularities: Iterable[Point2]) -> Mesh:
    nodes = {}
    for i, (x0, y0, x1, y1) in enumerate(rects):
        nodes[i] = ElementNode(i, 0, *(_to_fraction(v) for v in (x0, y0, x1, y1)))
    mesh = Mesh(tuple(nodes), nodes, tuple(singularities))
    for s in mesh.singularities:
        if not mesh.in_closure(s):
            raise MeshError(f"singularity {s.as_float()} outside the domain")
    return mesh


def new_two_element_mesh(domain_width, domain_height, singularity: Point2) -> Mesh:
    """Rectangle split vertically into two elements (the radical mesh seed)."""
    w, h = _to_fraction(domain_width), _to_fraction(domain_height)
    if w <= 0 or h <= 0:
        raise MeshError("domain dimensions must be positive")
    if not isinstance(singularity, Point2):
        singularity = Point2(*singularity)
    return _make_mesh([(0, 0, w / 2, h), (w / 2, 0, w, h)], [singularity])


def new_lshape_mesh() -> Mesh:
    """[-1,1]^2 minus (0,1)x(-1,0), reentrant corner at the origin."""
    return _make_mesh([(-1, -1, 0, 0), (-1, 0, 0, 1), (0, 0, 1, 1)], [Point2(0, 0)])


def new_two_singularity_mesh() -> Mesh:
    return _make_mesh([(i, 0, i + 1, 1) for i in range(4)], [Point2(1, 0), Point2(3, 0)])


def active_elements(mesh: Mesh) -> list[int]:
    """Leaves of all refinement trees ordered by (level, id)."""
    return sorted((e.id for e in mesh.nodes.values() if e.active),
                  key=lambda i: (mesh.nodes[i].level, i))


def _split(nodes: dict[int, ElementNode], eid: int) -> None:
    e = nodes[eid]
    xm, ym = (e.x0 + e.x1) / 2, (e.y0 + e.y1) / 2
    quads = [(e.x0, e.y0, xm, ym), (xm, e.y0, e.x1, ym),
             (e.x0, ym, xm, e.y1), (xm, ym, e.x1, e.y1)]
    first = len(nodes)
    kids = tuple(range(first, first + 4))
    for cid, q in zip(kids, quads):
        nodes[cid] = ElementNode(cid, e.level + 1, *q, parent=eid)
    nodes[eid] = dataclasses.replace(e, children=kids)


def side_neighbors(mesh: Mesh) -> dict[tuple[int, str], list[int]]:
    """Active elements sharing a positive-length segment with each active side."""
    lines = defaultdict(list)
    for eid in active_elements(mesh):
        e = mesh.nodes[eid]
        lines[("h", e.y0)].append((e.x0, e.x1, eid, "S"))
        lines[("h", e.y1)].append((e.x0, e.x1, eid, "N"))
        lines[("v", e.x0)].append((e.y0, e.y1, eid, "W"))
        lines[("v", e.x1)].append((e.y0, e.y1, eid, "E"))
    opposite = {"S": "N", "N": "S", "W": "E", "E": "W"}
    out = {}
    for segs in lines.values():
        segs.sort()
        for lo, hi, eid, s in segs:
            out[(eid, s)] = [fid for flo, fhi, fid, fs in segs
                             if fs == opposite[s] and max(lo, flo) < min(hi, fhi)]
    return out


def irregular_elements(mesh: Mesh) -> list[int]:
    """Active elements with a neighbour two or more levels finer."""
    bad = set()
    for (eid, _), nbrs in side_neighbors(mesh).items():
        lev = mesh.nodes[eid].level
        if any(mesh.nodes[f].level > lev + 1 for f in nbrs):
            bad.add(eid)
    return sorted(bad, key=lambda i: (mesh.nodes[i].level, i))


def is_one_irregular(mesh: Mesh) -> bool:
    return not irregular_elements(mesh)


def refine_towards_singularities(mesh: Mesh) -> Mesh:
    """Split every active element touching a singularity, then close.

    Closure refinement restores 1-irregularity; returns a new mesh.
    """
    nodes = dict(mesh.nodes)
    work = Mesh(mesh.roots, nodes, mesh.singularities, mesh.refinement_count)
    marked = [eid for eid in active_elements(work)
              if any(nodes[eid].contains(s) for s in mesh.singularities)]
    for eid in marked:
        _split(nodes, eid)
    while True:
        bad = irregular_elements(work)
        if not bad:
            break
        for eid in bad:
            _split(nodes, eid)
    return Mesh(mesh.roots, nodes, mesh.singularities, mesh.refinement_count + 1)


def refine_n(mesh: Mesh, n: int) -> Mesh:
    for _ in range(n):
        mesh = refine_towards_singularities(mesh)
    return mesh


@dataclass(frozen=True)
class HangingEdge:
    coarse: EdgeKey
    fine: tuple[EdgeKey, EdgeKey]  # (a, m) then (m, b)
    coarse_element: int
    fine_elements: tuple[int, int]


def hanging_edges(mesh: Mesh) -> list[HangingEdge]:
    """Coarse active edges split by two finer neighbours."""
    out = []
    nbr = side_neighbors(mesh)
    for eid in active_elements(mesh):
        e = mesh.nodes[eid]
        for s in SIDES:
            fines = nbr[(eid, s)]
            if not fines:
                continue
            levels = {mesh.nodes[f].level for f in fines}
            if max(levels) > e.level + 1:
                raise IrregularMeshError(f"element {eid} side {s} violates 1-irregularity")
            if levels != {e.level + 1}:
                continue
            if len(fines) != 2:
                raise MeshError(f"element {eid} side {s}: partial fine coverage")
            key = e.side(s)
            m = key.midpoint
            lower = [f for f in fines if mesh.nodes[f].contains(key.a)]
            upper = [f for f in fines if mesh.nodes[f].contains(key.b)]
            out.append(HangingEdge(key, (EdgeKey.of(key.a, m), EdgeKey.of(m, key.b)),
                                   eid, (lower[0], upper[0])))
    return out


def tiling_defect(mesh: Mesh) -> float:
    """Relative mismatch between active-element area and domain area."""
    total = sum((mesh.nodes[i].area for i in active_elements(mesh)), Fraction(0))
    return abs(float((total - mesh.domain_area) / mesh.domain_area))


def mesh_document(mesh: Mesh) -> dict:
    """Serializable dump of the whole refinement forest."""
    return {
        "schema_version": 1,
        "refinement_count": mesh.refinement_count,
        "singularities": [list(s.as_float()) for s in mesh.singularities],
        "elements": [
            {
                "id": e.id,
                "level": e.level,
                "corners": [list(c.as_float()) for c in e.corners],
                "parent": e.parent,
                "children": list(e.children),
                "active": e.active,
            }
            for e in sorted(mesh.nodes.values(), key=lambda n: n.id)
        ],
    }
