"""Tensor-product Gauss-Lobatto-Lagrange elements on axis-aligned quads.

Local DOFs of an element are the (p+1)^2 nodes numbered ``j*(p+1) + i``
with ``i`` running along x and ``j`` along y, so for p=1 the order is
SW, SE, NW, NE.  Every DOF has a hashable key:

* ``("v", Point2)``            vertex
* ``("e", EdgeKey, k)``        k-th interior node of an edge, counted from ``EdgeKey.a``
* ``("i", element_id, i, j)``  element interior node

Keys do not change when other parts of the mesh are refined, which is what
lets fronts be compared across a refinement sequence.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from numpy.polynomial import legendre

from .mesh2d import SIDES, ElementNode, IrregularMeshError, Mesh, Point2, EdgeKey
from .mesh2d import active_elements, hanging_edges, irregular_elements, side_neighbors
from .problems import ModelProblem

MAX_ORDER = 10


def _check_order(p: int) -> None:
    if not 1 <= p <= MAX_ORDER:
        raise ValueError(f"polynomial order must be in [1, {MAX_ORDER}], got {p}")


@lru_cache(maxsize=None)
def gll_points(p: int) -> np.ndarray:
    """The p+1 Gauss-Lobatto points on [-1, 1]."""
    _check_order(p)
    if p == 1:
        return np.array([-1.0, 1.0])
    inner = np.sort(legendre.Legendre.basis(p).deriv().roots().real)
    pts = np.concatenate([[-1.0], inner, [1.0]])
    return 0.5 * (pts - pts[::-1])


@lru_cache(maxsize=None)
def gauss_rule(n: int) -> tuple[np.ndarray, np.ndarray]:
    return legendre.leggauss(n)


def shape_functions_1d(p: int, t) -> tuple[np.ndarray, np.ndarray]:
    """Values and derivatives of the nodal GLL basis at ``t``.

    Returns two arrays of shape ``(len(t), p+1)`` (or ``(p+1,)`` for scalar t).
    """
    nodes = gll_points(p)
    scalar = np.ndim(t) == 0
    t = np.atleast_1d(np.asarray(t, dtype=float))
    n = p + 1
    vals = np.ones((t.size, n))
    ders = np.zeros((t.size, n))
    for i in range(n):
        for m in range(n):
            if m == i:
                continue
            denom = nodes[i] - nodes[m]
            # product rule: d/dt of the running product
            ders[:, i] = ders[:, i] * (t - nodes[m]) / denom + vals[:, i] / denom
            vals[:, i] *= (t - nodes[m]) / denom
    if scalar:
        return vals[0], ders[0]
    return vals, ders


def constraint_coefficients(p: int, half: str) -> np.ndarray:
    """Coarse-edge basis evaluated at the nodes of a fine half-edge.

    Row i gives fine-edge basis function i as a combination of the p+1
    coarse-edge basis functions.
    """
    if half not in ("lower", "upper"):
        raise ValueError("half must be 'lower' or 'upper'")
    t = gll_points(p)
    s = (t - 1.0) / 2.0 if half == "lower" else (t + 1.0) / 2.0
    vals, _ = shape_functions_1d(p, s)
    return vals


@dataclass
class ElementMatrix:
    element_id: int
    dofs: tuple  # local DOF keys (raw) or global free indices (constrained)
    K: np.ndarray
    f: np.ndarray


def local_keys(e: ElementNode, p: int) -> tuple:
    sw, se, ne, nw = e.corners
    sides = {s: e.side(s) for s in SIDES}
    keys = []
    for j in range(p + 1):
        for i in range(p + 1):
            if (i, j) == (0, 0):
                keys.append(("v", sw))
            elif (i, j) == (p, 0):
                keys.append(("v", se))
            elif (i, j) == (0, p):
                keys.append(("v", nw))
            elif (i, j) == (p, p):
                keys.append(("v", ne))
            elif j == 0:
                keys.append(("e", sides["S"], i))
            elif j == p:
                keys.append(("e", sides["N"], i))
            elif i == 0:
                keys.append(("e", sides["W"], j))
            elif i == p:
                keys.append(("e", sides["E"], j))
            else:
                keys.append(("i", e.id, i, j))
    return tuple(keys)


def local_node_coords(e: ElementNode, p: int) -> tuple[np.ndarray, np.ndarray]:
    t = gll_points(p)
    x0, x1, y0, y1 = float(e.x0), float(e.x1), float(e.y0), float(e.y1)
    xs = x0 + (t + 1) / 2 * (x1 - x0)
    ys = y0 + (t + 1) / 2 * (y1 - y0)
    X, Y = np.meshgrid(xs, ys)
    return X.ravel(), Y.ravel()


def _tensor_basis(e: ElementNode, p: int, nq: int):
    """Quadrature points, weights (incl. Jacobian), values and gradients."""
    hx, hy = float(e.x1 - e.x0), float(e.y1 - e.y0)
    if hx <= 0 or hy <= 0:
        raise ValueError(f"element {e.id} has non-positive Jacobian")
    q, w = gauss_rule(nq)
    B, D = shape_functions_1d(p, q)
    phi = np.kron(B, B)
    gx = np.kron(B, D) * (2.0 / hx)
    gy = np.kron(D, B) * (2.0 / hy)
    QX, QY = np.meshgrid(float(e.x0) + (q + 1) / 2 * hx, float(e.y0) + (q + 1) / 2 * hy)
    W = np.outer(w, w).ravel() * (hx * hy / 4.0)
    return QX.ravel(), QY.ravel(), W, phi, gx, gy


def element_stiffness_load(element: ElementNode, problem: ModelProblem, p: int) -> ElementMatrix:
    """Raw element stiffness and load with p+2 Gauss points per direction."""
    _check_order(p)
    x, y, W, phi, gx, gy = _tensor_basis(element, p, p + 2)
    aw = problem.diffusion(x, y) * W
    K = gx.T @ (aw[:, None] * gx) + gy.T @ (aw[:, None] * gy)
    K = 0.5 * (K + K.T)
    f = phi.T @ (problem.source(x, y) * W)
    return ElementMatrix(element.id, local_keys(element, p), K, f)


def _key_sort(key, birth):
    kind = key[0]
    if kind == "v":
        return (birth[key], 0, key[1], 0)
    if kind == "e":
        return (birth[key], 1, key[1], key[2])
    return (birth[key], 2, key[2], key[3])


@dataclass
class DofMap:
    """Global numbering of unconstrained, non-Dirichlet DOFs of one mesh."""

    p: int
    keys: list  # free DOF keys in global order
    index: dict  # key -> global index
    element_keys: dict  # eid -> local keys
    element_T: dict  # eid -> (cols, T, d): u_local = T @ x[cols] + d
    constraints: dict  # slave key -> [(master key, coef)]
    dirichlet: dict  # key -> prescribed value
    dof_level: np.ndarray
    coords: dict = field(repr=False, default_factory=dict)
    boundary_of: dict = field(repr=False, default_factory=dict)

    @property
    def n_dofs(self) -> int:
        return len(self.keys)

    @property
    def slave_keys(self) -> list:
        return list(self.constraints)

    def element_dofs(self, eid: int) -> np.ndarray:
        return self.element_T[eid][0]


def build_dof_map(mesh: Mesh, p: int, problem: ModelProblem) -> DofMap:
    _check_order(p)
    bad = irregular_elements(mesh)
    if bad:
        raise IrregularMeshError(f"mesh is not 1-irregular at elements {bad}")
    active = active_elements(mesh)

    element_keys, coords = {}, {}
    for eid in active:
        e = mesh.nodes[eid]
        keys = local_keys(e, p)
        element_keys[eid] = keys
        X, Y = local_node_coords(e, p)
        for k, xx, yy in zip(keys, X, Y):
            coords.setdefault(k, (xx, yy))

    # hanging-edge constraints
    constraints = {}
    for h in hanging_edges(mesh):
        a, b = h.coarse.a, h.coarse.b
        m = h.coarse.midpoint
        masters = [("v", a)] + [("e", h.coarse, k) for k in range(1, p)] + [("v", b)]
        low, up = h.fine
        C_low = constraint_coefficients(p, "lower")
        C_up = constraint_coefficients(p, "upper")
        for i in range(1, p + 1):
            slave = ("v", m) if i == p else ("e", low, i)
            constraints[slave] = list(zip(masters, C_low[i]))
        for i in range(0, p):
            slave = ("v", m) if i == 0 else ("e", up, i)
            constraints[slave] = list(zip(masters, C_up[i]))

    # Dirichlet DOFs live on sides with no active neighbour
    dirichlet = {}
    for (eid, s), nbrs in side_neighbors(mesh).items():
        if nbrs:
            continue
        edge = mesh.nodes[eid].side(s)
        for k in [("v", edge.a), ("v", edge.b)] + [("e", edge, i) for i in range(1, p)]:
            if k not in dirichlet:
                xx, yy = coords[k]
                dirichlet[k] = float(problem.dirichlet_value(np.array([xx]), np.array([yy]))[0])

    # birth order: smallest id of any tree node that introduced the entity
    vbirth, ebirth = {}, {}
    for nid in sorted(mesh.nodes):
        node = mesh.nodes[nid]
        for c in node.corners:
            vbirth.setdefault(c, nid)
        for s in SIDES:
            ebirth.setdefault(node.side(s), nid)

    def birth(k):
        if k[0] == "v":
            return vbirth[k[1]]
        if k[0] == "e":
            return ebirth[k[1]]
        return k[1]

    free = {k for ks in element_keys.values() for k in ks
            if k not in constraints and k not in dirichlet}
    births = {k: birth(k) for k in free}
    ordered = sorted(free, key=lambda k: _key_sort(k, births))
    index = {k: i for i, k in enumerate(ordered)}

    def resolve(k, depth=0):
        if depth > 64:
            raise IrregularMeshError("cyclic hanging-node constraints")
        if k in constraints:
            return [(k2, c * c2) for mk, c in constraints[k] for k2, c2 in resolve(mk, depth + 1)]
        return [(k, 1.0)]

    element_T = {}
    dof_level = np.zeros(len(ordered), dtype=int)
    for eid in active:
        keys = element_keys[eid]
        cols, colpos = [], {}
        rows = []
        d = np.zeros(len(keys))
        for r, k in enumerate(keys):
            for k2, c in resolve(k):
                if k2 in dirichlet:
                    d[r] += c * dirichlet[k2]
                    continue
                g = index[k2]
                if g not in colpos:
                    colpos[g] = len(cols)
                    cols.append(g)
                rows.append((r, colpos[g], c))
        T = np.zeros((len(keys), len(cols)))
        for r, cidx, c in rows:
            T[r, cidx] += c
        cols = np.array(cols, dtype=int)
        element_T[eid] = (cols, T, d)
        lev = mesh.nodes[eid].level
        dof_level[cols] = np.maximum(dof_level[cols], lev)

    return DofMap(p, ordered, index, element_keys, element_T, constraints, dirichlet,
                  dof_level, coords)


def apply_constraints(em: ElementMatrix, dofmap: DofMap) -> ElementMatrix:
    """Fold slaves into masters and move Dirichlet values to the load."""
    cols, T, d = dofmap.element_T[em.element_id]
    K = T.T @ em.K @ T
    f = T.T @ (em.f - em.K @ d)
    return ElementMatrix(em.element_id, tuple(int(c) for c in cols), K, f)


def element_values(dofmap: DofMap, x: np.ndarray, eid: int) -> np.ndarray:
    cols, T, d = dofmap.element_T[eid]
    return T @ x[cols] + d


def expand_solution(dofmap: DofMap, x: np.ndarray) -> dict:
    """Values of every DOF key: free, slave and Dirichlet."""
    out = dict(dofmap.dirichlet)
    for k, i in dofmap.index.items():
        out[k] = float(x[i])
    for eid, keys in dofmap.element_keys.items():
        vals = element_values(dofmap, x, eid)
        for k, v in zip(keys, vals):
            out.setdefault(k, float(v))
    return out


def compute_error(mesh: Mesh, p: int, dofmap: DofMap, solution: np.ndarray,
                  problem: ModelProblem, norm: str = "H1_semi") -> float:
    """L2 or H1-seminorm of u_h - u_exact with p+3 Gauss points per direction."""
    if problem.exact_solution is None:
        raise ValueError("problem has no exact solution")
    if norm not in ("L2", "H1_semi"):
        raise ValueError(f"unknown norm {norm!r}")
    if norm == "H1_semi" and problem.exact_gradient is None:
        raise ValueError("problem has no exact gradient")
    total = 0.0
    for eid in active_elements(mesh):
        e = mesh.nodes[eid]
        x, y, W, phi, gx, gy = _tensor_basis(e, p, p + 3)
        u = element_values(dofmap, solution, eid)
        if norm == "L2":
            diff = phi @ u - problem.exact_solution(x, y)
            total += float(W @ diff**2)
        else:
            ex, ey = problem.exact_gradient(x, y)
            total += float(W @ ((gx @ u - ex) ** 2 + (gy @ u - ey) ** 2))
    return float(np.sqrt(total))
