"""Reference solver: global assembly, global condensation, dense pivoted LU.

Shares no elimination code with :mod:`frontreuse.frontal_solver`; the
constraint condensation is also done globally here instead of per element.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .fem_assembly import DofMap, element_stiffness_load
from .mesh2d import Mesh, active_elements
from .problems import ModelProblem


class OracleError(ArithmeticError):
    pass


@dataclass
class GlobalSystem:
    n: int
    A: np.ndarray
    b: np.ndarray


def global_condensation(dofmap: DofMap, all_keys: list) -> tuple[np.ndarray, np.ndarray]:
    """T, d with u_all = T x + d over the listed DOF keys."""
    T = np.zeros((len(all_keys), dofmap.n_dofs))
    d = np.zeros(len(all_keys))

    def expand(k, coef, row):
        if k in dofmap.dirichlet:
            d[row] += coef * dofmap.dirichlet[k]
        elif k in dofmap.constraints:
            for mk, c in dofmap.constraints[k]:
                expand(mk, coef * c, row)
        else:
            T[row, dofmap.index[k]] += coef

    for row, k in enumerate(all_keys):
        expand(k, 1.0, row)
    return T, d


def assemble_unconstrained(mesh: Mesh, dofmap: DofMap, problem: ModelProblem, p: int,
                           element_matrices=None):
    """Raw global matrix over every DOF key, slaves and Dirichlet included."""
    keys = sorted({k for ks in dofmap.element_keys.values() for k in ks}, key=repr)
    pos = {k: i for i, k in enumerate(keys)}
    K = np.zeros((len(keys), len(keys)))
    f = np.zeros(len(keys))
    for eid in active_elements(mesh):
        if element_matrices is not None and eid in element_matrices:
            em = element_matrices[eid]
        else:
            em = element_stiffness_load(mesh.nodes[eid], problem, p)
        ix = np.array([pos[k] for k in em.dofs])
        K[np.ix_(ix, ix)] += em.K
        f[ix] += em.f
    return keys, K, f


def assemble_global(mesh: Mesh, dofmap: DofMap, problem: ModelProblem, p: int,
                    element_matrices=None) -> GlobalSystem:
    keys, K, f = assemble_unconstrained(mesh, dofmap, problem, p, element_matrices)
    T, d = global_condensation(dofmap, keys)
    A = T.T @ K @ T
    b = T.T @ (f - K @ d)
    return GlobalSystem(dofmap.n_dofs, 0.5 * (A + A.T), b)


def relative_residual(A: np.ndarray, x: np.ndarray, b: np.ndarray) -> float:
    bn = np.max(np.abs(b)) if b.size else 0.0
    r = np.max(np.abs(A @ x - b)) if b.size else 0.0
    return float(r / bn) if bn > 0 else float(r)


def dense_lu_solve(sys: GlobalSystem, tol: float = 1e-10) -> np.ndarray:
    """LU with partial pivoting; raises instead of returning a bad solution."""
    if sys.n == 0:
        return np.zeros(0)
    with np.errstate(all="raise"):
        try:
            lu, piv = scipy.linalg.lu_factor(sys.A, check_finite=True)
        except (FloatingPointError, ValueError) as exc:
            raise OracleError(f"factorization failed: {exc}") from exc
    if np.any(np.diag(lu) == 0.0):
        raise OracleError("singular matrix")
    x = scipy.linalg.lu_solve((lu, piv), sys.b)
    res = relative_residual(sys.A, x, sys.b)
    if not res <= tol:
        raise OracleError(f"relative residual {res:.3e} exceeds {tol:.1e}")
    return x


def dense_lu_flops(n: int) -> int:
    """Nominal count for a full n x n LU under the frontal convention."""
    return sum((n - j) + 2 * (n - j) ** 2 for j in range(1, n + 1))
