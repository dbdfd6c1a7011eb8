"""Dense partial LU of fronts with exact operation counting.

Flop convention: one per multiply, one per add/subtract, one per divide.
Eliminating pivot j of an n x n front costs (n-j) divides plus 2(n-j)^2
for the rank-one update of the trailing block.  Right-hand-side work is
counted separately in ``flops_rhs`` and backward substitution in
``flops_back``.

A front's dense matrix covers its own DOFs plus any DOFs still pending from
earlier fronts (the single running Schur complement).  With one singularity
the pending set is always a subset of the front's interface; with several
chains it also carries the other chains' interfaces through.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

from .elimination_tree import EliminationTree, Front, StructuralError
from .fem_assembly import ElementMatrix

PIVOT_TOL = 1e-14


class SingularFrontError(ArithmeticError):
    def __init__(self, dof: int, pivot: float):
        super().__init__(f"near-zero pivot {pivot:.3e} at DOF {dof}")
        self.dof = dof
        self.pivot = pivot


@dataclass
class CostCounters:
    flops: int = 0
    flops_rhs: int = 0
    flops_back: int = 0
    nnz_factors: int = 0
    peak_front: int = 0

    def copy(self) -> "CostCounters":
        return CostCounters(**vars(self))


@dataclass
class DenseFront:
    dofs: np.ndarray  # eliminate block first, then keep block
    n_eliminate: int
    A: np.ndarray
    b: np.ndarray


@dataclass
class SchurComplement:
    dofs: np.ndarray
    S: np.ndarray
    g: np.ndarray

    @classmethod
    def empty(cls) -> "SchurComplement":
        return cls(np.zeros(0, dtype=int), np.zeros((0, 0)), np.zeros(0))


@dataclass
class PartialLU:
    front_id: int
    k: int
    dofs: np.ndarray  # full front DOF list; first k are eliminated
    L11: np.ndarray
    U11: np.ndarray
    U12: np.ndarray
    L21: np.ndarray
    rhs_partial: np.ndarray
    pivot_block: np.ndarray = field(repr=False)
    perm: np.ndarray | None = None

    @property
    def n(self) -> int:
        return len(self.dofs)

    @property
    def nnz(self) -> int:
        k, n = self.k, self.n
        return k * (k + 1) // 2 + k * (k - 1) // 2 + 2 * k * (n - k)

    def reconstruction_error(self) -> float:
        if self.k == 0:
            return 0.0
        ref = np.max(np.abs(self.pivot_block))
        return float(np.max(np.abs(self.L11 @ self.U11 - self.pivot_block)) / ref)


def factorization_flops(n: int, k: int) -> int:
    return sum((n - j) + 2 * (n - j) ** 2 for j in range(1, k + 1))


def assemble_front(front: Front, element_matrices: dict[int, ElementMatrix],
                   inherited: list[SchurComplement], passthrough: bool = True) -> DenseFront:
    """Scatter constrained element matrices and inherited Schur complements.

    With ``passthrough=False`` every inherited DOF must belong to the front's
    own eliminate or keep set.
    """
    elim = list(front.eliminate_dofs)
    own = set(elim) | set(front.keep_dofs)
    extra = set()
    for sc in inherited:
        for g in sc.dofs:
            g = int(g)
            if g not in own:
                if not passthrough:
                    raise StructuralError(f"inherited DOF {g} not in front {front.front_id}")
                extra.add(g)
    keep = sorted((set(front.keep_dofs) | extra) - set(elim))
    dofs = np.array(elim + keep, dtype=int)
    pos = {int(g): i for i, g in enumerate(dofs)}
    n = len(dofs)
    A = np.zeros((n, n))
    b = np.zeros(n)
    for eid in front.element_ids:
        em = element_matrices[eid]
        try:
            ix = np.array([pos[g] for g in em.dofs], dtype=int)
        except KeyError as exc:
            raise StructuralError(f"element {eid} DOF {exc.args[0]} outside front {front.front_id}")
        A[np.ix_(ix, ix)] += em.K
        b[ix] += em.f
    for sc in inherited:
        ix = np.array([pos[int(g)] for g in sc.dofs], dtype=int)
        A[np.ix_(ix, ix)] += sc.S
        b[ix] += sc.g
    return DenseFront(dofs, len(elim), A, b)


def partial_factorize(df: DenseFront, k: int | None = None, counters: CostCounters | None = None,
                      front_id: int = -1) -> tuple[PartialLU, SchurComplement]:
    """Unpivoted right-looking elimination of the first k rows/columns."""
    if k is None:
        k = df.n_eliminate
    A = df.A.copy()
    b = df.b.copy()
    n = A.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"eliminate count {k} outside [1, {n}]")
    pivot_block = A[:k, :k].copy()
    scale = float(np.max(np.abs(np.diag(A)))) if n else 0.0
    flops = rhs = 0
    for j in range(k):
        piv = A[j, j]
        if not abs(piv) >= PIVOT_TOL * scale or piv == 0.0:
            raise SingularFrontError(int(df.dofs[j]), float(piv))
        m = n - j - 1
        if m:
            A[j + 1:, j] /= piv
            A[j + 1:, j + 1:] -= np.outer(A[j + 1:, j], A[j, j + 1:])
            b[j + 1:] -= A[j + 1:, j] * b[j]
        flops += m + 2 * m * m
        rhs += 2 * m
    L11 = np.tril(A[:k, :k], -1) + np.eye(k)
    lu = PartialLU(front_id, k, df.dofs.copy(), L11, np.triu(A[:k, :k]), A[:k, k:].copy(),
                   A[k:, :k].copy(), b[:k].copy(), pivot_block)
    sc = SchurComplement(df.dofs[k:].copy(), A[k:, k:].copy(), b[k:].copy())
    if counters is not None:
        counters.flops += flops
        counters.flops_rhs += rhs
        counters.nnz_factors += lu.nnz
        counters.peak_front = max(counters.peak_front, n)
    return lu, sc


def _passthrough_lu(front_id: int, df: DenseFront) -> tuple[PartialLU, SchurComplement]:
    e = np.zeros((0, 0))
    n = len(df.dofs)
    lu = PartialLU(front_id, 0, df.dofs.copy(), e, e, np.zeros((0, n)), np.zeros((n, 0)),
                   np.zeros(0), e)
    return lu, SchurComplement(df.dofs.copy(), df.A.copy(), df.b.copy())


@dataclass
class ForwardResult:
    store: dict[int, PartialLU]
    snapshots: dict[int, SchurComplement]  # pending Schur complement after each front


def forward_eliminate(tree: EliminationTree, element_matrices: dict[int, ElementMatrix],
                      counters: CostCounters, start: int = 0,
                      inherited: SchurComplement | None = None,
                      passthrough: bool = True) -> ForwardResult:
    """Process fronts ``start..end`` in elimination order.

    ``inherited`` is the pending Schur complement left by front ``start-1``.
    """
    store, snaps = {}, {}
    pending = inherited if inherited is not None else SchurComplement.empty()
    for front in tree.fronts[start:]:
        parts = [pending] if len(pending.dofs) else []
        df = assemble_front(front, element_matrices, parts, passthrough)
        counters.peak_front = max(counters.peak_front, len(df.dofs))
        if df.n_eliminate == 0:
            lu, pending = _passthrough_lu(front.front_id, df)
        else:
            lu, pending = partial_factorize(df, df.n_eliminate, counters, front.front_id)
        store[front.front_id] = lu
        snaps[front.front_id] = pending
    if len(pending.dofs):
        raise StructuralError(f"{len(pending.dofs)} DOFs left after the last front")
    return ForwardResult(store, snaps)


def back_substitute(tree: EliminationTree, store: dict[int, PartialLU], n_dofs: int,
                    counters: CostCounters | None = None) -> np.ndarray:
    """Recover all free unknowns in reverse elimination order."""
    x = np.zeros(n_dofs)
    known = np.zeros(n_dofs, dtype=bool)
    flops = 0
    for front in reversed(tree.fronts):
        lu = store.get(front.front_id)
        if lu is None:
            raise StructuralError(f"missing factor for front {front.front_id}")
        k, n = lu.k, lu.n
        if k == 0:
            continue
        keep = lu.dofs[k:]
        if not known[keep].all():
            raise StructuralError(f"front {front.front_id} keeps unknowns not yet solved")
        r = lu.rhs_partial - lu.U12 @ x[keep] if n > k else lu.rhs_partial.copy()
        x[lu.dofs[:k]] = solve_triangular(lu.U11, r, lower=False, check_finite=False)
        known[lu.dofs[:k]] = True
        flops += 2 * k * (n - k) + k * k
    if counters is not None:
        counters.flops_back += flops
    return x
