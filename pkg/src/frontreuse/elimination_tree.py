"""Top-to-bottom elimination ordering built from the refinement forest.

Active elements are grouped into chains: chain 0 holds every element of
level <= 1 (the coarse region), chain s >= 1 holds the elements descending
from level-1 elements that touched singularity s-1.  Each chain contributes
one front per level, coarse to fine, so a new refinement only appends fronts
at the tail of the order.
"""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass

from .fem_assembly import DofMap
from .mesh2d import Mesh, active_elements


class StructuralError(ValueError):
    """Inconsistent tree, front or mesh relation."""


@dataclass(frozen=True)
class Front:
    front_id: int
    chain_id: int
    level: int
    element_ids: tuple[int, ...]
    eliminate_dofs: tuple[int, ...]
    keep_dofs: tuple[int, ...]
    successor: int | None = None


@dataclass(frozen=True)
class EliminationTree:
    fronts: tuple[Front, ...]
    signatures: tuple  # per front: (chain, level, elements, eliminate keys, keep keys)
    refinement_count: int
    element_ids: frozenset

    @property
    def order(self) -> list[int]:
        return [f.front_id for f in self.fronts]

    def chain_fronts(self, chain_id: int) -> list[Front]:
        return [f for f in self.fronts if f.chain_id == chain_id]


def dof_support(dofmap: DofMap) -> list[set]:
    """Active elements whose constrained matrix touches each free DOF.

    Masters inherit the elements of their slaves through the constraint map.
    """
    support = [set() for _ in range(dofmap.n_dofs)]
    for eid, (cols, _, _) in dofmap.element_T.items():
        for g in cols:
            support[g].add(eid)
    return support


def assign_chains(mesh: Mesh) -> dict[int, int]:
    chains = {}
    sings = mesh.singularities
    for eid in active_elements(mesh):
        e = mesh.nodes[eid]
        if e.level <= 1:
            chains[eid] = 0
            continue
        anc = mesh.ancestor_at_level(eid, 1)
        hits = [i for i, s in enumerate(sings) if anc.contains(s)]
        if len(hits) > 1:
            raise StructuralError(f"element {eid} is assignable to chains {[h + 1 for h in hits]}")
        if not hits:
            # created by closure refinement only: attach to the nearest singularity
            cx, cy = (anc.x0 + anc.x1) / 2, (anc.y0 + anc.y1) / 2
            hits = [min(range(len(sings)),
                        key=lambda i: ((sings[i].x - cx) ** 2 + (sings[i].y - cy) ** 2, i))]
        chains[eid] = hits[0] + 1
    return chains


def classify_dofs(front: Front, dofmap: DofMap, processed_elements: set,
                  support: list[set] | None = None) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """Split the DOFs touched by ``front`` into fully assembled and interface."""
    if support is None:
        support = dof_support(dofmap)
    mine = set(front.element_ids)
    done = processed_elements | mine
    touched = sorted({int(g) for eid in front.element_ids for g in dofmap.element_T[eid][0]})
    eliminate = tuple(g for g in touched if support[g] <= done)
    keep = tuple(g for g in touched if not support[g] <= done)
    return eliminate, keep


def _groups(mesh: Mesh, interleave: str) -> list[tuple[int, int, tuple[int, ...]]]:
    chains = assign_chains(mesh)
    by = defaultdict(list)
    for eid, c in chains.items():
        lev = mesh.nodes[eid].level if c else 0
        by[(c, lev)].append(eid)
    groups = []
    if (0, 0) in by:
        els = tuple(sorted(by.pop((0, 0))))
        groups.append((0, max(mesh.nodes[e].level for e in els), els))
    if interleave == "breadth":
        keys = sorted(by, key=lambda k: (k[1], k[0]))
    elif interleave == "depth":
        keys = sorted(by)
    else:
        raise ValueError(f"unknown interleave {interleave!r}")
    groups += [(c, lev, tuple(sorted(by[(c, lev)]))) for c, lev in keys]
    return groups


def build_tree(mesh: Mesh, dofmap: DofMap, interleave: str = "breadth") -> EliminationTree:
    """One front per (chain, level); chain 0 first, then chains by level."""
    support = dof_support(dofmap)
    groups = _groups(mesh, interleave)
    fronts = []
    processed: set = set()
    for fid, (chain, level, els) in enumerate(groups):
        stub = Front(fid, chain, level, els, (), ())
        elim, keep = classify_dofs(stub, dofmap, processed, support)
        succ = fid + 1 if fid + 1 < len(groups) else None
        fronts.append(Front(fid, chain, level, els, elim, keep, succ))
        processed |= set(els)
    keys = dofmap.keys
    sigs = tuple((f.chain_id, f.level, f.element_ids,
                  tuple(keys[g] for g in f.eliminate_dofs),
                  tuple(keys[g] for g in f.keep_dofs)) for f in fronts)
    return EliminationTree(tuple(fronts), sigs, mesh.refinement_count,
                           frozenset(active_elements(mesh)))


def reusable_prefix(old_sigs, new_sigs) -> int:
    n = 0
    for a, b in zip(old_sigs, new_sigs):
        if a != b:
            break
        n += 1
    return n


def extend_tree(old_tree: EliminationTree, new_mesh: Mesh, new_dofmap: DofMap,
                interleave: str = "breadth") -> tuple[EliminationTree, int]:
    """Tree of the refined mesh and the count of leading fronts left intact."""
    if new_mesh.refinement_count != old_tree.refinement_count + 1:
        raise StructuralError("new mesh is not a single refinement of the old one")
    for eid in old_tree.element_ids:
        if eid not in new_mesh.nodes:
            raise StructuralError(f"old element {eid} missing from the refined mesh")
    new_tree = build_tree(new_mesh, new_dofmap, interleave)
    return new_tree, reusable_prefix(old_tree.signatures, new_tree.signatures)


def check_tree(tree: EliminationTree, dofmap: DofMap, mesh: Mesh) -> list[str]:
    """Invariant violations of a tree (empty list when consistent)."""
    problems = []
    seen_el = [e for f in tree.fronts for e in f.element_ids]
    if sorted(seen_el) != sorted(active_elements(mesh)):
        problems.append("active elements not partitioned by fronts")
    elim = [g for f in tree.fronts for g in f.eliminate_dofs]
    if sorted(elim) != list(range(dofmap.n_dofs)):
        problems.append(f"sum |eliminate| = {len(elim)} != N = {dofmap.n_dofs}")
    for f in tree.fronts:
        if set(f.eliminate_dofs) & set(f.keep_dofs):
            problems.append(f"front {f.front_id} eliminate/keep overlap")
    for c in {f.chain_id for f in tree.fronts}:
        tip = tree.chain_fronts(c)[-1]
        if tip.keep_dofs and c != 0:
            problems.append(f"chain {c} final front keeps {len(tip.keep_dofs)} DOFs")
    if tree.fronts and tree.fronts[-1].keep_dofs:
        problems.append("last front has non-empty keep set")
    return problems


__all__ = ["Front", "EliminationTree", "StructuralError", "build_tree",
           "classify_dofs", "extend_tree", "dof_support", "assign_chains", "check_tree",
           "reusable_prefix"]
