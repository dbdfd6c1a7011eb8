"""Grid sequences with and without reuse of partial LU factors.

In reuse mode every front whose structural signature (elements, eliminated
and kept DOF keys) is unchanged after a refinement keeps its cached factors;
only the invalidated tail of the elimination order is assembled and
factorized, starting from the cached pending Schur complement.
"""
from __future__ import annotations

import dataclasses
import time
from dataclasses import dataclass, field

import numpy as np

from .elimination_tree import EliminationTree, build_tree, extend_tree
from .fem_assembly import DofMap, apply_constraints, build_dof_map, compute_error, element_stiffness_load
from .frontal_solver import (CostCounters, PartialLU, SchurComplement, back_substitute,
                             forward_eliminate)
from .mesh2d import Mesh, active_elements, refine_towards_singularities
from .oracle_baseline import assemble_global, dense_lu_flops, dense_lu_solve
from .problems import make_problem

MODES = ("reuse", "noreuse", "oracle")


class CacheInvalidError(RuntimeError):
    """Cached fronts no longer match the current elimination tree."""


@dataclass
class GridReport:
    l: int
    mode: str
    N: int
    flops_new: int
    flops_back: int
    nnz_new: int
    peak_front: int
    wall_time_ns: int
    error_L2: float | None = None
    error_H1: float | None = None
    flops_rhs: int = 0
    recomputed_fronts: int = 0
    reused_fronts: int = 0
    solution: np.ndarray | None = field(default=None, repr=False, compare=False)


@dataclass
class CacheEntry:
    signature: tuple
    lu: PartialLU
    lu_keys: tuple
    snapshot: SchurComplement
    snapshot_keys: tuple


@dataclass
class ReuseCache:
    entries: list[CacheEntry] = field(default_factory=list)
    tree_prev: EliminationTree | None = None
    element_matrices: dict = field(default_factory=dict)  # eid -> raw ElementMatrix

    @property
    def factor_store(self) -> dict[int, PartialLU]:
        return {i: e.lu for i, e in enumerate(self.entries)}

    @property
    def schur_snapshots(self) -> dict[int, SchurComplement]:
        return {i: e.snapshot for i, e in enumerate(self.entries)}

    def integrity_errors(self, tol: float = 1e-9) -> list[str]:
        out = []
        for i, e in enumerate(self.entries):
            err = e.lu.reconstruction_error()
            if not err <= tol:
                out.append(f"front {i}: reconstruction error {err:.2e}")
            if self.tree_prev is not None and (i >= len(self.tree_prev.signatures)
                                               or self.tree_prev.signatures[i] != e.signature):
                out.append(f"front {i}: signature differs from the current tree")
        return out


@dataclass
class RecomputePlan:
    start: int
    fronts: list[int]
    inherited: SchurComplement | None
    dropped: int


def _remap(keys, dofmap: DofMap) -> np.ndarray:
    try:
        return np.array([dofmap.index[k] for k in keys], dtype=int)
    except KeyError as exc:
        raise CacheInvalidError(f"cached DOF {exc.args[0]!r} no longer exists") from exc


def refine_and_patch(cache: ReuseCache, new_mesh: Mesh, new_dofmap: DofMap,
                     interleave: str = "breadth") -> tuple[RecomputePlan, EliminationTree]:
    """Drop invalidated cache entries and list the fronts to refactorize."""
    if cache.tree_prev is None:
        tree = build_tree(new_mesh, new_dofmap, interleave)
        start = 0
    else:
        tree, start = extend_tree(cache.tree_prev, new_mesh, new_dofmap, interleave)
    if len(cache.entries) < start:
        raise CacheInvalidError("cache holds fewer fronts than the reusable prefix")
    for i in range(start):
        if cache.entries[i].signature != tree.signatures[i]:
            raise CacheInvalidError(f"cached front {i} does not match the new tree")
    dropped = len(cache.entries) - start
    del cache.entries[start:]
    inherited = None
    if start:
        snap = cache.entries[start - 1]
        inherited = SchurComplement(_remap(snap.snapshot_keys, new_dofmap), snap.snapshot.S,
                                    snap.snapshot.g)
    plan = RecomputePlan(start, [f.front_id for f in tree.fronts[start:]], inherited, dropped)
    return plan, tree


def solve_grid(mesh: Mesh, problem, p: int, counters: CostCounters | None = None,
               interleave: str = "breadth"):
    """Frontal solve of one grid from scratch; returns (x, dofmap, tree)."""
    c = counters if counters is not None else CostCounters()
    dm = build_dof_map(mesh, p, problem)
    tree = build_tree(mesh, dm, interleave)
    ems = {eid: apply_constraints(element_stiffness_load(mesh.nodes[eid], problem, p), dm)
           for eid in active_elements(mesh)}
    fr = forward_eliminate(tree, ems, c)
    return back_substitute(tree, fr.store, dm.n_dofs, c), dm, tree


class SequenceSolver:
    """Refine-assemble-solve loop for one problem in one mode."""

    def __init__(self, problem: str, p: int, mode: str = "reuse", alpha: float = 0.6,
                 errors: bool = True, interleave: str = "breadth"):
        if mode not in MODES:
            raise ValueError(f"unknown mode {mode!r}")
        self.mesh, self.problem = make_problem(problem, alpha)
        self.name, self.p, self.mode = problem, p, mode
        self.errors = errors
        self.interleave = interleave
        self.l = 0
        self.cache = ReuseCache()
        self.dofmap: DofMap | None = None
        self.tree: EliminationTree | None = None
        self.snapshots: dict[int, SchurComplement] = {}

    def _element_matrices(self, eids, cached: bool) -> dict:
        raw = self.cache.element_matrices if cached else {}
        out = {}
        for eid in eids:
            if eid not in raw:
                raw[eid] = element_stiffness_load(self.mesh.nodes[eid], self.problem, self.p)
            out[eid] = apply_constraints(raw[eid], self.dofmap)
        return out

    def step(self) -> GridReport:
        t0 = time.perf_counter_ns()
        self.mesh = refine_towards_singularities(self.mesh)
        self.l += 1
        self.dofmap = dm = build_dof_map(self.mesh, self.p, self.problem)
        c = CostCounters()
        recomputed = reused = 0
        if self.mode == "oracle":
            x = dense_lu_solve(assemble_global(self.mesh, dm, self.problem, self.p))
            n = dm.n_dofs
            c.flops, c.flops_back = dense_lu_flops(n), n * (n - 1) + n * n
            c.nnz_factors, c.peak_front = n * n, n
        elif self.mode == "noreuse":
            self.tree = build_tree(self.mesh, dm, self.interleave)
            ems = self._element_matrices(active_elements(self.mesh), cached=False)
            fr = forward_eliminate(self.tree, ems, c)
            self.snapshots = fr.snapshots
            recomputed = len(self.tree.fronts)
            x = back_substitute(self.tree, fr.store, dm.n_dofs, c)
        else:
            x, recomputed, reused = self._reuse_step(c)
        report = GridReport(self.l, self.mode, dm.n_dofs, c.flops, c.flops_back, c.nnz_factors,
                            c.peak_front, 0, flops_rhs=c.flops_rhs,
                            recomputed_fronts=recomputed, reused_fronts=reused, solution=x)
        if self.errors and self.problem.exact_solution is not None:
            report.error_L2 = compute_error(self.mesh, self.p, dm, x, self.problem, "L2")
            report.error_H1 = compute_error(self.mesh, self.p, dm, x, self.problem, "H1_semi")
        report.wall_time_ns = time.perf_counter_ns() - t0
        return report

    def _reuse_step(self, c: CostCounters):
        dm = self.dofmap
        cache = self.cache
        plan, tree = refine_and_patch(cache, self.mesh, dm, self.interleave)
        self.tree = tree
        live = set(active_elements(self.mesh))
        for eid in [e for e in cache.element_matrices if e not in live]:
            del cache.element_matrices[eid]
        todo = tree.fronts[plan.start:]
        ems = self._element_matrices(sorted({e for f in todo for e in f.element_ids}), cached=True)
        fr = forward_eliminate(tree, ems, c, start=plan.start, inherited=plan.inherited)
        keys = dm.keys
        for f in todo:
            lu, snap = fr.store[f.front_id], fr.snapshots[f.front_id]
            cache.entries.append(CacheEntry(tree.signatures[f.front_id], lu,
                                            tuple(keys[g] for g in lu.dofs), snap,
                                            tuple(keys[g] for g in snap.dofs)))
        cache.tree_prev = tree
        store = {}
        for i, e in enumerate(cache.entries):
            lu = e.lu if i >= plan.start else dataclasses.replace(e.lu, dofs=_remap(e.lu_keys, dm))
            store[i] = lu
        self.snapshots = fr.snapshots
        x = back_substitute(tree, store, dm.n_dofs, c)
        return x, len(todo), plan.start

    def run(self, L: int) -> list[GridReport]:
        return [self.step() for _ in range(L)]


@dataclass
class CostModelFit:
    c1: float | None = None
    c2: float | None = None
    c3: float | None = None
    c4: float | None = None
    c5: float | None = None
    c6: float | None = None
    c7: float | None = None
    r2_cost: float | None = None
    r2_unknowns: float | None = None
    r2_memory: float | None = None
    c7_spread: float | None = None


def affine_fit(x, y) -> tuple[float, float, float]:
    """Least-squares intercept, slope and R^2."""
    x, y = np.asarray(x, float), np.asarray(y, float)
    X = np.column_stack([np.ones_like(x), x])
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    ss_res = float(np.sum((y - X @ coef) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot > 0:
        r2 = 1.0 - ss_res / ss_tot
    else:
        # constant data: exact fit up to rounding
        r2 = 1.0 if ss_res <= 1e-24 * max(1.0, float(np.sum(y * y))) else 0.0
    return float(coef[0]), float(coef[1]), r2


def fit_cost_model(reports_by_mode: dict[str, list[GridReport]], l_min: int = 2) -> CostModelFit:
    fit = CostModelFit()
    base = reports_by_mode.get("noreuse") or reports_by_mode.get("reuse") or []
    pts = [r for r in base if r.l >= l_min]
    if len(pts) >= 2:
        fit.c3, fit.c4, fit.r2_unknowns = affine_fit([r.l for r in pts], [r.N for r in pts])
    nr = [r for r in reports_by_mode.get("noreuse", []) if r.l >= l_min]
    if len(nr) >= 2:
        fit.c1, fit.c2, fit.r2_cost = affine_fit([r.N for r in nr], [r.flops_new for r in nr])
        fit.c5, fit.c6, fit.r2_memory = affine_fit([r.N for r in nr], [r.nnz_new for r in nr])
    ru = [r.flops_new for r in reports_by_mode.get("reuse", []) if r.l >= l_min + 1]
    if ru:
        fit.c7 = float(np.mean(ru))
        fit.c7_spread = float(max(ru) - min(ru))
    return fit


@dataclass
class SequenceResult:
    reports: list[GridReport]
    fit: CostModelFit


def solve_sequence(problem: str, p: int, L: int, mode: str, alpha: float = 0.6,
                   errors: bool = True) -> SequenceResult:
    if L < 1:
        raise ValueError("need at least one grid")
    reports = SequenceSolver(problem, p, mode, alpha, errors).run(L)
    return SequenceResult(reports, fit_cost_model({mode: reports}))


@dataclass
class ConsistencyReport:
    ok: bool
    diffs: list  # (l, mode_a, mode_b, relative max-norm difference)
    failures: list[int]

    def __bool__(self) -> bool:
        return self.ok


def verify_solution_consistency(reports_reuse, reports_noreuse, reports_oracle,
                                rtol: float = 1e-8) -> ConsistencyReport:
    """Per-grid agreement of solution vectors across the three modes."""
    runs = {"reuse": reports_reuse, "noreuse": reports_noreuse, "oracle": reports_oracle}
    runs = {m: {r.l: r for r in rs} for m, rs in runs.items() if rs}
    grids = sorted(set().union(*[set(v) for v in runs.values()])) if runs else []
    diffs, failures = [], set()
    modes = list(runs)
    for l in grids:
        for i, a in enumerate(modes):
            for b in modes[i + 1:]:
                ra, rb = runs[a].get(l), runs[b].get(l)
                if ra is None or rb is None or ra.solution is None or rb.solution is None \
                        or ra.solution.shape != rb.solution.shape:
                    diffs.append((l, a, b, float("inf")))
                    failures.add(l)
                    continue
                scale = max(np.max(np.abs(rb.solution), initial=0.0), 1e-300)
                d = float(np.max(np.abs(ra.solution - rb.solution), initial=0.0) / scale)
                diffs.append((l, a, b, d))
                if not d <= rtol:
                    failures.add(l)
    return ConsistencyReport(not failures, diffs, sorted(failures))


def solve_all_modes(problem: str, p: int, L: int, alpha: float = 0.6, errors: bool = True):
    runs = {m: SequenceSolver(problem, p, m, alpha, errors).run(L) for m in MODES}
    verdict = verify_solution_consistency(runs["reuse"], runs["noreuse"], runs["oracle"])
    return runs, fit_cost_model(runs), verdict
