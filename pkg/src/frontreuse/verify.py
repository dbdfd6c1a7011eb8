"""Invariant suite behind the ``verify`` command."""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass

import numpy as np

from .elimination_tree import check_tree
from .fem_assembly import constraint_coefficients, gll_points
from .mesh2d import Mesh, active_elements, irregular_elements, tiling_defect
from .reuse_manager import SequenceSolver, verify_solution_consistency

MAX_VERIFY_LEVELS = 6


@dataclass
class CheckResult:
    name: str
    ok: bool
    detail: str = ""

    def line(self) -> str:
        return f"{'PASS' if self.ok else 'FAIL'}  {self.name}" + (f"  ({self.detail})" if self.detail else "")


def mesh_checks(mesh: Mesh) -> list[CheckResult]:
    defect = tiling_defect(mesh)
    bad = irregular_elements(mesh)
    near = [eid for eid in active_elements(mesh)
            if any(mesh.nodes[eid].contains(s) for s in mesh.singularities)]
    per_sing = [sum(mesh.nodes[e].contains(s) for e in near) for s in mesh.singularities]
    return [
        CheckResult("mesh_tiling", defect <= 1e-12, f"relative area defect {defect:.1e}"),
        CheckResult("mesh_1_irregular", not bad, f"irregular elements {bad}" if bad else ""),
        CheckResult("singular_neighbourhood", all(c <= 4 for c in per_sing),
                    f"adjacent elements per singularity {per_sing}"),
    ]


def constraint_reproduction_error(p: int, samples: int = 20, seed: int = 0) -> float:
    """Worst error of constrained interpolation on random degree-<=p polynomials."""
    rng = np.random.default_rng(seed)
    t = gll_points(p)
    worst = 0.0
    for _ in range(samples):
        coeffs = rng.standard_normal(p + 1)
        poly = np.polynomial.Polynomial(coeffs)
        for half, shift in (("lower", -1.0), ("upper", 1.0)):
            C = constraint_coefficients(p, half)
            fine_nodes = (t + shift) / 2.0
            worst = max(worst, float(np.max(np.abs(C @ poly(t) - poly(fine_nodes)))))
    return worst


def _front_sizes(tree):
    sizes = defaultdict(dict)
    for f in tree.fronts:
        sizes[f.chain_id][f.level] = (len(f.eliminate_dofs), len(f.keep_dofs))
    return sizes


def run_invariant_suite(problem: str, p: int, levels: int = MAX_VERIFY_LEVELS,
                        alpha: float = 0.6, spd_max: int = 400) -> list[CheckResult]:
    levels = max(1, min(levels, MAX_VERIFY_LEVELS))
    solvers = {m: SequenceSolver(problem, p, m, alpha, errors=False)
               for m in ("reuse", "noreuse", "oracle")}
    reports = {m: [] for m in solvers}
    results: list[CheckResult] = []
    mesh_fail, partition_fail, spd_fail, integrity = [], [], [], []
    front_sizes = []
    for _ in range(levels):
        for m, s in solvers.items():
            reports[m].append(s.step())
        nr = solvers["noreuse"]
        for c in mesh_checks(nr.mesh):
            if not c.ok:
                mesh_fail.append(f"l={nr.l} {c.name}: {c.detail}")
        for msg in check_tree(nr.tree, nr.dofmap, nr.mesh):
            partition_fail.append(f"l={nr.l}: {msg}")
        for fid, sc in nr.snapshots.items():
            if 0 < len(sc.dofs) <= spd_max:
                lam = float(np.linalg.eigvalsh(0.5 * (sc.S + sc.S.T))[0])
                if not lam > 0:
                    spd_fail.append(f"l={nr.l} front {fid}: min eigenvalue {lam:.2e}")
        integrity += [f"l={nr.l} {e}" for e in solvers["reuse"].cache.integrity_errors()]
        front_sizes.append(_front_sizes(nr.tree))

    results.append(CheckResult("mesh_tiling_and_irregularity", not mesh_fail, "; ".join(mesh_fail)))
    results.append(CheckResult("dof_partition", not partition_fail, "; ".join(partition_fail)))

    Ns = [r.N for r in reports["noreuse"]]
    steps = {b - a for a, b in zip(Ns[1:], Ns[2:])}
    results.append(CheckResult("linear_unknown_growth", len(steps) <= 1, f"N = {Ns}"))

    last = front_sizes[-1]
    bad_sizes = []
    for chain, by_level in last.items():
        if chain == 0:
            continue
        inner = {lev: sz for lev, sz in by_level.items() if 2 <= lev <= levels - 1}
        if len(set(inner.values())) > 1:
            bad_sizes.append(f"chain {chain}: {inner}")
    results.append(CheckResult("constant_front_size", not bad_sizes, "; ".join(bad_sizes)))

    err = constraint_reproduction_error(p)
    results.append(CheckResult("constraint_reproduction", err <= 1e-11, f"max error {err:.1e}"))
    results.append(CheckResult("spd_schur_propagation", not spd_fail, "; ".join(spd_fail)))
    results.append(CheckResult("cache_integrity", not integrity, "; ".join(integrity)))

    verdict = verify_solution_consistency(reports["reuse"], reports["noreuse"], reports["oracle"])
    worst = max((d[3] for d in verdict.diffs), default=0.0)
    results.append(CheckResult("cross_mode_consistency", verdict.ok,
                               f"max relative difference {worst:.1e}"
                               + (f", failing grids {verdict.failures}" if verdict.failures else "")))
    return results

