"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 invariant/verification failure,
3 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from dataclasses import asdict, dataclass

from .elimination_tree import StructuralError
from .frontal_solver import SingularFrontError
from .mesh2d import MeshError, refine_n, mesh_document
from .oracle_baseline import OracleError
from .problems import PROBLEM_NAMES, make_problem
from .reuse_manager import MODES, CacheInvalidError, SequenceSolver, fit_cost_model, \
    verify_solution_consistency
from .verify import run_invariant_suite

SCHEMA_VERSION = 1
CSV_HEADER = ["schema_version", "l", "mode", "N", "flops_new", "flops_back", "nnz_new",
              "peak_front", "wall_time_ns", "error_L2", "error_H1"]
MEMORY_LIMIT_BYTES = 4 * 2**30

EXIT_OK, EXIT_USAGE, EXIT_VERIFY, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    problem: str = "radical1"
    p: int = 2
    levels: int = 8
    mode: str = "all"
    alpha: float = 0.6
    out: str | None = None
    format: str = "csv"

    def validate(self, min_levels: int = 1) -> None:
        if self.problem not in PROBLEM_NAMES:
            raise UsageError(f"unknown problem {self.problem!r} (choose from {', '.join(PROBLEM_NAMES)})")
        if not 1 <= self.p <= 10:
            raise UsageError("--p must be in [1, 10]")
        if not min_levels <= self.levels <= 64:
            raise UsageError(f"--levels must be in [{min_levels}, 64]")
        if self.mode not in MODES + ("all",):
            raise UsageError(f"unknown mode {self.mode!r}")
        if self.format not in ("csv", "json"):
            raise UsageError(f"unknown format {self.format!r}")
        if not 0 < self.alpha < 2:
            raise UsageError("--alpha must be in (0, 2)")
        if self.mode in ("oracle", "all") and estimated_oracle_bytes(self) > MEMORY_LIMIT_BYTES:
            raise UsageError("dense oracle would exceed the memory limit; lower --levels or --p")


def estimated_oracle_bytes(cfg: RunConfig) -> int:
    """Rough upper bound on the dense global matrices of the last grid."""
    elements = 16 + 12 * cfg.levels
    dofs = elements * (cfg.p + 1) ** 2
    return 3 * 8 * dofs * dofs


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return v


def _row(r) -> dict:
    return {"schema_version": SCHEMA_VERSION, "l": r.l, "mode": r.mode, "N": r.N,
            "flops_new": r.flops_new, "flops_back": r.flops_back, "nnz_new": r.nnz_new,
            "peak_front": r.peak_front, "wall_time_ns": r.wall_time_ns,
            "error_L2": r.error_L2, "error_H1": r.error_H1}


def run_sequence(cfg: RunConfig) -> tuple[list[dict], dict]:
    modes = MODES if cfg.mode == "all" else (cfg.mode,)
    runs = {m: SequenceSolver(cfg.problem, cfg.p, m, cfg.alpha).run(cfg.levels) for m in modes}
    rows = [_row(r) for l in range(cfg.levels) for m in modes for r in [runs[m][l]]]
    summary = {"flop_convention": "one per multiply/add/subtract/divide; "
                                  "flops_new counts factorization work only",
               "fit": asdict(fit_cost_model(runs)),
               "totals": {m: {"flops_new": sum(r.flops_new for r in rs),
                              "flops_back": sum(r.flops_back for r in rs),
                              "nnz_new": sum(r.nnz_new for r in rs)} for m, rs in runs.items()}}
    if cfg.mode == "all":
        verdict = verify_solution_consistency(runs["reuse"], runs["noreuse"], runs["oracle"])
        summary["verdict"] = verdict.ok
        summary["max_relative_difference"] = max((d[3] for d in verdict.diffs), default=0.0)
        summary["failing_grids"] = verdict.failures
    return rows, summary


def render(rows: list[dict], summary: dict, cfg: RunConfig) -> str:
    if cfg.format == "json":
        return json.dumps({"schema_version": SCHEMA_VERSION, "config": asdict(cfg),
                           "rows": rows, "summary": summary}, indent=2) + "\n"
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in rows:
        w.writerow([_fmt(r[k]) for k in CSV_HEADER])
    buf.write("# summary\n")
    for k, v in _flatten(summary):
        buf.write(f"# {k},{v}\n")
    return buf.getvalue()


def _flatten(d, prefix=""):
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            yield from _flatten(v, key + ".")
        else:
            yield key, v


def cmd_sequence(cfg: RunConfig) -> int:
    cfg.validate()
    rows, summary = run_sequence(cfg)
    text = render(rows, summary, cfg)
    if cfg.out:
        with open(cfg.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    if summary.get("verdict") is False:
        print(f"cross-mode consistency failed at grids {summary['failing_grids']}", file=sys.stderr)
        return EXIT_VERIFY
    return EXIT_OK


def cmd_verify(cfg: RunConfig) -> int:
    cfg.validate()
    results = run_invariant_suite(cfg.problem, cfg.p, cfg.levels, cfg.alpha)
    for r in results:
        print(r.line())
    return EXIT_OK if all(r.ok for r in results) else EXIT_VERIFY


def cmd_dump_mesh(cfg: RunConfig) -> int:
    cfg.validate(min_levels=0)
    mesh, _ = make_problem(cfg.problem, cfg.alpha)
    text = json.dumps(mesh_document(refine_n(mesh, cfg.levels)), indent=1) + "\n"
    if cfg.out:
        with open(cfg.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="frontreuse", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    defaults = RunConfig()
    for name, help_ in (("sequence", "run a refinement sequence and write a scaling report"),
                        ("verify", "run the invariant suite (levels capped at 6)"),
                        ("dump-mesh", "print the refinement forest as JSON")):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--problem", default=defaults.problem)
        sp.add_argument("--p", type=int, default=defaults.p)
        sp.add_argument("--levels", type=int, default=defaults.levels)
        sp.add_argument("--mode", default=defaults.mode)
        sp.add_argument("--alpha", type=float, default=defaults.alpha)
        sp.add_argument("--out", default=None)
        sp.add_argument("--format", default=defaults.format)
    return parser


COMMANDS = {"sequence": cmd_sequence, "verify": cmd_verify, "dump-mesh": cmd_dump_mesh}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        cfg = RunConfig(args.problem, args.p, args.levels, args.mode, args.alpha, args.out,
                        args.format)
        return COMMANDS[args.command](cfg)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SingularFrontError, OracleError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (StructuralError, CacheInvalidError, MeshError) as exc:
        print(f"verification failure: {exc}", file=sys.stderr)
        return EXIT_VERIFY


if __name__ == "__main__":
    sys.exit(main())
