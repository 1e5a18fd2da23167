"""Command-line entry point: one subcommand per pipeline stage plus the sweep.

Exit codes: 0 success, 2 configuration rejected, 3 solver failure,
4 acceptance failure (sweep only), 64 usage error.  All numeric output goes
to files under --out; a short human summary goes to stdout.  Logging level
comes from the PRANDTL_EXPANDER_LOG environment variable
(error|warn|info|debug).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import assembly as asm
from . import euler1 as e1
from . import harness
from . import prandtl0 as p0
from . import prandtl1 as p1
from . import reference as ref
from .errors import SolverError, SpecRejected
from .numerics import ScalarField2D, write_field_csv
from .problem import GridConfig, benchmark_spec, load_spec, trivial_chain_spec, with_grids, validate_spec

log = logging.getLogger("prandtl_expander")

EXIT_OK = 0
EXIT_SPEC = 2
EXIT_SOLVER = 3
EXIT_ACCEPT = 4
EXIT_USAGE = 64

BUILTIN_SPECS = {
    "default-benchmark": benchmark_spec,
    "trivial-chain": trivial_chain_spec,
}


def _setup_logging() -> None:
    level = os.environ.get("PRANDTL_EXPANDER_LOG", "warn").lower()
    levels = {"error": logging.ERROR, "warn": logging.WARNING,
              "info": logging.INFO, "debug": logging.DEBUG}
    logging.basicConfig(level=levels.get(level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def _load(args):
    if args.spec in BUILTIN_SPECS:
        spec = BUILTIN_SPECS[args.spec]()
    else:
        spec = load_spec(args.spec)
    if args.grid:
        nx, ny = (int(t) for t in args.grid.split(","))
        spec = with_grids(spec, nx=nx, ny=ny)
    return spec


def _outdir(args, *artifacts) -> str:
    out = args.out or "out"
    os.makedirs(out, exist_ok=True)
    for name in artifacts:
        path = os.path.join(out, name)
        if os.path.exists(path) and not args.force:
            print(f"refusing to overwrite {path} (use --force)", file=sys.stderr)
            raise SystemExit(EXIT_USAGE)
    return out


def _dump_json(path, payload) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
        fh.write("\n")


def cmd_validate(args) -> int:
    spec = _load(args)
    report = validate_spec(spec, raise_on_fail=False)
    for line in report.lines():
        print(line)
    return EXIT_OK if report.passed else EXIT_SPEC


def cmd_prandtl0(args) -> int:
    spec = _load(args)
    validate_spec(spec)
    out = _outdir(args, "prandtl0_summary.json")
    state, hl = p0.solve_half_line(spec)
    write_field_csv(os.path.join(out, "u_p_half_line.csv"), hl.field(hl.u))
    write_field_csv(os.path.join(out, "v_p_half_line.csv"), hl.field(hl.v))
    summary = {
        "c0": state.c0,
        "c0bar": state.c0_bar,
        "min_W": state.min_W,
        "max_W": state.max_W,
        "side_compatibility": p0.deferred_side_checks(spec, hl),
        "Rp0_norms": {},
    }
    for eps in spec.epsilon_list:
        pz = p0.cutoff_to_strip(hl, eps, spec.chi, spec)
        tag = f"eps_{eps:g}"
        write_field_csv(os.path.join(out, f"u_p0_{tag}.csv"), pz.u_p0)
        write_field_csv(os.path.join(out, f"v_p0_{tag}.csv"), pz.v_p0)
        summary["Rp0_norms"][repr(eps)] = pz.norms
    _dump_json(os.path.join(out, "prandtl0_summary.json"), summary)
    print(f"half-line solve: W in [{state.min_W:.6g}, {state.max_W:.6g}] "
          f"(bounds [{state.c0:g}, {state.c0_bar:g}]); outputs in {out}/")
    return EXIT_OK


def _stage_objects(spec, eps, fp_sign="minus"):
    state, hl = p0.solve_half_line(spec)
    eo = e1.solve_euler_one(spec, hl, eps)
    po = p1.solve_prandtl_one(spec, hl, eo, eps, fp_sign=fp_sign)
    pz = p0.cutoff_to_strip(hl, eps, spec.chi, spec)
    return state, hl, eo, po, pz


def cmd_euler1(args) -> int:
    spec = _load(args)
    validate_spec(spec)
    out = _outdir(args, "euler1_summary.json")
    state, hl = p0.solve_half_line(spec)
    summary = {}
    for eps in spec.epsilon_list:
        eo = e1.solve_euler_one(spec, hl, eps)
        pz = p0.cutoff_to_strip(hl, eps, spec.chi, spec)
        res = e1.euler_residuals(spec, eo, pz.fields, eps)
        tag = f"eps_{eps:g}"
        for name, vals in (("v_e1", eo.v_e1), ("u_e1", eo.u_e1), ("p_e1", eo.p_e1)):
            write_field_csv(os.path.join(out, f"{name}_{tag}.csv"), ScalarField2D(eo.grid, vals))
        summary[repr(eps)] = {
            "alpha": eo.quad_form,
            "bc_trace_residuals": eo.diagnostics["lift_traces"],
            "R_u1_norms": res["norms"]["R_u1_l2"],
            "R_v0_norms": res["norms"]["R_v0_l2"],
            "E0_norms": res["norms"]["E0_l2"],
        }
    _dump_json(os.path.join(out, "euler1_summary.json"), summary)
    print(f"outer corrector solved for {len(spec.epsilon_list)} viscosities; outputs in {out}/")
    return EXIT_OK


def cmd_prandtl1(args) -> int:
    spec = _load(args)
    validate_spec(spec)
    out = _outdir(args, "prandtl1_summary.json")
    state, hl = p0.solve_half_line(spec)
    alpha = p1.coercivity_fourth(spec.u_e + hl.u[0], hl.grid.y, seed=args.seed)
    summary = {"alpha_4th": alpha}
    for eps in spec.epsilon_list:
        eo = e1.solve_euler_one(spec, hl, eps)
        po = p1.solve_prandtl_one(spec, hl, eo, eps, fp_sign=args.fp_sign)
        tag = f"eps_{eps:g}"
        write_field_csv(os.path.join(out, f"u_p1_{tag}.csv"), ScalarField2D(po.strip_grid, po.u_p1))
        write_field_csv(os.path.join(out, f"v_p1_{tag}.csv"), ScalarField2D(po.strip_grid, po.v_p1))
        write_field_csv(os.path.join(out, f"p_p2_{tag}.csv"), ScalarField2D(po.strip_grid, po.pp2))
        summary[repr(eps)] = {
            "Rp1_norms": po.norms["Rp1_list_l2"],
            "Rtilde_norms": po.norms["Rtilde_l2"],
            "pp2x_norms": po.norms["pp2x_l2"],
        }
    _dump_json(os.path.join(out, "prandtl1_summary.json"), summary)
    print(f"layer corrector solved; alpha_4th = {alpha:.4g}; outputs in {out}/")
    return EXIT_OK


def cmd_assemble(args) -> int:
    spec = _load(args)
    validate_spec(spec)
    out = _outdir(args, "assembly_summary.json")
    state, hl = p0.solve_half_line(spec)
    summary = {}
    for eps in spec.epsilon_list:
        eo = e1.solve_euler_one(spec, hl, eps)
        po = p1.solve_prandtl_one(spec, hl, eo, eps, fp_sign=args.fp_sign)
        pz = p0.cutoff_to_strip(hl, eps, spec.chi, spec)
        es = asm.assemble(spec, eps, pz, eo, po)
        asm.residual_app(spec, es)
        tag = f"eps_{eps:g}"
        for name in ("u_app", "v_app", "p_app"):
            write_field_csv(os.path.join(out, f"{name}_{tag}.csv"), es.field2d(name))
            ext = asm.symmetric_extend(es.field2d(name), "odd" if name == "v_app" else "even")
            write_field_csv(os.path.join(out, f"{name}_{tag}_full.csv"), ext)
        summary[repr(eps)] = es.norms
    _dump_json(os.path.join(out, "assembly_summary.json"), summary)
    print(f"assembled expansions written to {out}/")
    return EXIT_OK


def cmd_reference(args) -> int:
    spec = _load(args)
    validate_spec(spec)
    out = _outdir(args, "reference_summary.json")
    state, hl = p0.solve_half_line(spec)
    summary = {}
    for eps in spec.epsilon_list:
        eo = e1.solve_euler_one(spec, hl, eps)
        po = p1.solve_prandtl_one(spec, hl, eo, eps, fp_sign=args.fp_sign)
        pz = p0.cutoff_to_strip(hl, eps, spec.chi, spec)
        es = asm.assemble(spec, eps, pz, eo, po)
        op, sol = ref.solve_reference(spec, eps, es)
        u_c, v_c, p_c = sol.centers()
        g = sol.grid
        cgrid = asm.Grid2D(asm.Grid1D(g.xc, min_nodes=4), asm.Grid1D(g.yc, min_nodes=4), "scaled")
        tag = f"eps_{eps:g}"
        write_field_csv(os.path.join(out, f"U_{tag}.csv"), ScalarField2D(cgrid, u_c))
        write_field_csv(os.path.join(out, f"V_{tag}.csv"), ScalarField2D(cgrid, v_c))
        write_field_csv(os.path.join(out, f"P_{tag}.csv"), ScalarField2D(cgrid, p_c))
        summary[repr(eps)] = {
            "newton_iters": sol.newton_iters,
            "final_residual": sol.final_residual,
            "divergence_inf": sol.divergence_inf(),
            "used_fallback": sol.used_fallback,
        }
    _dump_json(os.path.join(out, "reference_summary.json"), summary)
    print(f"reference solves written to {out}/")
    return EXIT_OK


def cmd_sweep(args) -> int:
    spec = _load(args)
    out = _outdir(args, "report.json", "errors.csv", "rates.csv")
    jobs = args.jobs or min(os.cpu_count() or 1, len(spec.epsilon_list))
    report = harness.run_sweep(spec, jobs=jobs, fp_sign=args.fp_sign, seed=args.seed)
    paths = harness.write_report(report, out)
    for name, c in report.checks.items():
        print(f"[{'PASS' if c['passed'] else 'FAIL'}] {name}: {c['detail']}")
    print(f"report: {paths['report']}")
    return EXIT_OK if report.passed else EXIT_ACCEPT


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="prandtl-expander",
        description="Boundary-layer expansion builder and inviscid-limit rate verifier",
    )
    sub = ap.add_subparsers(dest="command", required=True)
    commands = {
        "validate": cmd_validate,
        "solve-prandtl0": cmd_prandtl0,
        "solve-euler1": cmd_euler1,
        "solve-prandtl1": cmd_prandtl1,
        "assemble": cmd_assemble,
        "reference": cmd_reference,
        "sweep": cmd_sweep,
    }
    for name, fn in commands.items():
        p = sub.add_parser(name)
        p.add_argument("spec", help="spec JSON path, or builtin: default-benchmark, trivial-chain")
        p.add_argument("-o", "--out", default=None, help="output directory (default: out/)")
        p.add_argument("--force", action="store_true", help="overwrite existing reports")
        p.add_argument("--jobs", type=int, default=None, help="per-viscosity parallelism (sweep)")
        p.add_argument("--grid", default=None, help="override layer grid as nx,ny")
        p.add_argument("--seed", type=int, default=7, help="seed of the coercivity probes")
        p.add_argument("--fp-sign", choices=("minus", "plus"), default="minus",
                       help="sign of the commutator term inside the corrector forcing")
        p.set_defaults(fn=fn)
    return ap


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else 0
    try:
        return args.fn(args)
    except SpecRejected as exc:
        print(f"spec rejected: {exc}", file=sys.stderr)
        report = getattr(exc, "report", None)
        if report is not None:
            for line in report.lines():
                print(line, file=sys.stderr)
        return EXIT_SPEC
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except SystemExit as exc:
        return int(exc.code or 0)


if __name__ == "__main__":
    sys.exit(main())
