"""Command-line entry point.

Subcommands:
  run <config>      optimize a problem and write all result artifacts
  verify            run the built-in property/gradient suites
  mesh <config>     generate (or re-export) the analysis mesh only
  replay <summary>  re-solve a stored design at fine displacement resolution

Heavy imports happen inside the handlers so the --threads flag (or the
VARIBC_THREADS environment variable) can pin the numeric thread pools before
numpy initializes.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time


def _set_threads(n):
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS"):
        os.environ.setdefault(var, str(n))


def _fail(message, code=1):
    sys.stderr.write(f"error: {message}\n")
    return code


def build_problem_from_config(cfg, mesh=None):
    """Materialize a ProblemSpec from a parsed RunConfig."""
    from . import mesh as msh, problems

    fam = cfg.get("", "problem")
    fixed = cfg.get("", "fixed_bcs")
    mcfg = cfg.values["mesh"]
    thickness = mcfg["thickness"] if mcfg["thickness"] > 0 else None
    if mesh is None and mcfg["source"] == "import":
        mesh = msh.read_mesh(mcfg["path"], thickness=thickness or 0.01)
    par = cfg.values["parameters"]
    po = {k: par[k] for k in ("E0", "nu", "E_s", "nu_s", "p_simp", "rho0",
                              "b", "P", "Q")}
    for key in ("beta", "r", "r_min", "t_s"):
        if par[key] > 0:
            po[key] = par[key]
    kwargs = dict(mesh=mesh, thickness=thickness, params_override=po)
    if mcfg["element_size"] > 0:
        kwargs["element_size"] = mcfg["element_size"]
    if par["u_in"] > 0:
        kwargs["u_in"] = par["u_in"]
    if par["k_out"] >= 0:
        kwargs["k_out"] = par["k_out"]
    if cfg.get("solver", "steps") > 0:
        kwargs["max_steps"] = cfg.get("solver", "steps")
    if fam == "custom":
        return problems.make_custom_problem(cfg.values["custom"],
                                            fixed_bcs=fixed, **kwargs)
    return problems.make_problem(fam, fixed_bcs=fixed, **kwargs)


def _solver_config(cfg, problem):
    from .solver import SolverConfig

    return SolverConfig(
        tol_residual=cfg.get("solver", "tol_residual"),
        max_corrector_iters=cfg.get("solver", "max_corrector_iters"),
        max_bisections=cfg.get("solver", "max_bisections"),
        steps=problem.steps,
    )


def cmd_run(args):
    import numpy as np

    from . import assembly, config, optimizer, outputs

    try:
        cfg = config.parse_config(args.config)
    except config.ConfigError as err:
        return _fail(str(err))
    outdir = args.output or cfg.get("", "output_dir")
    os.makedirs(outdir, exist_ok=True)
    try:
        problem = build_problem_from_config(cfg)
    except Exception as err:
        return _fail(f"problem construction failed: {err}")

    resolved = config.dump_config(cfg)
    with open(os.path.join(outdir, "config_resolved.cfg"), "w",
              encoding="utf-8") as f:
        f.write(resolved)

    log = open(os.path.join(outdir, "run.log"), "w", encoding="utf-8")

    def say(msg):
        log.write(f"[{time.strftime('%Y-%m-%d %H:%M:%S')}] {msg}\n")
        log.flush()
        if not args.quiet:
            print(msg)

    say(f"problem {problem.name}: {problem.mesh.num_elements} elements, "
        f"{problem.design0.size} design variables, "
        f"{len(problem.constraints)} constraints")

    dump_every = cfg.get("output", "dump_every")
    history = outputs.HistoryWriter(os.path.join(outdir, "history.csv"),
                                    problem)
    kin = assembly.ElementKinematics(problem.mesh, problem.material)

    def on_iteration(record, design, evaluation):
        history(record, design, evaluation)
        say(f"iter {record.iteration}: objective {record.objective:.6g}, "
            f"max g {record.g.max():.3g}, mean |drho| {record.mean_drho:.2e}"
            + (" [path failed]" if record.path_failed else ""))
        if dump_every and record.iteration % dump_every == 0:
            from .design_field import evaluate_fields
            flds = evaluate_fields(design, problem.mesh, problem.params)
            outputs.write_vtk(
                os.path.join(outdir, f"density_{record.iteration:03d}.vtk"),
                problem.mesh, outputs.density_cell_data(problem.mesh, flds))

    opt_cfg = optimizer.OptimizerConfig(
        max_iterations=(args.max_iterations
                        or cfg.get("optimizer", "max_iterations")),
        feas_tol=cfg.get("optimizer", "feas_tol"),
        density_change_tol=cfg.get("optimizer", "density_change_tol"),
        solver=_solver_config(cfg, problem),
    )
    t0 = time.perf_counter()
    try:
        result = optimizer.run_optimization(problem, opt_cfg,
                                            on_iteration=on_iteration)
    finally:
        history.close()
    say(f"finished: {result.stop_reason} after {len(result.history)} "
        f"iterations in {time.perf_counter() - t0:.1f} s")

    from .design_field import evaluate_fields
    fields = evaluate_fields(result.design, problem.mesh, problem.params)
    outputs.write_vtk(os.path.join(outdir, "density_final.vtk"),
                      problem.mesh,
                      outputs.density_cell_data(problem.mesh, fields))
    from . import mesh as msh
    msh.write_mesh(problem.mesh, os.path.join(outdir, "mesh.mesh"))
    if result.evaluation is not None:
        outputs.write_case_artifacts(outdir, problem,
                                     result.evaluation.paths, result.design)
    outputs.write_design_summary(
        os.path.join(outdir, "design_summary.json"), problem, result.design,
        result.evaluation, result.stop_reason, resolved)
    log.close()
    return 0


def cmd_verify(args):
    from .verify import run_verification

    ok, _ = run_verification()
    return 0 if ok else 1


def cmd_mesh(args):
    from . import config, mesh as msh

    try:
        cfg = config.parse_config(args.config)
        problem = build_problem_from_config(cfg)
    except Exception as err:
        return _fail(str(err))
    out = args.output or "mesh.mesh"
    msh.write_mesh(problem.mesh, out)
    tags = problem.mesh.element_tag
    print(f"{problem.mesh.num_elements} elements, "
          f"{problem.mesh.num_nodes} nodes -> {out}")
    print(f"designable {int((tags == 0).sum())}, "
          f"solid {int((tags == 1).sum())}, void {int((tags == 2).sum())}")
    return 0


def cmd_replay(args):
    import numpy as np

    from . import config, outputs
    from .design_field import DesignVector

    try:
        with open(args.summary, "r", encoding="utf-8") as f:
            doc = json.load(f)
    except OSError as err:
        return _fail(str(err))
    cfg = config.parse_config(doc["resolved_config"])
    mesh = None
    mesh_file = os.path.join(os.path.dirname(args.summary) or ".",
                             "mesh.mesh")
    if os.path.exists(mesh_file):
        from . import mesh as msh
        thickness = cfg.get("mesh", "thickness") or 0.01
        mesh = msh.read_mesh(mesh_file, thickness=thickness)
    try:
        problem = build_problem_from_config(cfg, mesh=mesh)
    except Exception as err:
        return _fail(f"problem reconstruction failed: {err}")
    d = doc["design"]
    design = DesignVector(rho=np.array(d["rho"]),
                          supports=np.array(d["supports"]),
                          load=np.array(d["load"]), theta=d["theta"])
    outdir = args.output or (os.path.dirname(args.summary) or ".")
    os.makedirs(outdir, exist_ok=True)
    try:
        paths, fields, control = outputs.replay_design(
            problem, design, steps=args.steps,
            stroke_scale=args.stroke_scale)
    except Exception as err:
        return _fail(f"replay solve failed: {err}")
    outputs.write_case_artifacts(outdir, problem, paths, design,
                                 u_in_norm=control.u_in_norm,
                                 prefix="replay_")
    print(f"replayed {len(paths)} load case(s) at {args.steps} increments "
          f"-> {outdir}/replay_*.csv")
    return 0


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="varibc",
        description="Compliant mechanism synthesis with movable loads and "
                    "supports (nonlinear topology optimization)")
    parser.add_argument("--threads", "-t", type=int,
                        default=int(os.environ.get("VARIBC_THREADS", "1")),
                        help="numeric thread count (default 1, or "
                             "VARIBC_THREADS)")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an optimization from a config")
    p_run.add_argument("config")
    p_run.add_argument("--output", "-o", default=None)
    p_run.add_argument("--max-iterations", type=int, default=None)
    p_run.add_argument("--quiet", "-q", action="store_true")
    p_run.set_defaults(func=cmd_run)

    p_ver = sub.add_parser("verify",
                           help="run the built-in verification suites")
    p_ver.set_defaults(func=cmd_verify)

    p_mesh = sub.add_parser("mesh", help="generate the mesh only")
    p_mesh.add_argument("config")
    p_mesh.add_argument("--output", "-o", default=None)
    p_mesh.set_defaults(func=cmd_mesh)

    p_rep = sub.add_parser("replay",
                           help="re-solve a stored design finely")
    p_rep.add_argument("summary", help="design_summary.json from a run")
    p_rep.add_argument("--steps", type=int, default=50)
    p_rep.add_argument("--stroke-scale", type=float, default=1.0)
    p_rep.add_argument("--output", "-o", default=None)
    p_rep.set_defaults(func=cmd_replay)

    args = parser.parse_args(argv)
    _set_threads(args.threads)
    try:
        return args.func(args)
    except KeyboardInterrupt:
        return _fail("interrupted", 130)


if __name__ == "__main__":
    sys.exit(main())
