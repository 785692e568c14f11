"""Design loop: fields -> equilibrium paths -> quantities -> adjoint
gradients -> MMA update -> convergence test.

Mixed-unit design variables (densities, coordinates, angle) are normalized
to [0, 1] by their bound boxes before entering MMA, with the per-class move
limits converted to normalized units. Variables whose lower and upper bounds
coincide are frozen and bypass the optimizer entirely (fixed-BC runs, the
morphing wing's skin-attachment support).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import assembly, mma
from .adjoint import StateAdjoint
from .design_field import DesignVector, build_filter_matrix
from .mesh import clamp_to_mesh, locate_point, shape_values_at, PointOutsideDomain
from .solver import InputControl, PathFailed, SolverConfig, \
    solve_equilibrium_path

FAILURE_PENALTY = 10.0


@dataclass
class OptimizerConfig:
    max_iterations: int = 400
    feas_tol: float = 1e-3
    density_change_tol: float = 1e-4
    max_consecutive_failures: int = 10
    oscillation_window: int = 10
    solver: SolverConfig | None = None


@dataclass
class IterationRecord:
    iteration: int
    objective: float            # natural units, before sense/scale
    f0: float                   # scaled minimization objective
    g: np.ndarray               # scaled constraint values (<= 0 feasible)
    values: dict                # quantity name -> value
    max_drho: float
    mean_drho: float
    bc: np.ndarray              # [X_s..., Y_s..., X_f, Y_f, theta]
    solver_bisections: int
    solver_iterations: int
    path_failed: bool
    oscillating: bool = False


@dataclass
class Evaluation:
    objective: float
    f0: float
    df0: np.ndarray
    g: np.ndarray
    dg: np.ndarray
    values: dict
    paths: list
    solver_bisections: int
    solver_iterations: int
    failed: bool


@dataclass
class OptimizationResult:
    design: DesignVector
    history: list
    stop_reason: str
    evaluation: Evaluation | None = None


def _state_for_step(path, step, n_dofs):
    """Requested state at step; degrade to the last converged substate."""
    req = path.requested_states
    if len(req) >= step:
        return req[step - 1]
    if path.states:
        return path.states[-1]
    from .solver import EquilibriumState
    return EquilibriumState(U=np.zeros(n_dofs), lambda_x=0.0, lambda_y=0.0,
                            input_fraction=0.0, residual_norm=0.0,
                            corrector_iterations=0, counter_scale=0.0)


def evaluate_design(problem, design, A_f=None, W=None, kin=None,
                    solver_cfg=None, trace=None):
    """Solve all load cases at one design and differentiate the quantities."""
    if solver_cfg is None:
        solver_cfg = SolverConfig(steps=problem.steps)
    if kin is None:
        kin = assembly.ElementKinematics(problem.mesh, problem.material)
    fields, base = assembly.build_model(
        problem.mesh, design, problem.params, problem.material, A_f=A_f, W=W,
        output_springs=problem.output_springs, kin=kin)
    control = InputControl(
        sample=shape_values_at(problem.mesh, design.load),
        theta=design.theta, u_in_norm=problem.u_in_norm)

    quantities = problem.quantities()
    by_case = {}
    for q in quantities:
        by_case.setdefault(q.load_case, []).append(q)

    paths = []
    records = {}
    bisections = iterations = 0
    failed = False
    for i, case in enumerate(problem.load_cases):
        Fc = case.force_vector(problem.mesh)
        model = base.with_counter_force(Fc if np.any(Fc) else None)
        try:
            path = solve_equilibrium_path(model, control, solver_cfg,
                                          trace=trace)
        except PathFailed as err:
            path = err.partial
            failed = True
        paths.append(path)
        bisections += path.total_bisections
        iterations += path.total_corrector_iterations
        # one assembly and factorization per unique converged state
        steps_needed = sorted({q.step for q in by_case.get(i, [])})
        for m in steps_needed:
            state = _state_for_step(path, m, problem.mesh.num_dofs)
            adjointer = StateAdjoint(model, control, state, fields, design)
            for q in by_case[i]:
                if q.step == m:
                    records[q.name] = adjointer.sensitivity(q)

    obj_val = 0.0
    obj_grad = np.zeros(design.size)
    for w, q in problem.objective_terms:
        rec = records[q.name]
        obj_val += w * rec.value
        obj_grad = obj_grad + w * rec.dgdzeta
    sign = -1.0 if problem.objective_sense == "max" else 1.0
    f0 = sign * obj_val / problem.objective_scale
    df0 = sign * obj_grad / problem.objective_scale

    g = np.empty(len(problem.constraints))
    dg = np.empty((len(problem.constraints), design.size))
    for j, con in enumerate(problem.constraints):
        rec = records[con.quantity.name]
        g[j] = con.g(rec.value)
        dg[j] = con.dg(rec.dgdzeta)
    if failed:
        g = g + FAILURE_PENALTY

    values = {name: rec.value for name, rec in records.items()}
    return Evaluation(objective=obj_val, f0=f0, df0=df0, g=g, dg=dg,
                      values=values, paths=paths,
                      solver_bisections=bisections,
                      solver_iterations=iterations, failed=failed)


def mma_update(problem, design, evaluation, state):
    """One normalized MMA step; returns the new design vector.

    state is a dict carrying (iteration, xold1, xold2, low, upp) across
    calls. Falls back to a bound-projected half-move steepest-descent step if
    the subproblem solver fails.
    """
    z = design.to_array()
    free = ~problem.frozen
    lb, ub = problem.lower[free], problem.upper[free]
    rng = ub - lb
    xn = (z[free] - lb) / rng
    move_n = problem.move_limits[free] / rng
    df0_n = evaluation.df0[free] * rng
    dg_n = evaluation.dg[:, free] * rng[None, :]

    it = state.setdefault("iteration", 0) + 1
    state["iteration"] = it
    xold1 = state.get("xold1", xn)
    xold2 = state.get("xold2", xn)
    low = state.get("low", xn - 0.5)
    upp = state.get("upp", xn + 0.5)
    try:
        x_new, _, _, _, low, upp = mma.mmasub(
            it, xn, np.zeros_like(xn), np.ones_like(xn), xold1, xold2,
            evaluation.f0, df0_n, evaluation.g, dg_n, low, upp, move_n)
        state["fallbacks"] = state.get("fallbacks", 0)
    except mma.SubproblemError:
        step = 0.5 * move_n * np.sign(df0_n)
        x_new = np.clip(xn - step, np.maximum(0.0, xn - move_n),
                        np.minimum(1.0, xn + move_n))
        state["fallbacks"] = state.get("fallbacks", 0) + 1
    state["xold2"] = xold1
    state["xold1"] = xn
    state["low"] = low
    state["upp"] = upp

    z_new = z.copy()
    z_new[free] = lb + x_new * rng
    n_rho = len(design.rho)
    n_s = design.num_supports
    new = DesignVector.from_array(z_new, n_rho, n_s)
    if problem.clamp_actuator:
        try:
            locate_point(problem.mesh, new.load)
        except PointOutsideDomain:
            new.load = clamp_to_mesh(problem.mesh, new.load)
    return new


def convergence_check(history, feas_tol=1e-3, density_change_tol=1e-4):
    """Stop only when all constraints hold and the mean density change is
    below threshold; BC-variable changes are deliberately not part of the
    criterion."""
    if not history:
        return "continue"
    rec = history[-1]
    feasible = np.all(rec.g <= feas_tol)
    settled = rec.mean_drho < density_change_tol
    return "stop" if (feasible and settled) else "continue"


def _flag_oscillation(history, window):
    if len(history) < window:
        return False
    objs = np.array([r.objective for r in history[-window:]])
    diffs = np.diff(objs)
    flips = np.sum(diffs[1:] * diffs[:-1] < 0)
    return flips >= 0.7 * (len(diffs) - 1)


def run_optimization(problem, config=None, on_iteration=None):
    """Drive the full design loop; returns the final design and history."""
    config = config or OptimizerConfig()
    solver_cfg = config.solver or SolverConfig(steps=problem.steps)
    kin = assembly.ElementKinematics(problem.mesh, problem.material)
    W = build_filter_matrix(problem.mesh, problem.params.r_min)
    design = problem.design0.copy()
    # freeze the load normalization at the initial actuator position
    from .design_field import load_magnitude_field
    _, A_f = load_magnitude_field(design, problem.mesh, problem.params)

    history = []
    mma_state = {}
    consecutive_failures = 0
    evaluation = None
    stop_reason = "max_iterations"
    if config.max_iterations == 0:
        return OptimizationResult(design=design, history=history,
                                  stop_reason="zero_budget")
    for it in range(1, config.max_iterations + 1):
        if it > 1:
            prev_rho = design.rho.copy()
            design = mma_update(problem, design, evaluation, mma_state)
            drho = np.abs(design.rho - prev_rho)
        else:
            drho = np.zeros_like(design.rho)
        evaluation = evaluate_design(problem, design, A_f=A_f, W=W, kin=kin,
                                     solver_cfg=solver_cfg)
        record = IterationRecord(
            iteration=it, objective=evaluation.objective, f0=evaluation.f0,
            g=evaluation.g.copy(), values=dict(evaluation.values),
            max_drho=float(drho.max(initial=0.0)),
            mean_drho=float(drho.mean()) if len(drho) else 0.0,
            bc=design.to_array()[len(design.rho):],
            solver_bisections=evaluation.solver_bisections,
            solver_iterations=evaluation.solver_iterations,
            path_failed=evaluation.failed,
        )
        record.oscillating = _flag_oscillation(
            history + [record], config.oscillation_window)
        history.append(record)
        if on_iteration is not None:
            on_iteration(record, design, evaluation)

        consecutive_failures = (consecutive_failures + 1
                                if evaluation.failed else 0)
        if consecutive_failures > config.max_consecutive_failures:
            stop_reason = "repeated_solver_failure"
            break
        if it >= 2 and convergence_check(
                history, config.feas_tol,
                config.density_change_tol) == "stop":
            stop_reason = "converged"
            break
    return OptimizationResult(design=design, history=history,
                              stop_reason=stop_reason, evaluation=evaluation)
