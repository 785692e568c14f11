"""Variable-input displacement control.

The actuator prescribes the displacement at an arbitrary in-plane point
(interpolated by the element shape functions), at an angle theta, in M
increments. Each increment is a predictor step followed by Newton
corrections; both phases share one factorization per assembled tangent and
solve a 2x2 system for the two load intensity increments so the input-point
displacement follows the prescribed fraction exactly. Failed steps are
retried with bisected increments from the last converged state.

Counter-force load cases first ramp the constant counter load with the input
pinned at zero, using the same machinery with the load scale as the
continuation parameter.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import splu

from .material import NonPositiveJacobian


class SolverError(Exception):
    pass


class SingularTangent(SolverError):
    """Tangent factorization failed."""


class Singular2x2(SolverError):
    """Input-point displacement responses are linearly dependent."""


class CorrectorFailed(SolverError):
    """Newton corrections did not converge within the iteration budget."""


class PathFailed(SolverError):
    """A displacement path could not be completed after maximal bisection."""

    def __init__(self, fraction_reached, reason, partial=None):
        self.fraction_reached = fraction_reached
        self.reason = reason
        self.partial = partial  # EquilibriumPath of the converged substates
        super().__init__(
            f"path failed at input fraction {fraction_reached:.4g}: {reason}"
        )


@dataclass
class SolverConfig:
    tol_residual: float = 1e-6
    max_corrector_iters: int = 20
    max_bisections: int = 6
    steps: int = 4

    def __post_init__(self):
        if min(self.tol_residual, self.max_corrector_iters, self.steps) <= 0:
            raise ValueError("solver configuration values must be positive")
        if self.max_bisections < 0:
            raise ValueError("max_bisections must be non-negative")


@dataclass
class InputControl:
    """Where and how the actuator drives the structure."""

    sample: object          # mesh.ShapeSample at (X_f, Y_f)
    theta: float
    u_in_norm: float

    def direction(self):
        return np.array([np.cos(self.theta), np.sin(self.theta)])

    def target(self, s):
        return s * self.u_in_norm * self.direction()


@dataclass
class EquilibriumState:
    U: np.ndarray
    lambda_x: float
    lambda_y: float
    input_fraction: float
    residual_norm: float
    corrector_iterations: int
    requested: bool = True
    counter_scale: float = 1.0
    residual_history: tuple = ()


@dataclass
class EquilibriumPath:
    states: list
    total_bisections: int = 0
    total_corrector_iterations: int = 0
    wall_times: list = field(default_factory=list)

    @property
    def requested_states(self):
        return [s for s in self.states if s.requested]

    def state_at_step(self, m):
        """Converged state at requested step m (1-based)."""
        return self.requested_states[m - 1]


def input_point_response(sample, columns):
    """2x2 matrix of (x, y) input-point displacements of solution columns."""
    out = np.empty((2, columns.shape[1]))
    for j in range(columns.shape[1]):
        out[:, j] = sample.interpolate(columns[:, j])
    return out


def _solve_2x2(M2, rhs):
    det = M2[0, 0] * M2[1, 1] - M2[0, 1] * M2[1, 0]
    scale = (np.hypot(M2[0, 0], M2[0, 1]) * np.hypot(M2[1, 0], M2[1, 1]))
    if abs(det) <= 1e-14 * max(scale, 1e-300):
        raise Singular2x2(
            "input-point response matrix is singular (det %.3e)" % det
        )
    return np.array(
        [(rhs[0] * M2[1, 1] - rhs[1] * M2[0, 1]) / det,
         (rhs[1] * M2[0, 0] - rhs[0] * M2[1, 0]) / det]
    )


def _factorize(K):
    try:
        return splu(K)
    except RuntimeError as err:
        raise SingularTangent(str(err)) from None


def predictor(model, control, state, delta_ubar, lu=None, system=None):
    """One predictor step of length delta_ubar along the input direction.

    Returns the predicted (U, lambda_x, lambda_y). The predicted input-point
    displacement increment equals delta_ubar * (cos theta, sin theta) to
    machine precision.
    """
    U, lam = state
    if system is None:
        system = model.assemble(U)
    if lu is None:
        lu = _factorize(system.K_T)
    if delta_ubar == 0.0:
        return U.copy(), np.array(lam, dtype=float)
    cols = lu.solve(np.column_stack([system.F_ext_x, system.F_ext_y]))
    M2 = input_point_response(control.sample, cols)
    dlam = _solve_2x2(M2, delta_ubar * control.direction())
    U_new = U + cols @ dlam
    return U_new, np.array([lam[0] + dlam[0], lam[1] + dlam[1]])


def corrector(model, control, U, lam, s_target, config,
              counter_scale=1.0, system=None):
    """Newton corrections until the residual norm and constraint are met.

    Each iteration factorizes the current tangent once and solves the three
    right-hand sides (two reference loads and the residual); the 2x2 solve
    picks the intensity increments that keep the input point on target.
    Returns (U, lam, converged GlobalSystem, lu, iterations, residual history).
    """
    target = control.target(s_target)
    if system is None:
        system = model.assemble(U, counter_scale=counter_scale)
    R = system.residual(lam[0], lam[1])
    rnorm = float(np.linalg.norm(R))
    history = [rnorm]
    lu = None
    ctol = max(1e-12 * abs(control.u_in_norm), 1e-300)
    for it in range(config.max_corrector_iters + 1):
        defect = target - control.sample.interpolate(U)
        if rnorm <= config.tol_residual and np.all(np.abs(defect) <= 100 * ctol):
            if lu is None:
                lu = _factorize(system.K_T)
            return U, lam, system, lu, it, tuple(history)
        if it == config.max_corrector_iters:
            break
        lu = _factorize(system.K_T)
        cols = lu.solve(np.column_stack([system.F_ext_x, system.F_ext_y, R]))
        M2 = input_point_response(control.sample, cols[:, :2])
        dUc_at = control.sample.interpolate(cols[:, 2])
        dlam = _solve_2x2(M2, defect - dUc_at)
        U = U + cols[:, :2] @ dlam + cols[:, 2]
        lam = np.array([lam[0] + dlam[0], lam[1] + dlam[1]])
        system = model.assemble(U, counter_scale=counter_scale)
        R = system.residual(lam[0], lam[1])
        rnorm = float(np.linalg.norm(R))
        history.append(rnorm)
        if not np.isfinite(rnorm):
            raise CorrectorFailed("residual diverged to non-finite values")
    raise CorrectorFailed(
        "no convergence in %d iterations (residual %.3e)"
        % (config.max_corrector_iters, rnorm)
    )


def solve_equilibrium_path(model, control, config, trace=None):
    """March the input displacement to its full stroke.

    Reports converged states at the fractions m / steps (bisection substates
    are kept and flagged as not requested). A nonzero counter force on the
    model is ramped first with the input held at zero.
    """
    n = model.mesh.num_dofs
    U = np.zeros(n)
    lam = np.zeros(2)
    path = EquilibriumPath(states=[])
    has_counter = bool(np.any(model.F_counter))

    state = {"U": U, "lam": lam, "system": None, "lu": None,
             "alpha": 1.0 if not has_counter else 0.0, "s": 0.0}

    def attempt(s_new, alpha_new, depth):
        t0 = time.perf_counter()
        sys0 = state["system"]
        lu0 = state["lu"]
        if sys0 is None:
            sys0 = model.assemble(state["U"], counter_scale=state["alpha"])
            lu0 = _factorize(sys0.K_T)
        d_s = s_new - state["s"]
        d_alpha = alpha_new - state["alpha"]
        # predictor: shared factorization, optional counter-load column
        rhs_cols = [sys0.F_ext_x, sys0.F_ext_y]
        if d_alpha != 0.0:
            rhs_cols.append(d_alpha * model.F_counter)
        cols = lu0.solve(np.column_stack(rhs_cols))
        M2 = input_point_response(control.sample, cols[:, :2])
        defect = control.target(s_new) - control.sample.interpolate(state["U"])
        if d_alpha != 0.0:
            defect = defect - control.sample.interpolate(cols[:, 2])
        dlam = _solve_2x2(M2, defect)
        U_pred = state["U"] + cols[:, :2] @ dlam
        if d_alpha != 0.0:
            U_pred = U_pred + cols[:, 2]
        lam_pred = state["lam"] + dlam
        U_new, lam_new, system, lu, iters, hist = corrector(
            model, control, U_pred, lam_pred, s_new, config,
            counter_scale=alpha_new,
        )
        state.update(U=U_new, lam=lam_new, system=system, lu=lu,
                     alpha=alpha_new, s=s_new)
        path.total_corrector_iterations += iters
        path.wall_times.append(time.perf_counter() - t0)
        return iters, hist

    def advance(s_new, alpha_new, depth, requested):
        try:
            iters, hist = attempt(s_new, alpha_new, depth)
        except (CorrectorFailed, SingularTangent, Singular2x2,
                NonPositiveJacobian) as err:
            if depth >= config.max_bisections:
                raise PathFailed(state["s"], str(err), partial=path) from err
            path.total_bisections += 1
            s_mid = 0.5 * (state["s"] + s_new)
            a_mid = 0.5 * (state["alpha"] + alpha_new)
            advance(s_mid, a_mid, depth + 1, requested=False)
            advance(s_new, alpha_new, depth + 1, requested=requested)
            return
        st = EquilibriumState(
            U=state["U"].copy(), lambda_x=float(state["lam"][0]),
            lambda_y=float(state["lam"][1]), input_fraction=s_new,
            residual_norm=hist[-1], corrector_iterations=iters,
            requested=requested, counter_scale=alpha_new,
            residual_history=hist,
        )
        path.states.append(st)
        if trace is not None:
            trace.write(
                "%d,%.10g,%d,%d,%.6e,%.10e,%.10e\n"
                % (len(path.states), s_new, depth, iters, hist[-1],
                   st.lambda_x, st.lambda_y)
            )

    if trace is not None:
        trace.write("step,fraction,bisections,iterations,residual,lambda_x,"
                    "lambda_y\n")
    if has_counter:
        advance(0.0, 1.0, 0, requested=False)
    for m in range(1, config.steps + 1):
        advance(m / config.steps, 1.0, 0, requested=True)
    return path


def linear_reference_solve(model, control, s=1.0):
    """One-shot linear displacement-controlled solve (bordered system).

    Assembles the tangent at U = 0 (which equals the pure linear stiffness
    with springs) and solves K U = lam_x Fx + lam_y Fy + F_c subject to the
    input-point constraint, as a dense-bordered sparse system. Used as the
    small-stroke oracle for the nonlinear path.
    """
    import scipy.sparse as sp
    from scipy.sparse.linalg import spsolve

    system = model.assemble(np.zeros(model.mesh.num_dofs))
    n = model.mesh.num_dofs
    smp = control.sample
    Nmat = sp.csc_matrix(
        (np.concatenate([smp.weights, smp.weights]),
         (np.array([0, 0, 0, 1, 1, 1]),
          np.concatenate([smp.dofs_x, smp.dofs_y]))),
        shape=(2, n),
    )
    K = system.K_T
    F = sp.csc_matrix(np.column_stack([system.F_ext_x, system.F_ext_y]))
    A = sp.bmat([[K, -F], [Nmat, None]], format="csc")
    b = np.concatenate([model.F_counter, control.target(s)])
    x = spsolve(A, b)
    return x[:n], x[n:]
