"""Exact total design derivatives of converged-state quantities.

Because the boundary conditions are design variables, every mesh DOF is free
and the residual alone does not close the adjoint system: the input
displacement constraint contributes a second multiplier pair. For a scalar
quantity f(zeta, U, lambda) the multipliers solve

    df/dU  - psi_R^T K_T + psi_c^T N = 0
    df/dlam + psi_R^T [Fx Fy]        = 0

and the total derivative is df/dzeta + psi_R^T dR/dzeta + psi_c^T dc/dzeta.
One factorization per converged state serves every quantity read there; the
reference-load solves and the interpolation-row solves are shared.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
from scipy.sparse.linalg import splu

from .assembly import residual_vjp
from .solver import Singular2x2, _solve_2x2, input_point_response


class SingularReducedSystem(Exception):
    """The 2x2 reduced multiplier system is singular."""


class QuantitySpec:
    """A differentiable scalar of one converged state.

    Concrete quantities provide evaluate plus the three explicit partials;
    partials returning None are treated as zero. step is the 1-based
    displacement step the quantity reads, load_case the 0-based analysis it
    belongs to.
    """

    def __init__(self, name, step=0, load_case=0):
        self.name = name
        self.step = step
        self.load_case = load_case

    def evaluate(self, ctx):
        raise NotImplementedError

    def dfdU(self, ctx):
        return None

    def dfdlam(self, ctx):
        return None

    def dfdzeta(self, ctx):
        return None


@dataclass
class StateContext:
    """Everything a quantity may read at one converged state."""

    state: object
    model: object
    control: object
    fields: object
    design: object

    @property
    def mesh(self):
        return self.model.mesh

    @property
    def U(self):
        return self.state.U

    @property
    def lam(self):
        return np.array([self.state.lambda_x, self.state.lambda_y])

    @property
    def n_zeta(self):
        return self.design.size


@dataclass
class SensitivityRecord:
    name: str
    value: float
    dgdzeta: np.ndarray
    psi_c: np.ndarray
    psi_R: np.ndarray


def constraint_partials(ctx):
    """dc/dzeta (2 x n_zeta): actuator-coordinate and angle columns.

    The X_f, Y_f columns are the spatial displacement gradient at the input
    point (element-wise constant for linear triangles); density and support
    columns vanish.
    """
    design = ctx.design
    ctrl = ctx.control
    out = np.zeros((2, design.size))
    H = ctrl.sample.gradient(ctx.U)
    col = len(design.rho) + 2 * design.num_supports
    out[:, col] = H[:, 0]
    out[:, col + 1] = H[:, 1]
    s = ctx.state.input_fraction
    out[0, -1] = s * ctrl.u_in_norm * np.sin(ctrl.theta)
    out[1, -1] = -s * ctrl.u_in_norm * np.cos(ctrl.theta)
    return out


class StateAdjoint:
    """Shared factorization and reference solves for one converged state."""

    def __init__(self, model, control, state, fields, design):
        self.ctx = StateContext(state=state, model=model, control=control,
                                fields=fields, design=design)
        self.system = model.assemble(state.U,
                                     counter_scale=state.counter_scale)
        self.lu = splu(self.system.K_T)
        cols = self.lu.solve(
            np.column_stack([self.system.F_ext_x, self.system.F_ext_y]))
        self.V = cols
        self.M2 = input_point_response(control.sample, cols)
        smp = control.sample
        n = model.mesh.num_dofs
        Nt = np.zeros((n, 2))
        Nt[smp.dofs_x, 0] = smp.weights
        Nt[smp.dofs_y, 1] = smp.weights
        self.W = self.lu.solve(Nt)
        self.Nt = Nt

    def solve_multipliers(self, dfdU, dfdlam):
        """Multipliers (psi_c, psi_R) for explicit partials dfdU, dfdlam."""
        if dfdU is None:
            a = None
            aF = np.zeros(2)
        else:
            a = self.lu.solve(np.asarray(dfdU, dtype=float))
            aF = np.array([a @ self.system.F_ext_x, a @ self.system.F_ext_y])
        lam_part = np.zeros(2) if dfdlam is None else np.asarray(dfdlam, float)
        rhs = -(lam_part + aF)
        try:
            # psi_c^T M2 = rhs  <=>  M2^T psi_c = rhs
            psi_c = _solve_2x2(self.M2.T, rhs)
        except Singular2x2 as err:
            raise SingularReducedSystem(str(err)) from None
        psi_R = self.W @ psi_c
        if a is not None:
            psi_R = psi_R + a
        return psi_c, psi_R

    def multiplier_residuals(self, dfdU, dfdlam, psi_c, psi_R):
        """Relative residuals of the two multiplier equations.

        Scaled by the magnitudes of the cancelling terms so exact zeros do
        not read as order-one violations.
        """
        n = self.ctx.model.mesh.num_dofs
        dU = np.zeros(n) if dfdU is None else np.asarray(dfdU, float)
        dl = np.zeros(2) if dfdlam is None else np.asarray(dfdlam, float)
        r1 = dU - self.system.K_T.T @ psi_R + self.Nt @ psi_c
        r2 = dl + np.array([psi_R @ self.system.F_ext_x,
                            psi_R @ self.system.F_ext_y])
        s1 = max(np.linalg.norm(dU), np.linalg.norm(self.system.K_T.T @ psi_R),
                 np.linalg.norm(self.Nt @ psi_c), 1e-300)
        fnorm = max(np.linalg.norm(self.system.F_ext_x),
                    np.linalg.norm(self.system.F_ext_y))
        s2 = max(np.linalg.norm(dl), np.linalg.norm(psi_R) * fnorm, 1e-300)
        return np.linalg.norm(r1) / s1, np.linalg.norm(r2) / s2

    def sensitivity(self, quantity):
        """Value and exact total design gradient of one quantity."""
        ctx = self.ctx
        value = quantity.evaluate(ctx)
        dfdU = quantity.dfdU(ctx)
        dfdlam = quantity.dfdlam(ctx)
        dfdzeta = quantity.dfdzeta(ctx)
        psi_c, psi_R = self.solve_multipliers(dfdU, dfdlam)
        grad = np.zeros(ctx.n_zeta) if dfdzeta is None else np.array(dfdzeta,
                                                                     float)
        if np.any(psi_R):
            grad = grad + residual_vjp(
                ctx.model, self.system, ctx.state.lambda_x,
                ctx.state.lambda_y, psi_R)
        if np.any(psi_c):
            grad = grad + psi_c @ constraint_partials(ctx)
        if os.environ.get("VARIBC_CHECK_ADJOINT"):
            r1, r2 = self.multiplier_residuals(dfdU, dfdlam, psi_c, psi_R)
            if max(r1, r2) > 1e-9:
                raise AssertionError(
                    "multiplier equations violated: %.2e / %.2e" % (r1, r2))
        return SensitivityRecord(name=quantity.name, value=float(value),
                                 dgdzeta=grad, psi_c=psi_c, psi_R=psi_R)


def total_derivative(model, control, state, fields, design, quantity):
    """One-off adjoint sensitivity of a single quantity at one state."""
    return StateAdjoint(model, control, state, fields, design).sensitivity(
        quantity)


def path_sensitivities(model, control, path, fields, design, quantities):
    """Adjoint gradients for a batch of quantities along one path.

    Quantities are grouped by the step they read so each converged state is
    assembled and factorized once. Returns {name: SensitivityRecord}.
    """
    by_step = {}
    for q in quantities:
        by_step.setdefault(q.step, []).append(q)
    out = {}
    for step, qs in sorted(by_step.items()):
        state = path.state_at_step(step)
        adj = StateAdjoint(model, control, state, fields, design)
        for q in qs:
            out[q.name] = adj.sensitivity(q)
    return out
