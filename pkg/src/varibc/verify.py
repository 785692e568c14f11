"""Built-in verification: property and gradient suites on packaged fixtures.

Each check recomputes its expectation from an independent oracle (finite
differences, direct formula evaluation, brute-force scans) and reports
pass/fail; the CLI prints the table and sets the exit code.
"""

from __future__ import annotations

import numpy as np

from . import adjoint, assembly, design_field as df, fixtures as fx
from . import material as mat, mesh as msh, problems as P, solver as S


def _check_material():
    p = mat.MaterialParams(nu=0.49)
    rng = np.random.default_rng(1)
    worst_s = worst_d = 0.0
    n = 0
    while n < 100:
        F = np.eye(2) + rng.uniform(-0.6, 0.6, (2, 2))
        J = np.linalg.det(F)
        if not 0.5 <= J <= 2.0:
            continue
        n += 1
        C = F.T @ F
        h = 1e-6
        S_fd = np.zeros((2, 2))
        for i in range(2):
            for j in range(2):
                dC = np.zeros((2, 2))
                dC[i, j] += 0.5 * h
                dC[j, i] += 0.5 * h

                def psi(Cm):
                    Jm = np.sqrt(np.linalg.det(Cm))
                    return (0.5 * p.mu0 * (Cm[0, 0] + Cm[1, 1] + 1 - 3)
                            - p.mu0 * np.log(Jm)
                            + 0.5 * p.lam0 * (Jm - 1) ** 2)

                S_fd[i, j] = (psi(C + dC) - psi(C - dC)) / h
        Sv = mat.pk2_stress(F, p)
        worst_s = max(worst_s, np.linalg.norm(Sv - S_fd)
                      / max(np.linalg.norm(S_fd), 1e-3))
        D = mat.tangent_moduli(F, p)
        pairs = [(0, 0), (1, 1), (0, 1)]
        D_fd = np.zeros((3, 3))
        for b, (k, l) in enumerate(pairs):
            dC = np.zeros((2, 2))
            dC[k, l] += 0.5 * h
            dC[l, k] += 0.5 * h
            Sp = mat.pk2_stress(np.linalg.cholesky(C + dC).T, p)
            Sm = mat.pk2_stress(np.linalg.cholesky(C - dC).T, p)
            dS = (Sp - Sm) / h
            for a, (i, j) in enumerate(pairs):
                D_fd[a, b] = dS[i, j]
        worst_d = max(worst_d, np.linalg.norm(D - D_fd) / np.linalg.norm(D_fd))
    zero = np.linalg.norm(mat.pk2_stress(np.eye(2), p))
    hooke = np.linalg.norm(mat.tangent_moduli(np.eye(2), p) - p.D0)
    ok = worst_s <= 1e-7 and worst_d <= 1e-6 and zero == 0.0 and hooke <= 1e-10
    return ok, (f"S-energy {worst_s:.1e}, D-stress {worst_d:.1e}, "
                f"S(I) {zero:.1e}, D(I)-Hooke {hooke:.1e}")


def _check_projection():
    g0 = df.super_gaussian(0.0, 3.0, 2.0, 0.5, 4.0)
    gr = df.super_gaussian(0.5, 3.0, 2.0, 0.5, 4.0)
    f = fx.load_fixture("mini_gripper_100")
    fields, model = f.build()
    total = np.sum(fields.f_e * f.mesh.volumes)
    W = fields.W
    rows = np.asarray(W.sum(axis=1)).ravel()
    ok = (g0 == 3.0 and abs(gr - 1.5) <= 1e-15
          and abs(total - 1.0) <= 1e-9
          and np.all(np.abs(rows - 1.0) <= 1e-12))
    return ok, (f"G(0)-A 0, G(r)-A/b {abs(gr - 1.5):.1e}, "
                f"sum fV - 1 {abs(total - 1):.1e}, filter rows "
                f"{np.abs(rows - 1).max():.1e}")


def _check_smooth_min():
    rng = np.random.default_rng(2)
    worst = 0.0
    for _ in range(200):
        pts = rng.normal(size=(rng.integers(1, 6), 2))
        q = rng.normal(size=(1, 2))
        d = df.smooth_min_distance(pts, q, 12)[0]
        true = np.min(np.hypot(*(q - pts).T))
        if d > true + 1e-12 or d < true / len(pts) ** (1 / 12) - 1e-12:
            worst = max(worst, abs(d - true))
            return False, f"bound violated by {worst:.2e}"
    return True, "lower/upper bounds hold on 200 random sets"


def _check_tangent():
    f = fx.load_fixture("mini_gripper_100")
    fields, model = f.build()
    rng = np.random.default_rng(3)
    U = rng.uniform(-5e-4, 5e-4, f.mesh.num_dofs)
    system = model.assemble(U)
    d = rng.normal(size=f.mesh.num_dofs)
    d /= np.linalg.norm(d)
    h = 1e-8
    fd = (model.assemble(U + h * d, want_tangent=False).F_int
          - model.assemble(U - h * d, want_tangent=False).F_int) / (2 * h)
    err = np.linalg.norm(system.K_T @ d - fd) / np.linalg.norm(fd)
    return err <= 1e-5, f"directional FD error {err:.2e}"


def _check_force_identity():
    rng = np.random.default_rng(4)
    lx = rng.normal(scale=10, size=100_000)
    ly = rng.normal(scale=10, size=100_000)
    th = rng.uniform(-np.pi, np.pi, 100_000)
    lhs = P.f_in(lx, ly, th) ** 2 + P.f_p(lx, ly, th) ** 2
    rhs = lx * lx + ly * ly
    worst = np.max(np.abs(lhs - rhs) / np.maximum(rhs, 1e-30))
    return worst <= 1e-12, f"identity error {worst:.2e} over 1e5 samples"


def _check_solver_contract():
    f = fx.load_fixture("mini_gripper_100")
    fields, model = f.build()
    ctrl = f.control()
    path = S.solve_equilibrium_path(model, ctrl, S.SolverConfig(steps=4))
    worst_r = max(st.residual_norm for st in path.requested_states)
    worst_c = 0.0
    for st in path.requested_states:
        got = ctrl.sample.interpolate(st.U)
        worst_c = max(worst_c, np.max(np.abs(got - ctrl.target(
            st.input_fraction))) / ctrl.u_in_norm)
    ok = worst_r <= 1e-6 and worst_c <= 1e-10
    return ok, f"max residual {worst_r:.2e} N, constraint {worst_c:.2e}"


def _check_bisection_recovery():
    f = fx.load_fixture("toy_arch")
    fields, model = f.build()
    smp = msh.shape_values_at(f.mesh, f.design.load)
    ctrl = S.InputControl(sample=smp, theta=f.design.theta,
                          u_in_norm=f.expected["bisect_stroke"])
    try:
        S.solve_equilibrium_path(model, ctrl,
                                 S.SolverConfig(steps=1, max_bisections=0))
        return False, "nominal step unexpectedly converged"
    except S.PathFailed:
        pass
    path = S.solve_equilibrium_path(model, ctrl,
                                    S.SolverConfig(steps=1, max_bisections=6))
    done = path.requested_states[-1].input_fraction == 1.0
    return done and path.total_bisections >= 1, (
        f"recovered with {path.total_bisections} bisections")


def _check_adjoint():
    f = fx.load_fixture("mini_gripper_100")
    fields, model = f.build()
    ctrl = f.control()
    cfg = S.SolverConfig(steps=2, tol_residual=1e-11, max_corrector_iters=30)
    path = S.solve_equilibrium_path(model, ctrl, cfg)
    qs = [P.UOut(f.output_selector, step=2, name="u_out"),
          P.FIn(step=2, name="f_in"), P.VolumeFraction(step=2)]
    sens = adjoint.path_sensitivities(model, ctrl, path, fields, f.design, qs)

    def value_at(design):
        flds, mdl = assembly.build_model(
            f.mesh, design, f.params, f.material, A_f=fields.A_f,
            output_springs=f.output_springs)
        c = S.InputControl(sample=msh.shape_values_at(f.mesh, design.load),
                           theta=design.theta, u_in_norm=f.u_in_norm)
        p = S.solve_equilibrium_path(mdl, c, cfg)
        out = {}
        for q in qs:
            ctx = adjoint.StateContext(state=p.state_at_step(q.step),
                                       model=mdl, control=c, fields=flds,
                                       design=design)
            out[q.name] = q.evaluate(ctx)
        return out

    worst = 0.0
    checks = [("rho", 40, 1e-4, 0), ("theta", None, 1e-6, f.design.size - 1),
              ("load", 0, 1e-6, len(f.design.rho) + 4)]
    for kind, idx, h, col in checks:
        dp, dm = f.design.copy(), f.design.copy()
        if kind == "rho":
            dp.rho[idx] += h
            dm.rho[idx] -= h
            col = idx
        elif kind == "load":
            dp.load[idx] += h
            dm.load[idx] -= h
        else:
            dp.theta += h
            dm.theta -= h
        vp, vm = value_at(dp), value_at(dm)
        for name in vp:
            fd = (vp[name] - vm[name]) / (2 * h)
            got = sens[name].dgdzeta[col]
            tol = 1e-4 if kind in ("rho", "theta") else 1e-3
            rel = abs(got - fd) / max(abs(fd), 1e-12)
            if abs(fd) > 1e-12:
                worst = max(worst, rel)
                if rel > tol:
                    return False, f"{name} d/d{kind} rel err {rel:.2e}"
    return True, f"worst relative error {worst:.2e}"


def _check_mesh_area():
    g = msh.rectangle_geometry(1.3, 0.8, 0.11,
                               nondesign_regions=())
    m = msh.generate_mesh(g)
    err = abs(m.areas.sum() - 1.04) / 1.04
    grip = msh.generate_mesh(P.gripper_geometry(h=3e-3), thickness=0.01)
    err2 = abs(grip.areas.sum() - 0.0096) / 0.0096
    ok = err <= 1e-6 and err2 <= 1e-6
    return ok, f"area errors {err:.1e}, {err2:.1e}"


CHECKS = [
    ("material consistency (S, D, identity limits)", _check_material),
    ("projection identities (Eq contracts)", _check_projection),
    ("smooth-min distance bounds", _check_smooth_min),
    ("global tangent vs directional FD", _check_tangent),
    ("force decomposition identity", _check_force_identity),
    ("solver residual and input constraint", _check_solver_contract),
    ("step bisection recovery on the arch", _check_bisection_recovery),
    ("adjoint gradients vs finite differences", _check_adjoint),
    ("mesh area conservation", _check_mesh_area),
]


def run_verification(out=None):
    """Run every check; returns (all_passed, results list)."""
    import sys

    out = out or sys.stdout
    results = []
    width = max(len(name) for name, _ in CHECKS)
    for name, fn in CHECKS:
        try:
            ok, detail = fn()
        except Exception as err:  # a crashed check is a failed check
            ok, detail = False, f"raised {type(err).__name__}: {err}"
        results.append((name, ok, detail))
        out.write(f"{'PASS' if ok else 'FAIL'}  {name.ljust(width)}  "
                  f"{detail}\n")
    all_ok = all(ok for _, ok, _ in results)
    out.write(("all checks passed\n" if all_ok else "FAILURES present\n"))
    return all_ok, results
