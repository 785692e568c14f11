import io

import numpy as np
import pytest

from varibc import assembly as asm
from varibc import fixtures as fx
from varibc import mesh as M
from varibc import solver as S


def f_in_of(state, theta):
    return state.lambda_x * np.cos(theta) + state.lambda_y * np.sin(theta)


def union_jack_mesh(nx, ny, width=1.0, height=1.0):
    """Structured crisscross mesh, mirror-symmetric across both midlines."""
    xs = np.linspace(0, width, nx + 1)
    ys = np.linspace(0, height, ny + 1)
    corners = np.array([(x, y) for y in ys for x in xs])
    centers = np.array(
        [(0.5 * (xs[i] + xs[i + 1]), 0.5 * (ys[j] + ys[j + 1]))
         for j in range(ny) for i in range(nx)]
    )
    nodes = np.vstack([corners, centers])
    tris = []
    for j in range(ny):
        for i in range(nx):
            a = j * (nx + 1) + i
            b, c, d = a + 1, a + nx + 2, a + nx + 1
            m = len(corners) + j * nx + i
            tris += [[a, b, m], [b, c, m], [c, d, m], [d, a, m]]
    return M.MeshModel(nodes, np.array(tris), thickness=0.01)


@pytest.fixture(scope="module")
def one_triangle():
    f = fx.load_fixture("one_triangle_spring")
    fields, model = f.build()
    return f, fields, model


@pytest.fixture(scope="module")
def gripper():
    f = fx.load_fixture("mini_gripper_100")
    fields, model = f.build()
    return f, fields, model


class TestInputPointResponse:
    def test_uniform_translation(self, gripper):
        f, fields, model = gripper
        ctrl = f.control()
        n = f.mesh.num_dofs
        cols = np.zeros((n, 2))
        cols[0::2, 0] = 0.3
        cols[1::2, 0] = -0.7
        cols[0::2, 1] = 1.1
        cols[1::2, 1] = 0.2
        M2 = S.input_point_response(ctrl.sample, cols)
        assert np.allclose(M2, [[0.3, 1.1], [-0.7, 0.2]], atol=1e-14)

    def test_point_at_node_reads_nodal_values(self, gripper):
        f, fields, model = gripper
        node = 17
        smp = M.shape_values_at(f.mesh, f.mesh.nodes[node])
        rng = np.random.default_rng(0)
        cols = rng.normal(size=(f.mesh.num_dofs, 2))
        M2 = S.input_point_response(smp, cols)
        assert np.allclose(M2[0], cols[2 * node, :], atol=1e-12)
        assert np.allclose(M2[1], cols[2 * node + 1, :], atol=1e-12)

    def test_random_columns_match_barycentric_oracle(self, gripper):
        f, fields, model = gripper
        ctrl = f.control()
        rng = np.random.default_rng(1)
        cols = rng.normal(size=(f.mesh.num_dofs, 2))
        M2 = S.input_point_response(ctrl.sample, cols)
        e, lam = M.locate_point(f.mesh, f.design.load)
        tri = f.mesh.triangles[e]
        for j in range(2):
            ux = sum(lam[i] * cols[2 * tri[i], j] for i in range(3))
            uy = sum(lam[i] * cols[2 * tri[i] + 1, j] for i in range(3))
            assert np.allclose(M2[:, j], [ux, uy], atol=1e-12)


class TestPredictorCorrector:
    def test_zero_step_keeps_state(self, one_triangle):
        f, fields, model = one_triangle
        ctrl = f.control()
        U0 = np.zeros(f.mesh.num_dofs)
        U, lam = S.predictor(model, ctrl, (U0, (0.0, 0.0)), 0.0)
        assert np.all(U == 0.0) and np.all(lam == 0.0)

    def test_predictor_hits_prescribed_increment(self, one_triangle):
        f, fields, model = one_triangle
        ctrl = f.control()
        U0 = np.zeros(f.mesh.num_dofs)
        du = 1e-7
        U, lam = S.predictor(model, ctrl, (U0, (0.0, 0.0)), du)
        got = ctrl.sample.interpolate(U)
        want = du * ctrl.direction()
        assert np.linalg.norm(got - want) <= 1e-12 * du

    def test_linear_problem_converges_immediately(self):
        f = fx.load_fixture("two_triangle_linear")
        fields, model = f.build()
        ctrl = f.control()
        cfg = S.SolverConfig(steps=1, tol_residual=1e-9)
        path = S.solve_equilibrium_path(model, ctrl, cfg)
        st = path.requested_states[0]
        # at a 1e-6 stroke the problem is linear: the predictor already is
        # the solution and at most one polish iteration is needed
        assert st.corrector_iterations <= 1
        assert st.residual_norm <= 1e-9

    def test_corrector_zero_iterations_on_converged_state(self, one_triangle):
        f, fields, model = one_triangle
        ctrl = f.control()
        U0 = np.zeros(f.mesh.num_dofs)
        cfg = S.SolverConfig(steps=1)
        U, lam, system, lu, iters, hist = S.corrector(
            model, ctrl, U0, np.zeros(2), 0.0, cfg)
        assert iters == 0

    def test_quadratic_residual_decay(self, gripper):
        f, fields, model = gripper
        ctrl = f.control()
        cfg = S.SolverConfig(steps=1, tol_residual=1e-12,
                             max_corrector_iters=30)
        path = S.solve_equilibrium_path(model, ctrl, cfg)
        hist = np.array(path.requested_states[0].residual_history)
        hist = hist[hist > 1e-14]
        # superlinear tail: ratios of successive residuals shrink
        ratios = hist[1:] / hist[:-1]
        assert len(ratios) >= 2
        assert ratios[-1] < 0.2 * ratios[0]

    def test_symmetric_structure_zero_lateral_factor(self):
        # union-jack structured mesh, exactly mirror-symmetric about y = 0.5
        mesh = union_jack_mesh(4, 4)
        from varibc.design_field import DesignVector, ProjectionParams
        from varibc.material import MaterialParams
        design = DesignVector(
            rho=np.full(len(mesh.designable), 0.8),
            supports=np.array([[0.125, 0.25], [0.125, 0.75]]),
            load=np.array([0.5, 0.5]), theta=0.0,
        )
        params = ProjectionParams(r=0.12, r_min=0.1, beta=500.0)
        fields, model = asm.build_model(mesh, design, params,
                                        MaterialParams(nu=0.3))
        ctrl = S.InputControl(sample=M.shape_values_at(mesh, design.load),
                              theta=0.0, u_in_norm=1e-4)
        path = S.solve_equilibrium_path(model, ctrl, S.SolverConfig(steps=2))
        st = path.requested_states[-1]
        assert abs(st.lambda_y) <= 1e-9 * abs(st.lambda_x)


class TestEquilibriumPath:
    def test_one_element_lambda_matches_dense_oracle(self, one_triangle):
        f, fields, model = one_triangle
        ctrl = f.control()
        cfg = S.SolverConfig(steps=1, tol_residual=1e-14)
        path = S.solve_equilibrium_path(model, ctrl, cfg)
        st = path.requested_states[0]

        # independent dense linear oracle built from the CST formula
        x = f.mesh.nodes[f.mesh.triangles[0], 0]
        y = f.mesh.nodes[f.mesh.triangles[0], 1]
        A = f.mesh.areas[0]
        t = f.mesh.thickness
        gx = np.array([y[1] - y[2], y[2] - y[0], y[0] - y[1]]) / (2 * A)
        gy = np.array([x[2] - x[1], x[0] - x[2], x[1] - x[0]]) / (2 * A)
        B = np.zeros((3, 6))
        B[0, 0::2] = gx
        B[1, 1::2] = gy
        B[2, 0::2] = gy
        B[2, 1::2] = gx
        K = fields.E[0] * A * t * B.T @ f.material.D0 @ B
        K += np.eye(6) * fields.k_s[0] / 3.0
        e, lam_b = M.locate_point(f.mesh, f.design.load)
        N = np.zeros((2, 6))
        N[0, 0::2] = lam_b
        N[1, 1::2] = lam_b
        Fx = np.zeros(6)
        Fy = np.zeros(6)
        Fx[0::2] = fields.f_e[0] * f.mesh.volumes[0] / 3.0
        Fy[1::2] = fields.f_e[0] * f.mesh.volumes[0] / 3.0
        big = np.zeros((8, 8))
        big[:6, :6] = K
        big[:6, 6] = -Fx
        big[:6, 7] = -Fy
        big[6:, :6] = N
        rhs = np.zeros(8)
        rhs[6:] = ctrl.target(1.0)
        sol = np.linalg.solve(big, rhs)
        assert abs(st.lambda_x - sol[6]) <= 1e-6 * max(abs(sol[6]), 1e-12)
        assert abs(st.lambda_y - sol[7]) <= 1e-6 * max(abs(sol[7]), 1e-12)
        assert np.allclose(st.U, sol[:6], rtol=1e-6)

    def test_reported_states_meet_contract(self, gripper):
        f, fields, model = gripper
        ctrl = f.control()
        cfg = S.SolverConfig(steps=4)
        path = S.solve_equilibrium_path(model, ctrl, cfg)
        assert [s.input_fraction for s in path.requested_states] == [
            0.25, 0.5, 0.75, 1.0]
        for st in path.requested_states:
            assert st.residual_norm <= 1e-6
            got = ctrl.sample.interpolate(st.U)
            want = ctrl.target(st.input_fraction)
            assert np.all(np.abs(got - want) <= 1e-10 * ctrl.u_in_norm)

    def test_step_refinement_consistency(self, gripper):
        f, fields, model = gripper
        ctrl = f.control()
        p1 = S.solve_equilibrium_path(model, ctrl, S.SolverConfig(steps=4))
        p2 = S.solve_equilibrium_path(model, ctrl, S.SolverConfig(steps=8))
        u1 = p1.requested_states[-1].U
        u2 = p2.requested_states[-1].U
        assert np.linalg.norm(u1 - u2) <= 1e-3 * np.linalg.norm(u2)

    def test_bitwise_determinism(self, gripper):
        f, fields, model = gripper
        ctrl = f.control()
        cfg = S.SolverConfig(steps=3)
        p1 = S.solve_equilibrium_path(model, ctrl, cfg)
        p2 = S.solve_equilibrium_path(model, ctrl, cfg)
        for a, b in zip(p1.states, p2.states):
            assert np.array_equal(a.U, b.U)
            assert a.lambda_x == b.lambda_x and a.lambda_y == b.lambda_y

    def test_linear_limit_matches_bordered_solve(self, gripper):
        f, fields, model = gripper
        smp = M.shape_values_at(f.mesh, f.design.load)
        ctrl = S.InputControl(sample=smp, theta=f.design.theta,
                              u_in_norm=1e-6 * 0.1)
        path = S.solve_equilibrium_path(
            model, ctrl, S.SolverConfig(steps=1, tol_residual=1e-11,
                                        max_corrector_iters=25))
        st = path.requested_states[0]
        U_lin, lam_lin = S.linear_reference_solve(model, ctrl, s=1.0)
        assert np.linalg.norm(st.U - U_lin) <= 1e-3 * np.linalg.norm(U_lin)
        assert abs(st.lambda_x - lam_lin[0]) <= 1e-3 * abs(lam_lin[0])

    def test_trace_log(self, gripper):
        f, fields, model = gripper
        ctrl = f.control()
        buf = io.StringIO()
        S.solve_equilibrium_path(model, ctrl, S.SolverConfig(steps=2),
                                 trace=buf)
        lines = buf.getvalue().strip().splitlines()
        assert lines[0].startswith("step,fraction,bisections")
        assert len(lines) == 3
        assert all(len(l.split(",")) == 7 for l in lines)


@pytest.fixture(scope="module")
def arch_setup():
    f = fx.load_fixture("toy_arch")
    fields, model = f.build()
    return f, model


class TestToyArch:
    @pytest.fixture
    def arch(self, arch_setup):
        return arch_setup

    def test_snap_through_curve(self, arch):
        f, model = arch
        ctrl = f.control()
        path = S.solve_equilibrium_path(
            model, ctrl, S.SolverConfig(steps=f.steps))
        fins = np.array([f_in_of(s, f.design.theta)
                         for s in path.requested_states])
        assert fins.max() > 0
        assert fins[-1] < 0  # ends on the negative branch

    def test_nominal_step_fails_and_bisection_recovers(self, arch):
        f, model = arch
        smp = M.shape_values_at(f.mesh, f.design.load)
        ctrl = S.InputControl(sample=smp, theta=f.design.theta,
                              u_in_norm=f.expected["bisect_stroke"])
        with pytest.raises(S.PathFailed):
            S.solve_equilibrium_path(
                model, ctrl, S.SolverConfig(steps=1, max_bisections=0))
        path = S.solve_equilibrium_path(
            model, ctrl, S.SolverConfig(steps=1, max_bisections=6))
        assert path.total_bisections >= 1
        assert path.requested_states[-1].input_fraction == 1.0

    def test_path_failed_carries_partial_progress(self, arch):
        f, model = arch
        smp = M.shape_values_at(f.mesh, f.design.load)
        ctrl = S.InputControl(sample=smp, theta=f.design.theta,
                              u_in_norm=3.0)  # unreachable stroke
        with pytest.raises(S.PathFailed) as ei:
            S.solve_equilibrium_path(
                model, ctrl, S.SolverConfig(steps=2, max_bisections=3))
        err = ei.value
        assert err.partial is not None
        assert 0.0 <= err.fraction_reached < 1.0


def test_solver_config_validation():
    with pytest.raises(ValueError):
        S.SolverConfig(tol_residual=-1.0)
    with pytest.raises(ValueError):
        S.SolverConfig(max_bisections=-1)
    S.SolverConfig(max_bisections=0)
