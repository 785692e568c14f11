"""Global vectors and matrices for the displacement-controlled model.

Internal forces blend nonlinear and linear element contributions through the
energy-interpolation factor gamma: the nonlinear part is evaluated at the
scaled displacement gamma * U_e (deformation gradient F = I + gamma grad U),
weighted by gamma, and the linear part by (1 - gamma^2). The assembled
tangent gamma^2 k_nl + (1 - gamma^2) k_l is then the exact derivative of the
internal force, which Newton convergence and the adjoint both rely on.

Support springs are lumped k_e/3 to each element node on both DOFs; the
reference load vectors distribute f_e V_e / 3 likewise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import material as mat
from .material import NonPositiveJacobian


class ElementKinematics:
    """Per-mesh constant element data: shape gradients, DOF maps, linear parts."""

    def __init__(self, mesh, material_params):
        self.mesh = mesh
        self.material = material_params
        tri = mesh.triangles
        n_e = mesh.num_elements
        x = mesh.nodes[tri, 0]  # (Ne, 3)
        y = mesh.nodes[tri, 1]
        den = (2.0 * mesh.areas)[:, None]
        gx = np.stack([y[:, 1] - y[:, 2], y[:, 2] - y[:, 0], y[:, 0] - y[:, 1]],
                      axis=1) / den
        gy = np.stack([x[:, 2] - x[:, 1], x[:, 0] - x[:, 2], x[:, 1] - x[:, 0]],
                      axis=1) / den
        self.grads = np.stack([gx, gy], axis=2)      # (Ne, 3, 2)

        dofs = np.empty((n_e, 6), dtype=np.int64)
        dofs[:, 0::2] = 2 * tri
        dofs[:, 1::2] = 2 * tri + 1
        self.dofs = dofs
        self.rows = np.repeat(dofs, 6, axis=1).reshape(n_e, 6, 6)
        self.cols = np.tile(dofs, (1, 6)).reshape(n_e, 6, 6)

        # linear strain-displacement matrix (Voigt 11, 22, 12-engineering)
        B = np.zeros((n_e, 3, 6))
        B[:, 0, 0::2] = gx
        B[:, 1, 1::2] = gy
        B[:, 2, 0::2] = gy
        B[:, 2, 1::2] = gx
        self.B = B
        vol = mesh.areas * mesh.thickness
        self.vol = vol
        D0 = material_params.D0
        # unit-modulus linear element stiffness, scaled by E at assembly
        self.kl0 = vol[:, None, None] * np.einsum("nai,ab,nbj->nij", B, D0, B)

    def displacement_gradient(self, U):
        """Unscaled per-element displacement gradient H (Ne, 2, 2)."""
        ue = U[self.dofs].reshape(-1, 3, 2)
        return np.einsum("nia,nib->nab", ue, self.grads)

    def nonlinear_B(self, F):
        """Total-Lagrangian strain-displacement matrix for gradient F."""
        g = self.grads
        n_e = len(g)
        BN = np.zeros((n_e, 3, 6))
        for i in range(3):
            gxi = g[:, i, 0]
            gyi = g[:, i, 1]
            for a in range(2):
                c = 2 * i + a
                BN[:, 0, c] = F[:, a, 0] * gxi
                BN[:, 1, c] = F[:, a, 1] * gyi
                BN[:, 2, c] = F[:, a, 0] * gyi + F[:, a, 1] * gxi
        return BN


@dataclass
class ElementArrays:
    """Per-element byproducts of one assembly, reused by the adjoint."""

    f_int: np.ndarray          # (Ne, 6) element internal forces
    dF_dE: np.ndarray          # (Ne, 6) d f_int / d E_e
    dF_dgamma: np.ndarray      # (Ne, 6) d f_int / d gamma_e


@dataclass
class GlobalSystem:
    """Assembled state at one displacement vector U."""

    U: np.ndarray
    F_int: np.ndarray
    K_T: sp.csc_matrix
    F_ext_x: np.ndarray
    F_ext_y: np.ndarray
    F_counter: np.ndarray
    elements: ElementArrays

    def residual(self, lam_x, lam_y):
        return (lam_x * self.F_ext_x + lam_y * self.F_ext_y + self.F_counter
                - self.F_int)


def element_strain_energy(kin, e, U_e, E_e, gamma_e):
    """Interpolated strain energy of one element (oracle-friendly scalar)."""
    params = kin.material
    ue = np.asarray(U_e, dtype=float).reshape(3, 2)
    H = np.einsum("ia,ib->ab", ue, kin.grads[e])
    F = np.eye(2) + gamma_e * H
    psi = mat.strain_energy(F, params)
    eps = kin.B[e] @ np.asarray(U_e, dtype=float)
    w_lin = 0.5 * eps @ params.D0 @ eps
    return E_e * kin.vol[e] * (psi + (1.0 - gamma_e**2) * w_lin)


def element_internal_force(kin, e, U_e, E_e, gamma_e):
    """Blended internal force vector of a single element (6,)."""
    f, _, _ = _element_force_tangent(kin, e, U_e, E_e, gamma_e, False)
    return f


def element_tangent(kin, e, U_e, E_e, gamma_e):
    """Blended tangent stiffness of a single element (6, 6)."""
    _, k, _ = _element_force_tangent(kin, e, U_e, E_e, gamma_e, True)
    return k


def _element_force_tangent(kin, e, U_e, E_e, gamma_e, want_tangent):
    params = kin.material
    U_e = np.asarray(U_e, dtype=float)
    ue = U_e.reshape(3, 2)
    H = np.einsum("ia,ib->ab", ue, kin.grads[e])
    F = np.eye(2) + gamma_e * H
    J = np.linalg.det(F)
    if J <= 0.0:
        raise NonPositiveJacobian(element=e)
    S = mat.pk2_stress(F, params)
    D = mat.tangent_moduli(F, params)
    g = kin.grads[e]
    BN = np.zeros((3, 6))
    for i in range(3):
        for a in range(2):
            c = 2 * i + a
            BN[0, c] = F[a, 0] * g[i, 0]
            BN[1, c] = F[a, 1] * g[i, 1]
            BN[2, c] = F[a, 0] * g[i, 1] + F[a, 1] * g[i, 0]
    sv = np.array([S[0, 0], S[1, 1], S[0, 1]])
    vol = kin.vol[e]
    f_nl = E_e * vol * (BN.T @ sv)
    eps = kin.B[e] @ U_e
    f_l = E_e * vol * (kin.B[e].T @ (params.D0 @ eps))
    f = gamma_e * f_nl + (1.0 - gamma_e**2) * f_l
    if not want_tangent:
        return f, None, f_nl
    kmat = E_e * vol * (BN.T @ D @ BN)
    geo = g @ S @ g.T  # (3, 3)
    kgeo = np.zeros((6, 6))
    kgeo[0::2, 0::2] = geo
    kgeo[1::2, 1::2] = geo
    k_nl = kmat + E_e * vol * kgeo
    k_l = E_e * kin.kl0[e]
    k = gamma_e**2 * k_nl + (1.0 - gamma_e**2) * k_l
    return f, k, f_nl


def internal_force_and_tangent(kin, U, E, gamma, want_tangent=True):
    """Vectorized continuum assembly over all elements.

    Returns (F_int (2n,), K (csc) or None, ElementArrays). Raises
    NonPositiveJacobian with the offending element index.
    """
    params = kin.material
    mesh = kin.mesh
    n_dof = mesh.num_dofs
    ue = U[kin.dofs].reshape(-1, 3, 2)
    H = np.einsum("nia,nib->nab", ue, kin.grads)
    F = np.eye(2)[None] + gamma[:, None, None] * H
    J = F[:, 0, 0] * F[:, 1, 1] - F[:, 0, 1] * F[:, 1, 0]
    if np.any(J <= 0.0):
        raise NonPositiveJacobian(element=int(np.argmax(J <= 0.0)))
    S, D, _ = mat.pk2_and_tangent_batch(F, params, want_tangent=True)
    BN = kin.nonlinear_B(F)
    sv = np.stack([S[:, 0, 0], S[:, 1, 1], S[:, 0, 1]], axis=1)
    Evol = E * kin.vol
    f_nl = Evol[:, None] * np.einsum("nac,na->nc", BN, sv)
    eps = np.einsum("nai,ni->na", kin.B, U[kin.dofs])
    f_l = Evol[:, None] * np.einsum("nai,ab,nb->ni", kin.B, params.D0, eps)
    g2 = gamma**2
    f_e = gamma[:, None] * f_nl + (1.0 - g2)[:, None] * f_l

    F_int = np.zeros(n_dof)
    np.add.at(F_int, kin.dofs.ravel(), f_e.ravel())

    # k_nl @ U_e without forming the matrices; needed for d f / d gamma
    DBNu = np.einsum("nab,nbc,nc->na", D, BN, U[kin.dofs])
    knl_u = Evol[:, None] * np.einsum("nac,na->nc", BN, DBNu)
    geo_u = np.einsum("nia,nab,njb,njc->nic", kin.grads, S, kin.grads,
                      ue)  # (Ne, 3, 2)
    knl_u += Evol[:, None] * geo_u.reshape(-1, 6)
    dF_dgamma = f_nl + gamma[:, None] * knl_u - 2.0 * gamma[:, None] * f_l
    with np.errstate(divide="ignore", invalid="ignore"):
        dF_dE = f_e / E[:, None]
    dF_dE = np.where(np.isfinite(dF_dE), dF_dE, 0.0)
    arrays = ElementArrays(f_int=f_e, dF_dE=dF_dE, dF_dgamma=dF_dgamma)

    if not want_tangent:
        return F_int, None, arrays

    k_nl = Evol[:, None, None] * np.einsum("nai,nab,nbj->nij", BN, D, BN)
    geo = np.einsum("nia,nab,njb->nij", kin.grads, S, kin.grads)
    kg = np.zeros_like(k_nl)
    kg[:, 0::2, 0::2] = geo
    kg[:, 1::2, 1::2] = geo
    k_nl += Evol[:, None, None] * kg
    k_e = (g2[:, None, None] * k_nl
           + (1.0 - g2)[:, None, None] * (E[:, None, None] * kin.kl0))
    K = sp.coo_matrix(
        (k_e.ravel(), (kin.rows.ravel(), kin.cols.ravel())),
        shape=(n_dof, n_dof),
    ).tocsc()
    return F_int, K, arrays


def assemble_support_matrix(k_s, mesh):
    """Diagonal ground-spring matrix: each element lumps k_e/3 to its nodes."""
    diag = np.zeros(mesh.num_dofs)
    share = np.repeat(k_s / 3.0, 3)
    nodes = mesh.triangles.ravel()
    np.add.at(diag, 2 * nodes, share)
    np.add.at(diag, 2 * nodes + 1, share)
    return sp.diags(diag).tocsc()


def assemble_external_refs(f_e, mesh):
    """Reference load vectors: f_e V_e split evenly over the element nodes.

    F_x acts on x-DOFs only and F_y on y-DOFs only, so the load intensity
    factors multiplying them are the applied force components in newtons.
    """
    share = np.repeat(f_e * mesh.volumes / 3.0, 3)
    nodes = mesh.triangles.ravel()
    Fx = np.zeros(mesh.num_dofs)
    Fy = np.zeros(mesh.num_dofs)
    np.add.at(Fx, 2 * nodes, share)
    np.add.at(Fy, 2 * nodes + 1, share)
    return Fx, Fy


class NonlinearModel:
    """Everything needed to evaluate residuals and tangents at one design.

    Bundles the element kinematics with the design-dependent fields (moduli,
    blend factors, springs, reference loads), the output springs, and the
    optional constant counter-force vector.
    """

    def __init__(self, kin, fields, output_springs=(), counter_force=None):
        self.kin = kin
        self.mesh = kin.mesh
        self.fields = fields
        self.E = fields.E
        self.gamma = fields.gamma
        self.K_s = assemble_support_matrix(fields.k_s, kin.mesh)
        Fx, Fy = assemble_external_refs(fields.f_e, kin.mesh)
        self.F_ext_x = Fx
        self.F_ext_y = Fy
        self.output_springs = tuple(output_springs)
        self.spring_dofs = np.array([d for d, _ in output_springs], dtype=np.int64)
        self.spring_k = np.array([k for _, k in output_springs], dtype=float)
        if counter_force is None:
            counter_force = np.zeros(kin.mesh.num_dofs)
        self.F_counter = np.asarray(counter_force, dtype=float)

    def with_counter_force(self, counter_force):
        m = NonlinearModel.__new__(NonlinearModel)
        m.__dict__.update(self.__dict__)
        m.F_counter = (np.zeros(self.mesh.num_dofs) if counter_force is None
                       else np.asarray(counter_force, dtype=float))
        return m

    def assemble(self, U, want_tangent=True, counter_scale=1.0):
        """GlobalSystem snapshot at U (tangent optional)."""
        F_int, K, arrays = internal_force_and_tangent(
            self.kin, U, self.E, self.gamma, want_tangent=want_tangent
        )
        F_int = F_int + self.K_s @ U
        if len(self.spring_dofs):
            F_int[self.spring_dofs] += self.spring_k * U[self.spring_dofs]
        if want_tangent:
            K = K + self.K_s
            if len(self.spring_dofs):
                K = K + sp.csc_matrix(
                    (self.spring_k, (self.spring_dofs, self.spring_dofs)),
                    shape=K.shape,
                )
        return GlobalSystem(
            U=U, F_int=F_int, K_T=K, F_ext_x=self.F_ext_x,
            F_ext_y=self.F_ext_y, F_counter=counter_scale * self.F_counter,
            elements=arrays,
        )


def build_model(mesh, design, params, material_params, A_f=None, W=None,
                output_springs=(), counter_force=None, kin=None):
    """Evaluate the design fields and wrap them in a NonlinearModel.

    Returns (fields, model). Pass A_f/W back in across design iterations to
    keep the load normalization frozen and skip rebuilding the filter.
    """
    from . import design_field as df

    fields = df.evaluate_fields(design, mesh, params, A_f=A_f, W=W)
    if kin is None:
        kin = ElementKinematics(mesh, material_params)
    model = NonlinearModel(kin, fields, output_springs=output_springs,
                           counter_force=counter_force)
    return fields, model


def residual_vjp(model, system, lam_x, lam_y, psi):
    """psi^T dR/dzeta assembled through the field chain rules.

    Returns a flat design-gradient contribution in the
    [rho, X_s, Y_s, X_f, Y_f, theta] layout. The theta column of dR/dzeta is
    identically zero.
    """
    fields = model.fields
    kin = model.kin
    mesh = model.mesh
    U = system.U
    psi_e = psi[kin.dofs]                                   # (Ne, 6)
    gE = np.einsum("ni,ni->n", psi_e, system.elements.dF_dE)
    ggam = np.einsum("ni,ni->n", psi_e, system.elements.dF_dgamma)
    U_e = U[kin.dofs]
    gks = np.einsum("ni,ni->n", psi_e, U_e) / 3.0
    # load columns: R includes +lam_x F_x + lam_y F_y
    lam_psi = (lam_x * psi[kin.dofs[:, 0::2]].sum(axis=1)
               + lam_y * psi[kin.dofs[:, 1::2]].sum(axis=1))
    gf = lam_psi * mesh.volumes / 3.0

    sens_rho_bar = -(gE * fields.dE_drho_bar + ggam * fields.dgamma_drho_bar)
    des = mesh.designable
    d_rho = fields.W.T @ (sens_rho_bar[des] * fields.drho_bar_drho_tilde[des])

    hat = sens_rho_bar * fields.drho_bar_drho_hat           # (Ne,)
    d_pts = np.einsum("n,nkc->kc", hat, fields.drho_hat_dpts)
    d_pts[:-1] += np.einsum("n,nkc->kc", -gks, fields.dks_dsup)
    d_pts[-1] += np.einsum("n,nc->c", gf, fields.dfe_dload)

    n_s = fields.design.num_supports
    out = np.concatenate([
        d_rho, d_pts[:n_s, 0], d_pts[:n_s, 1], d_pts[n_s], [0.0]
    ])
    return out


def residual_design_partials(model, system, lam_x, lam_y):
    """Explicit sparse dR/dzeta at one state (columns per design variable).

    The theta column is zero. Intended for verification and small problems;
    the optimizer uses residual_vjp instead.
    """
    fields = model.fields
    kin = model.kin
    mesh = model.mesh
    n_dof = mesh.num_dofs
    arrays = system.elements
    # d F_int / d rho_bar per element, scattered: (2n x Ne) sparse
    dF_drho_bar = (arrays.dF_dE * fields.dE_drho_bar[:, None]
                   + arrays.dF_dgamma * fields.dgamma_drho_bar[:, None])
    A = sp.coo_matrix(
        (dF_drho_bar.ravel(),
         (kin.dofs.ravel(), np.repeat(np.arange(mesh.num_elements), 6))),
        shape=(n_dof, mesh.num_elements),
    ).tocsc()
    d_rho = -(A @ fields.rho_bar_jacobian_rho())

    U_e = system.U[kin.dofs]
    n_s = fields.design.num_supports
    cols = np.zeros((n_dof, 2 * n_s + 2))
    rho_pts = fields.rho_bar_partials_points()              # (Ne, ns+1, 2)
    for k in range(n_s + 1):
        for c in range(2):
            col = k + c * n_s if k < n_s else 2 * n_s + c
            contrib = -(A @ rho_pts[:, k, c])
            if k < n_s:
                spring = fields.dks_dsup[:, k, c][:, None] * U_e / 3.0
                scat = np.zeros(n_dof)
                np.add.at(scat, kin.dofs.ravel(), spring.ravel())
                contrib = contrib - scat
            else:
                share = np.repeat(fields.dfe_dload[:, c] * mesh.volumes / 3.0, 3)
                nodes = mesh.triangles.ravel()
                dFx = np.zeros(n_dof)
                dFy = np.zeros(n_dof)
                np.add.at(dFx, 2 * nodes, share)
                np.add.at(dFy, 2 * nodes + 1, share)
                contrib = contrib + lam_x * dFx + lam_y * dFy
            cols[:, col] = contrib
    theta_col = np.zeros((n_dof, 1))
    return sp.hstack([d_rho, sp.csc_matrix(cols), sp.csc_matrix(theta_col)],
                     format="csc")
