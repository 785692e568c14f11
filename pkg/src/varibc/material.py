"""Modified Neo-Hookean constitutive law under 2D plane stress.

All stress and tangent quantities are per unit elastic modulus; the element
modulus from the density interpolation multiplies them at assembly time.
The stored energy is

    psi(C) = mu0/2 (tr C + 1 - 3) - mu0 ln J + lam0/2 (J - 1)^2,

with the plane-stress trick that the out-of-plane stretch contributes
tr C3D = tr C + 1, and lam0 the plane-stress-effective Lame parameter so the
small-strain tangent equals the plane-stress Hooke matrix exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class NonPositiveJacobian(Exception):
    """Deformation gradient determinant is not positive (element inversion)."""

    def __init__(self, message="non-positive deformation Jacobian", element=None):
        self.element = element
        if element is not None:
            message = f"{message} in element {element}"
        super().__init__(message)


def lame_parameters(nu):
    """Plane-stress-effective Lame parameters for a unit elastic modulus.

    mu0 = 1/(2(1+nu)); lam0 is the classical plane-stress reduction
    2*lam3d*mu0/(lam3d + 2*mu0) of the 3D parameter
    lam3d = nu/((1+nu)(1-2nu)), which equals nu/(1-nu^2).
    """
    if not 0.0 <= nu < 0.5:
        raise ValueError("Poisson ratio must lie in [0, 0.5)")
    mu0 = 1.0 / (2.0 * (1.0 + nu))
    if nu == 0.0:
        return 0.0, mu0
    lam3d = nu / ((1.0 + nu) * (1.0 - 2.0 * nu))
    lam0 = 2.0 * lam3d * mu0 / (lam3d + 2.0 * mu0)
    return lam0, mu0


def hooke_plane_stress(nu):
    """Plane-stress Hooke matrix for a unit modulus, Voigt (11, 22, 12)."""
    c = 1.0 / (1.0 - nu * nu)
    return c * np.array(
        [[1.0, nu, 0.0], [nu, 1.0, 0.0], [0.0, 0.0, 0.5 * (1.0 - nu)]]
    )


@dataclass(frozen=True)
class MaterialParams:
    """Lame parameters and linear constitutive matrix for a unit modulus.

    printed_coefficients switches to the volumetric coefficient 2J^2 - J in
    the stress (for comparison runs only); the default uses J^2 - J, which is
    the energy-consistent form with zero stress at the identity.
    """

    nu: float
    lam0: float = field(init=False)
    mu0: float = field(init=False)
    D0: np.ndarray = field(init=False, repr=False)
    printed_coefficients: bool = False

    def __post_init__(self):
        lam0, mu0 = lame_parameters(self.nu)
        object.__setattr__(self, "lam0", lam0)
        object.__setattr__(self, "mu0", mu0)
        D0 = hooke_plane_stress(self.nu)
        D0.setflags(write=False)
        object.__setattr__(self, "D0", D0)


def _check_jacobian(J, element=None):
    if np.ndim(J) == 0:
        if J <= 0.0:
            raise NonPositiveJacobian(element=element)
    elif np.any(J <= 0.0):
        bad = int(np.argmax(J <= 0.0))
        raise NonPositiveJacobian(element=bad if element is None else element)


def strain_energy(F, params):
    """Stored energy per unit modulus and reference volume."""
    F = np.asarray(F, dtype=float)
    J = F[0, 0] * F[1, 1] - F[0, 1] * F[1, 0]
    _check_jacobian(J)
    C = F.T @ F
    trC = C[0, 0] + C[1, 1] + 1.0
    return (
        0.5 * params.mu0 * (trC - 3.0)
        - params.mu0 * np.log(J)
        + 0.5 * params.lam0 * (J - 1.0) ** 2
    )


def _vol_coeff(J, params):
    if params.printed_coefficients:
        return params.lam0 * (2.0 * J * J - J)
    return params.lam0 * (J * J - J)


def pk2_stress(F, params):
    """Second Piola-Kirchhoff stress (2x2, per unit modulus).

    S = lam0 (J^2 - J) C^-1 + mu0 (I - C^-1); zero at F = I.
    Raises NonPositiveJacobian for J <= 0.
    """
    F = np.asarray(F, dtype=float)
    J = F[0, 0] * F[1, 1] - F[0, 1] * F[1, 0]
    _check_jacobian(J)
    C = F.T @ F
    Cinv = np.linalg.inv(C)
    return _vol_coeff(J, params) * Cinv + params.mu0 * (np.eye(2) - Cinv)


def tangent_moduli(F, params):
    """Material tangent D = 2 dS/dC in Voigt (11, 22, 12) form, per unit modulus.

    D_ijkl = lam0 (2J^2 - J) Cinv_ij Cinv_kl
           + (mu0 - lam0 (J^2 - J)) (Cinv_ik Cinv_jl + Cinv_il Cinv_jk),
    which reduces to the plane-stress Hooke matrix at F = I.
    """
    F = np.asarray(F, dtype=float)
    J = F[0, 0] * F[1, 1] - F[0, 1] * F[1, 0]
    _check_jacobian(J)
    C = F.T @ F
    Cinv = np.linalg.inv(C)
    c1 = params.lam0 * (2.0 * J * J - J)
    c2 = params.mu0 - _vol_coeff(J, params)
    pairs = [(0, 0), (1, 1), (0, 1)]
    D = np.empty((3, 3))
    for a, (i, j) in enumerate(pairs):
        for b, (k, l) in enumerate(pairs):
            D[a, b] = c1 * Cinv[i, j] * Cinv[k, l] + c2 * (
                Cinv[i, k] * Cinv[j, l] + Cinv[i, l] * Cinv[j, k]
            )
    return D


def pk2_and_tangent_batch(F, params, want_tangent=True, element_offset=None):
    """Vectorized stress/tangent over a batch of deformation gradients.

    F has shape (n, 2, 2). Returns (S (n,2,2), D (n,3,3) or None, J (n,)).
    NonPositiveJacobian carries the offending batch index.
    """
    F = np.asarray(F, dtype=float)
    J = F[:, 0, 0] * F[:, 1, 1] - F[:, 0, 1] * F[:, 1, 0]
    if np.any(J <= 0.0):
        bad = int(np.argmax(J <= 0.0))
        raise NonPositiveJacobian(element=bad)
    C = np.einsum("nki,nkj->nij", F, F)
    detC = J * J
    Cinv = np.empty_like(C)
    Cinv[:, 0, 0] = C[:, 1, 1] / detC
    Cinv[:, 1, 1] = C[:, 0, 0] / detC
    Cinv[:, 0, 1] = -C[:, 0, 1] / detC
    Cinv[:, 1, 0] = -C[:, 1, 0] / detC
    if params.printed_coefficients:
        vol = params.lam0 * (2.0 * J * J - J)
    else:
        vol = params.lam0 * (J * J - J)
    S = vol[:, None, None] * Cinv + params.mu0 * (np.eye(2)[None] - Cinv)
    if not want_tangent:
        return S, None, J
    c1 = params.lam0 * (2.0 * J * J - J)
    c2 = params.mu0 - vol
    pairs = ((0, 0), (1, 1), (0, 1))
    D = np.empty((len(F), 3, 3))
    for a, (i, j) in enumerate(pairs):
        for b, (k, l) in enumerate(pairs):
            D[:, a, b] = c1 * Cinv[:, i, j] * Cinv[:, k, l] + c2 * (
                Cinv[:, i, k] * Cinv[:, j, l] + Cinv[:, i, l] * Cinv[:, j, k]
            )
    return S, D, J
