"""Matrices of the regularized vacuum system.

Unknowns are V = (H1, H2, H3, E1, E2, E3) in the flat setting and the
curved W = (frakH, frakE) once the front is straightened.  As on the plasma
side every array builder broadcasts over leading axes.
"""
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateJacobian, HyperbolicityViolated
from .plasma import InterfaceGeometry, MatrixBundle, eta_inverse, eta_matrix, mirror_upper

ZERO_EIG_RTOL = 1e-9


@dataclass(frozen=True)
class RegularizationParams:
    epsilon: float
    nu: np.ndarray = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")

    def hyperbolic(self):
        return bool(np.all(self.epsilon * np.linalg.norm(np.asarray(self.nu, float), axis=-1) < 1))


@dataclass(frozen=True)
class EhatCoefficients:
    E1: np.ndarray
    E2: np.ndarray
    E3: np.ndarray

    def as_vector(self):
        return np.stack(np.broadcast_arrays(self.E1, self.E2, self.E3), axis=-1)


def _cross_matrix(a):
    """[a]_x with [a]_x y = a x y, broadcasting."""
    a = np.asarray(a, dtype=float)
    C = np.zeros(a.shape[:-1] + (3, 3))
    C[..., 0, 1], C[..., 0, 2] = -a[..., 2], a[..., 1]
    C[..., 1, 0], C[..., 1, 2] = a[..., 2], -a[..., 0]
    C[..., 2, 0], C[..., 2, 1] = -a[..., 1], a[..., 0]
    return C


def b_matrix(j: int, eps: float):
    """B_j: the H rows carry +curl E / eps, the E rows carry -curl H / eps."""
    if j not in (1, 2, 3):
        raise ValueError("j must be in 1..3")
    C = _cross_matrix(np.eye(3)[j - 1])
    out = np.zeros((6, 6))
    out[:3, 3:] = C
    out[3:, :3] = -C
    return out / eps


def build_B(j: int, eps: float) -> MatrixBundle:
    if not eps > 0:
        raise ValueError("epsilon must be positive")
    return MatrixBundle(b_matrix(j, eps), f"B{j}")


def r_vectors(nu):
    nu = np.asarray(nu, dtype=float)
    R1 = np.zeros(nu.shape[:-1] + (6,))
    R2 = np.zeros(nu.shape[:-1] + (6,))
    R1[..., :3] = nu
    R2[..., 3:] = nu
    return R1, R2


def frakb_matrix(alpha: int, eps: float, nu):
    """Secondary symmetrizer B0 (alpha=0) and fluxes B1..B3."""
    nu = np.asarray(nu, dtype=float)
    shape = nu.shape[:-1]
    if alpha == 0:
        out = np.zeros(shape + (6, 6))
        out[..., :3, :3] = np.eye(3)
        out[..., 3:, 3:] = np.eye(3)
        X = eps * _cross_matrix(nu)
        out[..., :3, 3:] = -X
        out[..., 3:, :3] = X
        return out
    if alpha not in (1, 2, 3):
        raise ValueError("alpha must be in 0..3")
    j = alpha - 1
    # nu-dependent block: e_j nu^T + nu e_j^T - nu_j I
    blk = np.zeros(shape + (3, 3))
    blk[..., j, :] += nu
    blk[..., :, j] += nu
    blk -= nu[..., j, None, None] * np.eye(3)
    out = np.zeros(shape + (6, 6))
    out[..., :3, :3] = blk
    out[..., 3:, 3:] = blk
    out += b_matrix(alpha, eps)
    return out


def build_frakB(alpha: int, params: RegularizationParams) -> MatrixBundle:
    M = frakb_matrix(alpha, params.epsilon, params.nu)
    return MatrixBundle(mirror_upper(M), f"frakB{alpha}")


def det_frakB1(params: RegularizationParams):
    nu = np.asarray(params.nu, dtype=float)
    n2 = np.sum(nu * nu, axis=-1)
    return nu[..., 0] ** 2 * (n2 - 1.0 / params.epsilon ** 2) ** 2


def k_matrix(geom: InterfaceGeometry):
    E = eta_matrix(geom)
    K = np.zeros(E.shape[:-2] + (6, 6))
    K[..., :3, :3] = E
    K[..., 3:, 3:] = E
    return K


def k_inverse(geom: InterfaceGeometry):
    E = eta_inverse(geom)
    K = np.zeros(E.shape[:-2] + (6, 6))
    K[..., :3, :3] = E
    K[..., 3:, 3:] = E
    return K


def metric_g(geom: InterfaceGeometry):
    """G = eta eta^T / d1Phi1, so that frakh = G frakH and frake = G frakE."""
    E = eta_matrix(geom)
    return E @ np.swapaxes(E, -1, -2) / np.asarray(geom.d1Phi1, dtype=float)[..., None, None]


def b0_matrix(geom: InterfaceGeometry):
    G = metric_g(geom)
    out = np.zeros(G.shape[:-2] + (6, 6))
    out[..., :3, :3] = G
    out[..., 3:, 3:] = G
    return out


def _check(eps, nu, geom):
    geom.check()
    if np.any(eps * np.linalg.norm(np.asarray(nu, float), axis=-1) >= 1):
        raise HyperbolicityViolated("eps |nu| must be < 1")


def m_matrix(alpha: int, eps: float, nu, geom: InterfaceGeometry):
    """Principal matrices M_0..M_3 of the secondary-symmetrized curved system."""
    _check(eps, nu, geom)
    K = k_matrix(geom)
    KT = np.swapaxes(K, -1, -2)
    d1 = np.asarray(geom.d1Phi1, dtype=float)[..., None, None]
    if alpha == 1:
        d2 = np.asarray(geom.dPsi_2, dtype=float)[..., None, None]
        d3 = np.asarray(geom.dPsi_3, dtype=float)[..., None, None]
        inner = (frakb_matrix(1, eps, nu) - frakb_matrix(2, eps, nu) * d2
                 - frakb_matrix(3, eps, nu) * d3) / d1
    elif alpha in (0, 2, 3):
        inner = frakb_matrix(alpha, eps, nu)
    else:
        raise ValueError("alpha must be in 0..3; use m4_matrix for the zero-order term")
    return mirror_upper(K @ inner @ KT / d1)


def m4_matrix(eps: float, nu, geom: InterfaceGeometry, dG):
    """Zero-order matrix of the curved secondary-symmetrized system.

    dG[..., a, :, :] holds the derivative of G along (t, x1, x2, x3).  The
    matrix collects every undifferentiated W term of
    K B0s K^{-1} (B_0 d_t W + sum B_j d_j W + (d_t B_0) W)
      + K (R1 div frakh + R2 div frake) / d1Phi1.
    """
    _check(eps, nu, geom)
    dG = np.asarray(dG, dtype=float)
    K = k_matrix(geom)
    Ki = k_inverse(geom)
    d1 = np.asarray(geom.d1Phi1, dtype=float)[..., None, None]
    B4 = np.zeros(dG.shape[:-3] + (6, 6))
    B4[..., :3, :3] = dG[..., 0, :, :]
    B4[..., 3:, 3:] = dG[..., 0, :, :]
    out = K @ frakb_matrix(0, eps, nu) @ Ki @ B4
    # divergence of G X contributes (sum_j d_j G_{j,:}) X
    gdiv = dG[..., 1, 0, :] + dG[..., 2, 1, :] + dG[..., 3, 2, :]
    R1, R2 = r_vectors(nu)
    Rt = np.zeros(out.shape)
    Rt[..., :, :3] = R1[..., :, None] * gdiv[..., None, :]
    Rt[..., :, 3:] = R2[..., :, None] * gdiv[..., None, :]
    return out + K @ Rt / d1


def divergence_symbol(j: int, nu, geom: InterfaceGeometry):
    """Matrix X with K(R1 div frakh + R2 div frake)/d1Phi1 = sum_j X_j d_j W + l.o.t."""
    G = metric_g(geom)
    R1, R2 = r_vectors(nu)
    row = G[..., j - 1, :]
    Rt = np.zeros(G.shape[:-2] + (6, 6))
    Rt[..., :, :3] = R1[..., :, None] * row[..., None, :]
    Rt[..., :, 3:] = R2[..., :, None] * row[..., None, :]
    return k_matrix(geom) @ Rt / np.asarray(geom.d1Phi1, dtype=float)[..., None, None]


def build_M(alpha: int, params: RegularizationParams, basic, dG=None) -> MatrixBundle:
    geom = basic.geometry if hasattr(basic, "geometry") else basic
    if alpha == 4:
        if dG is None:
            dG = basic.metric_derivatives()
        return MatrixBundle(m4_matrix(params.epsilon, params.nu, geom, dG), "M4",
                            symmetric_expected=False)
    return MatrixBundle(m_matrix(alpha, params.epsilon, params.nu, geom), f"M{alpha}")


def det_M1_formula(params: RegularizationParams, dphi2, dphi3):
    nu = np.asarray(params.nu, dtype=float)
    n2 = np.sum(nu * nu, axis=-1)
    return ((1 + dphi2 ** 2 + dphi3 ** 2) ** 2
            * (nu[..., 0] - nu[..., 1] * dphi2 - nu[..., 2] * dphi3) ** 2
            * (n2 - 1.0 / params.epsilon ** 2) ** 2)


def choose_nu(basic):
    """nu = (v2 d2phi + v3 d3phi, v2, v3) from the hat velocity and front slope."""
    v = np.asarray(basic.vhat, dtype=float)
    d2 = np.asarray(basic.geometry.dPsi_2, dtype=float)
    d3 = np.asarray(basic.geometry.dPsi_3, dtype=float)
    nu = np.zeros(np.broadcast_shapes(v.shape, d2.shape + (3,)))
    nu[..., 0] = v[..., 1] * d2 + v[..., 2] * d3
    nu[..., 1] = v[..., 1]
    nu[..., 2] = v[..., 2]
    return nu


def choose_Ehat(basic, nu=None) -> EhatCoefficients:
    if nu is None:
        nu = choose_nu(basic)
    E = np.cross(np.asarray(basic.Hcal, dtype=float), nu)
    return EhatCoefficients(E[..., 0], E[..., 1], E[..., 2])


def spectrum_counts(M, rtol=ZERO_EIG_RTOL):
    """(negative, zero, positive) eigenvalue counts of a symmetric matrix."""
    lam = np.linalg.eigvalsh(M)
    tol = rtol * np.max(np.abs(lam)) if lam.size else 0.0
    return int(np.sum(lam < -tol)), int(np.sum(np.abs(lam) <= tol)), int(np.sum(lam > tol))
