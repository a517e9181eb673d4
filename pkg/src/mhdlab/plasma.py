"""Symmetric hyperbolic matrices of the plasma side.

Unknown ordering is U = (q, v1, v2, v3, H1, H2, H3, S) for the physical
system and (q, u1, u2, u3, h1, h2, h3, S) for the flattened system, where
u = eta v and h = eta H.  Every builder broadcasts over leading axes, so a
whole grid of coefficient matrices can be assembled in one call.
"""
from dataclasses import dataclass, field

import numpy as np

from .eos import EosParams, density_from_total_pressure
from .errors import DegenerateJacobian, HyperbolicityViolated

Q, V, B, S_ = 0, slice(1, 4), slice(4, 7), 7


@dataclass(frozen=True)
class PlasmaState:
    q: np.ndarray
    v: np.ndarray
    H: np.ndarray
    S: np.ndarray

    @classmethod
    def from_vector(cls, U):
        U = np.asarray(U, dtype=float)
        return cls(U[..., 0], U[..., 1:4], U[..., 4:7], U[..., 7])

    def as_vector(self):
        q = np.asarray(self.q, dtype=float)
        out = np.empty(q.shape + (8,))
        out[..., 0] = q
        out[..., 1:4] = self.v
        out[..., 4:7] = self.H
        out[..., 7] = self.S
        return out

    def pressure(self):
        return np.asarray(self.q) - 0.5 * np.sum(np.asarray(self.H) ** 2, axis=-1)


@dataclass(frozen=True)
class InterfaceGeometry:
    dPsi_t: np.ndarray = 0.0
    dPsi_2: np.ndarray = 0.0
    dPsi_3: np.ndarray = 0.0
    d1Phi1: np.ndarray = 1.0

    def check(self):
        if np.any(np.asarray(self.d1Phi1) < 0.5):
            raise DegenerateJacobian(
                f"d1Phi1 must be >= 1/2, min = {np.min(self.d1Phi1)!r}")


@dataclass
class MatrixBundle:
    entries: np.ndarray
    tag: str
    symmetric_expected: bool = True
    meta: dict = field(default_factory=dict)

    def asymmetry(self):
        M = self.entries
        scale = max(np.max(np.abs(M)), 1e-300)
        return np.max(np.abs(M - np.swapaxes(M, -1, -2))) / scale


def mirror_upper(M):
    """Symmetrize by copying the upper triangle onto the lower one."""
    iu = np.triu_indices(M.shape[-1], 1)
    M = M.copy()
    M[..., iu[1], iu[0]] = M[..., iu[0], iu[1]]
    return M


def _thermo(U: PlasmaState, eos: EosParams):
    th = density_from_total_pressure(eos, U.q, U.H, U.S)
    if np.any(th.rho <= 0) or np.any(th.rho_p <= 0):
        raise HyperbolicityViolated("rho and rho_p must be positive")
    return th.rho, th.rho_p


def a0_from_thermo(rho, rho_p, H):
    """A_0 from (rho, rho_p, H); exposed separately so it can be probed
    with values outside the admissible region."""
    rho = np.asarray(rho, dtype=float)
    H = np.asarray(H, dtype=float)
    r = np.asarray(rho_p, dtype=float) / rho
    shape = rho.shape
    A = np.zeros(shape + (8, 8))
    A[..., 0, 0] = r
    A[..., 0, B] = -r[..., None] * H
    A[..., B, 0] = -r[..., None] * H
    A[..., V, V] = rho[..., None, None] * np.eye(3)
    A[..., B, B] = np.eye(3) + r[..., None, None] * H[..., :, None] * H[..., None, :]
    A[..., 7, 7] = 1.0
    return A


def _coupling(n, Hn, shape):
    """Derivative couplings of one direction: the div / grad slots carry the
    vector n, the magnetic slots carry -Hn."""
    C = np.zeros(shape + (8, 8))
    C[..., 0, V] = n
    C[..., V, 0] = n
    eye = np.eye(3)
    C[..., V, B] = -Hn[..., None, None] * eye
    C[..., B, V] = -Hn[..., None, None] * eye
    return C


def a_matrix(alpha: int, U: PlasmaState, eos: EosParams):
    rho, rho_p = _thermo(U, eos)
    H = np.asarray(U.H, dtype=float)
    A0 = a0_from_thermo(rho, rho_p, H)
    if alpha == 0:
        return A0
    if alpha not in (1, 2, 3):
        raise ValueError("alpha must be in 0..3")
    j = alpha - 1
    v = np.asarray(U.v, dtype=float)
    n = np.zeros(rho.shape + (3,))
    n[..., j] = 1.0
    return v[..., j, None, None] * A0 + _coupling(n, H[..., j], rho.shape)


def build_A(alpha: int, U: PlasmaState, eos: EosParams) -> MatrixBundle:
    return MatrixBundle(mirror_upper(a_matrix(alpha, U, eos)), f"A{alpha}")


def atilde1_matrix(U: PlasmaState, geom: InterfaceGeometry, eos: EosParams):
    geom.check()
    A = [a_matrix(a, U, eos) for a in range(4)]
    c = lambda x: np.asarray(x, dtype=float)[..., None, None]
    return (A[1] - A[0] * c(geom.dPsi_t) - A[2] * c(geom.dPsi_2)
            - A[3] * c(geom.dPsi_3)) / c(geom.d1Phi1)


def build_Atilde1(U: PlasmaState, geom: InterfaceGeometry, eos: EosParams) -> MatrixBundle:
    return MatrixBundle(mirror_upper(atilde1_matrix(U, geom, eos)), "Atilde1")


def eta_matrix(geom: InterfaceGeometry):
    d2, d3, d1 = np.broadcast_arrays(*(np.asarray(x, dtype=float) for x in
                                       (geom.dPsi_2, geom.dPsi_3, geom.d1Phi1)))
    E = np.zeros(d1.shape + (3, 3))
    E[..., 0, 0] = 1.0
    E[..., 0, 1] = -d2
    E[..., 0, 2] = -d3
    E[..., 1, 1] = d1
    E[..., 2, 2] = d1
    return E


def eta_inverse(geom: InterfaceGeometry):
    d2, d3, d1 = np.broadcast_arrays(*(np.asarray(x, dtype=float) for x in
                                       (geom.dPsi_2, geom.dPsi_3, geom.d1Phi1)))
    E = np.zeros(d1.shape + (3, 3))
    E[..., 0, 0] = 1.0
    E[..., 0, 1] = d2 / d1
    E[..., 0, 2] = d3 / d1
    E[..., 1, 1] = 1.0 / d1
    E[..., 2, 2] = 1.0 / d1
    return E


def build_eta(geom: InterfaceGeometry):
    return eta_matrix(geom)


def metric_a0(geom: InterfaceGeometry):
    """a0 = (eta^{-1})^T eta^{-1}."""
    Ei = eta_inverse(geom)
    return np.swapaxes(Ei, -1, -2) @ Ei


def r_inverse(geom: InterfaceGeometry):
    """R^{-1} with R = diag(1, eta, eta, 1); it maps (q, u, h, S) back to U."""
    Ei = eta_inverse(geom)
    R = np.zeros(Ei.shape[:-2] + (8, 8))
    R[..., 0, 0] = 1.0
    R[..., V, V] = Ei
    R[..., B, B] = Ei
    R[..., 7, 7] = 1.0
    return R


def hat_velocities(U: PlasmaState, geom: InterfaceGeometry):
    """Return (u, w, h): u = eta v, w = u - (dPsi_t, 0, 0), h = eta H."""
    E = eta_matrix(geom)
    u = np.einsum("...ij,...j->...i", E, np.asarray(U.v, dtype=float))
    h = np.einsum("...ij,...j->...i", E, np.asarray(U.H, dtype=float))
    w = u.copy()
    w[..., 0] = w[..., 0] - np.asarray(geom.dPsi_t, dtype=float)
    return u, w, h


def cal_a_matrix(alpha: int, U: PlasmaState, geom: InterfaceGeometry, eos: EosParams):
    """Coefficient of d_t (alpha=0) or the hat-advective part of d_j
    (alpha=1..3) in the flattened (q, u, h, S) system.

    Obtained as the congruence d1Phi1 R^{-T} A R^{-1}; the constant unit
    couplings between q and u_j are split off into constant_E.
    """
    geom.check()
    rho, rho_p = _thermo(U, eos)
    Ri = r_inverse(geom)
    RiT = np.swapaxes(Ri, -1, -2)
    d1 = np.asarray(geom.d1Phi1, dtype=float)[..., None, None]
    core = RiT @ a0_from_thermo(rho, rho_p, np.asarray(U.H, dtype=float)) @ Ri
    if alpha == 0:
        return d1 * core
    if alpha not in (1, 2, 3):
        raise ValueError("alpha must be in 0..3")
    j = alpha - 1
    _, w, h = hat_velocities(U, geom)
    out = w[..., j, None, None] * core
    a0 = metric_a0(geom)
    out[..., V, B] -= h[..., j, None, None] * a0
    out[..., B, V] -= h[..., j, None, None] * a0
    return out


def build_calA(alpha: int, U: PlasmaState, basic, eos: EosParams) -> MatrixBundle:
    """basic is anything carrying an InterfaceGeometry as .geometry."""
    geom = basic.geometry if hasattr(basic, "geometry") else basic
    return MatrixBundle(mirror_upper(cal_a_matrix(alpha, U, geom, eos)), f"calA{alpha}")


def constant_E(j: int) -> MatrixBundle:
    """E_{1j}: unit couplings between q and u_{j-1}, j in 2..4."""
    if j not in (2, 3, 4):
        raise ValueError("j must be in 2..4")
    E = np.zeros((8, 8))
    E[0, j - 1] = E[j - 1, 0] = 1.0
    return MatrixBundle(E, f"E1{j}")
