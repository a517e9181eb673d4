"""Finite-difference solver for the coupled plasma / vacuum / front problem.

Plasma unknowns (q, u, h, S) live on x1 in [0, L1], vacuum unknowns
(frakH, frakE) on x1 in [-L1, 0], the front phi on the periodic (x2, x3)
torus.  Space uses the second-order summation-by-parts operator in x1 and
periodic central differences tangentially; time uses classical RK4.

The interface is imposed weakly.  At every boundary point a target state
(U*, W*) is built by changing only the incoming characteristic amplitudes
(one plasma, two vacuum) so that the three reformulated interface
conditions hold exactly; both sides are then penalized towards it.  With
the front frozen the semi-discrete energy obeys

    d/dt [(A0 U, U)_P + (M0 W, W)_P] / 2 = -A(U*, W*) - dissipation,

and A(U*, W*) vanishes on the homogeneous conditions.
"""
import os
from dataclasses import dataclass

import numpy as np

from .basic_state import boundary_coefficients, fd_derivative
from .eos import EosParams
from .errors import CflViolated, ConfigError, NanDetected
from .norms import boundary_sobolev_norm, make_conormal_weight
from .plasma import (InterfaceGeometry, PlasmaState, a_matrix, atilde1_matrix, cal_a_matrix,
                     constant_E, r_inverse)
from .stencils import StencilOp
from .vacuum import m4_matrix, m_matrix, metric_g

CFL = 0.4
INTERIOR_SKIP = 2


def thread_count():
    """Worker cap from MHD_LAB_THREADS (defaults to the CPU count)."""
    try:
        return max(1, int(os.environ.get("MHD_LAB_THREADS", os.cpu_count() or 1)))
    except ValueError:
        return 1


@dataclass(frozen=True)
class Grid:
    N1: int
    N2: int
    N3: int
    dt: float
    T: float
    L1: float = 8.0
    L2: float = 2 * np.pi
    L3: float = 2 * np.pi

    def __post_init__(self):
        for n, name in ((self.N2, "N2"), (self.N3, "N3")):
            if n < 4 or n & (n - 1):
                raise ConfigError(f"{name} must be a power of two >= 4, got {n}")
        if self.N1 < 4:
            raise ConfigError("N1 must be at least 4")
        if not (self.dt > 0 and self.T > 0):
            raise ConfigError("dt and T must be positive")

    @property
    def h(self):
        return self.L1 / self.N1, self.L2 / self.N2, self.L3 / self.N3

    @property
    def x1_plus(self):
        return np.linspace(0.0, self.L1, self.N1 + 1)

    @property
    def x1_minus(self):
        return np.linspace(-self.L1, 0.0, self.N1 + 1)

    @property
    def x2(self):
        return np.arange(self.N2) * self.h[1]

    @property
    def x3(self):
        return np.arange(self.N3) * self.h[2]

    @property
    def steps(self):
        return int(round(self.T / self.dt))

    def cfl_limit(self, epsilon):
        return CFL * min(self.h) * min(epsilon, 1.0)

    def check_cfl(self, epsilon):
        lim = self.cfl_limit(epsilon)
        if self.dt > lim * (1 + 1e-12):
            raise CflViolated(f"dt = {self.dt:.4g} exceeds {CFL} min(h) eps = {lim:.4g}")

    @classmethod
    def for_epsilon(cls, N1, N2, N3, T, epsilon, L1=8.0):
        """Largest admissible dt that divides T."""
        g = cls(N1, N2, N3, 1.0, T, L1)
        n = int(np.ceil(T / g.cfl_limit(epsilon) - 1e-9))
        return cls(N1, N2, N3, T / n, T, L1)


@dataclass
class CoupledState:
    U: np.ndarray
    W: np.ndarray
    phi: np.ndarray
    t: float = 0.0

    @classmethod
    def zeros(cls, grid: Grid):
        n = (grid.N1 + 1, grid.N2, grid.N3)
        return cls(np.zeros((8,) + n), np.zeros((6,) + n), np.zeros(n[1:]), 0.0)

    def copy(self):
        return CoupledState(self.U.copy(), self.W.copy(), self.phi.copy(), self.t)


def d1_sbp(u, h, axis=1):
    """Second-order SBP first derivative (norm h diag(1/2, 1, ..., 1, 1/2))."""
    u = np.moveaxis(u, axis, 0)
    out = np.empty_like(u)
    out[1:-1] = (u[2:] - u[:-2]) / (2 * h)
    out[0] = (u[1] - u[0]) / h
    out[-1] = (u[-1] - u[-2]) / h
    return np.moveaxis(out, 0, axis)


def d_periodic(u, axis, h):
    return (np.roll(u, -1, axis=axis) - np.roll(u, 1, axis=axis)) / (2 * h)


def d1_wall(u, h, axis=1):
    """Central x1 derivative with second-order one-sided closures."""
    return np.gradient(u, h, axis=axis, edge_order=2)


def sbp_weights(n, h):
    w = np.full(n, h)
    w[0] = w[-1] = h / 2
    return w


def _mv(M, v):
    return np.einsum("...ij,...j->...i", M, v)


def _eig_split(M, sign, count):
    """Pointwise eigenvectors of symmetric M whose eigenvalues have the given sign."""
    lam, vec = np.linalg.eigh(M)
    tol = 1e-9 * np.max(np.abs(lam), axis=-1, keepdims=True)
    got = np.sum(lam > tol if sign > 0 else lam < -tol, axis=-1)
    if np.any(got != count):
        raise ValueError(f"expected {count} eigenvalues of sign {sign:+d}, found {np.unique(got)}")
    idx = np.argsort(-sign * lam, axis=-1)[..., :count]
    return np.take_along_axis(vec, idx[..., None, :], axis=-1)


def _signed_part(M, sign):
    lam, vec = np.linalg.eigh(M)
    lam = np.where(sign * lam > 0, lam, 0.0)
    return np.einsum("...ik,...k,...jk->...ij", vec, lam, vec)


def characteristic_counts(A_wall, M_wall):
    """(incoming plasma, incoming vacuum) counts at the interface; the plasma
    side lies in x1 > 0 and the vacuum side in x1 < 0."""
    la = np.linalg.eigvalsh(A_wall)
    lm = np.linalg.eigvalsh(M_wall)
    ta = 1e-9 * np.max(np.abs(la), axis=-1, keepdims=True)
    tm = 1e-9 * np.max(np.abs(lm), axis=-1, keepdims=True)
    return np.sum(la > ta, axis=-1), np.sum(lm < -tm, axis=-1)


# ---------------------------------------------------------------- coefficients

def _plasma_zero_order(family, eos, pts, st):
    """d1Phi1 R^{-T} [C R^{-1} + sum_a Atilde_a d_a R^{-1}], C being the
    linearization of the straightened fluxes about the basic state."""
    geom = st.geometry
    Uvec = st.Uhat.as_vector()
    dU = [fd_derivative(lambda *a: family.point(*a).Uhat.as_vector(), pts, k) for k in range(4)]
    flat = (np.allclose(geom.d1Phi1, 1) and np.allclose(geom.dPsi_2, 0)
            and np.allclose(geom.dPsi_3, 0) and np.allclose(geom.dPsi_t, 0))
    if flat and all(np.max(np.abs(d)) < 1e-13 for d in dU):
        return np.zeros(Uvec.shape[:-1] + (8, 8))

    def fluxes(Uv):
        P = PlasmaState.from_vector(Uv)
        return [a_matrix(0, P, eos), atilde1_matrix(P, geom, eos), a_matrix(2, P, eos), a_matrix(3, P, eos)]

    C = np.zeros(Uvec.shape[:-1] + (8, 8))
    tau = 1e-6
    for k in range(8):
        e = np.zeros(8)
        e[k] = tau
        Ap, Am = fluxes(Uvec + e), fluxes(Uvec - e)
        for a in range(4):
            C[..., :, k] += _mv((Ap[a] - Am[a]) / (2 * tau), dU[a])
    Ri = r_inverse(geom)
    Fl = fluxes(Uvec)
    dRi = [fd_derivative(lambda *a: r_inverse(family.point(*a).geometry), pts, k) for k in range(4)]
    inner = C @ Ri + sum(Fl[a] @ dRi[a] for a in range(4))
    return np.asarray(geom.d1Phi1)[..., None, None] * np.swapaxes(Ri, -1, -2) @ inner


def metric_derivatives(family, pts):
    """d G / d(t, x1, x2, x3) stacked on axis -3."""
    return np.stack([fd_derivative(lambda *a: metric_g(family.point(*a).geometry), pts, k)
                     for k in range(4)], axis=-3)


def choose_nu_field(st):
    v = st.vhat
    g = st.geometry
    return np.stack(np.broadcast_arrays(v[..., 1] * g.dPsi_2 + v[..., 2] * g.dPsi_3,
                                        v[..., 1], v[..., 2]), axis=-1)


def interface_rows(bc, G, epsilon):
    """Reformulated interface conditions CU U + CW W + cphi phi = 0.

    Rows: total pressure balance, then the two tangential electric
    conditions with d_t phi eliminated through the kinematic condition.
    Shapes: CU (..., 3, 8), CW (..., 3, 6), cphi (..., 3)."""
    shape = np.shape(bc.d1vN)
    Hc, v, E = bc.point.Hcal, bc.point.vhat, bc.Ehat
    fh = bc.point.frakh
    CU = np.zeros(shape + (3, 8))
    CW = np.zeros(shape + (3, 6))
    CU[..., 0, 0] = 1.0
    CW[..., 0, 1] = -fh[..., 1]
    CW[..., 0, 2] = -fh[..., 2]
    CW[..., 0, 3:] = epsilon * E[..., 0, None] * G[..., 0, :]
    CU[..., 1, 1] = -epsilon * Hc[..., 2]
    CW[..., 1, 4] = 1.0
    CW[..., 1, :3] = epsilon * v[..., 2, None] * G[..., 0, :]
    CU[..., 2, 1] = epsilon * Hc[..., 1]
    CW[..., 2, 5] = 1.0
    CW[..., 2, :3] = -epsilon * v[..., 1, None] * G[..., 0, :]
    cphi = np.stack(np.broadcast_arrays(bc.jump_d1q, epsilon * bc.a1, epsilon * bc.a2), axis=-1)
    return CU, CW, cphi


def wall_metric(bc):
    g = bc.point.geometry
    return metric_g(g)


@dataclass
class SolverSetup:
    """Frozen coefficients of one run, precomputed on the grid."""
    grid: Grid
    epsilon: float
    eos: EosParams
    front_frozen: bool
    plasma: StencilOp
    vacuum: StencilOp
    A0inv: np.ndarray
    A0inv_wall: np.ndarray
    M0inv_wall: np.ndarray
    plus_far: np.ndarray
    minus_far: np.ndarray
    wall: dict
    G_minus: np.ndarray
    A0_plus: np.ndarray
    M0_minus: np.ndarray
    M1_minus: np.ndarray
    nu_minus: np.ndarray

    @property
    def coef(self):
        return self.wall["coef"]


def build_setup(family, grid: Grid, epsilon: float, eos=EosParams(), front_frozen=False):
    """Evaluate and factor the frozen coefficients of a stationary basic state."""
    if not getattr(family, "stationary", True):
        raise ConfigError("the solver needs a time-independent basic state")
    if not 0 < epsilon < 1:
        raise ConfigError("reg.epsilon must lie in (0, 1)")
    grid.check_cfl(epsilon)
    mesh = lambda x1: tuple(p[0] for p in np.meshgrid(np.zeros(1), x1, grid.x2, grid.x3, indexing="ij"))
    pts = mesh(grid.x1_plus)
    st = family.point(*pts)
    geom = st.geometry
    A0 = cal_a_matrix(0, st.Uhat, geom, eos)
    flux = [cal_a_matrix(j, st.Uhat, geom, eos) + constant_E(j + 1).entries for j in (1, 2, 3)]
    A0i = np.linalg.inv(A0)
    C = _plasma_zero_order(family, eos, pts, st)

    ptsm = mesh(grid.x1_minus)
    sm = family.point(*ptsm)
    gm = sm.geometry
    nu = choose_nu_field(sm)
    M0 = m_matrix(0, epsilon, nu, gm)
    Mf = [m_matrix(j, epsilon, nu, gm) for j in (1, 2, 3)]
    M4 = m4_matrix(epsilon, nu, gm, metric_derivatives(family, ptsm))
    M0i = np.linalg.inv(M0)

    bc = boundary_coefficients(family, 0.0, *np.meshgrid(grid.x2, grid.x3, indexing="ij"))
    G = wall_metric(bc)
    CU, CW, cphi = interface_rows(bc, G, epsilon)
    A_wall, M_wall = flux[0][0], Mf[0][-1]
    rU = _eig_split(A_wall, +1, 1)
    rW = _eig_split(M_wall, -1, 2)
    Sinv = np.linalg.inv(np.concatenate([CU @ rU, CW @ rW], axis=-1))
    wall = {"coef": bc, "G": G, "CU": CU, "CW": CW, "cphi": cphi, "rU": rU, "rW": rW,
            "Sinv": Sinv, "A": A_wall, "M": M_wall}
    return SolverSetup(
        grid=grid, epsilon=epsilon, eos=eos, front_frozen=front_frozen,
        plasma=StencilOp([A0i @ C] + [A0i @ F for F in flux], grid.h),
        vacuum=StencilOp([M0i @ M4] + [M0i @ F for F in Mf], grid.h),
        A0inv=A0i, A0inv_wall=A0i[0], M0inv_wall=M0i[-1],
        plus_far=A0i[-1] @ _signed_part(flux[0][-1], -1),
        minus_far=M0i[0] @ _signed_part(Mf[0][0], +1),
        wall=wall, G_minus=metric_g(gm), A0_plus=A0, M0_minus=M0, M1_minus=Mf[0], nu_minus=nu)


# ---------------------------------------------------------------- forcing

def _envelope(t, duration):
    """sin^4(pi t / duration) on [0, duration], zero elsewhere, and its derivative."""
    t = np.asarray(t, dtype=float)
    inside = (t >= 0) & (t <= duration)
    s = np.sin(np.pi * t / duration)
    c = np.cos(np.pi * t / duration)
    return np.where(inside, s ** 4, 0.0), np.where(inside, 4 * s ** 3 * c * np.pi / duration, 0.0)


class Forcing:
    """Separable source F(t, x) = e(t) P(x) for the plasma equations."""

    def __init__(self, profile, duration):
        self.profile = np.asarray(profile, dtype=float)
        self.duration = float(duration)
        self._scaled = None

    def bind(self, setup: SolverSetup):
        self._scaled = np.moveaxis(_mv(setup.A0inv, np.moveaxis(self.profile, 0, -1)), -1, 0)
        return self

    def envelope(self, t):
        return _envelope(t, self.duration)

    def value(self, t):
        return float(self.envelope(t)[0]) * self.profile

    def add_to(self, dU, t):
        e = float(self.envelope(t)[0])
        if e != 0.0:
            dU += e * self._scaled


def compact_forcing(grid: Grid, amplitude=1.0, duration=0.5, support=2.0):
    """Velocity and entropy source supported in x1 <= support.

    Leaving the magnetic and pressure rows free keeps the source compatible
    with the divergence and interface constraints."""
    x1 = grid.x1_plus[:, None, None]
    x2 = grid.x2[None, :, None]
    x3 = grid.x3[None, None, :]
    b = np.where(x1 < support, np.cos(np.pi * x1 / (2 * support)) ** 4, 0.0)
    P = np.zeros((8, grid.N1 + 1, grid.N2, grid.N3))
    P[1] = b * np.cos(x2) * np.cos(x3)
    P[2] = 0.5 * b * np.sin(x2 + x3)
    P[3] = 0.5 * b * np.cos(x2 - 2 * x3)
    P[7] = 0.25 * b * np.sin(x2) * np.sin(x3)
    return Forcing(amplitude * P, duration)


# ---------------------------------------------------------------- stepping

def boundary_targets(setup: SolverSetup, U0, WN, phi):
    """Interface targets (U*, W*); U0: (N2, N3, 8), WN: (N2, N3, 6)."""
    w = setup.wall
    r = _mv(w["CU"], U0) + _mv(w["CW"], WN) + w["cphi"] * phi[..., None]
    amp = -_mv(w["Sinv"], r)
    Us = U0 + w["rU"][..., 0] * amp[..., :1]
    Ws = WN + _mv(w["rW"], amp[..., 1:])
    return Us, Ws


def rhs(setup: SolverSetup, s: CoupledState, forcing=None):
    """Semi-discrete right-hand side; also returns the interface targets."""
    h1, h2, h3 = setup.grid.h
    U, W, phi = s.U, s.W, s.phi
    dU = setup.plasma(U)
    dW = setup.vacuum(W)
    if forcing is not None:
        forcing.add_to(dU, s.t)
    U0 = np.moveaxis(U[:, 0], 0, -1)
    WN = np.moveaxis(W[:, -1], 0, -1)
    ph = np.zeros_like(phi) if setup.front_frozen else phi
    Us, Ws = boundary_targets(setup, U0, WN, ph)
    w = setup.wall
    satU = -_mv(w["A"], U0 - Us) / (h1 / 2)
    satW = _mv(w["M"], WN - Ws) / (h1 / 2)
    dU[:, 0] += np.moveaxis(_mv(setup.A0inv_wall, satU), -1, 0)
    dW[:, -1] += np.moveaxis(_mv(setup.M0inv_wall, satW), -1, 0)
    # far field: incoming characteristics are driven to zero
    dU[:, -1] += np.moveaxis(_mv(setup.plus_far, np.moveaxis(U[:, -1], 0, -1)), -1, 0) / (h1 / 2)
    dW[:, 0] -= np.moveaxis(_mv(setup.minus_far, np.moveaxis(W[:, 0], 0, -1)), -1, 0) / (h1 / 2)
    if setup.front_frozen:
        dphi = np.zeros_like(phi)
    else:
        v = setup.coef.point.vhat
        dphi = (Us[..., 1] - v[..., 1] * d_periodic(phi, 0, h2) - v[..., 2] * d_periodic(phi, 1, h3)
                + phi * setup.coef.d1vN)
    return dU, dW, dphi, (Us, Ws)


def step(setup: SolverSetup, s: CoupledState, forcing=None, index=0, k1=None):
    """One classical RK4 step; k1 may be passed when already evaluated."""
    dt = setup.grid.dt

    def stage(k, c):
        return CoupledState(s.U + c * k[0], s.W + c * k[1], s.phi + c * k[2], s.t + c)

    k1 = rhs(setup, s, forcing) if k1 is None else k1
    k2 = rhs(setup, stage(k1, dt / 2), forcing)
    k3 = rhs(setup, stage(k2, dt / 2), forcing)
    k4 = rhs(setup, stage(k3, dt), forcing)
    comb = lambda i: (k1[i] + 2 * (k2[i] + k3[i]) + k4[i]) * (dt / 6)
    out = CoupledState(s.U + comb(0), s.W + comb(1), s.phi + comb(2), s.t + dt)
    if not (np.isfinite(out.U).all() and np.isfinite(out.W).all() and np.isfinite(out.phi).all()):
        raise NanDetected(f"non-finite values after step {index}")
    return out


def discrete_energy(setup: SolverSetup, s: CoupledState):
    """[(A0 U, U)_P + (M0 W, W)_P] / 2 in the SBP norm."""
    h1, h2, h3 = setup.grid.h
    w = sbp_weights(setup.grid.N1 + 1, h1)[:, None, None] * h2 * h3
    eU = np.einsum("i...,...ij,j...->...", s.U, setup.A0_plus, s.U)
    eW = np.einsum("i...,...ij,j...->...", s.W, setup.M0_minus, s.W)
    return 0.5 * float(np.sum(w * eU) + np.sum(w * eW))


# ---------------------------------------------------------------- diagnostics

def monitor_constraints(setup: SolverSetup, s: CoupledState):
    """Max-norm residuals of the divergence and interface constraints.

    Divergences use the same x1 operator as the scheme, so that the discrete
    identity div curl = 0 carries over to the wall rows.  The *_interior
    entries leave out INTERIOR_SKIP rows at each end of the x1 range."""
    h1, h2, h3 = setup.grid.h
    h = s.U[4:7]
    div = lambda f: d1_sbp(f[0], h1, 0) + d_periodic(f[1], 1, h2) + d_periodic(f[2], 2, h3)
    div_h = div(h)
    G = setup.G_minus
    fh = np.einsum("...ij,j...->i...", G, s.W[:3])
    fe = np.einsum("...ij,j...->i...", G, s.W[3:])
    bc = setup.coef
    H, Hc = bc.point.Hhat, bc.point.Hcal
    phi = s.phi
    plasma_front = (s.U[4, 0] - H[..., 1] * d_periodic(phi, 0, h2) - H[..., 2] * d_periodic(phi, 1, h3)
                    + phi * bc.d1HN)
    vacuum_front = fh[0, -1] - d_periodic(Hc[..., 1] * phi, 0, h2) - d_periodic(Hc[..., 2] * phi, 1, h3)
    m = lambda x: float(np.max(np.abs(x)))
    cut = slice(INTERIOR_SKIP, -INTERIOR_SKIP)
    dfh, dfe = div(fh), div(fe)
    return {"div_h": m(div_h), "div_frakh": m(dfh), "div_frake": m(dfe),
            "plasma_front": m(plasma_front), "vacuum_front": m(vacuum_front),
            "div_h_interior": m(div_h[cut]), "div_frakh_interior": m(dfh[cut]),
            "div_frake_interior": m(dfe[cut])}


def boundary_quadratic_form(U, W, A_wall, M_wall):
    """-(A U, U)/2 + (M1 W, W)/2 pointwise; A_wall is the plasma boundary matrix."""
    return -0.5 * np.einsum("...i,...ij,...j->...", U, A_wall, U) + \
        0.5 * np.einsum("...i,...ij,...j->...", W, M_wall, W)


def boundary_form_expanded(U, W, point, G, epsilon):
    """Closed expansion of the boundary form in the interface unknowns."""
    v = point.vhat
    q, u1 = U[..., 0], U[..., 1]
    H, E = W[..., :3], W[..., 3:]
    HN = np.einsum("...j,...j->...", G[..., 0, :], H)
    EN = np.einsum("...j,...j->...", G[..., 0, :], E)
    return (-q * u1 + (H[..., 2] * E[..., 1] - H[..., 1] * E[..., 2]) / epsilon
            + (v[..., 1] * H[..., 1] + v[..., 2] * H[..., 2]) * HN
            + (v[..., 1] * E[..., 1] + v[..., 2] * E[..., 2]) * EN)


def interface_matrices(point, epsilon, eos=EosParams()):
    """Wall matrices of a single interface point: (A_wall, M1, G, rows).

    `point` is a BoundaryCoefficients sample with scalar fields."""
    st = point.point
    geom = st.geometry
    A_wall = cal_a_matrix(1, st.Uhat, geom, eos) + constant_E(2).entries
    nu = choose_nu_field(st)
    M1 = m_matrix(1, epsilon, nu, geom)
    G = metric_g(geom)
    return A_wall, M1, G, interface_rows(point, G, epsilon)


def homogeneous_solutions(rows, rng, count):
    """Random (U, W) pairs satisfying the interface conditions with phi = 0."""
    CU, CW, _ = rows
    C = np.concatenate([CU, CW], axis=-1)
    _, _, Vt = np.linalg.svd(C)
    null = Vt[3:].T
    X = rng.standard_normal((count, null.shape[1])) @ null.T
    return X[:, :8], X[:, 8:]


# ---------------------------------------------------------------- runs

@dataclass
class RunRecord:
    """Sampled history of one forced run; gamma weights are applied later."""
    t: np.ndarray
    plasma: dict
    vacuum: dict
    front: dict
    traces_n: np.ndarray
    traces_w: np.ndarray
    boundary_form: np.ndarray
    constraints: list
    forcing: dict
    grid: Grid
    epsilon: float


def _space_integrals(X, Xt, w1, dA, grads):
    return {"xx": float(np.sum(w1 * X * X) * dA), "xxt": float(np.sum(w1 * X * Xt) * dA),
            "xtxt": float(np.sum(w1 * Xt * Xt) * dA),
            "grad": float(sum(np.sum(w1 * g * g) for g in grads) * dA)}


def _plasma_grads(U, sigma, h):
    h1, h2, h3 = h
    return [sigma * d1_wall(U, h1), d_periodic(U, 2, h2), d_periodic(U, 3, h3)]


def _vacuum_grads(W, h):
    h1, h2, h3 = h
    return [d1_wall(W, h1), d_periodic(W, 2, h2), d_periodic(W, 3, h3)]


def simulate(setup: SolverSetup, forcing=None, samples=100, state=None, monitor=True):
    """March to T, recording the quantities the energy analysis needs."""
    g = setup.grid
    n = g.steps
    stride = max(1, n // samples)
    s = CoupledState.zeros(g) if state is None else state
    if forcing is not None:
        forcing.bind(setup)
    h = g.h
    w1p = sbp_weights(g.N1 + 1, g.h[0])[:, None, None]
    dA = h[1] * h[2]
    sigma = make_conormal_weight(g.x1_plus).sigma[:, None, None]
    rec = {k: [] for k in ("t", "plasma", "vacuum", "front", "tn", "tw", "bf", "cons")}
    for i in range(n + 1):
        k1 = rhs(setup, s, forcing) if (i < n or i % stride == 0) else None
        if i % stride == 0:
            dU, dW, dphi, (Us, Ws) = k1
            rec["t"].append(s.t)
            rec["plasma"].append(_space_integrals(s.U, dU, w1p, dA, _plasma_grads(s.U, sigma, h)))
            rec["vacuum"].append(_space_integrals(s.W, dW, w1p, dA, _vacuum_grads(s.W, h)))
            grads = [d_periodic(s.phi, 0, h[1]), d_periodic(s.phi, 1, h[2])]
            rec["front"].append(_space_integrals(s.phi, dphi, 1.0, dA, grads))
            rec["tn"].append(np.stack([s.U[0, 0], s.U[1, 0], s.U[4, 0]]))
            rec["tw"].append(s.W[:, -1].copy())
            bf = boundary_quadratic_form(Us, Ws, setup.wall["A"], setup.wall["M"])
            rec["bf"].append(float(np.sum(bf) * dA))
            if monitor:
                rec["cons"].append(monitor_constraints(setup, s))
        if i < n:
            s = step(setup, s, forcing, i, k1)
    fz = {}
    if forcing is not None:
        t = np.asarray(rec["t"])
        e, de = forcing.envelope(t)
        P = forcing.profile
        base = _space_integrals(P, P, w1p, dA, _plasma_grads(P, sigma, h))
        fz = {"xx": e * e * base["xx"], "xxt": e * de * base["xx"], "xtxt": de * de * base["xx"],
              "grad": e * e * base["grad"]}
    stack = lambda L: {k: np.array([d[k] for d in L]) for k in L[0]}
    return RunRecord(np.asarray(rec["t"]), stack(rec["plasma"]), stack(rec["vacuum"]),
                     stack(rec["front"]), np.asarray(rec["tn"]), np.asarray(rec["tw"]),
                     np.asarray(rec["bf"]), rec["cons"], fz, g, setup.epsilon), s


def _trapz(y, t):
    return float(np.trapezoid(y, t))


def weighted_h1(parts, t, gamma, time_derivative=True):
    """Space-time H^1_gamma norm squared of e^{-gamma t} X from sampled pieces.

    With X_g = e^{-g t} X one has |d_t X_g|^2 = e^{-2 g t}(|X_t|^2 - 2 g X.X_t + g^2 |X|^2)."""
    if not parts:
        return 0.0
    w = np.exp(-2 * gamma * t)
    dens = gamma ** 2 * parts["xx"] + parts["grad"]
    if time_derivative:
        dens = dens + parts["xtxt"] - 2 * gamma * parts["xxt"] + gamma ** 2 * parts["xx"]
    return _trapz(w * dens, t)


def weighted_l2(parts, t, gamma):
    return _trapz(np.exp(-2 * gamma * t) * parts["xx"], t) if parts else 0.0


def _trace_half(tr, t, gamma, grid):
    w = np.exp(-gamma * t)
    tot = 0.0
    for k in range(tr.shape[1]):
        tot += boundary_sobolev_norm(w[:, None, None] * tr[:, k], 0.5, gamma, t[-1], grid.L2, grid.L3)
    return tot


def _trace_l2(tr, t, gamma, grid):
    w = np.exp(-2 * gamma * t)
    cell = grid.L2 * grid.L3 / (grid.N2 * grid.N3)
    return _trapz(w * np.sum(tr * tr, axis=(1, 2, 3)) * cell, t)


@dataclass
class EnergyReport:
    gamma: float
    lhs: float
    rhs: float
    boundary_form: float
    constraint_residuals: dict
    pieces: dict

    @property
    def ratio(self):
        return self.lhs / self.rhs if self.rhs > 0 else 0.0


def energy_report(rec: RunRecord, gamma: float) -> EnergyReport:
    t = rec.t
    pU = weighted_h1(rec.plasma, t, gamma)
    pW = weighted_h1(rec.vacuum, t, gamma)
    tn = _trace_half(rec.traces_n, t, gamma, rec.grid)
    tw = _trace_half(rec.traces_w, t, gamma, rec.grid)
    fr = weighted_h1(rec.front, t, gamma)
    lhs = gamma * (pU + pW + tn + tw) + gamma ** 2 * fr
    F = weighted_h1(rec.forcing, t, gamma) if rec.forcing else 0.0
    cons = {}
    for d in rec.constraints:
        for k, v in d.items():
            cons[k] = max(cons.get(k, 0.0), v)
    bf = _trapz(np.exp(-2 * gamma * t) * rec.boundary_form, t)
    return EnergyReport(gamma, lhs, F / gamma, bf, cons,
                        {"plasma_h1tan": pU, "vacuum_h1": pW, "trace_n_h12": tn, "trace_w_h12": tw,
                         "front_h1": fr, "forcing_h1tan": F})


def trace_interpolation_check(rec: RunRecord, gammas=(4.0, 8.0, 16.0)):
    """Both sides of the two trace inequalities for each gamma.

    Returns rows (gamma, lhs1, rhs1, ratio1, lhs2, rhs2, ratio2)."""
    rows = []
    t = rec.t
    for g in gammas:
        l1 = g * _trace_l2(rec.traces_n, t, g, rec.grid) + _trace_half(rec.traces_n, t, g, rec.grid)
        r1 = (weighted_l2(rec.forcing, t, g) if rec.forcing else 0.0) + weighted_h1(rec.plasma, t, g)
        l2 = g * _trace_l2(rec.traces_w, t, g, rec.grid) + _trace_half(rec.traces_w, t, g, rec.grid)
        r2 = weighted_h1(rec.vacuum, t, g)
        q = lambda a, b: a / b if b > 0 else 0.0
        rows.append((g, l1, r1, q(l1, r1), l2, r2, q(l2, r2)))
    return rows


def energy_rows(rec: RunRecord, gamma: float):
    """Per-sample rows of energy.csv at the given gamma."""
    t = rec.t
    w = np.exp(-2 * gamma * t)

    def dens(p):
        return w * (2 * gamma ** 2 * p["xx"] + p["grad"] + p["xtxt"] - 2 * gamma * p["xxt"])

    g = rec.grid
    cell = g.L2 * g.L3 / (g.N2 * g.N3)
    k2 = 2 * np.pi * np.fft.fftfreq(g.N2, g.L2 / g.N2)
    k3 = 2 * np.pi * np.fft.fftfreq(g.N3, g.L3 / g.N3)
    sym = np.sqrt(gamma ** 2 + k2[:, None] ** 2 + k3[None, :] ** 2)
    trace = []
    for i in range(len(t)):
        f = np.concatenate([rec.traces_n[i], rec.traces_w[i]])
        F = np.fft.fft2(f, axes=(-2, -1))
        trace.append(w[i] * cell / (g.N2 * g.N3) * float(np.sum(sym * np.abs(F) ** 2)))
    cols = {"t": t, "plasma_h1tan": dens(rec.plasma), "vacuum_h1": dens(rec.vacuum),
            "trace_h12": np.asarray(trace), "front_h1": dens(rec.front),
            "boundary_form": rec.boundary_form}
    for k, name in (("div_h", "div_h"), ("div_frakh", "div_frakh"), ("div_frake", "div_frake")):
        cols[name] = np.array([c[k] for c in rec.constraints]) if rec.constraints else np.zeros(len(t))
    return cols


def run_energy_experiment(config, family=None, samples=100):
    """Run the forced problem once and evaluate the weighted estimate.

    `config` needs N1, N2, N3, T, epsilon, gamma, forcing_amplitude,
    forcing_family and (optionally) dt; `family` defaults to the state
    family named in the config.  Returns (EnergyReport, RunRecord)."""
    grid = config.grid()
    setup = build_setup(family if family is not None else config.family(), grid, config.epsilon)
    counts = characteristic_counts(setup.wall["A"], setup.wall["M"])
    if not (np.all(counts[0] == 1) and np.all(counts[1] == 2)):
        raise ValueError("interface characteristic counts differ from one plasma and two vacuum modes")
    forcing = None
    if config.forcing_family != "zero" and config.forcing_amplitude != 0:
        forcing = compact_forcing(grid, config.forcing_amplitude, config.forcing_duration)
    rec, _ = simulate(setup, forcing, samples=samples)
    return energy_report(rec, config.gamma), rec


# ---------------------------------------------------------------- equivalence

def box_geometry(amplitude):
    """Periodic lifting Psi = a sin x1 cos x2 cos x3 on the 2 pi box."""
    def geometry(t, x1, x2, x3):
        s1, c1 = np.sin(x1), np.cos(x1)
        s2, c2 = np.sin(x2), np.cos(x2)
        s3, c3 = np.sin(x3), np.cos(x3)
        a = amplitude
        return InterfaceGeometry(0.0 * x1, -a * s1 * s2 * c3, -a * s1 * c2 * s3, 1.0 + a * c1 * c2 * c3)
    return geometry


def _dp(u, axis, h):
    return (np.roll(u, -1, axis=axis) - np.roll(u, 1, axis=axis)) / (2 * h)


def periodic_curl(A, h):
    """Central-difference curl of a field A (3, N, N, N); div of it is zero exactly."""
    d = lambda k, ax: _dp(A[k], ax, h)
    return np.stack([d(2, 1) - d(1, 2), d(0, 2) - d(2, 0), d(1, 0) - d(0, 1)])


def periodic_div(f, h):
    return sum(_dp(f[k], k, h) for k in range(3))


@dataclass
class EquivalenceResult:
    N: int
    discrepancy: float
    div_frakh: float
    div_frake: float


def run_equivalence_experiment(N, T=0.25, epsilon=0.5, amplitude=0.3, v=(0.3, 0.2),
                               seeded_divergence=0.0):
    """Evolve the same vacuum data under the curl-form system and under the
    secondary-symmetrized system on a periodic box; return the max-norm
    discrepancy over the run.

    Data are discretely divergence-free unless seeded_divergence adds a
    gradient field of that amplitude to frakh."""
    h = 2 * np.pi / N
    x = np.arange(N) * h
    X1, X2, X3 = np.meshgrid(x, x, x, indexing="ij")
    T0 = np.zeros_like(X1)
    geometry = box_geometry(amplitude)
    geom = geometry(T0, X1, X2, X3)
    G = metric_g(geom)
    Gi = np.linalg.inv(G)
    nu = np.stack([v[0] * geom.dPsi_2 + v[1] * geom.dPsi_3, v[0] + 0 * X1, v[1] + 0 * X1], axis=-1)
    pts = (T0, X1, X2, X3)
    dG = np.stack([np.zeros_like(G)] + [fd_derivative(lambda *a: metric_g(geometry(*a)), pts, k)
                                         for k in (1, 2, 3)], axis=-3)
    M0i = np.linalg.inv(m_matrix(0, epsilon, nu, geom))
    Mj = [M0i @ m_matrix(j, epsilon, nu, geom) for j in (1, 2, 3)]
    M4 = M0i @ m4_matrix(epsilon, nu, geom, dG)
    from .vacuum import b_matrix
    B0i = np.zeros(G.shape[:-2] + (6, 6))
    B0i[..., :3, :3] = Gi
    B0i[..., 3:, 3:] = Gi
    Bj = [B0i @ b_matrix(j, epsilon) for j in (1, 2, 3)]

    def apply(Ms, W, zero=None):
        out = sum(np.einsum("...ij,j...->i...", Ms[j], _dp(W, j + 1, h)) for j in range(3))
        if zero is not None:
            out = out + np.einsum("...ij,j...->i...", zero, W)
        return -out

    pot = lambda k: np.stack([np.sin(X2 + k) * np.cos(X3), np.cos(X1 - k) * np.sin(X3 + 2 * k),
                              np.sin(X1 + X2 + k)])
    fh = periodic_curl(pot(0.3), h)
    fe = periodic_curl(pot(1.1), h)
    if seeded_divergence:
        chi = np.cos(X1) * np.sin(X2) * np.cos(X3)
        fh = fh + seeded_divergence * np.stack([_dp(chi, k, h) for k in range(3)])
    W = np.concatenate([np.einsum("...ij,j...->i...", Gi, fh), np.einsum("...ij,j...->i...", Gi, fe)])
    Wb, Wm = W.copy(), W.copy()
    dt = CFL * h * epsilon
    n = int(np.ceil(T / dt - 1e-9))
    dt = T / n

    def rk4(f, W):
        k1 = f(W)
        k2 = f(W + dt / 2 * k1)
        k3 = f(W + dt / 2 * k2)
        k4 = f(W + dt * k3)
        return W + dt / 6 * (k1 + 2 * (k2 + k3) + k4)

    worst = 0.0
    for _ in range(n):
        Wb = rk4(lambda w: apply(Bj, w), Wb)
        Wm = rk4(lambda w: apply(Mj, w, M4), Wm)
        worst = max(worst, float(np.max(np.abs(Wb - Wm))))
    gh = lambda W: np.einsum("...ij,j...->i...", G, W)
    return EquivalenceResult(N, worst, float(np.max(np.abs(periodic_div(gh(Wb[:3]), h)))),
                             float(np.max(np.abs(periodic_div(gh(Wb[3:]), h)))))
