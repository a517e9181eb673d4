"""Frozen-coefficient basic states, their constraint checks and the
front-gradient solve.

A family is anything with ``point(t, x1, x2, x3) -> BasicState``; the
arguments broadcast.  Derivatives of basic-state quantities are taken by
fourth-order central differences of the point function, so families only
need to supply values.
"""
from dataclasses import dataclass

import numpy as np

from .eos import EosParams, density_from_total_pressure
from .errors import ConstraintViolated, SingularFrontSystem, StabilityViolated
from .lifting import make_cutoff
from .plasma import InterfaceGeometry, PlasmaState, eta_inverse, eta_matrix, hat_velocities

FD_STEP = 1e-3
CONSTRAINT_TOL = 1e-10
SINGULAR_TOL = 1e-12


def _apply(M, x):
    return np.einsum("...ij,...j->...i", M, x)


@dataclass
class BasicState:
    """Hat quantities at a set of points (all fields broadcast together)."""
    Uhat: PlasmaState
    Hcal: np.ndarray
    geometry: InterfaceGeometry

    @property
    def vhat(self):
        return np.asarray(self.Uhat.v, dtype=float)

    @property
    def Hhat(self):
        return np.asarray(self.Uhat.H, dtype=float)

    def _normal(self, X):
        g = self.geometry
        return X[..., 0] - X[..., 1] * g.dPsi_2 - X[..., 2] * g.dPsi_3

    @property
    def vN(self):
        return self._normal(self.vhat)

    @property
    def HN(self):
        return self._normal(self.Hhat)

    @property
    def HcalN(self):
        return self._normal(np.asarray(self.Hcal, dtype=float))

    def hat_uwh(self):
        """(u, w, h) = (eta v, eta v - (dPsi_t, 0, 0), eta H)."""
        return hat_velocities(self.Uhat, self.geometry)

    @property
    def frakh(self):
        """Contravariant vacuum field eta Hcal = (Hcal_N, d1Phi1 Hcal_2, d1Phi1 Hcal_3)."""
        return _apply(eta_matrix(self.geometry), np.asarray(self.Hcal, dtype=float))

    @property
    def frakH(self):
        """Covariant vacuum field (Hcal_1 d1Phi1, Hcal_tau2, Hcal_tau3)."""
        g = self.geometry
        Hc = np.asarray(self.Hcal, dtype=float)
        return np.stack(np.broadcast_arrays(Hc[..., 0] * g.d1Phi1,
                                            Hc[..., 0] * g.dPsi_2 + Hc[..., 1],
                                            Hc[..., 0] * g.dPsi_3 + Hc[..., 2]), axis=-1)

    def thermo(self, eos: EosParams):
        return density_from_total_pressure(eos, self.Uhat.q, self.Hhat, self.Uhat.S)


class PlanarFamily:
    """Constant fields over a flat front; q may vary with x1 through a callable."""

    def __init__(self, H, Hcal, v, q=1.0, S=0.0):
        self.H = np.asarray(H, dtype=float)
        self.Hcal = np.asarray(Hcal, dtype=float)
        self.v = np.asarray(v, dtype=float)
        self.q = q
        self.S = float(S)
        self.stationary = True

    def front(self, t, x2, x3):
        return np.zeros(np.broadcast_shapes(np.shape(t), np.shape(x2), np.shape(x3)))

    def point(self, t, x1, x2, x3) -> BasicState:
        shape = np.broadcast_shapes(np.shape(t), np.shape(x1), np.shape(x2), np.shape(x3))
        x1 = np.broadcast_to(np.asarray(x1, dtype=float), shape)
        q = self.q(x1) if callable(self.q) else np.full(shape, float(self.q))
        z = np.zeros(shape)
        U = PlasmaState(q, np.broadcast_to(self.v, shape + (3,)),
                        np.broadcast_to(self.H, shape + (3,)), np.full(shape, self.S))
        return BasicState(U, np.broadcast_to(self.Hcal, shape + (3,)),
                          InterfaceGeometry(z, z, z, np.ones(shape)))


class CurvedFamily:
    """Travelling corrugated front phi = a cos(x2) cos(x3 - c t).

    The lifting of phi is exact here: both Fourier modes have <xi> = sqrt 3,
    so Psi = chi(sqrt3 |x1|) phi.  The velocity is (0, 0, c), which makes
    the front move with the fluid (w_1 = 0 everywhere).  The plasma and
    vacuum fields are eta^{-1} applied to constant tangential vectors, so
    both normal components vanish identically and div h = div frakh = 0.
    """

    def __init__(self, amplitude=0.05, speed=0.0, h_tan=(1.0, 0.0), frakh_tan=(0.0, 1.0),
                 q=2.0, S=0.0, M=4.0):
        self.a = float(amplitude)
        self.c = float(speed)
        self.h_tan = np.asarray(h_tan, dtype=float)
        self.frakh_tan = np.asarray(frakh_tan, dtype=float)
        self.q = float(q)
        self.S = float(S)
        self.cutoff = make_cutoff(M)
        self.stationary = self.c == 0.0

    def front(self, t, x2, x3):
        return self.a * np.cos(x2) * np.cos(x3 - self.c * t)

    def _geometry(self, t, x1, x2, x3):
        r3 = np.sqrt(3.0)
        s = r3 * np.abs(x1)
        chi = self.cutoff(s)
        dchi = r3 * np.sign(x1) * self.cutoff.derivative(s)
        ph = self.front(t, x2, x3)
        d2 = -self.a * np.sin(x2) * np.cos(x3 - self.c * t)
        d3 = -self.a * np.cos(x2) * np.sin(x3 - self.c * t)
        return InterfaceGeometry(chi * self.c * -d3, chi * d2, chi * d3, 1.0 + dchi * ph)

    def point(self, t, x1, x2, x3) -> BasicState:
        shape = np.broadcast_shapes(np.shape(t), np.shape(x1), np.shape(x2), np.shape(x3))
        b = lambda x: np.broadcast_to(np.asarray(x, dtype=float), shape)
        g = self._geometry(b(t), b(x1), b(x2), b(x3))
        g = InterfaceGeometry(*(b(f) for f in (g.dPsi_t, g.dPsi_2, g.dPsi_3, g.d1Phi1)))
        Ei = eta_inverse(g)
        h = np.zeros(shape + (3,))
        h[..., 1:] = self.h_tan
        fh = np.zeros(shape + (3,))
        fh[..., 1:] = self.frakh_tan
        v = np.zeros(shape + (3,))
        v[..., 2] = self.c
        U = PlasmaState(np.full(shape, self.q), v, _apply(Ei, h), np.full(shape, self.S))
        return BasicState(U, _apply(Ei, fh), g)


def _pack(st: BasicState):
    """Flatten the hat quantities that enter the boundary coefficients."""
    g = st.geometry
    cols = [st.Uhat.q, st.vN, st.HN]
    cols += [st.Hcal[..., k] for k in range(3)]
    cols += [g.dPsi_2, g.dPsi_3]
    return np.stack(np.broadcast_arrays(*cols), axis=-1)


def fd_derivative(fun, args, index, h=FD_STEP):
    """Fourth-order central difference of fun(*args) in args[index]."""
    def shifted(k):
        a = list(args)
        a[index] = np.asarray(a[index], dtype=float) + k * h
        return fun(*a)
    return (-shifted(2) + 8 * shifted(1) - 8 * shifted(-1) + shifted(-2)) / (12 * h)


@dataclass
class BoundaryCoefficients:
    """Everything the interface conditions need, sampled at x1 = 0."""
    point: BasicState
    phi: np.ndarray
    d1vN: np.ndarray
    d1HN: np.ndarray
    jump_d1q: np.ndarray
    dt_Hcal: np.ndarray
    div_tan_Hcal: np.ndarray
    nu: np.ndarray
    Ehat: np.ndarray
    d2E1: np.ndarray
    d3E1: np.ndarray

    @property
    def a1(self):
        """phi coefficient of the second reformulated vacuum condition."""
        Hc, v = self.point.Hcal, self.point.vhat
        return (-Hc[..., 2] * self.d1vN - self.dt_Hcal[..., 2] + self.d2E1
                - v[..., 2] * self.div_tan_Hcal)

    @property
    def a2(self):
        Hc, v = self.point.Hcal, self.point.vhat
        return (Hc[..., 1] * self.d1vN + self.dt_Hcal[..., 1] + self.d3E1
                + v[..., 1] * self.div_tan_Hcal)

    @property
    def a3(self):
        v = self.point.vhat
        return self.a1 * v[..., 1] + self.a2 * v[..., 2]


def _nu_and_E(st: BasicState):
    v = st.vhat
    g = st.geometry
    nu = np.stack(np.broadcast_arrays(v[..., 1] * g.dPsi_2 + v[..., 2] * g.dPsi_3,
                                      v[..., 1], v[..., 2]), axis=-1)
    return nu, np.cross(np.asarray(st.Hcal, dtype=float), nu)


def boundary_coefficients(family, t, x2, x3) -> BoundaryCoefficients:
    """Sample the interface coefficients of `family` at (t, 0, x2, x3)."""
    x2, x3 = np.broadcast_arrays(np.asarray(x2, float), np.asarray(x3, float))
    t = np.broadcast_to(np.asarray(t, float), x2.shape)
    x1 = np.zeros(x2.shape)
    st = family.point(t, x1, x2, x3)
    packed = lambda *a: _pack(family.point(*a))
    d1 = fd_derivative(packed, (t, x1, x2, x3), 1)
    dt = fd_derivative(packed, (t, x1, x2, x3), 0)
    d2 = fd_derivative(packed, (t, x1, x2, x3), 2)
    d3 = fd_derivative(packed, (t, x1, x2, x3), 3)
    Hc = np.asarray(st.Hcal, dtype=float)
    d1Hc = d1[..., 3:6]
    jump = d1[..., 0] - np.sum(Hc * d1Hc, axis=-1)
    E1 = lambda *a: _nu_and_E(family.point(*a))[1][..., 0]
    nu, E = _nu_and_E(st)
    return BoundaryCoefficients(
        point=st, phi=family.front(t, x2, x3),
        d1vN=d1[..., 1], d1HN=d1[..., 2], jump_d1q=jump,
        dt_Hcal=dt[..., 3:6], div_tan_Hcal=d2[..., 4] + d3[..., 5],
        nu=nu, Ehat=E,
        d2E1=fd_derivative(E1, (t, x1, x2, x3), 2),
        d3E1=fd_derivative(E1, (t, x1, x2, x3), 3))


@dataclass(frozen=True)
class BasicStateBounds:
    K: float
    delta: float
    rho0: float
    rho1: float

    def __post_init__(self):
        for name in ("K", "delta", "rho0", "rho1"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


def _fail(condition, residual, where=None):
    loc = "" if where is None else f" at index {where}"
    raise ConstraintViolated(f"{condition}: residual {residual:.3e}{loc}")


def check_constraints(family, t, x1, x2, x3, eos=EosParams(), tol=CONSTRAINT_TOL):
    """Check positivity in the plasma and the interface conditions.

    Returns a dict of maximal residuals; raises ConstraintViolated naming the
    first failed condition.
    """
    T, X1, X2, X3 = np.meshgrid(t, x1, x2, x3, indexing="ij")
    st = family.point(T, X1, X2, X3)
    th = st.thermo(eos)
    out = {"rho_min": float(np.min(th.rho)), "rho_p_min": float(np.min(th.rho_p))}
    if not (out["rho_min"] > 0 and out["rho_p_min"] > 0):
        _fail("density and its pressure derivative must be positive", min(out["rho_min"], out["rho_p_min"]))
    Tb, X2b, X3b = np.meshgrid(t, x2, x3, indexing="ij")
    b = family.point(Tb, np.zeros(Tb.shape), X2b, X3b)
    dphi_t = fd_derivative(family.front, (Tb, X2b, X3b), 0)
    checks = [
        ("front must move with the normal plasma velocity", dphi_t - b.vN),
        ("normal vacuum field must vanish on the front", b.HcalN),
        ("normal plasma field must vanish on the front", b.HN),
    ]
    for name, r in checks:
        m = float(np.max(np.abs(r)))
        out[name] = m
        if m > tol:
            _fail(name, m, np.unravel_index(np.argmax(np.abs(r)), r.shape))
    return out


def make_planar_state(Hhat, Hcalhat, vhat, qhat_profile=1.0, S=0.0, eos=EosParams()):
    """Validated constant-coefficient state over a flat front."""
    Hhat, Hcalhat, vhat = (np.asarray(x, dtype=float) for x in (Hhat, Hcalhat, vhat))
    if abs(Hhat[0]) > CONSTRAINT_TOL:
        _fail("normal plasma field must vanish on the front", abs(Hhat[0]))
    if abs(Hcalhat[0]) > CONSTRAINT_TOL:
        _fail("normal vacuum field must vanish on the front", abs(Hcalhat[0]))
    if abs(vhat[0]) > CONSTRAINT_TOL:
        _fail("front must move with the normal plasma velocity", abs(vhat[0]))
    fam = PlanarFamily(Hhat, Hcalhat, vhat, qhat_profile, S)
    x1 = np.linspace(0.0, 8.0, 17)
    st = fam.point(0.0, x1, 0.0, 0.0)
    th_ok = True
    try:
        th = st.thermo(eos)
        th_ok = bool(np.all(th.rho > 0) and np.all(th.rho_p > 0))
    except Exception as exc:
        raise ConstraintViolated(f"density and its pressure derivative must be positive: {exc}") from exc
    if not th_ok:
        _fail("density and its pressure derivative must be positive", 0.0)
    return fam


@dataclass
class StabilityReport:
    margin: float
    location: tuple
    cross_norm: np.ndarray
    identity_error: float


def tangential_cross(b: BasicState):
    """H2 Hcal3 - H3 Hcal2."""
    return b.Hhat[..., 1] * b.Hcal[..., 2] - b.Hhat[..., 2] * b.Hcal[..., 1]


def check_stability(family, delta, t=0.0, x2=None, x3=None) -> StabilityReport:
    """|H x Hcal| >= delta on the front, plus the closed form of |H x Hcal|^2
    in terms of the tangential cross product and <grad phi>^2."""
    if x2 is None:
        x2 = np.linspace(0, 2 * np.pi, 32, endpoint=False)
    if x3 is None:
        x3 = np.linspace(0, 2 * np.pi, 32, endpoint=False)
    T, X2, X3 = np.meshgrid(np.atleast_1d(t), x2, x3, indexing="ij")
    b = family.point(T, np.zeros(T.shape), X2, X3)
    cr = np.linalg.norm(np.cross(b.Hhat, b.Hcal), axis=-1)
    g = b.geometry
    bracket2 = 1 + g.dPsi_2 ** 2 + g.dPsi_3 ** 2
    closed = tangential_cross(b) ** 2 * bracket2
    ident = float(np.max(np.abs(cr ** 2 - closed)))
    k = int(np.argmin(cr))
    loc = np.unravel_index(k, cr.shape)
    margin = float(cr.flat[k])
    if margin < delta:
        raise StabilityViolated(f"|H x Hcal| = {margin:.6g} < {delta} at index {loc}")
    return StabilityReport(margin, loc, cr, ident)


@dataclass
class FrontGradientCoefficients:
    """grad_{t,x'} phi = a1 h1 + a2 frakh1 + a3 u1 + a4 phi + gamma a5 phi."""
    a1: np.ndarray
    a2: np.ndarray
    a3: np.ndarray
    a4: np.ndarray
    a5: np.ndarray

    def apply(self, h1, frakh1, u1, phi, gamma):
        c = lambda x: np.asarray(x, dtype=float)[..., None]
        return (self.a1 * c(h1) + self.a2 * c(frakh1) + self.a3 * c(u1)
                + (self.a4 + gamma * self.a5) * c(phi))


def front_system(point: BasicState, d1vN=0.0, d1HN=0.0, div_tan_Hcal=0.0):
    """Matrix and phi column of the kinematic and the two normal-field relations.

    Rows: d_t phi + v'.grad' phi            = u1 + phi d1 v_N
          H'.grad' phi                      = h1 + phi d1 H_N
          Hcal'.grad' phi                   = frakh1 - phi (d2 Hcal2 + d3 Hcal3)
    """
    v, H, Hc = point.vhat, point.Hhat, np.asarray(point.Hcal, dtype=float)
    shape = v.shape[:-1]
    A = np.zeros(shape + (3, 3))
    A[..., 0, 0] = 1.0
    A[..., 0, 1:] = v[..., 1:]
    A[..., 1, 1:] = H[..., 1:]
    A[..., 2, 1:] = Hc[..., 1:]
    c = np.stack(np.broadcast_arrays(np.asarray(d1vN, float) + 0 * A[..., 0, 0],
                                     d1HN, -np.asarray(div_tan_Hcal, float)), axis=-1)
    return A, c


def front_coefficients(point: BasicState, d1vN=0.0, d1HN=0.0, div_tan_Hcal=0.0):
    A, c = front_system(point, d1vN, d1HN, div_tan_Hcal)
    det = A[..., 1, 1] * A[..., 2, 2] - A[..., 1, 2] * A[..., 2, 1]
    if np.any(np.abs(det) < SINGULAR_TOL):
        raise SingularFrontSystem(f"front system determinant {np.min(np.abs(det)):.3e} below {SINGULAR_TOL}")
    Ai = np.linalg.inv(A)
    e = np.eye(3)
    return FrontGradientCoefficients(
        a1=Ai[..., :, 1], a2=Ai[..., :, 2], a3=Ai[..., :, 0],
        a4=_apply(Ai, c), a5=np.broadcast_to(-e[0], Ai.shape[:-1]).copy())


def resolve_front_gradient(point: BasicState, h1, frakh1, u1, phi, gamma=0.0,
                           d1vN=0.0, d1HN=0.0, div_tan_Hcal=0.0):
    """Space-time gradient of the gamma-weighted front from boundary traces."""
    co = front_coefficients(point, d1vN, d1HN, div_tan_Hcal)
    return co.apply(h1, frakh1, u1, phi, gamma)


def reconstruct_traces(point: BasicState, grad, phi, gamma=0.0, d1vN=0.0, d1HN=0.0, div_tan_Hcal=0.0):
    """Inverse of resolve_front_gradient: (h1, frakh1, u1) from the gradient."""
    A, c = front_system(point, d1vN, d1HN, div_tan_Hcal)
    g = np.asarray(grad, dtype=float).copy()
    g[..., 0] = g[..., 0] + gamma * np.asarray(phi, float)
    r = _apply(A, g) - c * np.asarray(phi, float)[..., None]
    return r[..., 1], r[..., 2], r[..., 0]


def transport_residual(family, t, x1, x2, x3, h):
    """Max residual of the plasma-field transport identity with second-order
    central differences of step h."""
    def D(f, idx):
        a = [t, x1, x2, x3]
        ap, am = list(a), list(a)
        ap[idx] = np.asarray(a[idx], float) + h
        am[idx] = np.asarray(a[idx], float) - h
        return (f(*ap) - f(*am)) / (2 * h)
    Hf = lambda *a: family.point(*a).Hhat
    vf = lambda *a: family.point(*a).vhat
    uf = lambda *a: family.point(*a).hat_uwh()[0]
    st = family.point(t, x1, x2, x3)
    u, w, hh = st.hat_uwh()
    dH = [D(Hf, k) for k in range(4)]
    dv = [D(vf, k) for k in range(1, 4)]
    divu = sum(D(uf, k)[..., k - 1] for k in range(1, 4))
    adv = sum(w[..., j, None] * dH[j + 1] for j in range(3))
    stretch = sum(hh[..., j, None] * dv[j] for j in range(3))
    r = dH[0] + (adv - stretch + st.Hhat * divu[..., None]) / np.asarray(st.geometry.d1Phi1)[..., None]
    return float(np.max(np.abs(r)))


def vacuum_curl_residual(family, t, x1, x2, x3, h=FD_STEP):
    """Max |curl frakH| of the covariant vacuum field; zero only for
    fields derived from a potential."""
    f = lambda *a: family.point(*a).frakH
    args = (t, x1, x2, x3)
    d = [fd_derivative(f, args, k, h) for k in (1, 2, 3)]
    curl = np.stack([d[1][..., 2] - d[2][..., 1], d[2][..., 0] - d[0][..., 2],
                     d[0][..., 1] - d[1][..., 0]], axis=-1)
    return float(np.max(np.abs(curl)))


def measure_bounds(family, t, x1, x2, x3, eos=EosParams(), h=FD_STEP):
    """Grid estimate of the size bound K, together with the density floors."""
    T, X1, X2, X3 = np.meshgrid(t, x1, x2, x3, indexing="ij")
    f = lambda *a: _pack(family.point(*a))
    args = (T, X1, X2, X3)
    K = float(np.max(np.abs(f(*args))))
    for k in range(4):
        d = fd_derivative(f, args, k, h)
        K = max(K, float(np.max(np.abs(d))))
    th = family.point(*args).thermo(eos)
    return K, float(np.min(th.rho)), float(np.min(th.rho_p))
