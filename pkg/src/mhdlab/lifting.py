"""Fourier-multiplier lifting of a front phi(x') into the half space.

Psi(x1, .) = IFFT[ chi(x1 <xi>) FFT[phi] ] with <xi> = sqrt(1 + |xi|^2) and
chi an even cutoff equal to one on [-1, 1] and vanishing beyond M.
"""
from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_simpson
from scipy.interpolate import CubicSpline

from .errors import InvalidSupport, NotADiffeomorphism
from .plasma import InterfaceGeometry

TABLE_SIZE = 4096


def _bump_exp(t):
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    pos = t > 0
    out[pos] = np.exp(-1.0 / t[pos])
    return out


def smooth_step(x):
    """C-infinity step: 0 for x <= -1, 1 for x >= 1, S(x) + S(-x) = 1."""
    x = np.asarray(x, dtype=float)
    u = _bump_exp((1 + x) / 2)
    v = _bump_exp((1 - x) / 2)
    return u / (u + v)


def smooth_step_prime(x):
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    m = np.abs(x) < 1
    u, v = (1 + x[m]) / 2, (1 - x[m]) / 2
    fu, fv = np.exp(-1 / u), np.exp(-1 / v)
    out[m] = 0.5 * (fu / u ** 2 * fv + fu * fv / v ** 2) / (fu + fv) ** 2
    return out


def _step_integral_table(n=1 << 15):
    x = np.linspace(-1.0, 1.0, n + 1)
    vals = cumulative_simpson(smooth_step(x), x=x, initial=0.0)
    return CubicSpline(x, vals)


_STEP_INTEGRAL = _step_integral_table()


def step_integral(x):
    """int_{-1}^{x} S(y) dy, extended linearly (slope 1) past x = 1."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    mid = (x > -1) & (x < 1)
    out[mid] = _STEP_INTEGRAL(x[mid])
    hi = x >= 1
    out[hi] = 1.0 + (x[hi] - 1.0)
    return out


@dataclass
class CutoffSpec:
    """Even cutoff with plateau [-1, 1] and support [-M, M].

    The profile is a mollified linear ramp: chi' equals -slope on [a, b]
    smoothed over a half-width delta, which keeps |chi'| <= slope.
    """
    M: float
    a: float
    b: float
    delta: float
    slope: float
    s: np.ndarray
    samples: np.ndarray

    def __post_init__(self):
        self._spline = CubicSpline(self.s, self.samples)

    def __call__(self, s):
        if self.delta == 0:
            return self.exact(s)
        s = np.abs(np.asarray(s, dtype=float))
        out = np.zeros_like(s)
        out[s <= 1] = 1.0
        mid = (s > 1) & (s < self.M)
        out[mid] = self._spline(s[mid])
        return out

    def exact(self, s):
        """Closed form through the step integral; used to build the table."""
        s = np.abs(np.asarray(s, dtype=float))
        if self.delta == 0:
            return np.clip(1 - self.slope * (s - self.a), 0.0, 1.0)
        d = self.delta
        return 1 - self.slope * d * (step_integral((s - self.a) / d) - step_integral((s - self.b) / d))

    def derivative(self, s):
        s = np.asarray(s, dtype=float)
        sa = np.abs(s)
        if self.delta == 0:
            d = -self.slope * ((sa > self.a) & (sa < self.b))
        else:
            d = -self.slope * (smooth_step((sa - self.a) / self.delta)
                               - smooth_step((sa - self.b) / self.delta))
        return np.sign(s) * d

    def second_derivative(self, s):
        s = np.asarray(s, dtype=float)
        sa = np.abs(s)
        if self.delta == 0:
            return np.zeros_like(s)
        dl = self.delta
        return -self.slope / dl * (smooth_step_prime((sa - self.a) / dl)
                                   - smooth_step_prime((sa - self.b) / dl))


def make_cutoff(M: float) -> CutoffSpec:
    if not M > 1:
        raise InvalidSupport(f"cutoff support bound must exceed 1, got {M!r}")
    if M >= 2:
        delta = (M - 2) / 4
        a, b = 1 + delta, M - delta
    else:
        # the ramp cannot be shorter than M - 1; the slope bound 2/M is
        # unreachable here and the steepest admissible ramp is used instead
        delta, a, b = 0.0, 1.0, M
    slope = 1.0 / (b - a)
    s = np.linspace(0.0, M, TABLE_SIZE)
    spec = CutoffSpec(M, a, b, delta, slope, s, np.zeros_like(s))
    spec.samples = spec.exact(s)
    spec.__post_init__()
    return spec


@dataclass
class FrontField:
    phi: np.ndarray
    L2: float = 2 * np.pi
    L3: float = 2 * np.pi

    @property
    def shape(self):
        return self.phi.shape

    def spacings(self):
        return self.L2 / self.phi.shape[0], self.L3 / self.phi.shape[1]

    def coords(self):
        n2, n3 = self.phi.shape
        return np.arange(n2) * self.L2 / n2, np.arange(n3) * self.L3 / n3


def wavenumbers(shape, L2, L3, real=True):
    n2, n3 = shape
    k2 = 2 * np.pi * np.fft.fftfreq(n2, L2 / n2)
    k3 = (2 * np.pi * np.fft.rfftfreq(n3, L3 / n3) if real
          else 2 * np.pi * np.fft.fftfreq(n3, L3 / n3))
    return np.meshgrid(k2, k3, indexing="ij")


def japanese_bracket(shape, L2, L3):
    k2, k3 = wavenumbers(shape, L2, L3)
    return np.sqrt(1 + k2 ** 2 + k3 ** 2)


@dataclass
class LiftedFunction:
    psi: np.ndarray
    x1: np.ndarray
    L2: float
    L3: float
    d1psi: np.ndarray = None

    @property
    def h(self):
        n2, n3 = self.psi.shape[1:]
        h1 = self.x1[1] - self.x1[0] if len(self.x1) > 1 else 0.0
        return h1, self.L2 / n2, self.L3 / n3


def _multiplier_apply(phi_hat, mult, shape):
    return np.fft.irfft2(phi_hat * mult, s=shape, axes=(-2, -1))


def lift(phi: FrontField, cutoff: CutoffSpec, x1_grid) -> LiftedFunction:
    """Lift phi to every x1 in x1_grid; the x1-derivative uses the exact
    multiplier chi'(x1 <xi>) <xi>."""
    x1 = np.asarray(x1_grid, dtype=float)
    shape = phi.phi.shape
    ph = np.fft.rfft2(phi.phi)
    jb = japanese_bracket(shape, phi.L2, phi.L3)
    psi = np.empty((len(x1),) + shape)
    d1 = np.empty_like(psi)
    for i, x in enumerate(x1):
        arg = x * jb
        psi[i] = _multiplier_apply(ph, cutoff(arg), shape)
        d1[i] = _multiplier_apply(ph, cutoff.derivative(arg) * jb, shape)
    return LiftedFunction(psi, x1, phi.L2, phi.L3, d1)


def lift_time_series(phis, cutoff: CutoffSpec, x1_grid, L2=2 * np.pi, L3=2 * np.pi):
    """Lift phi(t_k, .) sample by sample; returns an array (Nt, N1, N2, N3)."""
    return np.stack([lift(FrontField(p, L2, L3), cutoff, x1_grid).psi for p in phis])


def wall_normal_derivative(lifted: LiftedFunction):
    """One-sided second-order d_1 Psi at x1 = x1_grid[0]."""
    p = lifted.psi
    h1 = lifted.x1[1] - lifted.x1[0]
    return (-3 * p[0] + 4 * p[1] - p[2]) / (2 * h1)


def sobolev_norm_2d(phi: FrontField, s: float):
    """||phi||_{H^s} on the periodic box, measure dx'."""
    n2, n3 = phi.phi.shape
    F = np.fft.fft2(phi.phi)
    k2, k3 = wavenumbers((n2, n3), phi.L2, phi.L3, real=False)
    w = (1 + k2 ** 2 + k3 ** 2) ** s
    cell = phi.L2 * phi.L3 / (n2 * n3)
    return float(np.sqrt(cell / (n2 * n3) * np.sum(w * np.abs(F) ** 2)))


def sup_normal_derivative(phi: FrontField, cutoff: CutoffSpec, x1_grid):
    """Returns (sup |d_1 Psi|, sup / ||phi||_{H^2}) with the exact multiplier."""
    lifted = lift(phi, cutoff, x1_grid)
    sup = float(np.max(np.abs(lifted.d1psi)))
    return sup, sup / max(sobolev_norm_2d(phi, 2.0), 1e-300)


@dataclass
class Diffeomorphism:
    Phi1: np.ndarray
    d1Phi1: np.ndarray
    dPsi_2: np.ndarray
    dPsi_3: np.ndarray
    dPsi_t: np.ndarray
    min_d1Phi1: float

    def geometry(self) -> InterfaceGeometry:
        return InterfaceGeometry(self.dPsi_t, self.dPsi_2, self.dPsi_3, self.d1Phi1)


def tangential_derivative(f, axis, L):
    """Spectral derivative along a periodic axis."""
    n = f.shape[axis]
    k = 2 * np.pi * np.fft.fftfreq(n, L / n)
    shape = [1] * f.ndim
    shape[axis] = n
    F = np.fft.fft(f, axis=axis) * (1j * k.reshape(shape))
    if n % 2 == 0:
        idx = [slice(None)] * f.ndim
        idx[axis] = n // 2
        F[tuple(idx)] = 0
    return np.real(np.fft.ifft(F, axis=axis))


def build_diffeomorphism(lifted: LiftedFunction, dpsi_t=None) -> Diffeomorphism:
    x1 = lifted.x1[:, None, None]
    d1 = lifted.d1psi
    if d1 is None:
        d1 = np.gradient(lifted.psi, lifted.x1, axis=0, edge_order=2)
    d1Phi1 = 1.0 + d1
    mn = float(np.min(d1Phi1))
    if mn < 0.5:
        raise NotADiffeomorphism(f"min d1Phi1 = {mn:.4g} < 1/2; increase the cutoff bound M")
    d2 = tangential_derivative(lifted.psi, 1, lifted.L2)
    d3 = tangential_derivative(lifted.psi, 2, lifted.L3)
    dt = np.zeros_like(lifted.psi) if dpsi_t is None else np.asarray(dpsi_t, dtype=float)
    return Diffeomorphism(x1 + lifted.psi, d1Phi1, d2, d3, dt, mn)
