"""Discrete gamma-weighted Sobolev and conormal norms.

All norm functions return squared norms, which is how they enter energy
balances.
"""
from dataclasses import dataclass
from itertools import product

import numpy as np

from .lifting import step_integral


@dataclass(frozen=True)
class NormSpec:
    gamma: float
    order: float
    flavor: str = "sobolev_weighted"

    def __post_init__(self):
        if self.gamma < 1:
            raise ValueError("gamma must be >= 1")
        if self.flavor not in ("sobolev_weighted", "conormal"):
            raise ValueError(f"unknown flavor {self.flavor!r}")


def _freqs(shape, lengths):
    ks = [2 * np.pi * np.fft.fftfreq(n, L / n) for n, L in zip(shape, lengths)]
    return np.meshgrid(*ks, indexing="ij")


def weighted_sobolev_norm(u, spec: NormSpec, lengths=None):
    """(2 pi)^{-n} int (gamma^2 + |xi|^2)^s |u^(xi)|^2 d xi on a periodic box.

    Discretely this is sum_k (gamma^2 + |k|^2)^s |U_k|^2 * cell / N.
    """
    if spec.flavor != "sobolev_weighted":
        raise ValueError("spec.flavor must be sobolev_weighted")
    u = np.asarray(u)
    if lengths is None:
        lengths = (2 * np.pi,) * u.ndim
    F = np.fft.fftn(u)
    ks = _freqs(u.shape, lengths)
    xi2 = sum(k ** 2 for k in ks)
    N = u.size
    cell = np.prod(lengths) / N
    return float(cell / N * np.sum((spec.gamma ** 2 + xi2) ** spec.order * np.abs(F) ** 2))


def multi_indices(dim, order):
    return [a for a in product(range(order + 1), repeat=dim) if sum(a) <= order]


def derivative_sum_norm(u, s: int, gamma: float, lengths=None):
    """sum_{|alpha| <= s} gamma^{2(s-|alpha|)} ||d^alpha u||^2 with spectral derivatives."""
    u = np.asarray(u)
    if lengths is None:
        lengths = (2 * np.pi,) * u.ndim
    F = np.fft.fftn(u)
    ks = _freqs(u.shape, lengths)
    N = u.size
    cell = np.prod(lengths) / N
    total = 0.0
    for a in multi_indices(u.ndim, s):
        sym = np.ones(u.shape)
        for k, p in zip(ks, a):
            sym = sym * k ** (2 * p)
        total += gamma ** (2 * (s - sum(a))) * cell / N * np.sum(sym * np.abs(F) ** 2)
    return float(total)


@dataclass
class ConormalWeight:
    x1: np.ndarray
    sigma: np.ndarray
    x_star: float


def make_conormal_weight(x1, x_star: float = 1.0) -> ConormalWeight:
    """sigma = x1 up to x*/2, then bends smoothly to 1 and stays there.

    sigma is the primitive of g with g = 1 on [0, x*/2] followed by a smooth
    drop to 0 over a length chosen so that the primitive lands exactly on 1.
    That requires 0.8 <= x* < 2.
    """
    if not 0.8 <= x_star < 2:
        raise ValueError("x_star must lie in [0.8, 2)")
    x1 = np.asarray(x1, dtype=float)
    ell = 2.0 - x_star
    tau = np.clip((np.abs(x1) - x_star / 2) / ell, 0.0, 1.0)
    J = tau - 0.5 * step_integral(2 * tau - 1)
    sig = np.where(np.abs(x1) <= x_star / 2, np.abs(x1), x_star / 2 + ell * J)
    return ConormalWeight(x1, sig, x_star)


def _periodic_central(u, axis, h):
    return (np.roll(u, -1, axis=axis) - np.roll(u, 1, axis=axis)) / (2 * h)


def _trapezoid_weights(n, h):
    w = np.full(n, h)
    w[0] = w[-1] = h / 2
    return w


def conormal_norm(u, spec: NormSpec, weight: ConormalWeight, spacings, dt=None):
    """sum_{|alpha| <= m} gamma^{2(m-|alpha|)} ||Z^alpha u||^2.

    u has shape (..., N1, N2, N3); with dt given, axis 0 is time and Z_0 = d_t
    joins the family.  Leading component axes are summed.  Z_1 = sigma d_1
    uses second-order central differences, one-sided at the walls.
    """
    u = np.asarray(u, dtype=float)
    m = int(spec.order)
    h1, h2, h3 = spacings
    nd = u.ndim
    ax1, ax2, ax3 = nd - 3, nd - 2, nd - 1
    sig_shape = [1] * nd
    sig_shape[ax1] = -1
    sig = weight.sigma.reshape(sig_shape)

    ops = []
    if dt is not None:
        ops.append(lambda f: np.gradient(f, dt, axis=0, edge_order=2))
    ops.append(lambda f: sig * np.gradient(f, h1, axis=ax1, edge_order=2))
    ops.append(lambda f: _periodic_central(f, ax2, h2))
    ops.append(lambda f: _periodic_central(f, ax3, h3))

    w1 = _trapezoid_weights(u.shape[ax1], h1).reshape(sig_shape)
    vol = w1 * h2 * h3
    if dt is not None:
        wt_shape = [1] * nd
        wt_shape[0] = -1
        vol = vol * _trapezoid_weights(u.shape[0], dt).reshape(wt_shape)

    total = 0.0
    for a in multi_indices(len(ops), m):
        f = u
        for op, p in zip(ops, a):
            for _ in range(p):
                f = op(f)
        total += spec.gamma ** (2 * (m - sum(a))) * float(np.sum(vol * f * f))
    return total


def boundary_sobolev_norm(f, s: float, gamma: float, T: float, L2=2 * np.pi, L3=2 * np.pi):
    """H^s_gamma norm squared of f(t, x') sampled at Nt uniform times on [0, T].

    Time is made periodic by even reflection about t = T, which avoids an
    artificial jump at the end of the window; the result is halved to
    account for the doubled interval.  Data vanishing at t = 0 meet the
    zero past smoothly.
    """
    f = np.asarray(f, dtype=float)
    ext = np.concatenate([f, f[-2:0:-1]], axis=0)
    return 0.5 * weighted_sobolev_norm(ext, NormSpec(gamma, s), (2 * T, L2, L3))


def l2_boundary_norm(f, T: float, L2=2 * np.pi, L3=2 * np.pi):
    f = np.asarray(f, dtype=float)
    n2, n3 = f.shape[1:]
    dt = T / (f.shape[0] - 1)
    wt = _trapezoid_weights(f.shape[0], dt)[:, None, None]
    return float(np.sum(wt * f * f) * L2 * L3 / (n2 * n3))
