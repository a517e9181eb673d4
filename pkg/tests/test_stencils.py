import numpy as np
import pytest

from mhdlab.solver import d1_sbp, d_periodic, sbp_weights
from mhdlab.stencils import StencilOp

SHAPE = (9, 8, 4)
H = (0.5, 2 * np.pi / 8, 2 * np.pi / 4)


def reference(mats, u):
    """Plain numpy evaluation of -(P0 u + P1 D1 u + P2 D2 u + P3 D3 u)."""
    ders = [u, d1_sbp(u, H[0], 1), d_periodic(u, 2, H[1]), d_periodic(u, 3, H[2])]
    out = np.zeros_like(u)
    for P, d in zip(mats, ders):
        if P.ndim == 2:
            out -= np.einsum("ij,j...->i...", P, d)
        else:
            out -= np.einsum("...ij,j...->i...", P, d)
    return out


def test_constant_coefficients(rng):
    mats = [rng.normal(size=(5, 5)) * (rng.random((5, 5)) < 0.5) for _ in range(4)]
    u = rng.normal(size=(5,) + SHAPE)
    op = StencilOp(mats, H)
    assert op.const
    np.testing.assert_allclose(op(u), reference(mats, u), atol=1e-12)


def test_variable_coefficients(rng):
    mats = [rng.normal(size=SHAPE + (4, 4)) for _ in range(4)]
    u = rng.normal(size=(4,) + SHAPE)
    op = StencilOp(mats, H)
    assert not op.const
    np.testing.assert_allclose(op(u), reference(mats, u), atol=1e-12)


def test_uniform_arrays_take_the_sparse_path(rng):
    M = rng.normal(size=(3, 3))
    mats = [np.broadcast_to(M, SHAPE + (3, 3)).copy() for _ in range(4)]
    u = rng.normal(size=(3,) + SHAPE)
    op = StencilOp(mats, H)
    assert op.const
    np.testing.assert_allclose(op(u), reference([M] * 4, u), atol=1e-12)


def test_sbp_property(rng):
    """u^T W D v + (D u)^T W v = u_N v_N - u_0 v_0."""
    n, h = 17, 0.3
    u, v = rng.normal(size=n), rng.normal(size=n)
    w = sbp_weights(n, h)
    lhs = u @ (w * d1_sbp(v, h, 0)) + d1_sbp(u, h, 0) @ (w * v)
    assert lhs == pytest.approx(u[-1] * v[-1] - u[0] * v[0], abs=1e-12)


def test_periodic_difference_exact_on_resolved_mode():
    n = 16
    x = np.arange(n) * 2 * np.pi / n
    d = d_periodic(np.sin(x), 0, 2 * np.pi / n)
    np.testing.assert_allclose(d, np.cos(x) * np.sin(2 * np.pi / n) / (2 * np.pi / n), atol=1e-14)
