import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from mhdlab.basic_state import boundary_coefficients, make_planar_state, reconstruct_traces, resolve_front_gradient
from mhdlab.eos import EosParams, density
from mhdlab.lifting import FrontField, lift, make_cutoff
from mhdlab.norms import NormSpec, weighted_sobolev_norm
from mhdlab.plasma import InterfaceGeometry, PlasmaState, build_A, build_calA
from mhdlab.solver import boundary_quadratic_form, homogeneous_solutions, interface_matrices
from mhdlab.vacuum import RegularizationParams, b_matrix, det_frakB1, det_M1_formula, frakb_matrix, m_matrix

real = lambda lo, hi: st.floats(lo, hi, allow_nan=False, allow_infinity=False)
vec3 = lambda lo, hi: st.tuples(real(lo, hi), real(lo, hi), real(lo, hi)).map(np.array)
EOS = EosParams()


@st.composite
def plasma_states(draw):
    H = draw(vec3(-2, 2))
    p = draw(real(0.1, 5))
    return PlasmaState(p + 0.5 * H @ H, draw(vec3(-2, 2)), H, draw(real(-1, 1)))


@st.composite
def geometries(draw, flat_jacobian=False):
    d1 = 1.0 if flat_jacobian else draw(real(0.5, 3))
    return InterfaceGeometry(draw(real(-1, 1)), draw(real(-1, 1)), draw(real(-1, 1)), d1)


@st.composite
def admissible_nu(draw):
    eps = draw(real(0.01, 0.95))
    d = draw(vec3(-1, 1).filter(lambda v: np.linalg.norm(v) > 0.1))
    return eps, d / np.linalg.norm(d) * draw(real(0.0, 0.95)) / eps


@given(real(0.01, 100), real(-2, 2))
def test_density_derivative(p, S):
    th = density(EOS, p, S)
    d = 1e-6 * p
    fd = (density(EOS, p + d, S).rho - density(EOS, p - d, S).rho) / (2 * d)
    assert abs(fd - th.rho_p) <= 1e-6 * th.rho_p


@given(plasma_states())
def test_A0_symmetric_positive(U):
    A0 = build_A(0, U, EOS)
    assert A0.asymmetry() == 0.0
    assert np.linalg.eigvalsh(A0.entries)[0] > 0


@given(plasma_states(), geometries(), st.integers(0, 3))
def test_calA_symmetric(U, g, a):
    M = build_calA(a, U, g, EOS)
    assert M.asymmetry() <= 1e-12
    if a == 0:
        assert np.linalg.eigvalsh(M.entries)[0] > 0


@given(real(0.01, 2.0), vec3(-3, 3))
def test_frakB0_spectrum(eps, nu):
    lam = np.linalg.eigvalsh(frakb_matrix(0, eps, nu))
    assert abs(lam[0] - (1 - eps * np.linalg.norm(nu))) <= 1e-12 * (1 + eps * np.linalg.norm(nu))


@given(admissible_nu())
def test_det_frakB1(en):
    eps, nu = en
    ref = det_frakB1(RegularizationParams(eps, nu))
    num = np.linalg.det(frakb_matrix(1, eps, nu))
    assert abs(num - ref) <= 1e-10 * abs(ref) + 1e-12 * eps ** -6


@given(admissible_nu(), geometries(flat_jacobian=True))
def test_det_M1(en, g):
    eps, nu = en
    ref = det_M1_formula(RegularizationParams(eps, nu), g.dPsi_2, g.dPsi_3)
    M1 = m_matrix(1, eps, nu, g)
    num = np.linalg.det(M1)
    assert abs(num - ref) <= 1e-8 * abs(ref) + 1e-12 * np.max(np.abs(M1)) ** 6


@given(real(0.01, 1.0), st.integers(1, 3))
def test_B_spectrum(eps, j):
    lam = np.linalg.eigvalsh(b_matrix(j, eps))
    np.testing.assert_allclose(lam, np.array([-1, -1, 0, 0, 1, 1]) / eps, atol=1e-12 / eps)


@settings(max_examples=25, deadline=None)
@given(st.lists(real(-1, 1), min_size=6, max_size=6), real(1.5, 32))
def test_lift_trace(coef, M):
    n = 16
    x = np.arange(n) * 2 * np.pi / n
    X2, X3 = np.meshgrid(x, x, indexing="ij")
    a = coef
    phi = a[0] * np.cos(X2) + a[1] * np.sin(X3) + a[2] * np.cos(X2 + 2 * X3) + a[3] * np.sin(3 * X2) \
        + a[4] * np.cos(2 * X2 - X3) + a[5]
    L = lift(FrontField(phi), make_cutoff(M), [0.0])
    assert np.max(np.abs(L.psi[0] - phi)) <= 1e-12


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 31), real(1, 10), real(0, 2))
def test_sobolev_norm_monotone(seed, gamma, s):
    u = np.random.default_rng(seed).normal(size=(8, 8))
    a = weighted_sobolev_norm(u, NormSpec(gamma, s))
    assert weighted_sobolev_norm(u, NormSpec(2 * gamma, s)) >= a
    assert weighted_sobolev_norm(u, NormSpec(gamma, s + 0.5)) >= a


@st.composite
def planar_states(draw):
    """Tangential fields at an angle in [0.3, pi - 0.3], so |H x Hcal| stays away from zero."""
    r, a = draw(real(0.2, 1)), draw(real(0, 2 * np.pi))
    rc, b = draw(real(0.2, 1)), a + draw(real(0.3, np.pi - 0.3))
    v = draw(st.tuples(real(-1, 1), real(-1, 1)))
    return make_planar_state((0, r * np.cos(a), r * np.sin(a)), (0, rc * np.cos(b), rc * np.sin(b)),
                             (0, *v), 3.0)


@settings(max_examples=15, deadline=None)
@given(planar_states(), real(1e-3, 0.9), st.integers(0, 2 ** 31))
def test_boundary_form_vanishes_on_the_interface_conditions(fam, eps, seed):
    bc = boundary_coefficients(fam, 0.0, np.array(0.0), np.array(0.0))
    if eps * np.linalg.norm(bc.nu) >= 1:
        eps = 0.5 / np.linalg.norm(bc.nu)
    A, M1, _, rows = interface_matrices(bc, eps)
    U, W = homogeneous_solutions(rows, np.random.default_rng(seed), 20)
    form = boundary_quadratic_form(U, W, A, M1)
    assert np.max(np.abs(form) / (np.sum(U * U, 1) + np.sum(W * W, 1))) <= 1e-10


@settings(max_examples=50, deadline=None)
@given(planar_states(), st.lists(real(-1, 1), min_size=5, max_size=5))
def test_front_gradient_round_trip(fam, x):
    pt = fam.point(0.0, 0.0, 0.0, 0.0)
    g = resolve_front_gradient(pt, *x[:4], gamma=x[4])
    np.testing.assert_allclose(reconstruct_traces(pt, g, x[3], x[4]), x[:3], atol=1e-10)
