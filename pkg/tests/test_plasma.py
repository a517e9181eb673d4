import numpy as np
import pytest

from conftest import random_geometry, random_plasma_state
from mhdlab.basic_state import CurvedFamily
from mhdlab.eos import density_from_total_pressure
from mhdlab.errors import DegenerateJacobian, NonPositivePressure
from mhdlab.plasma import (InterfaceGeometry, PlasmaState, build_A, build_Atilde1, build_calA,
                           build_eta, constant_E, eta_inverse, r_inverse)

FLAT = InterfaceGeometry()


def hand_built_A(j, U, rho, rho_p):
    """Second, independent assembly of the flux matrices from the block layout."""
    H, v = np.asarray(U.H), np.asarray(U.v)
    r = rho_p / rho
    A0 = np.zeros((8, 8))
    A0[0, 0] = r
    for k in range(3):
        A0[0, 4 + k] = A0[4 + k, 0] = -r * H[k]
        A0[1 + k, 1 + k] = rho
        for m in range(3):
            A0[4 + k, 4 + m] = (k == m) + r * H[k] * H[m]
    A0[7, 7] = 1.0
    if j == 0:
        return A0
    A = v[j - 1] * A0
    A[0, j] += 1.0
    A[j, 0] += 1.0
    for k in range(3):
        A[1 + k, 4 + k] -= H[j - 1]
        A[4 + k, 1 + k] -= H[j - 1]
    return A


def test_A0_without_field(eos):
    U = PlasmaState(1.0, np.zeros(3), np.zeros(3), 0.0)
    np.testing.assert_allclose(build_A(0, U, eos).entries, np.diag([0.6, 1, 1, 1, 1, 1, 1, 1]), atol=1e-15)


def test_flux_matrices_match_hand_assembly(eos, rng):
    for _ in range(20):
        U = random_plasma_state(rng)
        th = density_from_total_pressure(eos, U.q, U.H, U.S)
        for j in range(4):
            M = build_A(j, U, eos).entries
            np.testing.assert_allclose(M, hand_built_A(j, U, float(th.rho), float(th.rho_p)), atol=1e-14)
            assert np.array_equal(M, M.T)


def test_A2_divergence_slot(eos):
    U = PlasmaState(1.0, np.zeros(3), np.zeros(3), 0.0)
    assert build_A(2, U, eos).entries[0, 2] == 1.0


def test_A0_positive_definite(eos, rng):
    for _ in range(50):
        assert np.linalg.eigvalsh(build_A(0, random_plasma_state(rng), eos).entries)[0] > 0


def test_A_rejects_nonpositive_pressure(eos):
    with pytest.raises(NonPositivePressure):
        build_A(0, PlasmaState(0.4, np.zeros(3), np.array([1.0, 0, 0]), 0.0), eos)


def test_Atilde1_flat_equals_A1(eos, rng):
    U = random_plasma_state(rng)
    np.testing.assert_array_equal(build_Atilde1(U, FLAT, eos).entries, build_A(1, U, eos).entries)


def test_Atilde1_moving_front(eos, rng):
    U = random_plasma_state(rng)
    got = build_Atilde1(U, InterfaceGeometry(dPsi_t=1.0), eos).entries
    np.testing.assert_allclose(got, build_A(1, U, eos).entries - build_A(0, U, eos).entries, atol=1e-14)


def test_Atilde1_linear_combination(eos, rng):
    for _ in range(20):
        U, g = random_plasma_state(rng), random_geometry(rng)
        A = [build_A(k, U, eos).entries for k in range(4)]
        ref = (A[1] - g.dPsi_t * A[0] - g.dPsi_2 * A[2] - g.dPsi_3 * A[3]) / g.d1Phi1
        M = build_Atilde1(U, g, eos)
        assert np.max(np.abs(M.entries - ref)) <= 1e-14 * max(1, np.max(np.abs(ref)))
        assert M.asymmetry() <= 1e-12


def test_eta_flat_is_identity():
    np.testing.assert_array_equal(build_eta(FLAT), np.eye(3))


def test_eta_first_column():
    E = build_eta(InterfaceGeometry(0.0, 0.3, -0.1, 1.0))
    np.testing.assert_array_equal(E @ [1.0, 0, 0], [1.0, 0, 0])


def test_eta_componentwise(rng):
    for _ in range(20):
        g = random_geometry(rng)
        H = rng.normal(size=3)
        HN = H[0] - H[1] * g.dPsi_2 - H[2] * g.dPsi_3
        np.testing.assert_allclose(build_eta(g) @ H, [HN, H[1] * g.d1Phi1, H[2] * g.d1Phi1], atol=1e-15)
        np.testing.assert_allclose(eta_inverse(g) @ build_eta(g), np.eye(3), atol=1e-14)


def test_r_inverse_recovers_physical_unknowns(rng):
    g = random_geometry(rng)
    U = rng.normal(size=8)
    E = build_eta(g)
    flat = np.concatenate([[U[0]], E @ U[1:4], E @ U[4:7], [U[7]]])
    np.testing.assert_allclose(r_inverse(g) @ flat, U, atol=1e-14)


def test_calA1_vanishes_on_the_front(eos, planar):
    st = planar.point(0.0, 0.0, 0.3, 1.2)
    np.testing.assert_array_equal(build_calA(1, st.Uhat, st, eos).entries, np.zeros((8, 8)))


def test_calA1_vanishes_on_a_curved_front(eos):
    fam = CurvedFamily()
    st = fam.point(0.0, 0.0, 0.7, 1.9)
    M = build_calA(1, st.Uhat, st, eos).entries
    assert np.max(np.abs(M)) <= 1e-14


def test_calA0_flat_without_field(eos):
    U = PlasmaState(1.0, np.zeros(3), np.zeros(3), 0.0)
    M = build_calA(0, U, FLAT, eos).entries
    np.testing.assert_allclose(M, np.diag([0.6, 1, 1, 1, 1, 1, 1, 1]), atol=1e-15)


def test_calA_symmetric_and_calA0_positive(eos, rng):
    for _ in range(50):
        U, g = random_plasma_state(rng), random_geometry(rng)
        for a in range(4):
            assert build_calA(a, U, g, eos).asymmetry() <= 1e-12
        assert np.linalg.eigvalsh(build_calA(0, U, g, eos).entries)[0] > 0


def test_calA_rejects_degenerate_jacobian(eos, rng):
    with pytest.raises(DegenerateJacobian):
        build_calA(0, random_plasma_state(rng), InterfaceGeometry(d1Phi1=0.4), eos)


@pytest.mark.parametrize("j", [2, 3, 4])
def test_constant_E_pattern(j):
    E = constant_E(j).entries
    ref = np.zeros((8, 8))
    ref[0, j - 1] = ref[j - 1, 0] = 1.0
    np.testing.assert_array_equal(E, ref)


def test_E12_spectrum():
    lam = np.linalg.eigvalsh(constant_E(2).entries)
    np.testing.assert_allclose(lam, [-1, 0, 0, 0, 0, 0, 0, 1], atol=1e-15)


def test_bad_indices(eos, rng):
    with pytest.raises(ValueError):
        build_A(4, random_plasma_state(rng), eos)
    with pytest.raises(ValueError):
        constant_E(1)
