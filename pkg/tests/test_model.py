import numpy as np
import pytest
from hypothesis import given, strategies as st

from stochosc.errors import InvalidModelError, RingTooSmallError, UnsupportedPotentialError
from stochosc.model import (
    CustomPotential,
    OscillatorModel,
    PolynomialPotential,
    QuadraticPotential,
    boltzmann_state,
    build_phase_space,
    build_ring,
    check_fd,
    hamiltonian,
)

from conftest import random_quadratic_model


def assemble_by_hand(M, B, K, Sigma):
    """Element-by-element phase-space assembly, independent of np.block."""
    n = len(M)
    Mi = np.linalg.inv(M)
    A = np.zeros((2 * n, 2 * n))
    Bn = np.zeros((2 * n, n))
    for i in range(n):
        A[i, n + i] = 1.0
        for j in range(n):
            A[n + i, j] = -sum(Mi[i, l] * K[l, j] for l in range(n))
            A[n + i, n + j] = -sum(Mi[i, l] * B[l, j] for l in range(n))
            Bn[n + i, j] = sum(Mi[i, l] * Sigma[l, j] for l in range(n))
    return A, Bn


def quad(M, B, K, Sigma, T=1.0, k=1.0):
    return OscillatorModel(M, B, Sigma, QuadraticPotential(K), T=T, k=k)


class TestPhaseSpace:
    def test_inertial(self, inertial):
        ps = build_phase_space(inertial)
        np.testing.assert_array_equal(ps.A, [[0, 1], [-1, -1]])
        np.testing.assert_array_equal(ps.Bn, [[0], [1]])
        np.testing.assert_array_equal(ps.D, [[0], [1]])
        assert not ps.uses_gradient

    def test_undamped_heavy(self):
        ps = build_phase_space(quad([[2.0]], [[0.0]], [[2.0]], [[1.0]]))
        np.testing.assert_array_equal(ps.A, [[0, 1], [-1, 0]])
        np.testing.assert_array_equal(ps.Bn, [[0], [0.5]])

    def test_two_dof_against_hand_assembly(self):
        M, K, B, S = np.eye(2), np.diag([1.0, 4.0]), np.eye(2), np.eye(2)
        ps = build_phase_space(quad(M, B, K, S))
        A, Bn = assemble_by_hand(M, B, K, S)
        np.testing.assert_allclose(ps.A, A, atol=1e-15)
        np.testing.assert_allclose(ps.Bn, Bn, atol=1e-15)
        np.testing.assert_array_equal(ps.A[2:, :2], -np.diag([1.0, 4.0]))

    @pytest.mark.parametrize("seed", range(10))
    def test_block_round_trip(self, seed):
        rng = np.random.default_rng(seed)
        model = random_quadratic_model(rng)
        n = model.n
        ps = build_phase_space(model)
        np.testing.assert_array_equal(ps.A[:n, :n], 0)
        np.testing.assert_array_equal(ps.A[:n, n:], np.eye(n))
        np.testing.assert_array_equal(ps.Bn[:n], 0)
        np.testing.assert_allclose(-ps.A[n:, :n], model.Minv @ model.K, rtol=0, atol=1e-14)
        np.testing.assert_allclose(-ps.A[n:, n:], model.Minv @ model.B, rtol=0, atol=1e-14)
        A, Bn = assemble_by_hand(model.M, model.B, model.K, model.Sigma)
        np.testing.assert_allclose(ps.A, A, atol=1e-12)
        np.testing.assert_allclose(ps.Bn, Bn, atol=1e-12)

    def test_custom_potential_zeroes_stiffness_block(self):
        pot = CustomPotential(value=lambda x: (x ** 4).sum(-1), gradient=lambda x: 4 * x ** 3)
        model = OscillatorModel([[1.0]], [[1.0]], [[1.0]], pot, T=1.0)
        ps = build_phase_space(model)
        assert ps.uses_gradient
        np.testing.assert_array_equal(ps.A, [[0, 1], [0, -1]])


class TestValidation:
    def test_nonsymmetric_mass(self):
        with pytest.raises(InvalidModelError, match="M"):
            quad([[1, 0.1], [0, 1]], np.eye(2), np.eye(2), np.eye(2))

    def test_indefinite_stiffness(self):
        with pytest.raises(InvalidModelError, match="K"):
            quad(np.eye(2), np.eye(2), np.diag([1.0, -1.0]), np.eye(2))

    def test_singular_noise(self):
        with pytest.raises(InvalidModelError, match="Sigma"):
            quad(np.eye(2), np.eye(2), np.eye(2), [[1, 1], [1, 1]])

    def test_friction_not_dissipative(self):
        with pytest.raises(InvalidModelError, match="B"):
            quad([[1.0]], [[-0.1]], [[1.0]], [[1.0]])

    def test_arrays_are_read_only(self, inertial):
        with pytest.raises(ValueError):
            inertial.M[0, 0] = 2.0


class TestRing:
    def test_three_ring_matrix(self):
        r = build_ring(3, [1, 1, 1], 2.0, 0.5, QuadraticPotential(np.eye(3)), np.eye(3))
        np.testing.assert_array_equal(r.B, [[2, .5, .5], [.5, 2, .5], [.5, .5, 2]])
        np.testing.assert_allclose(np.linalg.eigvalsh(r.B), [1.5, 1.5, 3.0])

    def test_decoupled(self):
        r = build_ring(4, [1, 2, 3, 4], 1.5, 0.0, QuadraticPotential(np.eye(4)), np.eye(4))
        np.testing.assert_array_equal(r.B, 1.5 * np.eye(4))
        np.testing.assert_array_equal(r.M, np.diag([1.0, 2, 3, 4]))

    def test_corners(self):
        r = build_ring(5, np.ones(5), 1.0, 0.25, QuadraticPotential(np.eye(5)), np.eye(5))
        assert r.B[0, 4] == r.B[4, 0] == 0.25
        assert r.B[0, 2] == 0.0

    def test_too_small(self):
        with pytest.raises(RingTooSmallError):
            build_ring(2, [1, 1], 1.0, 0.1, QuadraticPotential(np.eye(2)), np.eye(2))

    @given(N=st.integers(3, 8), beta=st.floats(0.0, 2.0), gamma=st.floats(-1.5, 1.5))
    def test_validity_matches_circulant_eigenvalues(self, N, beta, gamma):
        lam = beta + 2 * gamma * np.cos(2 * np.pi * np.arange(N) / N)
        if abs(lam.min()) < 1e-9:
            return
        pot = QuadraticPotential(np.eye(N))
        if lam.min() > 0:
            build_ring(N, np.ones(N), beta, gamma, pot, np.eye(N))
        else:
            with pytest.raises(InvalidModelError):
                build_ring(N, np.ones(N), beta, gamma, pot, np.eye(N))


class TestBoltzmann:
    def test_inertial_initial(self, inertial):
        s = boltzmann_state(inertial, 0.5)
        np.testing.assert_array_equal(s.cov, 0.5 * np.eye(2))
        np.testing.assert_array_equal(s.mean, 0)

    def test_inertial_target(self, inertial):
        np.testing.assert_array_equal(boltzmann_state(inertial, 1 / 16).cov, np.eye(2) / 16)

    def test_reciprocal_diagonal(self):
        s = boltzmann_state(quad([[2.0]], [[1.0]], [[4.0]], [[1.0]]), 1.0)
        np.testing.assert_allclose(s.cov, np.diag([0.25, 0.5]))

    def test_custom_unsupported(self):
        model = OscillatorModel([[1.0]], [[1.0]], [[1.0]], PolynomialPotential((0, 0, 0, 0, 1)), T=1.0)
        with pytest.raises(UnsupportedPotentialError):
            boltzmann_state(model, 1.0)

    @pytest.mark.parametrize("seed", range(5))
    def test_positive_definite(self, seed):
        model = random_quadratic_model(np.random.default_rng(seed))
        assert np.linalg.eigvalsh(boltzmann_state(model, 0.3).cov).min() > 0


class TestFluctuationDissipation:
    def test_holds_at_half(self, inertial):
        fd = check_fd(inertial)
        assert fd.holds
        np.testing.assert_array_equal(fd.residual, [[0.0]])

    def test_fails_at_one(self, inertial):
        fd = check_fd(inertial.replace(T=1.0))
        assert not fd.holds
        np.testing.assert_array_equal(fd.residual, [[-1.0]])

    @given(st.floats(-3, 3), st.floats(0.1, 3))
    def test_skew_part_irrelevant(self, s, T):
        B = np.eye(2)
        S = np.array([[0.0, s], [-s, 0.0]])
        base = quad(np.eye(2), B, np.eye(2), np.sqrt(2 * T) * np.eye(2), T=T)
        twisted = base.replace(B=B + S)
        a, b = check_fd(base), check_fd(twisted)
        assert a.holds and b.holds
        np.testing.assert_allclose(a.residual, b.residual, atol=1e-14)


class TestHamiltonian:
    def test_origin(self, inertial):
        assert hamiltonian(inertial, [0.0], [0.0]) == 0.0

    def test_unit_point(self, inertial):
        assert hamiltonian(inertial, [1.0], [1.0]) == pytest.approx(1.0)

    def test_heavy_stiff(self):
        assert hamiltonian(quad([[2.0]], [[1.0]], [[8.0]], [[1.0]]), [1.0], [1.0]) == pytest.approx(5.0)

    @given(st.lists(st.floats(-1e3, 1e3), min_size=4, max_size=4))
    def test_nonnegative(self, xv):
        model = random_quadratic_model(np.random.default_rng(1), n=2)
        assert hamiltonian(model, xv[:2], xv[2:]) >= 0

    def test_polynomial_gradient_matches_finite_difference(self):
        pot = PolynomialPotential((0.0, 0.0, -1.0, 0.0, 0.5))
        x = np.array([0.3, -1.2, 2.0])
        h = 1e-6
        fd = np.array([(pot.value(x + h * e) - pot.value(x - h * e)) / (2 * h) for e in np.eye(3)])
        np.testing.assert_allclose(pot.gradient(x), fd, rtol=1e-7)
