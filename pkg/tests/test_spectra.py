import numpy as np
import pytest
from numpy.testing import assert_allclose

from curvflow import spectra
from curvflow.spectra import (HermitianMatrix, Positivity, classify_field,
                              eigenvalues_ascending, lambda12, lambda12_variational)


def random_hermitian(rng, r):
    g = rng.standard_normal((r, r)) + 1j * rng.standard_normal((r, r))
    return (g + g.conj().T) / 2


def charpoly_roots(a):
    """Independent eigenvalue oracle: characteristic polynomial by the
    Faddeev-LeVerrier trace recurrence, roots by the companion matrix."""
    a = np.asarray(a, dtype=complex)
    n = a.shape[0]
    coeffs = [1.0]
    m = np.zeros_like(a)
    for k in range(1, n + 1):
        m = a @ m + coeffs[-1] * np.eye(n)
        coeffs.append(-np.trace(a @ m).real / k)
    roots = np.roots(coeffs)
    return np.sort(roots.real)


class TestEigenvaluesAscending:
    def test_diagonal(self):
        s = eigenvalues_ascending(np.diag([-1.0, 3.0]))
        assert_allclose(s.eigenvalues, [-1.0, 3.0])
        assert s.lambda12 == 2.0

    def test_identity(self):
        s = eigenvalues_ascending(np.eye(3))
        assert_allclose(s.eigenvalues, [1.0, 1.0, 1.0])
        assert s.lambda12 == 2.0

    def test_matches_charpoly_oracle(self, rng):
        for _ in range(20):
            a = random_hermitian(rng, 4)
            s = eigenvalues_ascending(a)
            assert_allclose(s.eigenvalues, charpoly_roots(a), atol=1e-10)

    def test_single_dim_has_no_lambda12(self):
        s = eigenvalues_ascending(np.array([[2.0]]))
        assert s.lambda12 is None

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            eigenvalues_ascending(np.zeros((0, 0)))


class TestHermitianMatrix:
    def test_symmetrizes_drift(self, rng):
        a = random_hermitian(rng, 3)
        drift = a + 1e-9 * (rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3)))
        m = HermitianMatrix(drift)
        assert_allclose(m.entries, m.entries.conj().T, atol=0)
        assert_allclose(m.entries, a, atol=1e-8)

    def test_rejects_gross_asymmetry(self):
        with pytest.raises(ValueError, match="not Hermitian"):
            HermitianMatrix(np.array([[0.0, 1.0], [0.0, 0.0]]))

    def test_rejects_non_square(self):
        with pytest.raises(ValueError):
            HermitianMatrix(np.zeros((2, 3)))


class TestLambda12Variational:
    def test_diagonal_resolved_by_basis_pairs(self):
        assert lambda12_variational(np.diag([0.0, 0.0, 5.0]), samples=0, seed=123) == 0.0
        assert lambda12_variational(np.diag([0.0, 0.0, 5.0]), samples=50, seed=7) == 0.0

    def test_two_by_two_eigenbasis(self):
        # the basis pair is the eigenbasis here and gives the value exactly;
        # random pairs only add roundoff-level wiggle around the trace
        assert lambda12_variational(np.diag([-1.0, 3.0]), samples=0, seed=0) == 2.0
        assert_allclose(lambda12_variational(np.diag([-1.0, 3.0]), samples=100, seed=0),
                        2.0, atol=1e-12)

    def test_upper_bound_and_gap(self, rng):
        a = random_hermitian(rng, 3)
        exact = lambda12(a)
        coarse = lambda12_variational(a, samples=10, seed=5)
        fine = lambda12_variational(a, samples=10_000, seed=5)
        assert coarse >= exact - 1e-12
        assert fine >= exact - 1e-12
        assert fine <= coarse + 1e-12
        assert fine - exact < 5e-2

    def test_dimension_error(self):
        with pytest.raises(ValueError):
            lambda12_variational(np.array([[1.0]]), samples=3, seed=0)


class TestClassifyField:
    def test_two_positive(self):
        verdict = classify_field([np.diag([-1.0, 3.0, 5.0])], eps=0.0)
        assert verdict.kind is Positivity.TWO_POSITIVE
        assert_allclose(verdict.min_lambda12, 2.0)

    def test_quasi_positive(self):
        verdict = classify_field([np.diag([0.0, 0.0]), np.diag([1.0, 1.0])])
        assert verdict.kind is Positivity.TWO_QUASI_POSITIVE

    def test_epsilon_positive(self):
        verdict = classify_field([np.diag([1.0, 1.0]), np.diag([2.0, 3.0])], eps=2.0)
        assert verdict.kind is Positivity.EPSILON_TWO_POSITIVE
        assert verdict.epsilon == 2.0

    def test_nonnegative_and_none(self):
        assert classify_field([np.diag([0.0, 0.0])]).kind is Positivity.TWO_NONNEGATIVE
        assert classify_field([np.diag([-1.0, 0.5])]).kind is Positivity.NONE

    def test_strength_order(self):
        strong = classify_field([np.diag([2.0, 3.0])], eps=1.0)
        assert strong.implies(Positivity.TWO_POSITIVE)
        assert strong.implies(Positivity.TWO_NONNEGATIVE)
        weak = classify_field([np.diag([0.0, 0.0])])
        assert not weak.implies(Positivity.TWO_POSITIVE)

    def test_empty_field_rejected(self):
        with pytest.raises(ValueError):
            classify_field([])

    def test_mixed_dims_rejected(self):
        with pytest.raises(ValueError):
            classify_field([np.eye(2), np.eye(3)])


class TestInvariants:
    def test_ky_fan_superadditivity(self, rng):
        for _ in range(100):
            a = random_hermitian(rng, 4)
            b = random_hermitian(rng, 4)
            assert lambda12(a + b) >= lambda12(a) + lambda12(b) - 1e-10

    def test_superlevel_set_convexity(self, rng):
        eps = 0.5
        for _ in range(50):
            a = random_hermitian(rng, 3)
            b = random_hermitian(rng, 3)
            # shift both onto the lambda12 >= eps set
            a += (eps - lambda12(a)) / 2 * np.eye(3)
            b += (eps - lambda12(b)) / 2 * np.eye(3)
            t = rng.uniform()
            assert lambda12(t * a + (1 - t) * b) >= eps - 1e-10

    def test_unitary_invariance(self, rng):
        for _ in range(50):
            a = random_hermitian(rng, 4)
            q, r = np.linalg.qr(rng.standard_normal((4, 4))
                                + 1j * rng.standard_normal((4, 4)))
            w = q * (np.diag(r) / np.abs(np.diag(r)))
            assert abs(lambda12(w @ a @ w.conj().T) - lambda12(a)) < 1e-10
