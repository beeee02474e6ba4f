import numpy as np
import pytest
from numpy.testing import assert_allclose

from curvflow import quadric
from curvflow.quadric import (bisectional_closed, bisectional_from_bracket,
                              bisectional_trace, certify_two_positivity,
                              complex_structure_J, curvature_bracket_oracle,
                              curvature_endo, curvature_operator,
                              equality_case_vector, holo_embed, isotropy_transport,
                              metric_g, nonnegativity_sweep, orthogonal_ricci,
                              so_embed)


def elem(i, j, n=4):
    x = np.zeros((2, n))
    x[i - 1, j - 1] = 1.0
    return x


def rand_tangent(rng, n=4):
    return rng.standard_normal((2, n))


def rand_param(rng, n=4):
    return rng.standard_normal(n) + 1j * rng.standard_normal(n)


def special_orthogonal(rng, n):
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


class TestMetric:
    def test_unit_entry(self):
        assert metric_g(elem(1, 1), elem(1, 1)) == 1.0

    def test_disjoint_support(self):
        assert metric_g(elem(1, 1), elem(2, 1)) == 0.0

    def test_frobenius_identity(self, rng):
        x = rand_tangent(rng)
        assert_allclose(metric_g(x, x), np.sum(x * x), atol=1e-12)

    def test_dimension_mismatch(self, rng):
        with pytest.raises(ValueError):
            metric_g(rand_tangent(rng, 3), rand_tangent(rng, 4))


class TestComplexStructure:
    def test_row_one_to_row_two(self):
        assert_allclose(complex_structure_J(elem(1, 1)), elem(2, 1))

    def test_row_two_to_negative_row_one(self):
        assert_allclose(complex_structure_J(elem(2, 1)), -elem(1, 1))

    def test_squares_to_minus_identity(self, rng):
        x = rand_tangent(rng)
        assert_allclose(complex_structure_J(complex_structure_J(x)), -x, atol=1e-15)


class TestCurvatureTensor:
    def test_vanishes_for_equal_arguments(self, rng):
        x, z = rand_tangent(rng), rand_tangent(rng)
        assert_allclose(curvature_endo(x, x, z), np.zeros_like(z), atol=1e-15)
        assert_allclose(curvature_bracket_oracle(x, x, z), np.zeros_like(z), atol=1e-15)

    def test_matches_bracket_oracle(self, rng):
        for _ in range(50):
            x, y, z = (rand_tangent(rng) for _ in range(3))
            assert_allclose(curvature_endo(x, y, z),
                            curvature_bracket_oracle(x, y, z), atol=1e-10)

    def test_elementary_triple_against_oracle(self):
        x, y, z = elem(1, 1), elem(1, 2), elem(1, 1)
        assert_allclose(curvature_endo(x, y, z),
                        curvature_bracket_oracle(x, y, z), atol=1e-12)

    def test_bracket_stays_in_tangent_block(self, rng):
        # the ambient double commutator lands back in the off-diagonal part
        x, y, z = (rand_tangent(rng) for _ in range(3))
        a, b, c = so_embed(x), so_embed(y), so_embed(z)
        ab = a @ b - b @ a
        m = -(ab @ c - c @ ab)
        n = x.shape[1]
        assert_allclose(m[:n, :n], 0, atol=1e-12)
        assert_allclose(m[n:, n:], 0, atol=1e-12)

    def test_antisymmetry(self, rng):
        x, y, z = (rand_tangent(rng) for _ in range(3))
        assert_allclose(curvature_endo(x, y, z), -curvature_endo(y, x, z), atol=1e-12)

    def test_first_bianchi(self, rng):
        x, y, z = (rand_tangent(rng) for _ in range(3))
        total = curvature_endo(x, y, z) + curvature_endo(y, z, x) + curvature_endo(z, x, y)
        assert_allclose(total, np.zeros_like(x), atol=1e-10)

    def test_metric_compatibility(self, rng):
        x, y, z, w = (rand_tangent(rng) for _ in range(4))
        lhs = metric_g(curvature_endo(x, y, z), w)
        rhs = -metric_g(curvature_endo(x, y, w), z)
        assert_allclose(lhs, rhs, atol=1e-10)

    def test_kahler_invariance(self, rng):
        x, y, z = (rand_tangent(rng) for _ in range(3))
        jx, jy = complex_structure_J(x), complex_structure_J(y)
        assert_allclose(curvature_endo(jx, jy, z), curvature_endo(x, y, z), atol=1e-10)


class TestBisectional:
    def test_disjoint_case_is_product(self, rng):
        # with a supported on one slot, the cross term drops out
        n = 4
        a = np.zeros(n, dtype=complex)
        a[0] = 1.5 - 0.5j
        b = rand_param(rng, n)
        expected = 4 * np.vdot(a, a).real * np.vdot(b, b).real
        assert_allclose(bisectional_closed(a, b), expected, atol=1e-12)
        assert expected > 0

    def test_equality_case_vanishes(self):
        for n in (2, 3, 5):
            a = np.zeros(n, dtype=complex)
            b = np.zeros(n, dtype=complex)
            a[:2] = [1.0, 1.0j]
            b[:2] = [1.0, -1.0j]
            assert_allclose(bisectional_closed(a, b), 0.0, atol=1e-13)
            assert_allclose(bisectional_trace(a, b), 0.0, atol=1e-13)

    def test_basis_pair_value(self):
        n = 4
        e1 = np.eye(n)[0].astype(complex)
        e2 = np.eye(n)[1].astype(complex)
        assert_allclose(bisectional_closed(e1, e2), 4.0, atol=1e-13)
        assert_allclose(bisectional_trace(e1, e2), 4.0, atol=1e-13)
        assert_allclose(bisectional_from_bracket(e1, e2), 4.0, atol=1e-13)

    def test_oracle_triangle(self, rng):
        for _ in range(200):
            a, b = rand_param(rng), rand_param(rng)
            c = bisectional_closed(a, b)
            assert abs(c - bisectional_trace(a, b)) < 1e-9
            assert abs(c - bisectional_from_bracket(a, b)) < 1e-9

    def test_holomorphic_sectional_positive(self, rng):
        e1 = np.array([1.0, 0, 0, 0], dtype=complex)
        assert_allclose(bisectional_trace(e1, e1), 4.0, atol=1e-13)

    def test_zero_vector(self, rng):
        b = rand_param(rng)
        assert bisectional_trace(np.zeros(4, dtype=complex), b) == 0.0

    def test_homogeneity(self, rng):
        a, b = rand_param(rng), rand_param(rng)
        lam = 0.3 - 1.7j
        assert_allclose(bisectional_closed(lam * a, b),
                        abs(lam) ** 2 * bisectional_closed(a, b), atol=1e-10)

    def test_nonnegativity_on_samples(self, rng):
        for n in (2, 3):
            for _ in range(2000):
                a, b = rand_param(rng, n), rand_param(rng, n)
                assert bisectional_closed(a, b) >= -1e-9 * (np.vdot(a, a).real
                                                            * np.vdot(b, b).real)


class TestCurvatureOperator:
    def test_quadratic_form_identity(self, rng):
        a = rand_param(rng)
        h = curvature_operator(a).entries
        for _ in range(100):
            b = rand_param(rng)
            assert_allclose(np.vdot(b, h @ b).real, bisectional_closed(a, b), atol=1e-10)

    def test_basis_vector_gives_scaled_identity(self):
        n = 5
        a = np.eye(n)[0].astype(complex)
        assert_allclose(curvature_operator(a).entries, 4 * np.eye(n), atol=1e-12)

    def test_zero_vector_gives_zero(self):
        assert_allclose(curvature_operator(np.zeros(3, complex)).entries,
                        np.zeros((3, 3)), atol=0)

    def test_hermitian(self, rng):
        h = curvature_operator(rand_param(rng)).entries
        assert_allclose(h, h.conj().T, atol=0)


def grid_min_lambda12_n2(samples=4000, seed=3):
    """Dense random-sphere oracle for the n = 2 minimum of lambda12."""
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((samples, 4))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    a = x[:, :2] + 1j * x[:, 2:]
    c12 = np.imag(np.conj(a[:, 0]) * a[:, 1])
    lam1 = 4 - 8 * np.abs(c12)
    lam2 = 4 + 8 * np.abs(c12)
    return float(np.min(lam1 + lam2))


class TestCertification:
    def test_n2_minimum_matches_grid_oracle(self):
        cert = certify_two_positivity(2, restarts=8, iters=150, seed=0)
        assert cert.min_lambda12 > 0
        assert_allclose(cert.min_lambda12, grid_min_lambda12_n2(), atol=1e-6)
        spec = cert.spectrum
        assert abs(spec[0]) < 1e-8       # degenerate direction reported
        assert spec[1] > 1.0             # but only one eigenvalue vanishes

    def test_n3_equality_case(self):
        a = equality_case_vector(3)
        spec = np.linalg.eigvalsh(curvature_operator(a).entries)
        assert abs(spec[0]) < 1e-8
        assert spec[1] > 1.0
        assert spec[0] + spec[1] > 0
        cert = certify_two_positivity(3, restarts=8, iters=200, seed=1)
        assert cert.min_lambda12 > 0
        # frozen analytic minimum: bottom pair (0, 4) on the unit sphere
        assert_allclose(cert.min_lambda12, 4.0, atol=1e-6)

    def test_isotropy_orbit_invariance(self, rng):
        cert = certify_two_positivity(4, restarts=4, iters=200, seed=2)
        rot = special_orthogonal(rng, 4)
        moved = isotropy_transport(cert.argmin, rot, angle=0.77)
        spec = np.linalg.eigvalsh(curvature_operator(moved).entries)
        assert abs((spec[0] + spec[1]) - cert.min_lambda12) < 1e-9

    def test_restart_values_recorded(self):
        cert = certify_two_positivity(2, restarts=5, iters=50, seed=0)
        assert len(cert.restart_values) == 5
        assert min(cert.restart_values) >= cert.min_lambda12 - 1e-12

    def test_bad_inputs(self):
        with pytest.raises(ValueError):
            certify_two_positivity(1)
        with pytest.raises(ValueError):
            certify_two_positivity(3, restarts=0)


class TestNonnegativitySweep:
    def test_minimum_near_zero_from_above(self):
        val, (a, b) = nonnegativity_sweep(3, samples=20_000, descents=8, seed=0)
        assert val >= -1e-9
        # descents find the flat direction
        assert val < 5e-3
        assert_allclose(np.linalg.norm(a), 1.0, atol=1e-12)
        assert_allclose(np.linalg.norm(b), 1.0, atol=1e-12)


class TestOrthogonalRicci:
    def test_basis_vector_against_operator_oracle(self):
        n = 4
        a = np.eye(n)[0].astype(complex)
        h = curvature_operator(a).entries
        expected = np.trace(h).real - bisectional_closed(a, a)
        assert_allclose(orthogonal_ricci(a), expected, atol=1e-12)
        assert_allclose(orthogonal_ricci(a), 4.0 * n - 4.0, atol=1e-10)

    def test_positive_on_sampled_directions_n2(self, rng):
        for _ in range(500):
            a = rand_param(rng, 2)
            a /= np.linalg.norm(a)
            assert orthogonal_ricci(a) > 0

    def test_domain_errors(self):
        with pytest.raises(ValueError):
            orthogonal_ricci(np.zeros(3, complex))
        with pytest.raises(ValueError):
            orthogonal_ricci(np.array([1.0, 1.0], dtype=complex))


class TestEmbeddings:
    def test_holo_embed_rows(self, rng):
        a = rand_param(rng)
        u = holo_embed(a)
        assert_allclose(u[0], a)
        assert_allclose(u[1], -1j * a)

    def test_so_embed_antisymmetric(self, rng):
        m = so_embed(rand_tangent(rng))
        assert_allclose(m, -m.T, atol=0)
