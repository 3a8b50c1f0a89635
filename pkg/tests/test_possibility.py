import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from penkf.possibility import (AffineMap, GaussianPossibility, SingularCovarianceError,
                               WEIGHT_CEILING, WeightedEnsemble, apply_map, bayes_update,
                               epistemic_uncertainty, evaluate, linear_transform,
                               transport_map)


def random_spd(rng, n, floor=0.5):
    a = rng.standard_normal((n, n))
    return a @ a.T + floor * np.eye(n)


def random_well_conditioned(rng, n):
    return rng.standard_normal((n, n)) + 3.0 * np.eye(n)


seeds = st.integers(0, 2 ** 32 - 1)
dims = st.integers(1, 6)


class TestEvaluate:
    def test_mode_is_one(self):
        g = GaussianPossibility.from_covariance([1.0, -2.0], [[2.0, 0.3], [0.3, 1.0]])
        assert evaluate(g, g.mean) == 1.0

    def test_scalar_formula(self):
        g = GaussianPossibility.from_covariance([0.0], [[1.0]])
        assert evaluate(g, [1.0]) == pytest.approx(np.exp(-0.5), rel=1e-15)

    def test_identity_two_d(self):
        g = GaussianPossibility.from_covariance(np.zeros(2), np.eye(2))
        assert evaluate(g, [1.0, 1.0]) == pytest.approx(np.exp(-1.0), rel=1e-15)

    def test_batch_matches_pointwise(self):
        rng = np.random.default_rng(0)
        g = GaussianPossibility.from_covariance(rng.standard_normal(3), random_spd(rng, 3))
        x = rng.standard_normal((7, 3))
        np.testing.assert_array_equal(evaluate(g, x), [evaluate(g, xi) for xi in x])

    def test_dimension_mismatch(self):
        g = GaussianPossibility.from_covariance(np.zeros(2), np.eye(2))
        with pytest.raises(ValueError):
            evaluate(g, np.zeros(3))

    def test_null_space_of_singular_precision(self):
        g = GaussianPossibility.from_precision([0.0, 0.0], [[1.0, 0.0], [0.0, 0.0]])
        assert g.is_degenerate
        assert evaluate(g, [0.0, 123.0]) == 1.0
        assert evaluate(g, [1.0, 123.0]) < 1.0

    @given(seeds, dims)
    @settings(max_examples=50, deadline=None)
    def test_bounded_in_unit_interval(self, seed, n):
        rng = np.random.default_rng(seed)
        g = GaussianPossibility.from_covariance(rng.standard_normal(n), random_spd(rng, n))
        v = evaluate(g, 3.0 * rng.standard_normal((20, n)))
        assert np.all(v <= 1.0) and np.all(v >= 0.0)


class TestConstruction:
    def test_cov_times_precision_is_identity(self):
        rng = np.random.default_rng(1)
        g = GaussianPossibility.from_covariance(np.zeros(4), random_spd(rng, 4))
        np.testing.assert_allclose(g.covariance @ g.precision, np.eye(4), atol=1e-8)

    def test_rejects_asymmetric(self):
        with pytest.raises(ValueError):
            GaussianPossibility.from_covariance(np.zeros(2), [[1.0, 0.5], [0.0, 1.0]])

    def test_rejects_negative_precision(self):
        with pytest.raises(ValueError):
            GaussianPossibility.from_precision(np.zeros(2), np.diag([1.0, -1.0]))

    def test_non_pd_covariance_is_typed_error(self):
        with pytest.raises(SingularCovarianceError):
            GaussianPossibility.from_covariance(np.zeros(2), np.diag([1.0, 0.0]))

    def test_zero_precision_has_no_covariance(self):
        g = GaussianPossibility.uninformative(3)
        with pytest.raises(SingularCovarianceError):
            g.require_covariance()


class TestUncertainty:
    def test_unit_variance(self):
        g = GaussianPossibility.from_covariance([0.0], [[1.0]])
        assert epistemic_uncertainty(g) == pytest.approx(np.sqrt(2 * np.pi), rel=1e-14)

    def test_variance_four(self):
        g = GaussianPossibility.from_covariance([0.0], [[4.0]])
        assert epistemic_uncertainty(g) == pytest.approx(np.sqrt(8 * np.pi), rel=1e-14)

    def test_zero_precision_is_infinite(self):
        assert epistemic_uncertainty(GaussianPossibility.uninformative(2)) == np.inf

    def test_matches_determinant(self):
        rng = np.random.default_rng(2)
        S = random_spd(rng, 3)
        g = GaussianPossibility.from_covariance(np.zeros(3), S)
        assert epistemic_uncertainty(g) == pytest.approx(
            np.sqrt(np.linalg.det(2 * np.pi * S)), rel=1e-12)


class TestBayesUpdate:
    def test_uninformative_prior(self):
        rng = np.random.default_rng(3)
        S = random_spd(rng, 3)
        y = rng.standard_normal(3)
        post = bayes_update(GaussianPossibility.uninformative(3), y, np.eye(3), S)
        np.testing.assert_allclose(post.mean, y, atol=1e-12)
        np.testing.assert_allclose(post.covariance, S, rtol=1e-10)

    def test_scalar_hand_values(self):
        prior = GaussianPossibility.from_covariance([0.0], [[1.0]])
        post = bayes_update(prior, [2.0], [[1.0]], [[1.0]])
        np.testing.assert_allclose(post.mean, [1.0], atol=1e-15)
        np.testing.assert_allclose(post.covariance, [[0.5]], atol=1e-15)

    def test_posterior_mode_is_one(self):
        rng = np.random.default_rng(4)
        prior = GaussianPossibility.from_covariance(rng.standard_normal(3), random_spd(rng, 3))
        post = bayes_update(prior, rng.standard_normal(2), rng.standard_normal((2, 3)),
                            random_spd(rng, 2))
        assert evaluate(post, post.mean) == 1.0

    def test_huge_noise_keeps_prior(self):
        rng = np.random.default_rng(5)
        prior = GaussianPossibility.from_covariance(rng.standard_normal(3), random_spd(rng, 3))
        post = bayes_update(prior, rng.standard_normal(3), np.eye(3), 1e8 * np.eye(3))
        np.testing.assert_allclose(post.mean, prior.mean, atol=1e-3)
        np.testing.assert_allclose(post.covariance, prior.covariance, atol=1e-3)

    def test_information_and_gain_forms_agree(self):
        rng = np.random.default_rng(6)
        S = random_spd(rng, 3)
        mean = rng.standard_normal(3)
        gain_form = GaussianPossibility.from_covariance(mean, S)
        info_form = GaussianPossibility(mean, np.linalg.inv(S), None)
        args = (rng.standard_normal(2), rng.standard_normal((2, 3)), random_spd(rng, 2))
        a, b = bayes_update(gain_form, *args), bayes_update(info_form, *args)
        np.testing.assert_allclose(a.mean, b.mean, rtol=1e-10)
        np.testing.assert_allclose(a.covariance, b.covariance, rtol=1e-10)

    def test_singular_posterior(self):
        with pytest.raises(SingularCovarianceError):
            bayes_update(GaussianPossibility.uninformative(2), [1.0], [[1.0, 0.0]], [[1.0]])


class TestLinearTransform:
    def test_identity(self):
        g = GaussianPossibility.from_covariance([1.0, 2.0], [[2.0, 0.5], [0.5, 1.0]])
        h = linear_transform(g, np.eye(2), np.zeros(2))
        np.testing.assert_allclose(h.mean, g.mean)
        np.testing.assert_allclose(h.covariance, g.covariance)

    def test_scalar(self):
        h = linear_transform(GaussianPossibility.from_covariance([0.0], [[1.0]]), [[2.0]], [1.0])
        np.testing.assert_allclose(h.mean, [1.0])
        np.testing.assert_allclose(h.covariance, [[4.0]])

    def test_rotation_of_isotropic(self):
        th = 0.7
        R = np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])
        h = linear_transform(GaussianPossibility.from_covariance(np.zeros(2), np.eye(2)), R)
        np.testing.assert_allclose(h.covariance, np.eye(2), atol=1e-15)

    def test_singular_map(self):
        g = GaussianPossibility.from_covariance(np.zeros(2), np.eye(2))
        with pytest.raises(np.linalg.LinAlgError):
            linear_transform(g, [[1.0, 1.0], [1.0, 1.0]])

    def test_degenerate_precision_is_mapped(self):
        g = GaussianPossibility.from_precision(np.zeros(2), np.diag([1.0, 0.0]))
        A = np.array([[2.0, 1.0], [0.0, 1.0]])
        h = linear_transform(g, A)
        x = np.array([0.3, -1.2])
        assert evaluate(h, A @ x) == pytest.approx(evaluate(g, x), rel=1e-12)

    @given(seeds, dims)
    @settings(max_examples=40, deadline=None)
    def test_composition(self, seed, n):
        rng = np.random.default_rng(seed)
        g = GaussianPossibility.from_covariance(rng.standard_normal(n), random_spd(rng, n))
        A, C = random_well_conditioned(rng, n), random_well_conditioned(rng, n)
        b, d = rng.standard_normal(n), rng.standard_normal(n)
        two = linear_transform(linear_transform(g, A, b), C, d)
        one = linear_transform(g, C @ A, C @ b + d)
        np.testing.assert_allclose(two.mean, one.mean, rtol=1e-10, atol=1e-10)
        np.testing.assert_allclose(two.covariance, one.covariance, rtol=1e-10,
                                   atol=1e-10 * np.abs(one.covariance).max())

    @given(seeds, dims)
    @settings(max_examples=40, deadline=None)
    def test_pointwise_change_of_variables(self, seed, n):
        rng = np.random.default_rng(seed)
        g = GaussianPossibility.from_covariance(rng.standard_normal(n), random_spd(rng, n))
        A, b = random_well_conditioned(rng, n), rng.standard_normal(n)
        h = linear_transform(g, A, b)
        x = g.mean + rng.standard_normal((10, n))
        np.testing.assert_allclose(evaluate(h, x @ A.T + b), evaluate(g, x),
                                   rtol=1e-10, atol=1e-12)


class TestTransportMap:
    def test_self_map_is_identity(self):
        rng = np.random.default_rng(7)
        g = GaussianPossibility.from_covariance(rng.standard_normal(3), random_spd(rng, 3))
        m = transport_map(g, g)
        np.testing.assert_allclose(m.linear, np.eye(3), atol=1e-12)
        np.testing.assert_allclose(m.offset, 0.0, atol=1e-12)

    def test_scalar(self):
        m = transport_map(GaussianPossibility.from_covariance([0.0], [[1.0]]),
                          GaussianPossibility.from_covariance([3.0], [[4.0]]))
        np.testing.assert_allclose(m.linear, [[2.0]])
        np.testing.assert_allclose(m.offset, [3.0])

    def test_isotropic_scaling(self):
        mu = np.array([1.0, -1.0, 2.0])
        m = transport_map(GaussianPossibility.from_covariance(mu, np.eye(3)),
                          GaussianPossibility.from_covariance(mu, 4 * np.eye(3)))
        x = np.array([0.5, 0.2, 0.1])
        np.testing.assert_allclose(m(x), mu + 2 * (x - mu), atol=1e-14)

    def test_linear_part_is_lower_triangular(self):
        rng = np.random.default_rng(8)
        m = transport_map(GaussianPossibility.from_covariance(np.zeros(4), random_spd(rng, 4)),
                          GaussianPossibility.from_covariance(np.zeros(4), random_spd(rng, 4)))
        np.testing.assert_array_equal(np.triu(m.linear, 1), 0.0)

    def test_non_pd_source(self):
        src = GaussianPossibility(np.zeros(2), np.eye(2), np.diag([1.0, -1.0]))
        with pytest.raises(np.linalg.LinAlgError):
            transport_map(src, GaussianPossibility.from_covariance(np.zeros(2), np.eye(2)))

    @given(seeds, dims)
    @settings(max_examples=40, deadline=None)
    def test_pushes_source_onto_target(self, seed, n):
        rng = np.random.default_rng(seed)
        g = GaussianPossibility.from_covariance(rng.standard_normal(n), random_spd(rng, n))
        h = GaussianPossibility.from_covariance(rng.standard_normal(n), random_spd(rng, n))
        m = transport_map(g, h)
        pushed = linear_transform(g, m.linear, m.offset)
        np.testing.assert_allclose(pushed.mean, h.mean, atol=1e-10)
        np.testing.assert_allclose(pushed.covariance, h.covariance, rtol=1e-9, atol=1e-10)

    @given(seeds, dims)
    @settings(max_examples=40, deadline=None)
    def test_round_trip(self, seed, n):
        rng = np.random.default_rng(seed)
        g = GaussianPossibility.from_covariance(rng.standard_normal(n), random_spd(rng, n))
        h = GaussianPossibility.from_covariance(rng.standard_normal(n), random_spd(rng, n))
        there, back = transport_map(g, h), transport_map(h, g)
        np.testing.assert_allclose(back.linear @ there.linear, np.eye(n), atol=1e-8)
        np.testing.assert_allclose(back.linear @ there.offset + back.offset, 0.0, atol=1e-8)


class TestWeightedEnsemble:
    def test_clamps_unit_weights(self):
        ens = WeightedEnsemble.from_points([0.0], [[1.0], [0.0]], [0.5, 1.0])
        assert ens.weights[0] == 1.0
        assert ens.weights[2] == WEIGHT_CEILING
        assert np.all(ens.weights[1:] < 1.0)

    def test_rejects_non_positive_weights(self):
        with pytest.raises(ValueError):
            WeightedEnsemble.from_points([0.0], [[1.0]], [0.0])

    def test_sizes(self):
        ens = WeightedEnsemble.from_points(np.zeros(3), np.ones((5, 3)), np.full(5, 0.5))
        assert (ens.size, ens.dim) == (5, 3)
        np.testing.assert_array_equal(ens.mode, np.zeros(3))


class TestApplyMap:
    def test_identity(self):
        ens = WeightedEnsemble.from_points([1.0, 2.0], [[0.0, 1.0], [3.0, 3.0]], [0.3, 0.6])
        out = apply_map(ens, AffineMap(np.eye(2), np.zeros(2)))
        np.testing.assert_array_equal(out.particles, ens.particles)

    def test_scalar_doubling(self):
        ens = WeightedEnsemble(np.array([[0.0], [1.0]]), np.array([1.0, np.exp(-0.5)]))
        out = apply_map(ens, AffineMap(np.array([[2.0]]), np.zeros(1)))
        np.testing.assert_array_equal(out.particles.ravel(), [0.0, 2.0])

    def test_weights_bit_exact_and_mode_on_target(self):
        rng = np.random.default_rng(9)
        ens = WeightedEnsemble.from_points(rng.standard_normal(3), rng.standard_normal((6, 3)),
                                           rng.uniform(0.1, 0.9, 6))
        m = AffineMap(random_well_conditioned(rng, 3), rng.standard_normal(3))
        out = apply_map(ens, m)
        assert out.weights.tobytes() == ens.weights.tobytes()
        np.testing.assert_array_equal(out.mode, m.linear @ ens.mode + m.offset)
        np.testing.assert_allclose(out.particles, m(ens.particles), atol=1e-12)

    @given(arrays(np.float64, (4, 2), elements=st.floats(-10, 10)))
    @settings(max_examples=30, deadline=None)
    def test_translation(self, pts):
        ens = WeightedEnsemble(pts, np.array([1.0, 0.5, 0.4, 0.3]))
        out = apply_map(ens, AffineMap(np.eye(2), np.array([1.0, -1.0])))
        np.testing.assert_allclose(out.particles, pts + [1.0, -1.0], atol=1e-12)
