import numpy as np
import pytest

from asdkit.density import (
    GmmConfig,
    GmmModel,
    gmm_fit_em,
    gmm_nll,
    load_density_model,
    pca_fit,
    pca_transform,
    save_density_model,
    score_sequence,
    _responsibilities,
)
from asdkit.errors import InvalidInputError
from asdkit.features import FeatureSequence


def naive_mixture_nll(g, x):
    """Direct density summation without log-sum-exp."""
    total = 0.0
    d = g.dim
    for k in range(g.k):
        diff = x - g.means[k]
        if g.cov_type == "diagonal":
            var = g.covariances[k]
            quad = float(np.sum(diff**2 / var))
            det = float(np.prod(var))
        else:
            cov = g.covariances[k]
            quad = float(diff @ np.linalg.solve(cov, diff))
            det = float(np.linalg.det(cov))
        total += g.weights[k] * np.exp(-0.5 * quad) / np.sqrt((2 * np.pi) ** d * det)
    return -np.log(total)


class TestPca:
    def test_line_data_collapses_to_one_component(self):
        rng = np.random.default_rng(0)
        t = rng.normal(size=500)
        data = np.stack([t, t], axis=1) + rng.normal(scale=1e-12, size=(500, 2))
        p = pca_fit(data, retain=0.98)
        assert p.dim == 1
        direction = p.components[0]
        np.testing.assert_allclose(np.abs(direction), 1 / np.sqrt(2), atol=1e-6)

    def test_retain_one_keeps_full_rank(self):
        rng = np.random.default_rng(1)
        data = rng.normal(size=(50, 8))
        p = pca_fit(data, retain=1.0)
        assert p.dim == min(49, 8)

    def test_isotropic_gaussian_needs_all_dimensions(self):
        rng = np.random.default_rng(2)
        data = rng.normal(size=(10000, 5))
        p = pca_fit(data, retain=0.98)
        assert p.dim == 5

    def test_rows_orthonormal_and_ratio_nonincreasing(self):
        rng = np.random.default_rng(3)
        data = rng.normal(size=(200, 10)) * np.arange(1, 11)
        p = pca_fit(data, retain=0.99)
        gram = p.components @ p.components.T
        np.testing.assert_allclose(gram, np.eye(p.dim), atol=1e-6)
        assert np.all(np.diff(p.explained_ratio) <= 1e-12)
        assert p.explained_ratio.sum() <= 1 + 1e-9

    def test_transform_of_mean_is_zero(self):
        rng = np.random.default_rng(4)
        data = rng.normal(size=(100, 6))
        p = pca_fit(data, retain=0.98)
        np.testing.assert_allclose(pca_transform(p, p.mean), 0.0, atol=1e-9)

    def test_mean_plus_first_component_maps_to_e1(self):
        rng = np.random.default_rng(5)
        data = rng.normal(size=(100, 6)) * np.arange(1, 7)
        p = pca_fit(data, retain=0.999)
        out = pca_transform(p, p.mean + p.components[0])
        expected = np.zeros(p.dim)
        expected[0] = 1.0
        np.testing.assert_allclose(out, expected, atol=1e-9)

    def test_reconstruction_loses_at_most_discarded_variance(self):
        rng = np.random.default_rng(6)
        data = rng.normal(size=(500, 12)) * np.linspace(3, 0.1, 12)
        p = pca_fit(data, retain=0.98)
        projected = pca_transform(p, data)
        recon = projected @ p.components + p.mean
        residual_var = np.sum((data - recon) ** 2)
        total_var = np.sum((data - data.mean(axis=0)) ** 2)
        assert residual_var / total_var <= 0.02 + 1e-9

    def test_zero_variance_rejected(self):
        with pytest.raises(InvalidInputError):
            pca_fit(np.ones((10, 3)), retain=0.98)

    def test_dim_mismatch_rejected(self):
        p = pca_fit(np.random.default_rng(0).normal(size=(20, 4)), retain=1.0)
        with pytest.raises(InvalidInputError):
            pca_transform(p, np.zeros(5))


class TestGmmFit:
    def test_two_separated_gaussians_recovered(self):
        rng = np.random.default_rng(0)
        data = np.concatenate([rng.normal(0, 1, 1000), rng.normal(10, 1, 1000)])[:, None]
        model, _ = gmm_fit_em(data, GmmConfig(k=2, seed=0))
        means = sorted(model.means[:, 0])
        assert abs(means[0] - 0.0) < 0.1 and abs(means[1] - 10.0) < 0.1
        assert np.all(np.abs(model.weights - 0.5) < 0.05)

    def test_single_component_closed_form(self):
        rng = np.random.default_rng(1)
        data = rng.normal(size=(500, 3)) * [1.0, 2.0, 0.5] + [5.0, -1.0, 0.0]
        model, _ = gmm_fit_em(data, GmmConfig(k=1, seed=0, max_iters=1))
        np.testing.assert_allclose(model.means[0], data.mean(axis=0), atol=1e-9)
        np.testing.assert_allclose(
            model.covariances[0], data.var(axis=0) + 1e-6, atol=1e-9
        )
        assert model.weights[0] == pytest.approx(1.0)

    @pytest.mark.parametrize("cov_type", ["diagonal", "full"])
    def test_loglikelihood_trace_nondecreasing(self, cov_type):
        rng = np.random.default_rng(2)
        data = np.concatenate(
            [rng.normal(0, 1, (300, 2)), rng.normal(4, 0.5, (300, 2))]
        )
        _, trace = gmm_fit_em(data, GmmConfig(k=3, cov_type=cov_type, seed=1))
        assert all(b >= a - 1e-8 for a, b in zip(trace, trace[1:]))

    def test_full_covariance_recovery(self):
        rng = np.random.default_rng(3)
        cov = np.array([[1.0, 0.5, 0.2], [0.5, 1.5, 0.3], [0.2, 0.3, 0.8]])
        data = rng.multivariate_normal(np.zeros(3), cov, size=5000)
        model, _ = gmm_fit_em(data, GmmConfig(k=1, cov_type="full", seed=0))
        assert np.linalg.norm(model.covariances[0] - cov) < 0.1

    def test_responsibilities_sum_to_one(self):
        rng = np.random.default_rng(4)
        data = rng.normal(size=(200, 2))
        model, _ = gmm_fit_em(data, GmmConfig(k=4, seed=0))
        resp = _responsibilities(data, model)
        np.testing.assert_allclose(resp.sum(axis=1), 1.0, atol=1e-9)

    def test_weights_positive_and_normalized(self):
        rng = np.random.default_rng(5)
        data = rng.normal(size=(300, 2))
        model, _ = gmm_fit_em(data, GmmConfig(k=5, seed=0))
        assert np.all(model.weights > 0)
        assert model.weights.sum() == pytest.approx(1.0)

    def test_fewer_samples_than_components_rejected(self):
        with pytest.raises(InvalidInputError):
            gmm_fit_em(np.zeros((3, 2)), GmmConfig(k=4))

    def test_deterministic_per_seed(self):
        rng = np.random.default_rng(6)
        data = rng.normal(size=(400, 3))
        m1, t1 = gmm_fit_em(data, GmmConfig(k=3, seed=42))
        m2, t2 = gmm_fit_em(data, GmmConfig(k=3, seed=42))
        np.testing.assert_array_equal(m1.means, m2.means)
        assert t1 == t2

    def test_near_duplicate_data_floored_not_fatal(self):
        # Silence-like inputs: many identical vectors must not produce
        # singular components.
        data = np.zeros((100, 4))
        data[:3] += np.random.default_rng(0).normal(scale=1e-9, size=(3, 4))
        model, _ = gmm_fit_em(data, GmmConfig(k=2, seed=0))
        assert np.isfinite(gmm_nll(model, np.zeros(4)))


def standard_normal_2d():
    return GmmModel(
        weights=np.array([1.0]),
        means=np.zeros((1, 2)),
        covariances=np.ones((1, 2)),
        cov_type="diagonal",
    )


class TestNll:
    def test_standard_normal_at_mean(self):
        assert gmm_nll(standard_normal_2d(), np.zeros(2)) == pytest.approx(
            np.log(2 * np.pi), abs=1e-9
        )

    def test_duplicated_component_mixture_collapses(self):
        g1 = standard_normal_2d()
        g2 = GmmModel(
            weights=np.array([0.5, 0.5]),
            means=np.zeros((2, 2)),
            covariances=np.ones((2, 2)),
            cov_type="diagonal",
        )
        x = np.array([0.3, -1.2])
        assert gmm_nll(g2, x) == pytest.approx(gmm_nll(g1, x), abs=1e-12)

    @pytest.mark.parametrize("cov_type", ["diagonal", "full"])
    def test_matches_naive_summation(self, cov_type):
        rng = np.random.default_rng(7)
        k, d = 3, 2
        if cov_type == "diagonal":
            covs = rng.uniform(0.5, 2.0, size=(k, d))
        else:
            covs = np.stack([np.eye(d) + 0.3 * np.ones((d, d)) for _ in range(k)])
        w = rng.uniform(0.2, 1.0, size=k)
        g = GmmModel(weights=w / w.sum(), means=rng.normal(size=(k, d)),
                     covariances=covs, cov_type=cov_type)
        for _ in range(10):
            x = rng.normal(size=d)
            assert gmm_nll(g, x) == pytest.approx(naive_mixture_nll(g, x), abs=1e-9)

    def test_component_permutation_invariance(self):
        rng = np.random.default_rng(8)
        g = GmmModel(
            weights=np.array([0.3, 0.7]),
            means=rng.normal(size=(2, 3)),
            covariances=rng.uniform(0.5, 1.5, size=(2, 3)),
            cov_type="diagonal",
        )
        flipped = GmmModel(weights=g.weights[::-1], means=g.means[::-1],
                           covariances=g.covariances[::-1], cov_type="diagonal")
        x = rng.normal(size=3)
        assert gmm_nll(g, x) == pytest.approx(gmm_nll(flipped, x), abs=1e-12)

    def test_non_finite_input_rejected(self):
        with pytest.raises(InvalidInputError):
            gmm_nll(standard_normal_2d(), np.array([np.nan, 0.0]))

    def test_dim_mismatch_rejected(self):
        with pytest.raises(InvalidInputError):
            gmm_nll(standard_normal_2d(), np.zeros(3))


class TestScoreSequence:
    def test_single_vector_pooling_invariant(self):
        g = standard_normal_2d()
        seq = FeatureSequence(vectors=np.array([[0.5], [1.0]]))
        mean = score_sequence(g, seq, pooling="mean")
        total = score_sequence(g, seq, pooling="sum")
        assert mean == total == pytest.approx(gmm_nll(g, np.array([0.5, 1.0])))

    def test_constant_columns_mean_equals_per_column(self):
        g = standard_normal_2d()
        col = np.array([0.2, -0.4])
        seq = FeatureSequence(vectors=np.tile(col[:, None], (1, 7)))
        assert score_sequence(g, seq) == pytest.approx(gmm_nll(g, col))

    def test_sum_equals_count_times_mean(self):
        rng = np.random.default_rng(9)
        g = standard_normal_2d()
        seq = FeatureSequence(vectors=rng.normal(size=(2, 13)))
        assert score_sequence(g, seq, "sum") == pytest.approx(13 * score_sequence(g, seq, "mean"))

    def test_unknown_pooling_rejected(self):
        with pytest.raises(InvalidInputError):
            score_sequence(standard_normal_2d(), FeatureSequence(vectors=np.zeros((2, 1))), "max")


class TestPersistence:
    @pytest.mark.parametrize("cov_type", ["diagonal", "full"])
    def test_round_trip_with_pca(self, tmp_path, cov_type):
        rng = np.random.default_rng(0)
        data = rng.normal(size=(300, 4))
        pca = pca_fit(data, retain=0.98)
        reduced = pca_transform(pca, data)
        cfg = GmmConfig(k=2, cov_type=cov_type, seed=0)
        model, _ = gmm_fit_em(reduced, cfg)
        path = tmp_path / "gmm.json"
        save_density_model(path, model, pca=pca, config=cfg)
        loaded, loaded_pca = load_density_model(path)
        x = rng.normal(size=4)
        assert gmm_nll(loaded, pca_transform(loaded_pca, x)) == pytest.approx(
            gmm_nll(model, pca_transform(pca, x))
        )
