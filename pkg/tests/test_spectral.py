import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.spatial.distance import cdist

from gpisomap.data import Mode, SwissRollParams, gen_swiss_roll
from gpisomap.evaluation import procrustes_error
from gpisomap.geometry import PointCloud, build_knn_graph, double_center, geodesic_distances
from gpisomap.spectral import DimensionError, classical_mds, isomap_embed, jacobi_eigh, top_eigen


def gram_of_line(x):
    xc = np.asarray(x, float) - np.mean(x)
    return np.outer(xc, xc), xc


class TestTopEigen:
    def test_diagonal(self):
        vals, vecs = top_eigen(np.diag([3.0, 2.0, 1.0]), 2)
        np.testing.assert_allclose(vals, [3.0, 2.0])
        np.testing.assert_allclose(vecs, np.eye(3)[:, :2], atol=1e-12)

    def test_collinear_eigenvalue_is_gram(self):
        B, xc = gram_of_line([0.0, 0.4, 1.0, 2.5, 3.0])
        vals, _ = top_eigen(B, 1)
        assert vals[0] == pytest.approx(np.sum(xc ** 2), rel=1e-12)

    @pytest.mark.parametrize("backend", ["lapack", "jacobi"])
    def test_reconstruction_bound(self, rng, backend):
        M = rng.normal(size=(30, 30))
        B = M + M.T
        d = 4
        w, V = np.linalg.eigh(B)
        # rank-d oracle uses the d largest eigenvalues, matching the routine's contract
        Bd = (V[:, -d:] * w[-d:]) @ V[:, -d:].T
        w_pos = np.sort(w)[::-1]
        if np.sum(w_pos > 1e-10 * np.abs(w).max()) < d:
            pytest.skip("random draw lacks d positive eigenvalues")
        vals, vecs = top_eigen(B, d, backend=backend)
        rec = (vecs * vals) @ vecs.T
        assert np.linalg.norm(rec - B) <= np.linalg.norm(B - Bd) + 1e-6

    def test_sign_convention(self, rng):
        M = rng.normal(size=(10, 10))
        _, vecs = top_eigen(M @ M.T, 3)
        idx = np.argmax(np.abs(vecs), axis=0)
        assert np.all(vecs[idx, np.arange(3)] > 0)

    def test_dimension_error(self):
        B, _ = gram_of_line([0.0, 1.0, 2.0, 3.0])
        with pytest.raises(DimensionError):
            top_eigen(B, 2)

    def test_asymmetric_rejected(self):
        with pytest.raises(ValueError):
            top_eigen(np.array([[1.0, 2.0], [0.0, 1.0]]), 1)

    def test_large_path_matches_dense(self, rng):
        M = rng.normal(size=(120, 5))
        B = M @ M.T
        vals, vecs = top_eigen(B, 3)
        w = np.linalg.eigvalsh(B)[::-1][:3]
        np.testing.assert_allclose(vals, w, rtol=1e-10)
        np.testing.assert_allclose(vecs.T @ vecs, np.eye(3), atol=1e-10)

    def test_jacobi_matches_lapack(self, rng):
        M = rng.normal(size=(12, 12))
        A = M + M.T
        w, V = jacobi_eigh(A)
        np.testing.assert_allclose(w, np.linalg.eigvalsh(A), atol=1e-9)
        np.testing.assert_allclose(V @ np.diag(w) @ V.T, A, atol=1e-8)


class TestIsomap:
    def test_three_points_on_line(self):
        cloud = PointCloud(np.array([[0.0], [1.0], [2.0]]))
        emb = isomap_embed(geodesic_distances(build_knn_graph(cloud, 1)), 1)
        np.testing.assert_allclose(np.abs(emb.coords[0]), [1.0, 0.0, 1.0], atol=1e-12)
        assert emb.coords[0, 0] == pytest.approx(-emb.coords[0, 2])

    def test_four_cycle_square(self):
        sq = PointCloud(np.array([[0, 0], [1, 0], [1, 1], [0, 1]], dtype=float))
        geo = geodesic_distances(build_knn_graph(sq, 2))
        emb = isomap_embed(geo, 2)
        # MDS oracle on cyclic distances: dense eigendecomposition of -HGsqH/2
        w, V = np.linalg.eigh(double_center(geo.Gsq))
        a = np.sqrt(w[-1]) * np.abs(V[0, -1])
        target = np.array([[a, a], [a, -a], [-a, -a], [-a, a]]).T
        assert procrustes_error(target, emb.coords) < 1e-6

    def test_error_decreases_with_batch_size(self):
        def err(n):
            ds = gen_swiss_roll(SwissRollParams([Mode.isotropic((30, 12), 4.0)], n, seed=7))
            g = build_knn_graph(ds.cloud, 8, largest_component=True)
            emb = isomap_embed(geodesic_distances(g), 2)
            return procrustes_error(ds.truth[g.index].T, emb.coords)

        assert err(500) < err(100)

    def test_embedding_invariants(self, roll500):
        _, geo = roll500
        emb = isomap_embed(geo, 2)
        np.testing.assert_allclose(emb.eigvecs.T @ emb.eigvecs, np.eye(2), atol=1e-8)
        np.testing.assert_allclose(np.sum(emb.coords ** 2, axis=1), emb.eigvals, rtol=1e-8)
        assert np.all(np.diff(emb.eigvals) <= 0) and np.all(emb.eigvals > 0)

    def test_permutation_equivariance(self, roll500):
        ds, geo = roll500
        perm = np.random.default_rng(0).permutation(geo.n)
        a = isomap_embed(geo, 2).coords
        b = classical_mds(geo.Gsq[np.ix_(perm, perm)], 2).T
        assert procrustes_error(a[:, perm], b) < 1e-8


class TestClassicalMds:
    def test_line(self):
        sq = cdist([[0.0], [1.0], [2.0]], [[0.0], [1.0], [2.0]], "sqeuclidean")
        x = classical_mds(sq, 1)[:, 0]
        np.testing.assert_allclose(np.abs(x), [1, 0, 1], atol=1e-12)

    def test_same_as_isomap(self, roll500):
        _, geo = roll500
        np.testing.assert_allclose(classical_mds(geo.Gsq, 2), isomap_embed(geo, 2).coords.T, atol=1e-9)

    def test_recovers_random_configuration(self, rng):
        X = rng.normal(size=(10, 2))
        Y = classical_mds(cdist(X, X, "sqeuclidean"), 2)
        assert procrustes_error(X.T, Y.T) < 1e-8

    def test_rejects_bad_input(self):
        with pytest.raises(ValueError):
            classical_mds(np.array([[1.0, 0.0], [0.0, 0.0]]), 1)


@settings(max_examples=40, deadline=None)
@given(st.integers(min_value=4, max_value=25), st.integers(min_value=1, max_value=3),
       st.integers(min_value=0, max_value=2 ** 31 - 1))
def test_mds_exact_for_euclidean_configurations(n, d, seed):
    X = np.random.default_rng(seed).normal(size=(n, d)) * 3.0
    if np.linalg.matrix_rank(X - X.mean(0)) < d:
        return
    Y = classical_mds(cdist(X, X, "sqeuclidean"), d)
    assert procrustes_error(X.T, Y.T) < 1e-8
