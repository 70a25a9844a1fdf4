import numpy as np
import pytest
from scipy.spatial.distance import cdist

from gpisomap.data import Mode, SwissRollParams, default_modes, gen_drift_stream, gen_swiss_roll
from gpisomap.geometry import PointCloud, build_knn_graph, geodesic_distances, geodesic_set_from_distances, \
    stream_geodesics
from gpisomap.manifold import BatchParams, GridSpec, batch_phase
from gpisomap.spectral import isomap_embed
from gpisomap.streaming import (StreamAborted, calibrate_threshold, primary_verdicts, process_stream,
                                s_isomap_f, s_isomap_map, s_isomap_projection, stationarity_gap, variance_trace)

DETECT_GRID = GridSpec((0.05, 0.5), (1e-4, 0.1), 8, 4)


@pytest.fixture(scope="module")
def three_modes():
    ds = gen_swiss_roll(SwissRollParams(default_modes(4), 400, seed=11))
    params = BatchParams(eps=1.0, grid=DETECT_GRID)
    train = ds.select(modes=[0, 1, 2], split="train")
    atlas = batch_phase(train.cloud, params)
    test = ds.select(modes=[0, 1, 2], split="test")
    validation = test.subset(np.arange(0, test.n, 4))
    sigma_t = calibrate_threshold(atlas, validation.cloud, 99.0)
    return ds, atlas, sigma_t, validation


class TestSIsomap:
    def test_duplicate_point_on_flat_configuration(self, rng):
        uv = rng.uniform(-5, 5, size=(60, 2))
        pts = np.column_stack([uv, np.zeros(60)]) @ np.linalg.qr(rng.normal(size=(3, 3)))[0]
        geo = geodesic_set_from_distances(cdist(pts, pts))
        emb = isomap_embed(geo, 2)
        for j in (0, 17, 59):
            np.testing.assert_allclose(s_isomap_map(emb, geo.Gsq, geo.Gsq[j]), emb.coords[:, j], atol=1e-6)

    def test_zero_rhs_maps_to_origin(self, roll500):
        _, geo = roll500
        emb = isomap_embed(geo, 2)
        gsq = geo.Gsq.mean(axis=1)  # makes f identically zero
        np.testing.assert_array_equal(s_isomap_f(geo.Gsq, gsq), 0.0)
        np.testing.assert_array_equal(s_isomap_map(emb, geo.Gsq, gsq), 0.0)

    def test_variants_agree_on_in_distribution_points(self, roll500):
        ds, geo = roll500
        emb = isomap_embed(geo, 2)
        extra = gen_swiss_roll(SwissRollParams([Mode.isotropic((30.0, 12.0), 4.0)], 50, seed=99, test_fraction=0.0))
        for p in extra.cloud.points:
            gsq = stream_geodesics(p, ds.cloud, geo, 8)
            a = s_isomap_map(emb, geo.Gsq, gsq, "simple")
            b = s_isomap_map(emb, geo.Gsq, gsq, "incremental")
            assert np.linalg.norm(a - b) < 0.05 * np.linalg.norm(a)

    def test_variants_differ_by_half_the_gap(self, roll500, rng):
        _, geo = roll500
        gsq = rng.uniform(0, 100, geo.Gsq.shape[0])
        diff = s_isomap_f(geo.Gsq, gsq, "incremental") - s_isomap_f(geo.Gsq, gsq, "simple")
        np.testing.assert_allclose(diff, 0.5 * stationarity_gap(geo.Gsq, gsq), rtol=1e-9, atol=1e-9)

    def test_projection_is_lambda_scaled_map(self, roll500, rng):
        _, geo = roll500
        emb = isomap_embed(geo, 2)
        gsq = rng.uniform(0, 100, geo.Gsq.shape[0])
        np.testing.assert_allclose(s_isomap_projection(emb, geo.Gsq, gsq),
                                   emb.eigvals * s_isomap_map(emb, geo.Gsq, gsq), rtol=1e-10)

    def test_unknown_variant(self, roll500):
        _, geo = roll500
        with pytest.raises(ValueError):
            s_isomap_f(geo.Gsq, geo.Gsq[0], "other")


class TestVarianceTrace:
    def test_constant(self):
        np.testing.assert_allclose(variance_trace([0.3] * 50, 7), 0.3)

    def test_window_one(self, rng):
        v = rng.uniform(size=40)
        np.testing.assert_array_equal(variance_trace(v, 1), v)

    def test_step(self):
        m, w = 200, 25
        trace = variance_trace(np.r_[np.zeros(m), np.ones(m)], w)
        cross = int(np.argmax(trace >= 0.5))
        assert m <= cross <= m + w

    def test_bad_window(self):
        with pytest.raises(ValueError):
            variance_trace([1.0], 0)


class TestProcessStream:
    def test_known_modes_only(self, three_modes):
        ds, atlas, sigma_t, validation = three_modes
        test = ds.select(modes=[0, 1, 2], split="test")
        rest = test.subset(np.setdiff1d(np.arange(test.n), np.arange(0, test.n, 4)))
        stream = gen_drift_stream(rest, [([0, 1, 2], rest.n)], seed=1)
        verdicts, _, events = process_stream(atlas, stream.cloud, sigma_t, n_s=1000)
        assert np.mean([v.assigned for v in verdicts]) >= 0.95
        assert events == []

    def test_verdict_invariants(self, three_modes):
        ds, atlas, sigma_t, _ = three_modes
        stream = gen_drift_stream(ds, [([0, 3], 60)], seed=2)
        verdicts, _, _ = process_stream(atlas, stream.cloud, sigma_t, n_s=10 ** 6)
        for v in verdicts:
            assert v.cluster == int(np.argmin(np.abs(v.variances)))
            assert v.assigned == (v.variance <= sigma_t)
            assert (v.coords is not None) == v.assigned
            if v.assigned:
                np.testing.assert_allclose(v.coords, atlas.to_global(v.cluster, v.mu[v.cluster]))

    def test_n_s_one_relearns_immediately(self, three_modes):
        ds, atlas, sigma_t, _ = three_modes
        stream = gen_drift_stream(ds, [([0], 5), ([3], 1)], seed=3)
        verdicts, new_atlas, events = process_stream(atlas, stream.cloud, sigma_t, n_s=1)
        first_bad = next(v.index for v in verdicts if not v.assigned)
        assert events[0]["index"] == first_bad and events[0]["buffer_size"] == 1
        assert events[0]["batch_size_after"] == atlas.batch.n + 1
        assert new_atlas.batch.n == atlas.batch.n + len(events)
        assert sum(v.reemitted for v in verdicts) == len(events)

    def test_buffer_bound_and_relearn_count(self, three_modes):
        ds, atlas, _, _ = three_modes
        stream = gen_drift_stream(ds, [([0, 1, 2], 40)], seed=4)
        # sigma_t below every variance: every point is unassigned
        verdicts, _, events = process_stream(atlas, stream.cloud, -1.0, n_s=15)
        assert [e["buffer_size"] for e in events] == [15, 15]
        assert [e["index"] for e in events] == [14, 29]
        assert len(primary_verdicts(verdicts)) == 40

    def test_deterministic(self, three_modes):
        ds, atlas, sigma_t, _ = three_modes
        stream = gen_drift_stream(ds, [([1], 30), ([3], 30)], seed=5)
        a = process_stream(atlas, stream.cloud, sigma_t, n_s=20)
        b = process_stream(atlas, stream.cloud, sigma_t, n_s=20)
        assert a[2] == b[2]
        for va, vb in zip(a[0], b[0]):
            assert (va.index, va.cluster, va.assigned, va.reemitted) == (vb.index, vb.cluster, vb.assigned, vb.reemitted)
            np.testing.assert_array_equal(va.variances, vb.variances)

    def test_unseen_mode_has_higher_variance(self, three_modes):
        ds, atlas, sigma_t, _ = three_modes
        stream = gen_drift_stream(ds, [([0, 1, 2], 60), ([3], 60)], seed=6)
        verdicts, _, _ = process_stream(atlas, stream.cloud, sigma_t, n_s=10 ** 6)
        var = np.array([v.variance for v in verdicts])
        assert var[60:].mean() >= 2 * var[:60].mean()

    def test_failed_relearn_aborts_with_log(self, three_modes):
        ds, atlas, _, _ = three_modes
        stream = gen_drift_stream(ds, [([3], 5)], seed=7)
        bad = BatchParams(eps=1e-9, grid=DETECT_GRID)
        with pytest.raises(StreamAborted) as info:
            process_stream(atlas, stream.cloud, -1.0, n_s=3, params=bad)
        assert len(info.value.verdicts) == 3
        assert info.value.events[-1]["event"] == "relearn_failed"

    def test_rejects_bad_n_s(self, three_modes):
        _, atlas, sigma_t, _ = three_modes
        with pytest.raises(ValueError):
            process_stream(atlas, PointCloud(np.zeros((1, 3))), sigma_t, n_s=0)

    def test_calibration_needs_points(self, three_modes):
        _, atlas, _, _ = three_modes
        with pytest.raises(ValueError):
            calibrate_threshold(atlas, PointCloud(np.zeros((0, 3))))
