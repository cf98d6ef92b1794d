import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from marginmine.ann import (
    build_index,
    default_m,
    default_nlist,
    default_nprobe,
    encode,
    load_index,
    search_exact,
    search_ivfpq,
    serialized_layout,
    topk_rows,
    train_kmeans,
    train_pq,
    write_index,
)
from marginmine.ann.pq import ProductQuantizer
from marginmine.embeddings import EmbeddingMatrix, normalize_l2
from marginmine.errors import CapacityError, DataError, FormatError, LengthError, ParameterError, ShapeError

from oracles import brute_force_knn


def unit_matrix(n, dim, seed):
    return normalize_l2(EmbeddingMatrix(np.random.default_rng(seed).standard_normal((n, dim))))


@pytest.fixture(scope="module")
def small_index():
    data = unit_matrix(1000, 16, 0)
    return data, build_index(data, nlist=16, m=4, seed=7)


class TestKMeans:
    def test_square_corners(self):
        pts = np.array([[0, 0], [0, 1], [1, 0], [1, 1]], dtype=np.float32)
        km = train_kmeans(pts, 4, seed=0)
        assert km.inertia == 0.0
        assert sorted(map(tuple, km.centroids.tolist())) == sorted(map(tuple, pts.tolist()))

    def test_two_clusters_hit_means(self):
        # cluster means computed by hand: (0.5, 0) and (100, 0.5)
        pts = np.array([[0, 0], [1, 0], [100, 0], [100, 1]], dtype=np.float32)
        km = train_kmeans(pts, 2, seed=3)
        got = sorted(map(tuple, km.centroids.tolist()))
        assert got == [(0.5, 0.0), (100.0, 0.5)]
        assert km.inertia == pytest.approx(0.5 + 0.5)

    def test_capacity(self):
        with pytest.raises(CapacityError):
            train_kmeans(np.zeros((3, 2)), 5)

    def test_deterministic(self):
        x = np.random.default_rng(1).standard_normal((300, 8))
        a, b = train_kmeans(x, 10, seed=5), train_kmeans(x, 10, seed=5)
        assert a.centroids.tobytes() == b.centroids.tobytes()
        assert a.trace == b.trace

    def test_thread_count_does_not_matter(self):
        x = np.random.default_rng(1).standard_normal((2500, 8))
        a, b = train_kmeans(x, 12, seed=5, threads=1), train_kmeans(x, 12, seed=5, threads=4)
        assert a.centroids.tobytes() == b.centroids.tobytes()

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 10_000), st.integers(1, 12))
    def test_inertia_non_increasing(self, seed, k):
        x = np.random.default_rng(seed).standard_normal((60, 3))
        km = train_kmeans(x, k, max_iters=50, seed=seed)
        trace = np.array(km.trace)
        assert np.all(np.diff(trace) <= 1e-9 * trace[:-1] + 1e-12)
        assert km.inertia == trace[-1] >= 0

    def test_duplicate_points_reseed_empty_clusters(self):
        x = np.repeat(np.array([[0.0, 0.0], [5.0, 5.0]]), 10, axis=0)
        km = train_kmeans(x, 4, seed=0)
        assert km.inertia == 0.0
        assert np.isfinite(km.centroids).all()

    def test_stops_early(self):
        x = np.random.default_rng(0).standard_normal((200, 2))
        km = train_kmeans(x, 3, max_iters=500, seed=0)
        assert km.iterations_run < 500


class TestProductQuantizer:
    def test_shapes(self):
        pq = train_pq(np.random.default_rng(0).standard_normal((300, 8)), 2, seed=0)
        assert pq.codebooks.shape == (2, 256, 4)
        assert pq.ksub == 256 and pq.dsub == 4

    def test_indivisible(self):
        with pytest.raises(ShapeError):
            train_pq(np.zeros((300, 10)), 4)

    def test_small_training_set_shrinks_codebook(self):
        pq = train_pq(np.random.default_rng(0).standard_normal((40, 8)), 2, seed=0)
        assert pq.ksub == 40
        assert pq.warnings

    def test_exact_hit(self):
        rng = np.random.default_rng(0)
        books = rng.standard_normal((2, 256, 3)).astype(np.float32)
        pq = ProductQuantizer(m=2, ksub=256, dim=6, codebooks=books)
        vec = np.concatenate([books[0, 3], books[1, 7]])
        assert list(encode(pq, vec)) == [3, 7]

    def test_code_length(self):
        pq = train_pq(np.random.default_rng(0).standard_normal((300, 12)), 3, seed=0)
        code = pq.encode(np.ones(12))
        assert code.dtype == np.uint8 and code.shape == (3,)

    def test_tie_goes_to_lowest_index(self):
        books = np.zeros((1, 256, 2), dtype=np.float32)
        books[0, :, 0] = np.arange(256) * 10.0
        books[0, 1] = [2.0, 0.0]
        pq = ProductQuantizer(m=1, ksub=256, dim=2, codebooks=books)
        assert pq.encode([1.0, 0.0])[0] == 0

    def test_length_mismatch(self):
        pq = train_pq(np.random.default_rng(0).standard_normal((300, 4)), 2, seed=0)
        with pytest.raises(ShapeError):
            pq.encode(np.ones(5))

    def test_zero_error_on_256_distinct_repeated_subvectors(self):
        rng = np.random.default_rng(4)
        distinct = rng.standard_normal((256, 4))
        rows = np.concatenate([distinct, distinct[rng.integers(0, 256, 512)]])
        pq = train_pq(rows, 1, seed=2)
        recon = pq.decode(pq.encode_batch(rows))
        # brute-force check: every training row is reproduced by its code
        assert np.max(np.abs(recon - rows.astype(np.float32))) == 0.0

    def test_reconstruction_matches_nearest_codeword(self):
        rng = np.random.default_rng(1)
        x = rng.standard_normal((400, 8))
        pq = train_pq(x, 2, seed=1)
        codes = pq.encode_batch(x)
        for row, code in zip(x[:50], codes[:50]):
            for j in range(2):
                sub = row[4 * j:4 * (j + 1)]
                d2 = ((pq.codebooks[j].astype(np.float64) - sub) ** 2).sum(1)
                assert d2[code[j]] == d2.min()


class TestExactSearch:
    def test_self_similarity(self):
        data = unit_matrix(20, 8, 1)
        res = search_exact(data, data.take([7]), 1)
        assert res.row(0)[0][0] == 7
        assert res.row(0)[0][1] == pytest.approx(1.0, abs=1e-6)

    def test_hand_dot_products(self):
        db = EmbeddingMatrix([[1.0, 0.0], [0.0, 1.0]], normalized=True)
        res = search_exact(db, EmbeddingMatrix([[1.0, 0.0]]), 2)
        assert res.row(0) == [(0, 1.0), (1, 0.0)]

    def test_k_clamped(self):
        res = search_exact(unit_matrix(3, 4, 0), unit_matrix(2, 4, 1), 5)
        assert all(len(res.row(i)) == 3 for i in range(2))

    def test_dim_mismatch(self):
        with pytest.raises(ShapeError):
            search_exact(unit_matrix(3, 4, 0), unit_matrix(2, 5, 1), 1)

    def test_ties_break_by_id(self):
        db = EmbeddingMatrix([[0.0, 1.0], [1.0, 0.0], [1.0, 0.0], [1.0, 0.0], [0.6, 0.8]])
        res = search_exact(db, EmbeddingMatrix([[1.0, 0.0]]), 2)
        assert [i for i, _ in res.row(0)] == [1, 2]

    def test_matches_brute_force(self):
        db, q = unit_matrix(150, 6, 2), unit_matrix(30, 6, 3)
        res = search_exact(db, q, 5)
        ref = brute_force_knn(db.values, q.values, 5)
        for i in range(30):
            assert [j for j, _ in res.row(i)] == [j for j, _ in ref[i]]
            np.testing.assert_allclose([s for _, s in res.row(i)], [s for _, s in ref[i]], atol=1e-12)

    def test_self_retrieval_property(self):
        data = unit_matrix(400, 16, 9)
        res = search_exact(data, data, 1)
        assert np.array_equal(res.ids[:, 0], np.arange(400))
        np.testing.assert_allclose(res.sims[:, 0], 1.0, atol=1e-5)

    def test_similarity_bounds_and_unique(self):
        res = search_exact(unit_matrix(100, 5, 0), unit_matrix(40, 5, 1), 10)
        assert np.all(res.sims >= -1 - 1e-6) and np.all(res.sims <= 1 + 1e-6)
        assert all(len(set(res.ids[i])) == 10 for i in range(40))

    def test_threads_identical(self):
        db, q = unit_matrix(300, 8, 0), unit_matrix(1500, 8, 1)
        assert search_exact(db, q, 4, threads=1).same_as(search_exact(db, q, 4, threads=3))

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 1000), st.integers(1, 12))
    def test_topk_rows_heavy_ties(self, seed, k):
        rng = np.random.default_rng(seed)
        scores = rng.integers(0, 3, size=(5, 9)).astype(float)
        ids, vals = topk_rows(scores, k)
        for r in range(5):
            ref = sorted(range(9), key=lambda j: (-scores[r, j], j))[:k]
            assert list(ids[r]) == ref


class TestIvfPq:
    def test_conservation(self, small_index):
        data, index = small_index
        assert index.nlist == 16 and sum(index.list_sizes()) == 1000
        ids = np.sort(np.concatenate(index.list_ids))
        assert np.array_equal(ids, np.arange(1000))
        assert all(c.shape[1] == 4 for c in index.list_codes)

    def test_capacity(self):
        with pytest.raises(CapacityError):
            build_index(unit_matrix(10, 8, 0), nlist=11, m=2)

    def test_requires_unit_rows(self):
        with pytest.raises(DataError):
            build_index(EmbeddingMatrix(np.full((20, 4), 3.0)), nlist=2, m=2)

    def test_bad_m(self):
        with pytest.raises(ShapeError):
            build_index(unit_matrix(50, 16, 0), nlist=2, m=7)

    def test_nprobe_range(self, small_index):
        data, index = small_index
        with pytest.raises(ParameterError):
            search_ivfpq(index, data.take([0]), 1, nprobe=0)
        with pytest.raises(ParameterError):
            search_ivfpq(index, data.take([0]), 1, nprobe=17)

    def test_fewer_candidates_than_k(self):
        data = unit_matrix(40, 8, 0)
        index = build_index(data, nlist=8, m=2, seed=0)
        res = search_ivfpq(index, data.take([0]), 39, nprobe=1)
        assert res.lengths[0] == index.list_sizes()[int(index.coarse.assign(data.values[:1])[0][0])]
        assert res.lengths[0] < 39
        assert np.all(res.ids[0, res.lengths[0]:] == -1)

    def test_zero_pq_error_equals_exact(self):
        # 4-dim vectors drawn from a 200-point set: with one cell, every residual
        # is a training row, PQ with m=dim reproduces them exactly, and
        # 1 - d^2/2 equals the dot product for unit vectors
        base = unit_matrix(200, 4, 11)
        index = build_index(base, nlist=1, m=4, seed=0)
        queries = unit_matrix(25, 4, 12)
        approx = search_ivfpq(index, queries, 5, nprobe=1)
        exact = search_exact(base, queries, 5)
        assert np.array_equal(approx.ids, exact.ids)
        np.testing.assert_allclose(approx.sims, exact.sims, atol=1e-5)

    def test_cosine_l2_consistency(self):
        x = unit_matrix(50, 8, 3).values.astype(np.float64)
        for i, j in itertools.combinations(range(10), 2):
            d2 = ((x[i] - x[j]) ** 2).sum()
            assert abs((1 - d2 / 2) - x[i] @ x[j]) <= 1e-5

    def test_deterministic_and_threads(self, small_index, tmp_path):
        data, index = small_index
        again = build_index(data, nlist=16, m=4, seed=7, threads=3)
        write_index(index, tmp_path / "a.idx")
        write_index(again, tmp_path / "b.idx")
        assert (tmp_path / "a.idx").read_bytes() == (tmp_path / "b.idx").read_bytes()
        q = unit_matrix(600, 16, 5)
        assert search_ivfpq(index, q, 4, 4, threads=1).same_as(search_ivfpq(index, q, 4, 4, threads=4))

    def test_recall_monotone_in_nprobe(self, small_index):
        data, index = small_index
        rng = np.random.default_rng(8)
        q = normalize_l2(EmbeddingMatrix(data.values[:200] + 0.1 * rng.standard_normal((200, 16))))
        truth = search_exact(data, q, 1).ids[:, 0]
        recalls = [np.mean(search_ivfpq(index, q, 1, p).ids[:, 0] == truth) for p in (1, 2, 4, 8, 16)]
        assert recalls == sorted(recalls)

    def test_round_trip_bit_exact(self, small_index, tmp_path):
        data, index = small_index
        write_index(index, tmp_path / "i.idx")
        back = load_index(tmp_path / "i.idx")
        write_index(back, tmp_path / "j.idx")
        assert (tmp_path / "i.idx").read_bytes() == (tmp_path / "j.idx").read_bytes()
        q = unit_matrix(30, 16, 1)
        assert search_ivfpq(index, q, 3, 4).same_as(search_ivfpq(back, q, 3, 4))

    def test_serialized_layout(self, small_index, tmp_path):
        data, index = small_index
        write_index(index, tmp_path / "i.idx")
        layout = serialized_layout(tmp_path / "i.idx")
        assert layout["codes"] == 1000 * 4
        assert layout["ids"] == 1000 * 8
        assert layout["total"] == sum(layout[s] for s in ("header", "centroids", "codebooks", "list_lengths", "ids", "codes"))

    def test_corrupt_files(self, small_index, tmp_path):
        data, index = small_index
        write_index(index, tmp_path / "i.idx")
        raw = (tmp_path / "i.idx").read_bytes()
        (tmp_path / "t.idx").write_bytes(raw[:-3])
        with pytest.raises(LengthError):
            load_index(tmp_path / "t.idx")
        (tmp_path / "m.idx").write_bytes(b"XXXXXXXX" + raw[8:])
        with pytest.raises(FormatError):
            load_index(tmp_path / "m.idx")

    def test_rotation_hook(self):
        data = unit_matrix(300, 8, 2)
        rot, _ = np.linalg.qr(np.random.default_rng(0).standard_normal((8, 8)))
        index = build_index(data, nlist=4, m=2, seed=0, rotation=rot)
        res = search_ivfpq(index, data.take(range(20)), 1, nprobe=4)
        assert np.mean(res.ids[:, 0] == np.arange(20)) > 0.8
        with pytest.raises(ParameterError):
            write_index(index, "/dev/null")

    def test_defaults(self):
        assert default_nlist(10_000) == 400
        assert default_nlist(5) == 5
        assert default_nprobe(64) == 16 and default_nprobe(2) == 1
        assert default_m(1024) == 64 and default_m(16) == 4 and default_m(10) == 2
