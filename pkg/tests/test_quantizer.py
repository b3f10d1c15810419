"""Quantizer tests: dedup, k-means against exhaustive oracles, MLP forward
against hand computation, and file round-trips."""

import numpy as np
import pytest

from uedkit import quantizer as qz
from uedkit.quantizer import (
    KMeansQuantizer,
    MlpQuantizer,
    UnitSequence,
    dedup,
    kmeans_fit,
    kmeans_quantize,
    load_quantizer,
    mlp_forward,
    mlp_quantize,
    save_quantizer,
)
from uedkit.errors import FormatError, ValidationError


class TestUnitSequence:
    def test_bounds_checked(self):
        with pytest.raises(ValidationError):
            UnitSequence(np.array([0, 5]), K=5)
        with pytest.raises(ValidationError):
            UnitSequence(np.array([-1]), K=5)

    def test_len_iter(self):
        s = UnitSequence(np.array([3, 1, 4]), K=5)
        assert len(s) == 3
        assert list(s) == [3, 1, 4]


class TestDedup:
    def test_reference_sequence(self):
        got = dedup(np.array([10, 11, 11, 11, 21, 32, 32, 32, 21]))
        np.testing.assert_array_equal(got, [10, 11, 21, 32, 21])

    def test_empty(self):
        assert len(dedup(np.array([], dtype=np.int64))) == 0

    def test_constant_run(self):
        np.testing.assert_array_equal(dedup(np.array([5, 5, 5, 5])), [5])

    def test_idempotent(self):
        rng = np.random.default_rng(61)
        for _ in range(50):
            x = rng.integers(0, 4, size=int(rng.integers(0, 30)))
            once = dedup(x)
            np.testing.assert_array_equal(dedup(once), once)

    def test_never_longer_no_adjacent_equal(self):
        rng = np.random.default_rng(62)
        for _ in range(50):
            x = rng.integers(0, 3, size=int(rng.integers(0, 40)))
            d = dedup(x)
            assert len(d) <= len(x)
            assert np.all(d[1:] != d[:-1])

    def test_preserves_unit_sequence_type(self):
        s = UnitSequence(np.array([1, 1, 2]), K=4)
        out = dedup(s)
        assert isinstance(out, UnitSequence)
        assert out.K == 4
        np.testing.assert_array_equal(out.units, [1, 2])


class TestKMeansFit:
    def test_k1_centroid_is_mean(self):
        rng = np.random.default_rng(63)
        X = rng.normal(size=(200, 5)) * 3.0
        q = kmeans_fit(X, K=1, rng=np.random.default_rng(0))
        np.testing.assert_allclose(q.centroids[0], X.mean(axis=0), atol=1e-8)

    def test_two_separated_clouds(self):
        rng = np.random.default_rng(64)
        a = rng.normal(size=(32, 4)) * 0.1
        b = rng.normal(size=(32, 4)) * 0.1 + 10.0
        X = np.vstack([a, b])
        q = kmeans_fit(X, K=2, rng=np.random.default_rng(1))
        means = sorted([a.mean(axis=0), b.mean(axis=0)], key=lambda m: m[0])
        got = sorted(q.centroids, key=lambda c: c[0])
        for g, m in zip(got, means):
            assert np.linalg.norm(g - m) < 0.2

    def test_inertia_nonincreasing(self):
        rng = np.random.default_rng(65)
        X = rng.normal(size=(300, 6))
        centroids = qz.kmeans_plus_plus_init(X, 8, np.random.default_rng(2))
        inertias = []
        for _ in range(20):
            centroids, inertia, _ = qz.lloyd_iteration(X, centroids)
            inertias.append(inertia)
        assert all(b <= a + 1e-9 for a, b in zip(inertias, inertias[1:]))

    def test_too_few_distinct_frames(self):
        X = np.tile(np.array([[1.0, 2.0]]), (50, 1))
        with pytest.raises(ValidationError):
            kmeans_fit(X, K=2, rng=np.random.default_rng(3))

    def test_deterministic_given_seed(self):
        rng = np.random.default_rng(66)
        X = rng.normal(size=(150, 4))
        q1 = kmeans_fit(X, K=5, rng=np.random.default_rng(7))
        q2 = kmeans_fit(X, K=5, rng=np.random.default_rng(7))
        np.testing.assert_array_equal(q1.centroids, q2.centroids)

    def test_accepts_list_of_frame_matrices(self):
        rng = np.random.default_rng(67)
        parts = [rng.normal(size=(20, 3)) for _ in range(4)]
        q = kmeans_fit(parts, K=3, rng=np.random.default_rng(4))
        assert q.K == 3
        assert q.D == 3


class TestKMeansQuantize:
    def test_centroid_maps_to_itself(self):
        rng = np.random.default_rng(68)
        q = KMeansQuantizer(rng.normal(size=(6, 3)))
        out = kmeans_quantize(q, q.centroids)
        np.testing.assert_array_equal(out.units, np.arange(6))

    def test_tie_breaks_to_lowest_index(self):
        q = KMeansQuantizer(np.array([[0.0, 1.0], [2.0, 1.0], [9.0, 9.0]]))
        out = kmeans_quantize(q, np.array([[1.0, 1.0]]))  # equidistant to 0 and 1
        assert out.units[0] == 0

    def test_matches_brute_force_scan(self):
        rng = np.random.default_rng(69)
        for _ in range(20):
            K = int(rng.integers(1, 9))
            D = int(rng.integers(1, 5))
            q = KMeansQuantizer(rng.normal(size=(K, D)))
            X = rng.normal(size=(40, D))
            got = kmeans_quantize(q, X).units
            ref = np.array([
                min(range(K), key=lambda k: float(((x - q.centroids[k]) ** 2).sum()))
                for x in X
            ])
            np.testing.assert_array_equal(got, ref)

    def test_dim_mismatch(self):
        q = KMeansQuantizer(np.eye(3))
        with pytest.raises(ValidationError):
            kmeans_quantize(q, np.zeros((5, 4)))

    def test_duplicate_centroids_rejected(self):
        with pytest.raises(ValidationError):
            KMeansQuantizer(np.array([[1.0, 2.0], [1.0, 2.0]]))


class TestMlpHiddenDims:
    def test_interpolation(self):
        # D=80, K=50: delta=10 -> 70, 60
        assert qz.mlp_hidden_dims(80, 50) == (70, 60)

    def test_clamped_at_output_width(self):
        h1, h2 = qz.mlp_hidden_dims(10, 9)
        assert h1 >= 10 and h2 >= 10


class TestMlpForward:
    def test_zero_weights_give_zero_logits(self):
        q = MlpQuantizer(
            w1=np.zeros((4, 3)), b1=np.zeros(4),
            w2=np.zeros((4, 4)), b2=np.zeros(4),
            w3=np.zeros((5, 4)), b3=np.zeros(5),
        )
        logits = mlp_forward(q, np.ones((6, 3)))
        np.testing.assert_array_equal(logits, np.zeros((6, 5)))

    def test_hand_computed_scalar_chain(self):
        # 1-dim chain: z1 = 2x+1, a1 = leaky(z1), z2 = -3a1, a2 = leaky(z2),
        # out = [4a2 + 0.5, 0]; trace x = -1 by hand
        q = MlpQuantizer(
            w1=np.array([[2.0]]), b1=np.array([1.0]),
            w2=np.array([[-3.0]]), b2=np.array([0.0]),
            w3=np.array([[4.0], [0.0]]), b3=np.array([0.5, 0.0]),
        )
        x = np.array([[-1.0]])
        z1 = -1.0            # 2*(-1)+1
        a1 = 0.01 * z1       # negative branch
        z2 = -3.0 * a1       # positive
        a2 = z2
        expected = 4.0 * a2 + 0.5
        logits = mlp_forward(q, x)
        assert logits[0, 0] == pytest.approx(expected, abs=1e-12)
        assert logits[0, 1] == 0.0

    def test_batched_equals_per_frame(self):
        rng = np.random.default_rng(70)
        q = MlpQuantizer.initialize(D=6, K=4, rng=np.random.default_rng(5))
        X = rng.normal(size=(10, 6))
        batch = mlp_forward(q, X)
        rows = np.vstack([mlp_forward(q, X[i : i + 1]) for i in range(10)])
        np.testing.assert_allclose(batch, rows, atol=1e-12)

    def test_dim_mismatch(self):
        q = MlpQuantizer.initialize(D=6, K=4, rng=np.random.default_rng(6))
        with pytest.raises(ValidationError):
            mlp_forward(q, np.zeros((3, 7)))

    def test_initialize_shapes(self):
        q = MlpQuantizer.initialize(D=80, K=50, rng=np.random.default_rng(8))
        assert q.D == 80
        assert q.K == 50
        assert q.hidden_dims == (70, 60)
        assert q.w3.shape == (51, 60)


class TestMlpQuantize:
    def test_blank_excluded_from_argmax(self):
        # craft logits via biases: blank largest overall, unit 3 largest
        # among the real units
        q = MlpQuantizer(
            w1=np.zeros((4, 2)), b1=np.zeros(4),
            w2=np.zeros((4, 4)), b2=np.zeros(4),
            w3=np.zeros((6, 4)), b3=np.array([0.0, 1.0, 2.0, 5.0, 1.0, 9.0]),
        )
        out = mlp_quantize(q, np.zeros((3, 2)))
        np.testing.assert_array_equal(out.units, [3, 3, 3])
        assert out.K == 5

    def test_one_hot_bias(self):
        b3 = np.zeros(9)
        b3[7] = 3.0
        q = MlpQuantizer(
            w1=np.zeros((5, 4)), b1=np.zeros(5),
            w2=np.zeros((5, 5)), b2=np.zeros(5),
            w3=np.zeros((9, 5)), b3=b3,
        )
        out = mlp_quantize(q, np.zeros((4, 4)))
        np.testing.assert_array_equal(out.units, [7, 7, 7, 7])

    def test_matches_argmax_scan(self):
        rng = np.random.default_rng(71)
        for _ in range(10):
            K = int(rng.integers(1, 7))
            q = MlpQuantizer.initialize(D=5, K=K, rng=rng)
            X = rng.normal(size=(12, 5))
            logits = mlp_forward(q, X)
            got = mlp_quantize(q, X).units
            ref = np.array([int(np.argmax(row[:K])) for row in logits])
            np.testing.assert_array_equal(got, ref)


class TestSerialization:
    def test_kmeans_roundtrip(self, tmp_path):
        rng = np.random.default_rng(72)
        q = KMeansQuantizer(rng.normal(size=(5, 8)))
        p = tmp_path / "km.bin"
        save_quantizer(p, q)
        back = load_quantizer(p)
        assert isinstance(back, KMeansQuantizer)
        np.testing.assert_array_equal(
            back.centroids, q.centroids.astype(np.float32).astype(np.float64)
        )

    def test_second_roundtrip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(73)
        q = KMeansQuantizer(rng.normal(size=(4, 6)))
        p1, p2 = tmp_path / "a.bin", tmp_path / "b.bin"
        save_quantizer(p1, q)
        save_quantizer(p2, load_quantizer(p1))
        assert p1.read_bytes() == p2.read_bytes()

    def test_f32_snapped_model_roundtrips_identically(self, tmp_path):
        rng = np.random.default_rng(74)
        q = qz.round_to_f32(MlpQuantizer.initialize(D=7, K=3, rng=rng))
        p = tmp_path / "mlp.bin"
        save_quantizer(p, q)
        back = load_quantizer(p)
        X = rng.normal(size=(9, 7))
        np.testing.assert_array_equal(mlp_forward(back, X), mlp_forward(q, X))

    def test_mlp_roundtrip_logits_match_after_f32(self, tmp_path):
        rng = np.random.default_rng(75)
        q = MlpQuantizer.initialize(D=7, K=3, rng=rng)
        p = tmp_path / "mlp.bin"
        save_quantizer(p, q)
        back = load_quantizer(p)
        X = rng.normal(size=(9, 7))
        np.testing.assert_allclose(mlp_forward(back, X), mlp_forward(q, X), atol=1e-4)

    def test_bad_magic(self, tmp_path):
        p = tmp_path / "bad.bin"
        p.write_bytes(b"NOPE" + bytes(32))
        with pytest.raises(FormatError):
            load_quantizer(p)

    def test_truncation(self, tmp_path):
        rng = np.random.default_rng(76)
        q = KMeansQuantizer(rng.normal(size=(3, 4)))
        p = tmp_path / "t.bin"
        save_quantizer(p, q)
        p.write_bytes(p.read_bytes()[:-3])
        with pytest.raises(FormatError):
            load_quantizer(p)

    def test_version_mismatch(self, tmp_path):
        import struct

        p = tmp_path / "v.bin"
        p.write_bytes(struct.pack("<4sIIII", b"UEDQ", 9, 0, 1, 1) + bytes(4))
        with pytest.raises(FormatError):
            load_quantizer(p)


class TestUnitsFile:
    def test_roundtrip(self, tmp_path):
        p = tmp_path / "units.txt"
        seqs = [
            UnitSequence(np.array([0, 3, 3, 1]), K=4),
            UnitSequence(np.array([], dtype=np.int64), K=4),
            np.array([2, 2, 0]),
        ]
        qz.write_units(p, seqs)
        back = qz.read_units(p)
        assert len(back) == 3
        np.testing.assert_array_equal(back[0], [0, 3, 3, 1])
        assert len(back[1]) == 0
        np.testing.assert_array_equal(back[2], [2, 2, 0])

    def test_bad_token(self, tmp_path):
        p = tmp_path / "bad.txt"
        p.write_text("1 2 x\n")
        with pytest.raises(FormatError):
            qz.read_units(p)


class TestDegenerateQuantizerBlindSpot:
    def test_constant_quantizer_is_edit_distance_blind(self):
        # a quantizer that maps every frame to one unit dedups to a single
        # symbol on any input, so edit distance between clean and augmented
        # versions is always zero: the metric cannot see this collapse
        from uedkit.kernels import levenshtein_kernel

        rng = np.random.default_rng(77)
        const = KMeansQuantizer(np.zeros((1, 4)))
        a = dedup(kmeans_quantize(const, rng.normal(size=(50, 4))).units)
        b = dedup(kmeans_quantize(const, rng.normal(size=(90, 4))).units)
        assert levenshtein_kernel(a, b) == 0
