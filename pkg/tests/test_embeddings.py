import os
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from marginmine.embeddings import (
    MAGIC,
    EmbeddingMatrix,
    SentenceTable,
    clean_text,
    load_embeddings,
    load_sentences,
    normalize_l2,
    write_embeddings,
    write_sentences,
)
from marginmine.errors import DataError, FormatError, LengthError


def _raw_file(path, dim, count, floats, magic=MAGIC):
    with open(path, "wb") as fh:
        fh.write(magic + struct.pack("<IQ", dim, count))
        fh.write(np.asarray(floats, dtype="<f4").tobytes())


class TestLoad:
    def test_header_echo(self, tmp_path):
        p = tmp_path / "a.emb"
        _raw_file(p, 4, 2, np.arange(8))
        m = load_embeddings(p)
        assert (m.count, m.dim) == (2, 4)
        assert not m.normalized
        np.testing.assert_array_equal(m.values, np.arange(8, dtype=np.float32).reshape(2, 4))

    def test_truncated_payload(self, tmp_path):
        p = tmp_path / "a.emb"
        _raw_file(p, 4, 2, np.arange(7))
        with pytest.raises(LengthError):
            load_embeddings(p)

    def test_zero_dim(self, tmp_path):
        p = tmp_path / "a.emb"
        _raw_file(p, 0, 2, [])
        with pytest.raises(FormatError):
            load_embeddings(p)

    def test_bad_magic(self, tmp_path):
        p = tmp_path / "a.emb"
        _raw_file(p, 2, 1, [1, 2], magic=b"NOTMAGIC")
        with pytest.raises(FormatError):
            load_embeddings(p)

    def test_non_finite_names_row(self, tmp_path):
        p = tmp_path / "a.emb"
        _raw_file(p, 2, 3, [1, 2, 3, 4, np.nan, 6])
        with pytest.raises(DataError, match="row 2"):
            load_embeddings(p)

    def test_short_header(self, tmp_path):
        p = tmp_path / "a.emb"
        p.write_bytes(b"EMB")
        with pytest.raises(FormatError):
            load_embeddings(p)


class TestWrite:
    def test_round_trip_bitwise(self, tmp_path):
        m = EmbeddingMatrix(np.random.default_rng(3).standard_normal((10, 16)))
        write_embeddings(m, tmp_path / "m.emb")
        back = load_embeddings(tmp_path / "m.emb")
        assert back.same_as(m)

    def test_round_trip_empty(self, tmp_path):
        m = EmbeddingMatrix.empty(5)
        write_embeddings(m, tmp_path / "e.emb")
        back = load_embeddings(tmp_path / "e.emb")
        assert (back.count, back.dim) == (0, 5)

    def test_layout_is_little_endian(self, tmp_path):
        write_embeddings(EmbeddingMatrix([[1.0, -2.0]]), tmp_path / "x.emb")
        raw = (tmp_path / "x.emb").read_bytes()
        assert raw[:8] == b"EMBMAT01"
        assert struct.unpack("<IQ", raw[8:20]) == (2, 1)
        assert struct.unpack("<2f", raw[20:]) == (1.0, -2.0)

    @pytest.mark.skipif(os.geteuid() == 0, reason="root ignores directory permissions")
    def test_unwritable_path_permissions(self, tmp_path):
        d = tmp_path / "ro"
        d.mkdir()
        d.chmod(0o500)
        with pytest.raises(OSError):
            write_embeddings(EmbeddingMatrix([[1.0]]), d / "x.emb")

    def test_unwritable_path(self, tmp_path):
        with pytest.raises(OSError, match="missing"):
            write_embeddings(EmbeddingMatrix([[1.0]]), tmp_path / "missing" / "x.emb")


class TestNormalize:
    def test_three_four_five(self):
        out = normalize_l2(EmbeddingMatrix([[3.0, 4.0]]))
        np.testing.assert_allclose(out.values, [[0.6, 0.8]], atol=1e-7)
        assert out.normalized

    def test_unit_row_unchanged(self):
        out = normalize_l2(EmbeddingMatrix([[1.0, 0.0]]))
        np.testing.assert_array_equal(out.values, [[1.0, 0.0]])

    def test_zero_row(self):
        with pytest.raises(DataError, match="row 1"):
            normalize_l2(EmbeddingMatrix([[1.0, 0.0], [0.0, 0.0]]))

    def test_flag_is_validated(self):
        with pytest.raises(DataError):
            EmbeddingMatrix([[2.0, 0.0]], normalized=True)

    def test_input_array_not_frozen(self):
        arr = np.ones((2, 2), dtype=np.float32)
        EmbeddingMatrix(arr)
        arr[0, 0] = 5.0  # caller's buffer stays writable

    matrices = hnp.arrays(
        np.float32,
        st.tuples(st.integers(1, 8), st.integers(1, 12)),
        elements=st.floats(-100, 100, width=32).filter(lambda v: abs(v) > 1e-3),
    )

    @settings(max_examples=60, deadline=None)
    @given(matrices)
    def test_idempotent(self, arr):
        once = normalize_l2(EmbeddingMatrix(arr))
        twice = normalize_l2(once)
        np.testing.assert_allclose(twice.values, once.values, rtol=0, atol=1e-7)
        norms = np.linalg.norm(once.values.astype(np.float64), axis=1)
        np.testing.assert_allclose(norms, 1.0, atol=1e-4)

    @settings(max_examples=60, deadline=None)
    @given(matrices, st.floats(1e-3, 1e3))
    def test_scale_invariant(self, arr, scale):
        a = normalize_l2(EmbeddingMatrix(arr))
        b = normalize_l2(EmbeddingMatrix(arr.astype(np.float64) * scale))
        np.testing.assert_allclose(a.values, b.values, rtol=0, atol=1e-6)


class TestSentences:
    def test_round_trip(self, tmp_path):
        texts = ["Hallo Welt.", "Ünïcödé ✓", ""]
        write_sentences(texts, tmp_path / "s.txt")
        assert load_sentences(tmp_path / "s.txt").texts == tuple(texts)

    def test_rejects_tabs(self):
        with pytest.raises(FormatError):
            SentenceTable(("a\tb",))

    def test_clean_text(self):
        assert clean_text("a\tb\nc") == "a b c"
