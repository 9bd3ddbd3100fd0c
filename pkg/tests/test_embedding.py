import numpy as np
import pytest

from ciae.embedding import (
    EmbeddingMap,
    cosine_distance,
    init_embedding,
    load_checkpoint,
    mean_segment_embeddings,
    normalize_map,
    save_checkpoint,
)
from ciae.errors import FormatError, ZeroNorm
from ciae.memory import init_memory


def test_normalize_constant_map():
    x = np.zeros((3, 4, 5))
    x[..., 0] = 2.0
    view = normalize_map(EmbeddingMap(x))
    expected = np.zeros_like(x)
    expected[..., 0] = 1.0
    np.testing.assert_array_equal(view, expected)


def test_normalize_scale_invariant(rng):
    x = rng.normal(size=(5, 6, 4))
    np.testing.assert_allclose(normalize_map(EmbeddingMap(3.7 * x)), normalize_map(EmbeddingMap(x)), atol=1e-9)
    assert np.abs(np.linalg.norm(normalize_map(EmbeddingMap(x)), axis=-1) - 1).max() < 1e-9


def test_normalize_reports_pixel():
    x = np.ones((3, 3, 2))
    x[2, 1] = 0.0
    with pytest.raises(ZeroNorm) as err:
        normalize_map(EmbeddingMap(x))
    assert err.value.pixel == (2, 1)


def test_cosine_distance():
    p = np.array([0.3, -1.2, 2.0])
    assert cosine_distance(p, p) == pytest.approx(0.0, abs=1e-15)
    assert cosine_distance([1, 0], [0, 5]) == pytest.approx(1.0)
    assert cosine_distance([1, 2], [-1, -2]) == pytest.approx(2.0)
    q = np.array([1.0, 0.5, -0.5])
    assert cosine_distance(p, q) == cosine_distance(q, p)
    with pytest.raises(ZeroNorm):
        cosine_distance([0, 0], [1, 0])


def test_mean_segment_examples():
    x = np.zeros((1, 3, 2))
    x[0, 0] = [3, 4]
    x[0, 1] = [1, 0]
    x[0, 2] = [0, 1]
    means = mean_segment_embeddings(EmbeddingMap(x), np.array([[0, 1, 1]]))
    np.testing.assert_allclose(means[0], [0.6, 0.8])
    np.testing.assert_allclose(means[1], [2 ** -0.5, 2 ** -0.5])


def test_mean_segment_locality_and_scale(rng):
    x = rng.normal(size=(4, 4, 3))
    ids = np.array([[0, 0, 1, 1]] * 4)
    before = mean_segment_embeddings(x, ids)
    y = x.copy()
    y[:, 2:] += rng.normal(size=(4, 2, 3))
    after = mean_segment_embeddings(y, ids)
    np.testing.assert_array_equal(before[0], after[0])
    scaled = mean_segment_embeddings(2.5 * x, ids)
    for k in before:
        np.testing.assert_allclose(scaled[k], before[k], atol=1e-12)


def test_mean_segment_identical_pixels():
    v = np.array([0.3, -0.4, 1.2])
    x = np.tile(v, (2, 3, 1))
    means = mean_segment_embeddings(x, np.zeros((2, 3), dtype=int))
    np.testing.assert_allclose(means[0], v / np.linalg.norm(v), atol=1e-15)


def test_mean_segment_skips_void_and_detects_collapse():
    x = np.array([[[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0]]])
    means = mean_segment_embeddings(x, np.array([[0, 9, 1]]), void_id=9)
    assert set(means) == {0, 1}
    with pytest.raises(ZeroNorm):
        mean_segment_embeddings(x, np.array([[0, 0, 1]]))


def test_init_embedding():
    a = init_embedding(5, 6, 8, seed=3)
    assert a == init_embedding(5, 6, 8, seed=3)
    assert np.abs(a.prenorm).max() <= 0.1
    assert (np.linalg.norm(a.prenorm, axis=-1) >= 1e-3).all()


def test_checkpoint_round_trip(tmp_path, rng):
    emb = EmbeddingMap(rng.normal(size=(3, 5, 4)), generation=17)
    bank = init_memory(5, 4, 100, seed=2)
    save_checkpoint(tmp_path / "c.bin", emb, bank)
    emb2, bank2 = load_checkpoint(tmp_path / "c.bin")
    assert emb2 == emb and bank2 == bank
    data = (tmp_path / "c.bin").read_bytes()
    assert data.startswith(b"CIAE-EMB/1")
    assert np.frombuffer(data[10 + 32:10 + 40], dtype="<f8")[0] == emb.prenorm[0, 0, 0]
    save_checkpoint(tmp_path / "e.bin", emb)
    assert load_checkpoint(tmp_path / "e.bin")[1] is None
    (tmp_path / "t.bin").write_bytes(data[:-3])
    with pytest.raises(FormatError):
        load_checkpoint(tmp_path / "t.bin")
