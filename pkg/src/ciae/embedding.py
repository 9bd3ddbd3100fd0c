"""Pixel embedding map: parameters, normalized view, segment means, checkpoints."""

import struct
from dataclasses import dataclass

import numpy as np

from .errors import FormatError, ZeroNorm
from .memory import MemoryBank
from .ndcore import EPS_NORM

EMB_MAGIC = b"CIAE-EMB/1"
MEM_MAGIC = b"CIAE-MEM/1"


@dataclass(eq=False)
class EmbeddingMap:
    """Pre-normalization embeddings, shape (H, W, D). ``generation`` counts updates."""

    prenorm: np.ndarray
    generation: int = 0

    @property
    def height(self):
        return self.prenorm.shape[0]

    @property
    def width(self):
        return self.prenorm.shape[1]

    @property
    def dim(self):
        return self.prenorm.shape[2]

    def __eq__(self, other):
        if not isinstance(other, EmbeddingMap):
            return NotImplemented
        return self.generation == other.generation and np.array_equal(self.prenorm, other.prenorm)


def init_embedding(height, width, dim=32, seed=0, scale=0.1, min_norm=1e-3):
    """Uniform entries in [-scale, scale]; near-zero pixels are re-drawn."""
    if dim < 2:
        raise ValueError("dim must be >= 2")
    rng = np.random.default_rng(seed)
    prenorm = rng.uniform(-scale, scale, size=(height, width, dim))
    while True:
        small = np.linalg.norm(prenorm, axis=-1) < min_norm
        if not small.any():
            break
        prenorm[small] = rng.uniform(-scale, scale, size=(int(small.sum()), dim))
    return EmbeddingMap(prenorm, 0)


def normalize_map(emb, eps=EPS_NORM):
    """Unit-normalize every pixel vector. Returns an (H, W, D) array."""
    x = emb.prenorm if isinstance(emb, EmbeddingMap) else np.asarray(emb, dtype=np.float64)
    norms = np.linalg.norm(x, axis=-1)
    bad = ~(norms >= eps)
    if bad.any():
        y, xx = np.argwhere(bad)[0]
        raise ZeroNorm("pixel embedding norm below epsilon", pixel=(int(y), int(xx)))
    return x / norms[..., None]


def cosine_distance(p, q, eps=EPS_NORM):
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    np_, nq = np.linalg.norm(p), np.linalg.norm(q)
    if not (np_ >= eps and nq >= eps):
        raise ZeroNorm("cosine distance of a zero vector")
    return float(1.0 - np.dot(p, q) / (np_ * nq))


def mean_segment_embeddings(emb, id_map, void_id=None, eps=EPS_NORM):
    """Normalized sum of the pre-norm vectors of each id in ``id_map``.

    Negative ids and ``void_id`` are skipped. Returns ``{id: unit vector}``.
    """
    x = emb.prenorm if isinstance(emb, EmbeddingMap) else np.asarray(emb, dtype=np.float64)
    ids = np.asarray(id_map).reshape(-1)
    flat = x.reshape(-1, x.shape[-1])
    keep = ids >= 0
    if void_id is not None:
        keep &= ids != void_id
    ids, flat = ids[keep], flat[keep]
    out = {}
    if ids.size == 0:
        return out
    uniq, inverse = np.unique(ids, return_inverse=True)
    sums = np.zeros((uniq.size, flat.shape[1]))
    np.add.at(sums, inverse, flat)
    for k, s in zip(uniq.tolist(), sums):
        norm = np.linalg.norm(s)
        if not norm >= eps:
            raise ZeroNorm(f"segment {k} has a vanishing embedding sum")
        out[k] = s / norm
    return out


# ---------------------------------------------------------------- checkpoint

_HDR = struct.Struct("<4Q")
_MEM_HDR = struct.Struct("<2Q")
_MEM_ITERS = struct.Struct("<3Q")


def save_checkpoint(path, emb, bank=None):
    """Write embedding parameters (and optionally the memory bank) to ``path``.

    Layout: magic, (H, W, D, generation) as u64 LE, prenorm as f64 LE in
    (y, x, d) order. The memory section follows: magic, (count, dim), vectors,
    then (current_iter, total_iters, seed).
    """
    with open(path, "wb") as fh:
        fh.write(EMB_MAGIC)
        fh.write(_HDR.pack(emb.height, emb.width, emb.dim, emb.generation))
        fh.write(np.ascontiguousarray(emb.prenorm, dtype="<f8").tobytes())
        if bank is not None:
            fh.write(MEM_MAGIC)
            fh.write(_MEM_HDR.pack(bank.num_categories, bank.dim))
            fh.write(np.ascontiguousarray(bank.vectors, dtype="<f8").tobytes())
            fh.write(_MEM_ITERS.pack(bank.current_iter, bank.total_iters, bank.seed))


def _take(data, pos, n, what):
    if pos + n > len(data):
        raise FormatError(f"checkpoint truncated while reading {what}")
    return data[pos:pos + n], pos + n


def load_checkpoint(path):
    """Inverse of :func:`save_checkpoint`. Returns ``(EmbeddingMap, MemoryBank or None)``."""
    with open(path, "rb") as fh:
        data = fh.read()
    magic, pos = _take(data, 0, len(EMB_MAGIC), "magic")
    if magic != EMB_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    raw, pos = _take(data, pos, _HDR.size, "header")
    h, w, d, gen = _HDR.unpack(raw)
    raw, pos = _take(data, pos, 8 * h * w * d, "embedding values")
    prenorm = np.frombuffer(raw, dtype="<f8").reshape(h, w, d).astype(np.float64)
    emb = EmbeddingMap(prenorm, gen)
    if pos == len(data):
        return emb, None
    magic, pos = _take(data, pos, len(MEM_MAGIC), "memory magic")
    if magic != MEM_MAGIC:
        raise FormatError(f"{path}: bad memory section magic {magic!r}")
    raw, pos = _take(data, pos, _MEM_HDR.size, "memory header")
    count, mdim = _MEM_HDR.unpack(raw)
    raw, pos = _take(data, pos, 8 * count * mdim, "memory vectors")
    vectors = np.frombuffer(raw, dtype="<f8").reshape(count, mdim).astype(np.float64)
    raw, pos = _take(data, pos, _MEM_ITERS.size, "memory iterations")
    cur, total, seed = _MEM_ITERS.unpack(raw)
    if pos != len(data):
        raise FormatError(f"{path}: trailing bytes after memory section")
    return emb, MemoryBank(vectors, total, cur, seed)
