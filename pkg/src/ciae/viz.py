"""Binary PPM rendering of embedding maps and predictions."""

import numpy as np

from .embedding import normalize_map
from .ndcore import pca_project

PALETTE_SEED = 20211


def write_ppm(path, rgb):
    rgb = np.asarray(rgb, dtype=np.uint8)
    h, w, _ = rgb.shape
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(rgb.tobytes())


def read_ppm(path):
    with open(path, "rb") as fh:
        data = fh.read()
    magic, w, h, maxval, body = data.split(maxsplit=4)
    if magic != b"P6" or int(maxval) != 255:
        raise ValueError(f"{path}: not an 8-bit binary PPM")
    return np.frombuffer(body, dtype=np.uint8).reshape(int(h), int(w), 3)


def embedding_image(emb, iters=100):
    """First three principal components of the normalized map, each stretched to 0..255.

    A channel without variance renders as mid gray.
    """
    view = normalize_map(emb)
    h, w, d = view.shape
    proj = pca_project(view.reshape(-1, d), min(3, d), iters)
    if proj.shape[1] < 3:
        proj = np.hstack([proj, np.zeros((proj.shape[0], 3 - proj.shape[1]))])
    out = np.empty_like(proj)
    for c in range(3):
        lo, hi = proj[:, c].min(), proj[:, c].max()
        if hi - lo <= 1e-12:
            out[:, c] = 128.0
        else:
            out[:, c] = (proj[:, c] - lo) / (hi - lo) * 255.0
    return np.round(out).astype(np.uint8).reshape(h, w, 3)


def segment_color(segment_id):
    rng = np.random.default_rng([PALETTE_SEED, int(segment_id)])
    return rng.integers(0, 256, size=3, dtype=np.int64).astype(np.uint8)


def segmentation_image(segment_map, void_id):
    segment_map = np.asarray(segment_map)
    out = np.zeros(segment_map.shape + (3,), dtype=np.uint8)
    for sid in np.unique(segment_map).tolist():
        if sid != void_id:
            out[segment_map == sid] = segment_color(sid)
    return out
