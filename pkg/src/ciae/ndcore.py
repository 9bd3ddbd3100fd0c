"""Small dense numerics shared by the rest of the package.

Matrices are plain float64 ``numpy`` arrays (row-major).
"""

import numpy as np

from .errors import ShapeMismatch, ZeroNorm

EPS_NORM = 1e-12


def l2_normalize(v, eps=EPS_NORM):
    """Return ``v / ||v||_2``; raise :class:`ZeroNorm` for degenerate input."""
    v = np.asarray(v, dtype=np.float64)
    norm = np.sqrt(np.dot(v, v))
    if not norm >= eps:
        raise ZeroNorm(f"norm {norm!r} below {eps}")
    return v / norm


def l2_normalize_rows(x, eps=EPS_NORM):
    """Row-wise version of :func:`l2_normalize`. Returns ``(unit_rows, norms)``."""
    x = np.asarray(x, dtype=np.float64)
    norms = np.sqrt(np.einsum("...d,...d->...", x, x))
    bad = ~(norms >= eps)
    if bad.any():
        idx = np.argwhere(bad)[0]
        raise ZeroNorm(f"row {tuple(int(i) for i in idx)} has norm below {eps}")
    return x / norms[..., None], norms


def matmul(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeMismatch(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def _fix_sign(v, tol=1e-12):
    nz = np.flatnonzero(np.abs(v) > tol)
    if nz.size and v[nz[0]] < 0:
        return -v
    return v


def principal_directions(points, out_dim, iters=100):
    """Top ``out_dim`` principal directions by power iteration with deflation.

    Each direction starts from the normalized all-ones vector. If that start
    is orthogonal to what is left of the covariance, the basis vector with the
    largest remaining diagonal entry is used instead. Components of a
    zero-variance input come back as zero vectors.
    """
    x = np.asarray(points, dtype=np.float64)
    n, d = x.shape
    if out_dim > d:
        raise ShapeMismatch(f"out_dim {out_dim} exceeds dimension {d}")
    if iters < 1:
        raise ValueError("iters must be >= 1")
    centered = x - x.mean(axis=0)
    cov = centered.T @ centered
    scale = np.abs(cov).max() if cov.size else 0.0
    comps = np.zeros((out_dim, d))
    if scale == 0.0:
        return comps
    tol = 1e-12 * scale
    for j in range(out_dim):
        start = np.full(d, 1.0 / np.sqrt(d))
        v = None
        for candidate in (start, None):
            if candidate is None:
                candidate = np.zeros(d)
                candidate[int(np.argmax(np.diag(cov)))] = 1.0
            v = candidate - comps[:j].T @ (comps[:j] @ candidate)
            w = cov @ v
            if np.linalg.norm(w) > tol:
                break
        else:
            break
        for _ in range(iters):
            w = cov @ v
            w -= comps[:j].T @ (comps[:j] @ w)
            norm = np.linalg.norm(w)
            if norm <= tol:
                v = None
                break
            v = w / norm
        if v is None:
            break
        lam = v @ cov @ v
        comps[j] = _fix_sign(v)
        cov = cov - lam * np.outer(v, v)
    return comps


def pca_project(points, out_dim, iters=100):
    """Project mean-centered ``points`` (n x d) onto the top principal directions.

    Identical points yield an all-zero projection rather than an error.
    """
    x = np.asarray(points, dtype=np.float64)
    comps = principal_directions(x, out_dim, iters)
    return (x - x.mean(axis=0)) @ comps.T
