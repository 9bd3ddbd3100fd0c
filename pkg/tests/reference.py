"""Slow, loop-based reference implementations used as test oracles.

Nothing here imports the code paths under test.
"""

import math


def dot(a, b):
    return sum(x * y for x, y in zip(a, b))


def cosine_distance(a, b):
    return 1.0 - dot(a, b) / (math.sqrt(dot(a, a)) * math.sqrt(dot(b, b)))


def pixel_terms(x, pos, queries, valid_row, margin, clamp_eps):
    """``[(l, k)]`` for every negative query ``k`` of one pixel with pre-norm vector ``x``."""
    d_pos = cosine_distance(x, queries[pos])
    out = []
    for k, q in enumerate(queries):
        if k == pos:
            continue
        d_neg = cosine_distance(x, q) if valid_row[k] else 1.0
        lp = max(d_pos - d_neg + margin, 0.0)
        arg = max(1.0 - lp / (2.0 + margin), clamp_eps)
        out.append((-math.log(arg), k))
    return out


def pixel_loss(x, pos, queries, valid_row, weight, n, margin, top_k, clamp_eps):
    terms = [t for t in pixel_terms(x, pos, queries, valid_row, margin, clamp_eps) if t[0] > 0]
    terms.sort(key=lambda t: (-t[0], t[1]))
    return weight * sum(l for l, _ in terms[:top_k]) / n


def _flat(problem):
    """Unpack an (H, W) problem into python lists of non-void pixels."""
    p2q = problem["pixel_to_query"]
    h, w = len(p2q), len(p2q[0])
    nq = len(problem["queries"])
    pix = []
    for y in range(h):
        for xx in range(w):
            a = int(p2q[y][xx])
            if a < 0:
                continue
            valid = problem["valid"][y][xx] if problem["valid"] is not None else [True] * nq
            weight = problem["weights"][y][xx] if problem["weights"] is not None else 1.0
            pix.append((y, xx, a, list(valid), float(weight)))
    return pix


def loss(prenorm, problem, margin, top_k, clamp_eps, scope="per_pixel"):
    pix = _flat(problem)
    n = len(pix)
    queries = [list(q) for q in problem["queries"]]
    if scope == "per_pixel":
        return sum(pixel_loss(list(prenorm[y][x]), a, queries, v, w, n, margin, top_k, clamp_eps)
                   for y, x, a, v, w in pix)
    allterms = []
    for i, (y, x, a, v, w) in enumerate(pix):
        for l, k in pixel_terms(list(prenorm[y][x]), a, queries, v, margin, clamp_eps):
            if l > 0:
                allterms.append((-l, i, k, w * l))
    allterms.sort(key=lambda t: (t[0], t[1], t[2]))
    return sum(t[3] for t in allterms[: top_k * n]) / n


def finite_difference_grad(prenorm, problem, margin, top_k, clamp_eps, h=1e-5):
    """Central differences of the per-pixel reference loss, queries held fixed.

    With fixed queries a pixel only changes its own contribution, so each
    coordinate is differenced on that pixel's term alone.
    """
    pix = _flat(problem)
    n = len(pix)
    queries = [list(q) for q in problem["queries"]]
    H, W, D = len(prenorm), len(prenorm[0]), len(prenorm[0][0])
    grad = [[[0.0] * D for _ in range(W)] for _ in range(H)]
    for y, x, a, v, w in pix:
        base = list(prenorm[y][x])
        for d in range(D):
            up, dn = list(base), list(base)
            up[d] += h
            dn[d] -= h
            f_up = pixel_loss(up, a, queries, v, w, n, margin, top_k, clamp_eps)
            f_dn = pixel_loss(dn, a, queries, v, w, n, margin, top_k, clamp_eps)
            grad[y][x][d] = (f_up - f_dn) / (2.0 * h)
    return grad


def max_relative_error(analytic, numeric):
    worst = 0.0
    for a_row, n_row in zip(analytic, numeric):
        for a_px, n_px in zip(a_row, n_row):
            for a, f in zip(a_px, n_px):
                denom = max(abs(a), abs(f), 1e-8)
                worst = max(worst, abs(a - f) / denom)
    return worst
