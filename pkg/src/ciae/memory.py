"""Category-aware memory embeddings with a cubic momentum ramp."""

from dataclasses import dataclass, field, replace

import numpy as np

from .ndcore import l2_normalize, l2_normalize_rows


@dataclass(eq=False)
class MemoryBank:
    vectors: np.ndarray  # (num_categories, dim), unit rows
    total_iters: int
    current_iter: int = 0
    seed: int = 0

    @property
    def num_categories(self):
        return self.vectors.shape[0]

    @property
    def dim(self):
        return self.vectors.shape[1]

    def __eq__(self, other):
        if not isinstance(other, MemoryBank):
            return NotImplemented
        return (
            self.total_iters == other.total_iters
            and self.current_iter == other.current_iter
            and np.array_equal(self.vectors, other.vectors)
        )


def init_memory(num_categories, dim, total_iters, seed):
    if dim < 2:
        raise ValueError("dim must be >= 2")
    rng = np.random.default_rng(seed)
    vectors, _ = l2_normalize_rows(rng.standard_normal((num_categories, dim)))
    return MemoryBank(vectors, int(total_iters), 0, seed)


def momentum(t, total):
    """``1 - 1e-4 * (1 - t/T)**3``: rises from 0.9999 at t=0 to 1 at t=T."""
    if total < 1 or not 0 <= t <= total:
        raise ValueError(f"need 0 <= t <= total, total >= 1 (t={t}, total={total})")
    return 1.0 - 0.0001 * (1.0 - t / total) ** 3


def update_memory(bank, batch_means, lam=None):
    """Blend the categories seen in this batch into the bank.

    ``batch_means`` maps category slot to a unit vector. The blend weight is
    ``momentum(t, T)`` for the iteration being completed (``t = current_iter + 1``)
    unless ``lam`` overrides it. Returns a new bank; ``bank`` is untouched.
    """
    if bank.current_iter >= bank.total_iters:
        raise ValueError("memory bank already at its final iteration")
    if lam is None:
        lam = momentum(bank.current_iter + 1, bank.total_iters)
    vectors = bank.vectors.copy()
    for cat in sorted(batch_means):
        if not 0 <= cat < bank.num_categories:
            raise KeyError(f"category slot {cat} outside bank of {bank.num_categories}")
        blended = lam * bank.vectors[cat] + (1.0 - lam) * np.asarray(batch_means[cat])
        vectors[cat] = l2_normalize(blended)
    return replace(bank, vectors=vectors, current_iter=bank.current_iter + 1)
