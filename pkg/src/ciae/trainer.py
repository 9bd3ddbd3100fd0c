"""SGD optimization of an embedding map against the CIAE objective."""

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .embedding import EmbeddingMap, init_embedding, mean_segment_embeddings
from .errors import DivergedLoss
from .loss import LossConfig, category_id_map, ciae_loss
from .memory import init_memory, momentum, update_memory

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    total_iters: int = 2000
    learning_rate: float = 0.01
    lr_decay: list = field(default_factory=lambda: [[2 / 3, 0.1], [8 / 9, 0.1]])
    momentum: float = 0.9
    weight_decay: float = 1e-4
    log_every: int = 10
    embedding_dim: int = 32
    memory_momentum: float = None  # constant override of the cubic ramp
    seed: int = 0
    early_stop_patience: int = 50
    early_stop_loss: float = 1e-6

    def validate(self):
        if self.total_iters < 1:
            raise ValueError("total_iters must be >= 1")
        if not self.learning_rate >= 0:
            raise ValueError("learning_rate must be >= 0")
        if self.log_every < 1:
            raise ValueError("log_every must be >= 1")
        if self.embedding_dim < 2:
            raise ValueError("embedding_dim must be >= 2")
        return self


@dataclass
class TrainLog:
    iters: list = field(default_factory=list)
    l_cae: list = field(default_factory=list)
    l_iae: list = field(default_factory=list)
    l_ciae: list = field(default_factory=list)
    grad_max_norm: list = field(default_factory=list)
    memory_lambda: list = field(default_factory=list)

    def record(self, it, cae, iae, total, gnorm, lam):
        self.iters.append(it)
        self.l_cae.append(cae)
        self.l_iae.append(iae)
        self.l_ciae.append(total)
        self.grad_max_norm.append(gnorm)
        self.memory_lambda.append(lam)

    def to_json(self):
        return {
            "iters": self.iters,
            "l_cae": self.l_cae,
            "l_iae": self.l_iae,
            "l_ciae": self.l_ciae,
            "grad_max_norm": self.grad_max_norm,
            "lambda": self.memory_lambda,
        }

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=1)
            fh.write("\n")


def learning_rate_at(cfg, it):
    lr = cfg.learning_rate
    for frac, factor in cfg.lr_decay:
        if it >= frac * cfg.total_iters:
            lr *= factor
    return lr


def _memory_seed(seed):
    return int(np.random.SeedSequence([seed, 1]).generate_state(1)[0])


def _embedding_seed(seed):
    return int(np.random.SeedSequence([seed, 2]).generate_state(1)[0])


def train(scene, cfg=None, loss_cfg=None, emb=None, bank=None):
    """Fit an embedding map to ``scene``.

    Each step computes the loss against the bank as it was before the step,
    applies heavy-ball SGD with weight decay to the pre-norm parameters, then
    folds the step's category means into the bank.

    Returns ``(EmbeddingMap, MemoryBank, TrainLog)``.
    """
    cfg = (cfg or TrainConfig()).validate()
    loss_cfg = (loss_cfg or LossConfig()).validate()
    if emb is None:
        emb = init_embedding(scene.height, scene.width, cfg.embedding_dim, _embedding_seed(cfg.seed))
    if bank is None:
        bank = init_memory(scene.label_space.num_memory_slots, emb.dim, cfg.total_iters,
                           _memory_seed(cfg.seed))
    x = emb.prenorm.copy()
    generation = emb.generation
    velocity = np.zeros_like(x)
    slot_map = category_id_map(scene)
    trace = TrainLog()
    quiet = 0

    for it in range(cfg.total_iters):
        current = EmbeddingMap(x, generation)
        batch_means = mean_segment_embeddings(current, slot_map)
        res = ciae_loss(current, scene, bank, loss_cfg)
        if not np.isfinite(res.value) or not np.all(np.isfinite(res.grad)):
            raise DivergedLoss(f"non-finite loss at iteration {it}")

        lam = cfg.memory_momentum
        if lam is None:
            lam = momentum(bank.current_iter + 1, bank.total_iters)
        if it % cfg.log_every == 0 or it == cfg.total_iters - 1:
            gnorm = float(np.linalg.norm(res.grad, axis=-1).max())
            trace.record(it, res.parts["cae"].value, res.parts["iae"].value, res.value, gnorm, lam)
            log.debug("iter %d loss %.6f", it, res.value)
            quiet = quiet + 1 if res.value < cfg.early_stop_loss else 0

        lr = learning_rate_at(cfg, it)
        velocity = cfg.momentum * velocity + res.grad + cfg.weight_decay * x
        x = x - lr * velocity
        generation += 1
        bank = update_memory(bank, batch_means, lam)
        if quiet >= cfg.early_stop_patience:
            log.info("early stop at iteration %d", it)
            break

    return EmbeddingMap(x, generation), bank, trace
