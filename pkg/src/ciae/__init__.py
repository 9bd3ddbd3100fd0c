"""Category- and instance-aware pixel embeddings for panoptic segmentation.

The package trains a free per-pixel embedding map on a synthetic panoptic
scene, fuses it with (simulated) detections by cosine-similarity
assignment, and scores the result with Panoptic Quality.
"""

from .embedding import EmbeddingMap, init_embedding, load_checkpoint, normalize_map, save_checkpoint
from .errors import CIAEError
from .fusion import ProposalSimConfig, assign, build_queries, simulate_proposals
from .loss import LossConfig, cae_loss, ciae_loss, embedding_loss, iae_loss, triplet_term
from .memory import MemoryBank, init_memory, momentum, update_memory
from .panoptic_quality import compute_pq, evaluate, match_segments
from .pipeline import infer, run_experiment
from .scene import LabelSpace, PanopticScene, SceneGenConfig, generate_scene
from .trainer import TrainConfig, train

__version__ = "0.1.0"
