"""
Fitting a pixel embedding to one synthetic scene
================================================

A scene is a few horizontal "stuff" bands with rectangular "things"
painted on top. We fit a free 8-dimensional embedding per pixel so that
pixels sit close to their category memory and to their own instance mean,
and far from everything else.
"""

import numpy as np

from ciae.loss import LossConfig
from ciae.scene import SceneGenConfig, generate_scene
from ciae.trainer import TrainConfig, train

scene = generate_scene(SceneGenConfig(height=32, width=32, num_stuff_regions=3, num_things=4, seed=0))
print("segments:", [(s.segment_id, s.category, "thing" if s.is_thing else "stuff") for s in scene.segments])

# the segment raster, one character per pixel (every other row and column)
for row in scene.segment_map[::2, ::2]:
    print("".join("." if v == 65535 else "abcdefghijklmnop"[v % 16] for v in row))

# %%
# Training. The loss is a triplet hinge passed through -log(1 - l'/(2+m));
# the memory bank follows the mean category embeddings with a momentum
# that starts at 0.9999 and reaches 1 at the last iteration.
emb, bank, log = train(scene, TrainConfig(total_iters=2000, embedding_dim=8, seed=0), LossConfig())

print("logged points:", len(log.iters), "stopped after", emb.generation, "iterations")
for it, cae, iae, total in list(zip(log.iters, log.l_cae, log.l_iae, log.l_ciae))[::20]:
    print(f"iter {it:5d}  cae {cae:.5f}  iae {iae:.5f}  ciae {total:.5f}")

# %%
# The memory vectors are unit length, and the stuff memories have drifted
# towards the embeddings of their bands.
print("memory norms:", np.round(np.linalg.norm(bank.vectors, axis=1), 12))
