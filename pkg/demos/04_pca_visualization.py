"""
Looking at an embedding map
===========================

The D-dimensional map is projected onto its top three principal
directions (power iteration with deflation) and each channel is stretched
to 0..255. Before training the image is noise; afterwards the segments
show up as separate patches. The hinge stops pulling once the margin is
met, so some colour spread remains inside each patch.
"""

import os

import numpy as np

from ciae.embedding import init_embedding
from ciae.scene import SceneGenConfig, generate_scene
from ciae.trainer import TrainConfig, train
from ciae.viz import embedding_image, segmentation_image, write_ppm

out = os.environ.get("DEMO_OUT", "demo_output")
os.makedirs(out, exist_ok=True)

scene = generate_scene(SceneGenConfig(seed=4, shape="ellipse"))
before = init_embedding(32, 32, 8, seed=4)
after, _, _ = train(scene, TrainConfig(embedding_dim=8, seed=4))

for name, image in [("before.ppm", embedding_image(before)), ("after.ppm", embedding_image(after)),
                    ("ground_truth.ppm", segmentation_image(scene.segment_map, scene.void_id))]:
    write_ppm(os.path.join(out, name), image)
    print(name, image.shape, "distinct colours:", len(np.unique(image.reshape(-1, 3), axis=0)))

# %%
# Colour spread inside each segment, before vs after training.
for label, img in (("before", embedding_image(before)), ("after", embedding_image(after))):
    spread = [img[scene.segment_map == s.segment_id].std(axis=0).mean() for s in scene.segments]
    print(f"{label}: mean within-segment colour std {np.mean(spread):.1f}")
