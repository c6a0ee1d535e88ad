"""Build one user's tree ensemble and score genuine vs impostor instances.

Walks through the base model end to end: random workspace, midpoint
splits, mass ingestion, density -> negative probability, and threshold
calibration.
"""

import numpy as np

from rltir.forest import (Classifier, build_workspace, calibrate_threshold,
                          grow_tree, node_density)

rng = np.random.default_rng(0)

# A "user" whose feature vectors cluster tightly, plus impostor traffic
# from a displaced cluster.
genuine = rng.normal(0.35, 0.05, size=(60, 6))
impostor = rng.normal(0.75, 0.05, size=(30, 6))

# The workspace around the normalized range is randomly anchored per tree,
# so every tree partitions space differently.
trees = []
for seed in range(8):
    tree_rng = np.random.default_rng(seed)
    workspace = build_workspace(np.clip(genuine, 0, 1), dim=6, rng=tree_rng)
    trees.append(grow_tree(workspace, max_depth=6, min_depth=1,
                           terminal_depth=3, rng=tree_rng))
print(f"grew {len(trees)} trees; workspace of tree 0 along dim 0: "
      f"[{trees[0].bounds.lower[0]:.2f}, {trees[0].bounds.upper[0]:.2f}]")

classifier = Classifier(user_id="demo-user", trees=trees)
classifier.ingest_training_batch(genuine[:40])

node = trees[0].traverse(np.clip(genuine[0], 0, 1))
print(f"first instance lands at depth {node.h} with mass {node.v:.0f} "
      f"-> density {node_density(node):.1f}")

# Calibrate the genuine/impostor decision threshold on a labeled pool.
scores = []
for row in genuine[40:]:
    y, _ = classifier.negative_probability(row, streaming=False)
    scores.append((y, 0))
for row in impostor[:15]:
    y, _ = classifier.negative_probability(row, streaming=False)
    scores.append((y, 1))
threshold = calibrate_threshold(classifier, scores)
print(f"calibrated threshold_y = {threshold:.3f}")

for name, row in [("genuine", genuine[-1]), ("impostor", impostor[-1])]:
    y, per_tree = classifier.negative_probability(row, streaming=False)
    spread = ", ".join(f"{yi:.2f}" for _, yi in per_tree[:4])
    print(f"{name:>8}: y = {y:.3f} -> {classifier.decide(y)} "
          f"(per-tree head: {spread}, ...)")
