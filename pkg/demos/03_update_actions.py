"""Apply each of the five update actions and watch the tree respond.

Density edits move a terminal node's mass by beta * 2^h (clamped at 0);
expand pushes the readout frontier one level down, collapse pulls it back
up while conserving the subtree's mass.
"""

import numpy as np

from rltir.actions import UpdateAction, apply_action, encode_state
from rltir.forest import TreeNode, build_workspace, grow_tree, node_density

rng = np.random.default_rng(3)
X = rng.uniform(0.2, 0.8, size=(50, 3))

tree_rng = np.random.default_rng(7)
ws = build_workspace(X, dim=3, rng=tree_rng)
tree = grow_tree(ws, max_depth=5, min_depth=1, terminal_depth=2, rng=tree_rng)
tree.ingest_training_batch(X)

x = np.array([0.4, 0.5, 0.6])


def show(label):
    node = tree.traverse(x)
    print(f"{label:<28} terminal depth={node.h} v={node.v:6.2f} "
          f"density={node_density(node):7.2f}")
    return node


node = show("initial")
apply_action(tree, node, UpdateAction.INCREASE_DENSITY, beta=0.25)
node = show("after IncreaseDensity")
apply_action(tree, node, UpdateAction.DECREASE_DENSITY, beta=0.25)
node = show("after DecreaseDensity")
apply_action(tree, node, UpdateAction.EXPAND_NODE, beta=0.25)
node = show("after ExpandNode")
apply_action(tree, node, UpdateAction.COLLAPSE_NODE, beta=0.25)
node = show("after CollapseNode")
apply_action(tree, node, UpdateAction.MAINTAIN, beta=0.25)
show("after Maintain")

# The policy's view of the tree: the instance's path plus the terminal's
# children, padded to a fixed (MaxDepth + 3) x 8 matrix.
state = encode_state(tree, list(tree.last_path))
print(f"\nstate encoding shape: {state.shape}")
print("columns: [h, v, p, n, k, tau, type_code, flag]")
print(np.array_str(state[:4], precision=2, suppress_small=True))
