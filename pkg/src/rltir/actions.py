"""The five structural update actions and the fixed-shape state encoding.

Actions edit a tree at the terminal node of the most recent traversal:
keep it, nudge its mass up or down, push the readout frontier one level
down (expand), or pull it one level up (collapse). The state the policy
sees is the instance's root-to-terminal path plus the terminal's two
children, as a zero-padded (MaxDepth + 3) x 8 matrix.
"""

from __future__ import annotations

from enum import IntEnum

import numpy as np

from .forest import DORMANT, INTERNAL, TERMINAL, SpaceTree, TreeNode

STATE_COLUMNS = 8  # [h, v, p, n, k, tau, type_code, flag]

TYPE_CODE = {INTERNAL: 0.0, TERMINAL: 0.5, DORMANT: 1.0}


class UpdateAction(IntEnum):
    """Ordinal mapping is frozen: Q-value indices depend on it."""

    MAINTAIN = 0
    INCREASE_DENSITY = 1
    DECREASE_DENSITY = 2
    EXPAND_NODE = 3
    COLLAPSE_NODE = 4


class ActionContractError(RuntimeError):
    """An action was applied to a node that cannot receive it."""


def apply_action(tree: SpaceTree, node: TreeNode, action: UpdateAction, beta: float) -> None:
    """Apply one update action at a terminal node.

    Density edits scale with 2^h so a fixed beta moves the node's density
    (not its raw mass) by a depth-independent amount; masses clamp at zero.
    Expand falls back to a density decrease at MaxDepth, collapse falls
    back to a density increase at depth 1.
    """
    if beta <= 0:
        raise ActionContractError("beta must be positive")
    if node.node_type != TERMINAL:
        raise ActionContractError(f"action {action.name} requires a terminal node")
    i = node.index
    h = node.h
    step = beta * float(2 ** h)

    if action == UpdateAction.MAINTAIN:
        return

    if action == UpdateAction.INCREASE_DENSITY:
        tree.mass[i] += step
        return

    if action == UpdateAction.DECREASE_DENSITY:
        tree.mass[i] = max(0.0, tree.mass[i] - step)
        return

    if action == UpdateAction.EXPAND_NODE:
        if h < tree.max_depth:
            left, right = 2 * i, 2 * i + 1
            w_left = tree.window_mass[left]
            w_right = tree.window_mass[right]
            total = w_left + w_right
            share_left = 0.5 if total == 0.0 else w_left / total
            v = tree.mass[i]
            tree.mass[left] = v * share_left
            tree.mass[right] = v * (1.0 - share_left)
            tree.pos_feedback[[left, right]] = 0
            tree.neg_feedback[[left, right]] = 0
            tree.node_type[[left, right]] = TERMINAL
            tree.node_type[i] = INTERNAL
        else:
            tree.mass[i] = max(0.0, tree.mass[i] - step)
        return

    if action == UpdateAction.COLLAPSE_NODE:
        if h > 1:
            parent = i // 2
            tree.mass[parent] = tree.mass[2 * parent] + tree.mass[2 * parent + 1]
            # Demote the whole subtree under the new terminal, including the
            # sibling's frontier, so each path keeps exactly one terminal.
            start, stop = parent, parent + 1
            for _ in range(h, tree.max_depth + 1):
                start, stop = 2 * start, 2 * stop
                tree.node_type[start:stop] = DORMANT
            tree.node_type[parent] = TERMINAL
        else:
            tree.mass[i] += step
        return

    raise ActionContractError(f"unknown action {action!r}")  # pragma: no cover


def encode_state(tree: SpaceTree, path: list[int]) -> np.ndarray:
    """Encode the acted-upon region of a tree as a fixed-shape matrix.

    Rows are the traversal path (root first) followed by the terminal's two
    children when they exist, zero-padded to MaxDepth + 3 rows. Columns are
    [h, v, p, n, k, tau, type_code, flag] with h, v, p, n and k normalized
    into [0, 1]; tau is already bounded by the workspace.
    """
    rows = np.zeros((tree.max_depth + 3, STATE_COLUMNS))
    terminal = path[-1]
    indices = list(path)
    if terminal.bit_length() - 1 < tree.max_depth:
        indices.extend((2 * terminal, 2 * terminal + 1))
    path_set = set(path)
    mass_norm = 1.0 + tree.training_mass
    for r, i in enumerate(indices):
        p = float(tree.pos_feedback[i])
        n = float(tree.neg_feedback[i])
        fb_norm = 1.0 + p + n
        rows[r, 0] = (i.bit_length() - 1) / tree.max_depth
        rows[r, 1] = tree.mass[i] / mass_norm
        rows[r, 2] = p / fb_norm
        rows[r, 3] = n / fb_norm
        rows[r, 4] = tree.split_feature[i] / tree.dim
        rows[r, 5] = tree.split_value[i]
        rows[r, 6] = TYPE_CODE[int(tree.node_type[i])]
        rows[r, 7] = 1.0 if i in path_set else 0.0
    return rows
