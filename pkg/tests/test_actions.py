import numpy as np
import pytest

from rltir.actions import (ActionContractError, UpdateAction, apply_action,
                           encode_state)
from rltir.forest import DORMANT, INTERNAL, TERMINAL, TreeNode

from test_forest import make_tree


def trained_tree(max_depth=4, terminal_depth=2, dim=2, seed=0, n=40):
    tree = make_tree(max_depth=max_depth, terminal_depth=terminal_depth,
                     dim=dim, seed=seed)
    rng = np.random.default_rng(seed + 1)
    tree.ingest_training_batch(rng.uniform(0, 1, size=(n, dim)))
    return tree


def terminal_for(tree, x):
    tree.traverse(x)
    return TreeNode(tree, tree.last_path[-1])


def test_action_ordinals_are_frozen():
    assert [int(a) for a in UpdateAction] == [0, 1, 2, 3, 4]
    assert UpdateAction.MAINTAIN == 0
    assert UpdateAction.INCREASE_DENSITY == 1
    assert UpdateAction.DECREASE_DENSITY == 2
    assert UpdateAction.EXPAND_NODE == 3
    assert UpdateAction.COLLAPSE_NODE == 4
    assert len(UpdateAction) == 5


def test_maintain_leaves_encoding_identical():
    tree = trained_tree()
    x = np.array([0.3, 0.7])
    node = terminal_for(tree, x)
    before = encode_state(tree, list(tree.last_path))
    apply_action(tree, node, UpdateAction.MAINTAIN, beta=0.25)
    after = encode_state(tree, list(tree.last_path))
    assert np.array_equal(before, after)


def test_increase_density_adds_beta_times_depth_scale():
    tree = trained_tree(max_depth=4, terminal_depth=3)
    x = np.array([0.3, 0.7])
    node = terminal_for(tree, x)
    tree.mass[node.index] = 5.0
    apply_action(tree, node, UpdateAction.INCREASE_DENSITY, beta=0.25)
    assert node.v == pytest.approx(5.0 + 0.25 * 2 ** 3)


def test_decrease_density_clamps_at_zero():
    tree = trained_tree(max_depth=4, terminal_depth=3)
    node = terminal_for(tree, np.array([0.3, 0.7]))
    tree.mass[node.index] = 1.0
    apply_action(tree, node, UpdateAction.DECREASE_DENSITY, beta=0.25)
    assert node.v == 0.0  # 1 - 0.25*8 clamps


def test_expand_at_max_depth_falls_back_to_decrease():
    tree = trained_tree(max_depth=3, terminal_depth=3)
    node = terminal_for(tree, np.array([0.3, 0.7]))
    tree.mass[node.index] = 5.0
    apply_action(tree, node, UpdateAction.EXPAND_NODE, beta=0.25)
    assert node.v == pytest.approx(5.0 - 0.25 * 2 ** 3)
    assert node.node_type == TERMINAL  # structure unchanged


def test_expand_moves_frontier_down_and_splits_mass():
    tree = trained_tree(max_depth=4, terminal_depth=2)
    x = np.array([0.3, 0.7])
    node = terminal_for(tree, x)
    i = node.index
    v_parent = tree.mass[i]
    tree.pos_feedback[i] = 3
    left, right = 2 * i, 2 * i + 1
    tree.window_mass[left] = 3.0
    tree.window_mass[right] = 1.0
    apply_action(tree, node, UpdateAction.EXPAND_NODE, beta=0.25)
    assert tree.node_type[i] == INTERNAL
    assert tree.node_type[left] == TERMINAL and tree.node_type[right] == TERMINAL
    assert tree.mass[left] == pytest.approx(v_parent * 0.75)
    assert tree.mass[right] == pytest.approx(v_parent * 0.25)
    assert tree.pos_feedback[left] == 0 and tree.neg_feedback[right] == 0
    assert tree.pos_feedback[i] == 3  # parent keeps its history
    assert tree.frontier_is_consistent()


def test_expand_with_idle_children_splits_evenly():
    tree = trained_tree(max_depth=4, terminal_depth=2)
    node = terminal_for(tree, np.array([0.9, 0.1]))
    i = node.index
    v_parent = tree.mass[i]
    tree.window_mass[2 * i] = 0.0
    tree.window_mass[2 * i + 1] = 0.0
    apply_action(tree, node, UpdateAction.EXPAND_NODE, beta=0.1)
    assert tree.mass[2 * i] == pytest.approx(v_parent / 2)
    assert tree.mass[2 * i + 1] == pytest.approx(v_parent / 2)


def test_collapse_promotes_parent_and_demotes_subtree():
    tree = trained_tree(max_depth=4, terminal_depth=2)
    node = terminal_for(tree, np.array([0.3, 0.7]))
    i = node.index
    parent = i // 2
    sibling = i ^ 1
    expected_v = tree.mass[2 * parent] + tree.mass[2 * parent + 1]
    apply_action(tree, node, UpdateAction.COLLAPSE_NODE, beta=0.1)
    assert tree.node_type[parent] == TERMINAL
    assert tree.node_type[i] == DORMANT
    assert tree.node_type[sibling] == DORMANT
    assert tree.mass[parent] == pytest.approx(expected_v)
    assert tree.frontier_is_consistent()


def test_collapse_at_depth_one_falls_back_to_increase():
    tree = trained_tree(max_depth=3, terminal_depth=1)
    node = terminal_for(tree, np.array([0.3, 0.7]))
    v = tree.mass[node.index]
    apply_action(tree, node, UpdateAction.COLLAPSE_NODE, beta=0.5)
    assert node.v == pytest.approx(v + 0.5 * 2)
    assert node.node_type == TERMINAL


def test_density_actions_are_inverse_without_clamp():
    tree = trained_tree()
    node = terminal_for(tree, np.array([0.6, 0.2]))
    tree.mass[node.index] = 9.0
    apply_action(tree, node, UpdateAction.INCREASE_DENSITY, beta=0.3)
    apply_action(tree, node, UpdateAction.DECREASE_DENSITY, beta=0.3)
    assert node.v == pytest.approx(9.0)


def test_expand_then_collapse_restores_frontier_and_mass():
    tree = trained_tree(max_depth=4, terminal_depth=2)
    x = np.array([0.3, 0.7])
    node = terminal_for(tree, x)
    depth_before = node.h
    v_before = node.v
    apply_action(tree, node, UpdateAction.EXPAND_NODE, beta=0.1)
    child = terminal_for(tree, x)  # traversal now reaches one level deeper
    assert child.h == depth_before + 1
    apply_action(tree, child, UpdateAction.COLLAPSE_NODE, beta=0.1)
    restored = terminal_for(tree, x)
    assert restored.index == node.index
    assert restored.h == depth_before
    assert restored.v == pytest.approx(v_before)


def test_actions_require_terminal_node():
    tree = trained_tree()
    with pytest.raises(ActionContractError):
        apply_action(tree, TreeNode(tree, 1), UpdateAction.MAINTAIN, beta=0.1)
    node = terminal_for(tree, np.array([0.5, 0.5]))
    with pytest.raises(ActionContractError):
        apply_action(tree, node, UpdateAction.INCREASE_DENSITY, beta=0.0)


def test_random_action_sequences_preserve_invariants():
    # Long randomized sequences on random trees: the frontier stays unique
    # per path, terminal depths stay within [1, MaxDepth], masses stay >= 0.
    rng = np.random.default_rng(2024)
    total_actions = 0
    for trial in range(20):
        tree = trained_tree(max_depth=int(rng.integers(2, 6)),
                            terminal_depth=2, dim=3,
                            seed=int(rng.integers(1_000_000)), n=30)
        for _ in range(500):
            x = rng.uniform(-0.2, 1.2, size=3)
            node = terminal_for(tree, x)
            action = UpdateAction(int(rng.integers(0, 5)))
            apply_action(tree, node, action, beta=float(rng.uniform(0.01, 0.5)))
            total_actions += 1
        assert tree.frontier_is_consistent()
        assert np.all(tree.mass >= 0.0)
        terminals = np.flatnonzero(tree.node_type == TERMINAL)
        depths = np.floor(np.log2(terminals)).astype(int)
        assert depths.min() >= 1
        assert depths.max() <= tree.max_depth
    assert total_actions == 10_000


# ---------------------------------------------------------------------------
# state encoding


def test_encoding_shape_and_normalization():
    tree = trained_tree(max_depth=4, terminal_depth=2)
    node = terminal_for(tree, np.array([0.3, 0.7]))
    s = encode_state(tree, list(tree.last_path))
    assert s.shape == (4 + 3, 8)
    assert np.all(np.isfinite(s))
    assert np.all(s[:, 0] <= 1.0)          # h / MaxDepth
    assert np.all((s[:, 7] == 0) | (s[:, 7] == 1))
    # path rows are flagged, the two child rows and padding are not
    n_path = len(tree.last_path)
    assert np.all(s[:n_path, 7] == 1.0)
    assert np.all(s[n_path:, 7] == 0.0)
    # type codes restricted to {0, 0.5, 1}
    assert set(np.unique(s[:, 6])).issubset({0.0, 0.5, 1.0})


def test_encoding_zero_feedback_columns_on_fresh_tree():
    tree = trained_tree()
    terminal_for(tree, np.array([0.5, 0.5]))
    s = encode_state(tree, list(tree.last_path))
    assert np.all(s[:, 2] == 0.0)
    assert np.all(s[:, 3] == 0.0)


def test_encoding_deterministic_and_stable_under_maintain():
    tree = trained_tree()
    node = terminal_for(tree, np.array([0.2, 0.8]))
    s1 = encode_state(tree, list(tree.last_path))
    apply_action(tree, node, UpdateAction.MAINTAIN, beta=0.1)
    s2 = encode_state(tree, list(tree.last_path))
    assert np.array_equal(s1, s2)


def test_encoding_shape_constant_across_structure_changes():
    tree = trained_tree(max_depth=5, terminal_depth=2)
    x = np.array([0.4, 0.6])
    shapes = set()
    for action in (UpdateAction.EXPAND_NODE, UpdateAction.EXPAND_NODE,
                   UpdateAction.COLLAPSE_NODE, UpdateAction.EXPAND_NODE):
        node = terminal_for(tree, x)
        shapes.add(encode_state(tree, list(tree.last_path)).shape)
        apply_action(tree, node, action, beta=0.1)
    terminal_for(tree, x)
    shapes.add(encode_state(tree, list(tree.last_path)).shape)
    assert shapes == {(5 + 3, 8)}


def test_encoding_terminal_at_max_depth_has_no_child_rows():
    tree = trained_tree(max_depth=3, terminal_depth=3)
    terminal_for(tree, np.array([0.5, 0.5]))
    s = encode_state(tree, list(tree.last_path))
    n_path = len(tree.last_path)  # 4 rows for depth-3 terminal
    assert n_path == 4
    assert np.all(s[n_path:] == 0.0)
