import json

import numpy as np
import pytest

from rltir.actions import UpdateAction
from rltir.data import make_split, synthetic_dataset
from rltir.feedback import SOURCE_ORACLE
from rltir.pipeline import (IdentificationOutcome, OracleFeedbackSource,
                            PipelineConfig, RewardSpec, UserRegistry,
                            compute_reward, identify)
from rltir.qnet import TrainerConfig


def small_config(**overrides):
    trainer = overrides.pop("trainer", TrainerConfig(batch_size=8, capacity=64))
    base = dict(trees=4, max_depth=4, min_depth=1, terminal_depth=2,
                beta=0.1, gate=0.3, phi=50, rho=0.3, trainer=trainer)
    base.update(overrides)
    return PipelineConfig(**base)


def two_cluster_rows(seed=0, n=40, dim=4, separation=0.6):
    """Linearly separable genuine/impostor clusters."""
    rng = np.random.default_rng(seed)
    genuine = rng.normal(0.3, 0.03, size=(n, dim))
    impostor = rng.normal(0.3 + separation, 0.03, size=(n, dim))
    return genuine, impostor


def enrolled_registry(config=None, seed=5):
    config = config or small_config()
    genuine, impostor = two_cluster_rows()
    registry = UserRegistry(config, seed=seed)
    registry.enroll("alice", genuine[:30], impostor[:10])
    return registry, genuine, impostor


class ConstantOracle:
    def __init__(self, f):
        self.f = f
        self.calls = 0

    def resolve(self, event):
        self.calls += 1
        return self.f, SOURCE_ORACLE


class TimeoutSource:
    def resolve(self, event):
        return None


# ---------------------------------------------------------------------------
# rewards


def test_reward_all_correct_is_plus_one():
    spec = RewardSpec(sigma=0.5)
    r_global, r_regional, r_t = compute_reward(spec, f=0, verdict_global_after="genuine",
                                               per_tree_verdicts_after=["genuine"] * 3)
    assert r_global == 1.0
    assert r_regional == [1.0] * 3
    assert r_t == [1.0] * 3


def test_reward_global_wrong_tree_right_blends_to_zero():
    spec = RewardSpec(sigma=0.5)
    _, _, r_t = compute_reward(spec, f=1, verdict_global_after="genuine",
                               per_tree_verdicts_after=["impostor"])
    assert r_t == [0.0]


def test_reward_sigma_one_ignores_trees():
    spec = RewardSpec(sigma=1.0)
    _, _, r_t = compute_reward(spec, f=0, verdict_global_after="impostor",
                               per_tree_verdicts_after=["genuine", "impostor"])
    assert r_t == [-1.0, -1.0]


def test_reward_values_are_the_four_achievable_blends():
    sigma = 0.3
    spec = RewardSpec(sigma=sigma)
    achievable = {-1.0, -1.0 + 2 * sigma, 1.0 - 2 * sigma, 1.0}
    seen = set()
    for f in (0, 1):
        for vg in ("genuine", "impostor"):
            for vt in ("genuine", "impostor"):
                _, _, r_t = compute_reward(spec, f, vg, [vt])
                seen.add(round(r_t[0], 12))
    assert seen == {round(v, 12) for v in achievable}


# ---------------------------------------------------------------------------
# enrollment


def test_enrollment_scores_training_instance_below_threshold():
    registry, genuine, impostor = enrolled_registry()
    user = registry.users["alice"]
    y, _ = user.classifier.peek_negative_probability(genuine[0])
    assert y < user.classifier.threshold_y
    y_imp, _ = user.classifier.peek_negative_probability(impostor[20])
    assert y_imp > user.classifier.threshold_y


def test_enrollment_deterministic_under_seed():
    r1, _, _ = enrolled_registry(seed=9)
    r2, _, _ = enrolled_registry(seed=9)
    c1, c2 = r1.users["alice"].classifier, r2.users["alice"].classifier
    assert c1.threshold_y == c2.threshold_y
    for t1, t2 in zip(c1.trees, c2.trees):
        assert np.array_equal(t1.split_feature, t2.split_feature)
        assert np.array_equal(t1.split_value, t2.split_value)
        assert np.array_equal(t1.mass, t2.mass)


def test_enrollment_initializes_policy_with_zero_weights():
    registry, _, _ = enrolled_registry()
    net = registry.users["alice"].qnet
    assert all(np.all(v == 0.0) for v in net.theta.values())
    assert all(np.all(v == 0.0) for v in net.theta_target.values())


def test_enrollment_requires_training_rows():
    registry = UserRegistry(small_config(), seed=0)
    with pytest.raises(Exception):
        registry.enroll("bob", np.empty((0, 4)), np.empty((0, 4)))


def test_enrollment_without_impostors_warns_and_falls_back():
    genuine, _ = two_cluster_rows()
    registry = UserRegistry(small_config(), seed=2)
    with pytest.warns(UserWarning, match="degenerate"):
        user = registry.enroll("solo", genuine[:30], np.empty((0, 4)))
    assert 0.0 <= user.classifier.threshold_y <= 1.0


# ---------------------------------------------------------------------------
# the identification loop


def test_gate_one_never_requests_feedback():
    registry, genuine, impostor = enrolled_registry(small_config(gate=1.0))
    oracle = ConstantOracle(0)
    for x in list(genuine[30:]) + list(impostor[10:20]):
        out = registry.identify("alice", x, oracle)
        assert out.feedback is None
        assert out.actions_taken == []
        assert out.y_after is None
        assert out.verdict_final == out.verdict_before
    assert oracle.calls == 0


def test_gate_one_pipeline_matches_bare_scoring_bit_for_bit():
    config = small_config(gate=1.0)
    genuine, impostor = two_cluster_rows()
    probes = np.vstack([genuine[30:], impostor[10:20]])

    registry, _, _ = enrolled_registry(config, seed=21)
    via_pipeline = [registry.identify("alice", x, ConstantOracle(0)).y_before
                    for x in probes]

    registry2, _, _ = enrolled_registry(config, seed=21)
    clf = registry2.users["alice"].classifier
    bare = [clf.negative_probability(x, streaming=True)[0] for x in probes]
    assert via_pipeline == bare


def test_feedback_event_appends_one_transition_per_tree():
    config = small_config(gate=0.0)  # everything gates
    registry, genuine, _ = enrolled_registry(config)
    user = registry.users["alice"]
    out = registry.identify("alice", genuine[35], ConstantOracle(0))
    assert out.feedback is not None and out.feedback.source == "oracle"
    assert len(user.memory) == config.trees
    assert len(out.actions_taken) == config.trees
    assert out.y_after is not None
    out2 = registry.identify("alice", genuine[36], ConstantOracle(0))
    assert len(user.memory) == 2 * config.trees


def test_no_feedback_stores_no_transitions():
    registry, genuine, _ = enrolled_registry(small_config(gate=1.0))
    registry.identify("alice", genuine[30], ConstantOracle(0))
    assert len(registry.users["alice"].memory) == 0


def test_timeout_skip_leaves_model_unchanged():
    config = small_config(gate=0.0)
    registry, genuine, _ = enrolled_registry(config, seed=33)
    user = registry.users["alice"]
    mass_before = [t.mass.copy() for t in user.classifier.trees]
    out = registry.identify("alice", genuine[40 - 1], TimeoutSource())
    assert out.feedback.source == "timeout-skip"
    assert out.feedback.f is None
    assert out.actions_taken == []
    assert out.y_after is None
    for before, tree in zip(mass_before, user.classifier.trees):
        assert np.array_equal(before, tree.mass)
    assert len(user.memory) == 0


def test_rewards_recorded_in_outcome_are_achievable_blends():
    config = small_config(gate=0.0, reward=RewardSpec(sigma=0.5))
    registry, genuine, impostor = enrolled_registry(config)
    outs = [registry.identify("alice", x, ConstantOracle(0)) for x in genuine[30:38]]
    for out in outs:
        assert out.r_global in (-1.0, 1.0)
        for r in out.r_regional:
            assert r in (-1.0, 1.0)
    for t in registry.users["alice"].memory.snapshot():
        assert t.r in (-1.0, 0.0, 1.0)  # sigma=0.5 blends


def test_maintain_only_policy_keeps_score():
    config = small_config(gate=0.0)
    registry, genuine, _ = enrolled_registry(config, seed=3)
    user = registry.users["alice"]
    # force greedy Maintain: zero net means uniform Q, argmax tie -> ordinal 0,
    # and epsilon 0 removes exploration
    user.config.trainer.epsilon_start = 0.0
    user.config.trainer.epsilon_end = 0.0
    out = registry.identify("alice", genuine[33], ConstantOracle(0))
    assert all(a == UpdateAction.MAINTAIN for _, a in out.actions_taken)
    assert out.y_after == pytest.approx(out.y_before)


def test_step_counter_counts_feedback_events_and_syncs_at_c():
    trainer = TrainerConfig(batch_size=4, capacity=64, replace_step=2)
    config = small_config(gate=0.0, trainer=trainer)
    registry, genuine, _ = enrolled_registry(config, seed=13)
    user = registry.users["alice"]
    synced = []
    original = user.qnet.sync_target

    def spy():
        synced.append(user.step_counter)
        original()

    user.qnet.sync_target = spy
    for x in genuine[30:36]:
        registry.identify("alice", x, ConstantOracle(0))
    assert user.step_counter == 6  # one update step per feedback event
    assert synced == [2, 4, 6]


def test_outcome_json_line_is_valid_and_complete():
    config = small_config(gate=0.0)
    lines = []
    registry = UserRegistry(config, seed=5, audit_sink=lambda o: lines.append(o.to_json_line()))
    genuine, impostor = two_cluster_rows()
    registry.enroll("alice", genuine[:30], impostor[:10])
    registry.identify("alice", genuine[35], ConstantOracle(0))
    registry.identify("alice", impostor[25], ConstantOracle(1))
    for line in lines:
        doc = json.loads(line)
        assert doc["claimed_user"] == "alice"
        assert set(doc) == {"instance_id", "claimed_user", "y_before",
                            "verdict_before", "feedback", "actions_taken",
                            "r_global", "r_regional", "y_after", "verdict_final"}


def test_replay_of_identical_stream_reproduces_outcomes():
    def run():
        config = small_config(gate=0.2)
        registry, genuine, impostor = enrolled_registry(config, seed=77)
        stream = np.vstack([genuine[30:], impostor[10:30]])
        labels = [0] * 10 + [1] * 20
        outs = []
        for x, label in zip(stream, labels):
            outs.append(registry.identify("alice", x, ConstantOracle(label)))
        return [(o.y_before, o.verdict_final, o.y_after,
                 tuple(int(a) for _, a in o.actions_taken)) for o in outs]

    assert run() == run()


def test_identify_via_split_plan_streams_and_late_enrollment():
    instances = synthetic_dataset(n_subjects=5, sessions=3, reps=20, dim=8, seed=4)
    plan = make_split(instances, enrolled_fraction=0.6, seed=11)
    assert len(plan.enrolled_initially) == 3
    assert len(plan.late_enrollees) == 2

    config = small_config(gate=0.4, trees=10, max_depth=6, terminal_depth=3)
    registry = UserRegistry(config, seed=1)
    labels = {}
    enrolled_order = []
    for event in plan.merged_stream():
        if event[0] == "enroll":
            user_id = event[1]
            split = plan.users[user_id]
            Xg = np.stack([i.features for i in split.train_genuine])
            Xi = np.stack([i.features for i in split.train_impostor])
            registry.enroll(user_id, Xg, Xi)
            enrolled_order.append(user_id)
        else:
            item, last = event[1], event[2]
            oracle = ConstantOracle(item.label)
            out = registry.identify(item.claimed_user, item.instance.features,
                                    oracle, end_of_stream=last)
            labels[out.instance_id] = (out.verdict_final, item.label)
    # late users enrolled strictly after the initial block
    assert enrolled_order[:3] == plan.enrolled_initially
    assert set(enrolled_order[3:]) == set(plan.late_enrollees)
    correct = sum((v == "genuine") == (l == 0) for v, l in labels.values())
    assert correct / len(labels) > 0.8


def test_end_of_stream_marks_terminal_transitions():
    config = small_config(gate=0.0)
    registry, genuine, _ = enrolled_registry(config)
    user = registry.users["alice"]
    registry.identify("alice", genuine[31], ConstantOracle(0), end_of_stream=False)
    registry.identify("alice", genuine[32], ConstantOracle(0), end_of_stream=True)
    flags = [t.terminal for t in user.memory.snapshot()]
    assert flags == [False] * config.trees + [True] * config.trees
