"""Per-instance identification loop and user enrollment.

For each arriving instance the pipeline scores the claimed user's
ensemble, measures uncertainty, optionally requests feedback, and - when
feedback arrives - lets the policy pick one update action per tree,
applies it, scores the updated model, converts correctness into blended
rewards, stores one transition per tree in the user's replay memory, and
trains the shared Q-network. The verdict returned is always computed
from the model state the next instance will see.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import feedback as fb
from .actions import UpdateAction, apply_action, encode_state
from .data import MinMaxNormalizer
from .forest import (VERDICT_GENUINE, VERDICT_IMPOSTOR, Classifier,
                     ConfigurationError, TreeNode, build_workspace,
                     calibrate_threshold, grow_tree)
from .qnet import (QNetwork, ReplayMemory, TrainerConfig, Transition,
                   sample_minibatch, select_actions_batch)


@dataclass
class RewardSpec:
    """Blend weight between ensemble-level and per-tree correctness."""

    sigma: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.sigma <= 1.0:
            raise ValueError("sigma must lie in [0, 1]")


@dataclass
class PipelineConfig:
    trees: int = 30
    max_depth: int = 9
    min_depth: int = 1
    terminal_depth: int = 4
    beta: float = 0.1
    gate: float = 0.35
    phi: int = 250
    rho: float = 0.3
    logistic_scale: str = "paper"
    reward: RewardSpec = field(default_factory=RewardSpec)
    trainer: TrainerConfig = field(default_factory=TrainerConfig)
    feedback_timeout: float = 60.0

    def as_dict(self) -> dict:
        d = {k: getattr(self, k) for k in (
            "trees", "max_depth", "min_depth", "terminal_depth", "beta", "gate",
            "phi", "rho", "logistic_scale", "feedback_timeout")}
        d["sigma"] = self.reward.sigma
        d["trainer"] = {k: getattr(self.trainer, k) for k in (
            "gamma", "alpha", "replace_step", "epsilon_start", "epsilon_end",
            "epsilon_decay", "batch_size", "capacity", "h1", "h2", "h3", "head")}
        return d


@dataclass
class IdentificationOutcome:
    instance_id: str
    claimed_user: str
    y_before: float
    verdict_before: str
    feedback: fb.FeedbackEvent | None = None
    actions_taken: list = field(default_factory=list)
    r_global: float | None = None
    r_regional: list | None = None
    y_after: float | None = None
    verdict_final: str = ""

    def y_final(self) -> float:
        return self.y_before if self.y_after is None else self.y_after

    def to_json_line(self) -> str:
        doc = {
            "instance_id": self.instance_id,
            "claimed_user": self.claimed_user,
            "y_before": self.y_before,
            "verdict_before": self.verdict_before,
            "feedback": self.feedback.to_json() if self.feedback else None,
            "actions_taken": [[i, int(a)] for i, a in self.actions_taken],
            "r_global": self.r_global,
            "r_regional": self.r_regional,
            "y_after": self.y_after,
            "verdict_final": self.verdict_final,
        }
        return json.dumps(doc, sort_keys=True)


class OracleFeedbackSource:
    """Answers every request instantly with the ground-truth label."""

    def __init__(self, lookup):
        self._lookup = lookup  # instance_id -> 0/1

    def resolve(self, event: fb.FeedbackEvent):
        return self._lookup(event.instance_id), fb.SOURCE_ORACLE


@dataclass
class EnrolledUser:
    user_id: str
    classifier: Classifier
    qnet: QNetwork
    memory: ReplayMemory
    config: PipelineConfig
    rng: np.random.Generator
    step_counter: int = 0
    instance_seq: int = 0

    def next_instance_id(self) -> str:
        self.instance_seq += 1
        return f"{self.user_id}:{self.instance_seq:06d}"


def compute_reward(spec: RewardSpec, f: int, verdict_global_after: str,
                   per_tree_verdicts_after: list):
    """Blend ensemble-level and per-tree correctness into per-tree rewards.

    Correctness is judged against the post-update model so the reward
    actually reflects the chosen actions.
    """
    if f not in (0, 1):
        raise ValueError("reward needs resolved feedback f in {0, 1}")
    expected_genuine = f == fb.FEEDBACK_POSITIVE
    r_global = 1.0 if (verdict_global_after == VERDICT_GENUINE) == expected_genuine else -1.0
    r_regional = [
        1.0 if (v == VERDICT_GENUINE) == expected_genuine else -1.0
        for v in per_tree_verdicts_after
    ]
    r_t = [spec.sigma * r_global + (1.0 - spec.sigma) * r for r in r_regional]
    return r_global, r_regional, r_t


def enroll_user(registry: "UserRegistry", user_id: str, training_rows: np.ndarray,
                impostor_rows: np.ndarray, config: PipelineConfig) -> EnrolledUser:
    """Build, train and calibrate one user's classifier; zero-init their policy."""
    training_rows = np.asarray(training_rows, dtype=float)
    impostor_rows = np.asarray(impostor_rows, dtype=float)
    if training_rows.size == 0:
        raise ConfigurationError(f"user {user_id!r}: no training rows")
    dim = training_rows.shape[1]

    seed_seq = registry.seed_seq.spawn(1)[0]
    tree_rngs = [np.random.default_rng(s) for s in seed_seq.spawn(config.trees + 1)]
    user_rng = tree_rngs.pop()

    pool = np.vstack([training_rows, impostor_rows]) if impostor_rows.size else training_rows
    normalizer = MinMaxNormalizer.fit(pool)

    normalized_train = np.clip(normalizer.transform(training_rows), 0.0, 1.0)
    trees = []
    for rng in tree_rngs:
        bounds = build_workspace(normalized_train, dim, rng)
        trees.append(grow_tree(bounds, config.max_depth, config.min_depth,
                               config.terminal_depth, rng,
                               logistic_scale=config.logistic_scale))
    classifier = Classifier(user_id=user_id, trees=trees, phi=config.phi,
                            rho=config.rho, normalizer=normalizer)
    classifier.ingest_training_batch(training_rows)

    scores = []
    for row in training_rows:
        y, _ = classifier.negative_probability(row, streaming=False)
        scores.append((y, 0))
    for row in impostor_rows:
        y, _ = classifier.negative_probability(row, streaming=False)
        scores.append((y, 1))
    calibrate_threshold(classifier, scores)
    # Hand over to the stream with clean window counters.
    classifier.reset_windows()

    qnet = QNetwork(input_dim=8, h1=config.trainer.h1, h2=config.trainer.h2,
                    h3=config.trainer.h3, head=config.trainer.head, init="zeros")
    user = EnrolledUser(
        user_id=user_id,
        classifier=classifier,
        qnet=qnet,
        memory=ReplayMemory(config.trainer.capacity),
        config=config,
        rng=user_rng,
    )
    registry.users[user_id] = user
    return user


def score_and_gate(user: EnrolledUser, x: np.ndarray):
    """Phase one of identification: score, decide, measure uncertainty."""
    classifier = user.classifier
    # statistics in force while scoring; the post-action re-score pins these
    stats = [(t.welford.mean, t.welford.std) for t in classifier.trees]
    y, per_tree = classifier.negative_probability(x, streaming=True)
    verdict = classifier.decide(y)
    uncertainty = fb.instance_uncertainty(per_tree)
    gated = fb.should_request_feedback(uncertainty, user.config.gate)
    paths = [list(tree.last_path) for tree in classifier.trees]
    return {
        "y": y, "per_tree": per_tree, "verdict": verdict,
        "U": uncertainty, "gated": gated, "paths": paths, "x": x,
        "x_prepared": classifier.prepare(x), "stats": stats,
    }


def complete_with_feedback(user: EnrolledUser, ctx: dict,
                           event: fb.FeedbackEvent,
                           outcome: IdentificationOutcome,
                           end_of_stream: bool = False) -> IdentificationOutcome:
    """Phase two: apply the policy's actions, reward them, train, re-score."""
    classifier = user.classifier
    config = user.config
    fb.record_feedback(classifier, event, [node for node, _ in ctx["per_tree"]])

    epsilon = config.trainer.epsilon_at(user.step_counter)
    states = [encode_state(tree, path)
              for tree, path in zip(classifier.trees, ctx["paths"])]
    actions = select_actions_batch(user.qnet, np.stack(states), epsilon, user.rng)
    for tree, path, a in zip(classifier.trees, ctx["paths"], actions):
        apply_action(tree, TreeNode(tree, path[-1]), UpdateAction(a), config.beta)

    y_after, per_tree_after = classifier.peek_negative_probability(
        ctx["x"], stats=ctx["stats"])
    verdict_after = classifier.decide(y_after)
    per_tree_verdicts = [
        VERDICT_GENUINE if y_i < classifier.threshold_y else VERDICT_IMPOSTOR
        for _, y_i in per_tree_after
    ]
    r_global, r_regional, r_t = compute_reward(
        config.reward, event.f, verdict_after, per_tree_verdicts)

    # Pool the M per-tree transitions, then train once per feedback event
    # with a single minibatch step (the replay sees M new records).
    for i, tree in enumerate(classifier.trees):
        new_path = tree._walk(ctx["x_prepared"])
        s_next = encode_state(tree, new_path)
        user.memory.push(Transition(s=states[i], a=actions[i], r=r_t[i],
                                    s_next=s_next, terminal=end_of_stream))
    batch = sample_minibatch(user.memory, config.trainer.batch_size, user.rng)
    if batch is not None:
        user.qnet.sgd_step(batch, config.trainer.gamma, config.trainer.alpha)
    user.step_counter += 1
    if user.step_counter % config.trainer.replace_step == 0:
        user.qnet.sync_target()

    outcome.actions_taken = [(i, UpdateAction(a)) for i, a in enumerate(actions)]
    outcome.r_global = r_global
    outcome.r_regional = r_regional
    outcome.y_after = y_after
    outcome.verdict_final = verdict_after
    return outcome


def identify(user: EnrolledUser, x_raw: np.ndarray, feedback_source=None,
             end_of_stream: bool = False) -> IdentificationOutcome:
    """Run the full per-instance loop for one arrival."""
    x = np.asarray(x_raw, dtype=float)
    ctx = score_and_gate(user, x)
    outcome = IdentificationOutcome(
        instance_id=user.next_instance_id(),
        claimed_user=user.user_id,
        y_before=ctx["y"],
        verdict_before=ctx["verdict"],
        verdict_final=ctx["verdict"],
    )
    if not ctx["gated"] or feedback_source is None:
        return outcome

    event = fb.FeedbackEvent(
        instance_id=outcome.instance_id,
        claimed_user=user.user_id,
        x=x,
        y=ctx["y"],
        U=ctx["U"],
        verdict_before=ctx["verdict"],
    )
    result = feedback_source.resolve(event)
    if result is None or result[0] is None:
        event.resolve(None, fb.SOURCE_TIMEOUT)
        outcome.feedback = event
        return outcome
    f, source = result
    event.resolve(f, source)
    outcome.feedback = event
    return complete_with_feedback(user, ctx, event, outcome,
                                  end_of_stream=end_of_stream)


class UserRegistry:
    """All enrolled users of one deployment, driven from one seed."""

    def __init__(self, config: PipelineConfig, seed: int = 0, audit_sink=None):
        self.config = config
        self.seed = seed
        self.seed_seq = np.random.SeedSequence(seed)
        self.users: dict[str, EnrolledUser] = {}
        self.audit_sink = audit_sink  # callable taking an IdentificationOutcome

    def enroll(self, user_id: str, training_rows, impostor_rows) -> EnrolledUser:
        return enroll_user(self, user_id, training_rows, impostor_rows, self.config)

    def identify(self, user_id: str, x_raw, feedback_source=None,
                 end_of_stream: bool = False) -> IdentificationOutcome:
        user = self.users[user_id]
        outcome = identify(user, x_raw, feedback_source, end_of_stream)
        if self.audit_sink is not None:
            self.audit_sink(outcome)
        return outcome
