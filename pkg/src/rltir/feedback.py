"""Uncertainty gating and expert feedback bookkeeping.

An identification result is uncertain when the reported per-tree negative
probability disagrees with the empirical negative-feedback ratio observed
at the instance's terminal node. Instances whose mean disagreement exceeds
the gate threshold trigger a feedback request; resolved requests land in
the per-node (p, n) counters that future uncertainty reads.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import datetime, timezone

import numpy as np

FEEDBACK_POSITIVE = 0  # expert judged the person genuine
FEEDBACK_NEGATIVE = 1  # expert judged the person an impostor

SOURCE_HUMAN = "human"
SOURCE_ORACLE = "oracle"
SOURCE_TIMEOUT = "timeout-skip"


class FeedbackStateError(RuntimeError):
    """A feedback event was used in a state it is not in."""


def rfc3339(ts: datetime | None) -> str | None:
    if ts is None:
        return None
    return ts.astimezone(timezone.utc).isoformat().replace("+00:00", "Z")


@dataclass
class FeedbackEvent:
    """An instance-feedback pair plus the uncertainty that triggered it."""

    instance_id: str
    claimed_user: str
    x: np.ndarray
    y: float
    U: float
    verdict_before: str
    f: int | None = None
    source: str | None = None
    requested_at: datetime = field(default_factory=lambda: datetime.now(timezone.utc))
    resolved_at: datetime | None = None

    @property
    def resolved(self) -> bool:
        return self.source is not None

    def resolve(self, f: int | None, source: str,
                at: datetime | None = None) -> None:
        if self.resolved:
            raise FeedbackStateError(f"event {self.instance_id} already resolved")
        if source == SOURCE_TIMEOUT:
            if f is not None:
                raise FeedbackStateError("a timeout-skip carries no feedback value")
        elif f not in (FEEDBACK_POSITIVE, FEEDBACK_NEGATIVE):
            raise FeedbackStateError(f"feedback must be 0 or 1, got {f!r}")
        self.f = f
        self.source = source
        self.resolved_at = at or datetime.now(timezone.utc)

    def to_json(self) -> dict:
        return {
            "instance_id": self.instance_id,
            "claimed_user": self.claimed_user,
            "x": np.asarray(self.x, dtype=float).tolist(),
            "y": self.y,
            "U": self.U,
            "verdict_before": self.verdict_before,
            "f": self.f,
            "source": self.source,
            "requested_at": rfc3339(self.requested_at),
            "resolved_at": rfc3339(self.resolved_at),
        }


def node_uncertainty(y_i: float, p: int, n: int) -> float:
    """|reported negative probability - empirical negative ratio|.

    A node with no feedback history has nothing to compare against and is
    maximally uncertain (1.0), which bootstraps the first requests.
    """
    if p < 0 or n < 0:
        raise ValueError("feedback counters cannot be negative")
    total = p + n
    if total == 0:
        return 1.0
    return abs(y_i - n / total)


def instance_uncertainty(per_tree) -> float:
    """Mean per-tree uncertainty over the ensemble."""
    if not per_tree:
        raise ValueError("uncertainty needs at least one tree result")
    return float(np.mean([node_uncertainty(y_i, node.p, node.n)
                          for node, y_i in per_tree]))


def should_request_feedback(U: float, gate: float) -> bool:
    """Request feedback iff the uncertainty strictly exceeds the gate."""
    if not 0.0 <= gate <= 1.0:
        raise ValueError("gate threshold must lie in [0, 1]")
    return U > gate


def record_feedback(classifier, event: FeedbackEvent, per_tree_nodes) -> None:
    """Credit a resolved feedback to each tree's terminal node for the instance."""
    if not event.resolved or event.f not in (FEEDBACK_POSITIVE, FEEDBACK_NEGATIVE):
        raise FeedbackStateError("feedback must be resolved with f in {0, 1} before recording")
    for node in per_tree_nodes:
        if event.f == FEEDBACK_POSITIVE:
            node.tree.pos_feedback[node.index] += 1
        else:
            node.tree.neg_feedback[node.index] += 1
