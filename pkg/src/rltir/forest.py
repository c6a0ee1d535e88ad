"""Per-user ensembles of random space trees with windowed mass profiles.

Each enrolled user owns a Classifier of M trees. A tree partitions a
randomly anchored workspace of the normalized feature space by midpoint
splits on random features, down to a fixed MaxDepth. Scoring reads the
mass of the terminal node on an instance's path, depth-corrects it into a
density, and converts the density into a per-tree negative probability via
a logistic CDF whose location/scale track the stream incrementally.

Trees are stored as index heaps (root at 1, children of i at 2i and 2i+1)
so that mass updates, window refreshes and structural edits are plain
array operations.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

# node_type codes
INTERNAL = 0
TERMINAL = 1
DORMANT = 2

# Below this scale the logistic degenerates; use its step-function limit.
SIGMA_FLOOR = 1e-6

VERDICT_GENUINE = "genuine"
VERDICT_IMPOSTOR = "impostor"


class ConfigurationError(ValueError):
    """Invalid model configuration (depths, empty training data, ...)."""


class InputError(ValueError):
    """Malformed caller input (dimension mismatch, ...)."""


class Welford:
    """Incremental mean/variance accumulator.

    Reports the sample variance m2/(count-1) for count >= 2, else 0.
    """

    __slots__ = ("count", "mean", "m2")

    def __init__(self, count: int = 0, mean: float = 0.0, m2: float = 0.0):
        self.count = count
        self.mean = mean
        self.m2 = m2

    def add(self, x: float) -> None:
        self.count += 1
        delta = x - self.mean
        self.mean += delta / self.count
        self.m2 += delta * (x - self.mean)

    @property
    def variance(self) -> float:
        if self.count < 2:
            return 0.0
        return self.m2 / (self.count - 1)

    @property
    def std(self) -> float:
        return math.sqrt(self.variance)

    def state(self) -> dict:
        return {"count": self.count, "mean": self.mean, "m2": self.m2}

    @classmethod
    def from_state(cls, d: dict) -> "Welford":
        return cls(int(d["count"]), float(d["mean"]), float(d["m2"]))


def logistic_cdf(m: float, mu: float, sigma: float, scale: str = "paper") -> float:
    """Logistic CDF of a density value around the running (mu, sigma).

    ``scale="paper"`` uses the exponent sqrt(3)*(mu-m)/(pi*sigma);
    ``scale="standard"`` uses the textbook parameterization in which sigma
    is the distribution's standard deviation, pi*(mu-m)/(sqrt(3)*sigma).
    For sigma below SIGMA_FLOOR the analytic limit is a step at mu.
    """
    if sigma < SIGMA_FLOOR:
        if m > mu:
            return 1.0
        if m < mu:
            return 0.0
        return 0.5
    if scale == "paper":
        z = math.sqrt(3.0) * (m - mu) / (math.pi * sigma)
    elif scale == "standard":
        z = math.pi * (m - mu) / (math.sqrt(3.0) * sigma)
    else:
        raise ConfigurationError(f"unknown logistic scale {scale!r}")
    return float(expit(z))


@dataclass
class WorkspaceBounds:
    """Per-dimension bounds of a tree's randomly anchored workspace."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        if not np.all(self.lower < self.upper):
            raise ConfigurationError("workspace requires lower < upper in every dimension")

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    def contains_unit_cube(self) -> bool:
        return bool(np.all(self.lower <= 0.0) and np.all(self.upper >= 1.0))


def build_workspace(training_matrix: np.ndarray, dim: int, rng: np.random.Generator) -> WorkspaceBounds:
    """Draw a random workspace guaranteed to cover the normalized range.

    Per dimension an anchor z ~ Uniform(0,1) is drawn and the bounds are
    z +/- 2*max(z, 1-z), which always contains [0, 1].
    """
    training_matrix = np.asarray(training_matrix, dtype=float)
    if training_matrix.size == 0:
        raise ConfigurationError("cannot build a workspace from an empty training matrix")
    if training_matrix.ndim != 2 or training_matrix.shape[1] != dim:
        raise ConfigurationError(
            f"training matrix must be 2-D with {dim} columns, got shape {training_matrix.shape}"
        )
    z = rng.uniform(0.0, 1.0, size=dim)
    half = 2.0 * np.maximum(z, 1.0 - z)
    return WorkspaceBounds(lower=z - half, upper=z + half)


class TreeNode:
    """View of a single node; reads and writes its tree's arrays."""

    __slots__ = ("tree", "index")

    def __init__(self, tree: "SpaceTree", index: int):
        self.tree = tree
        self.index = index

    @property
    def h(self) -> int:
        return self.index.bit_length() - 1

    @property
    def k(self) -> int:
        return int(self.tree.split_feature[self.index])

    @property
    def tau(self) -> float:
        return float(self.tree.split_value[self.index])

    @property
    def v(self) -> float:
        return float(self.tree.mass[self.index])

    @v.setter
    def v(self, value: float) -> None:
        self.tree.mass[self.index] = value

    @property
    def v_latest(self) -> float:
        return float(self.tree.window_mass[self.index])

    @property
    def p(self) -> int:
        return int(self.tree.pos_feedback[self.index])

    @property
    def n(self) -> int:
        return int(self.tree.neg_feedback[self.index])

    @property
    def node_type(self) -> int:
        return int(self.tree.node_type[self.index])

    @property
    def flag(self) -> bool:
        return self.index in self.tree.last_path

    def __repr__(self):  # pragma: no cover - debugging aid
        kind = {INTERNAL: "internal", TERMINAL: "terminal", DORMANT: "dormant"}[self.node_type]
        return f"TreeNode(i={self.index}, h={self.h}, type={kind}, v={self.v:.3f})"


class SpaceTree:
    """One random space tree: a complete binary heap of node profiles.

    The readout frontier starts at ``terminal_depth`` and moves under the
    expand/collapse update actions; nodes below the frontier are dormant.
    """

    def __init__(self, bounds: WorkspaceBounds, max_depth: int, min_depth: int,
                 terminal_depth: int, rng: np.random.Generator,
                 logistic_scale: str = "paper"):
        if not (1 <= min_depth <= terminal_depth <= max_depth):
            raise ConfigurationError(
                f"need 1 <= MinDepth({min_depth}) <= TerminalDepth({terminal_depth})"
                f" <= MaxDepth({max_depth})"
            )
        self.bounds = bounds
        self.max_depth = max_depth
        self.min_depth = min_depth
        self.terminal_depth_init = terminal_depth
        self.dim = bounds.dim
        self.logistic_scale = logistic_scale

        size = 1 << (max_depth + 1)  # slot 0 unused
        self.size = size
        self.split_feature = rng.integers(0, self.dim, size=size).astype(np.int32)
        self.split_value = np.zeros(size)
        self.mass = np.zeros(size)          # v, reference mass
        self.window_mass = np.zeros(size)   # v_latest, current-window mass
        self.pos_feedback = np.zeros(size, dtype=np.int64)  # p
        self.neg_feedback = np.zeros(size, dtype=np.int64)  # n
        self.node_type = np.full(size, DORMANT, dtype=np.int8)
        self.node_type[0] = INTERNAL  # unused slot
        for depth in range(terminal_depth):
            self.node_type[1 << depth:(1 << (depth + 1))] = INTERNAL
        self.node_type[1 << terminal_depth:(1 << (terminal_depth + 1))] = TERMINAL

        self._assign_midpoint_splits()

        self.last_path: list[int] = []
        self.welford = Welford()
        self.instance_counter = 0
        self.training_mass = 0.0

    def _assign_midpoint_splits(self) -> None:
        # Propagate workspace slabs level by level; tau is the midpoint of
        # the inherited slab along the node's split feature. Slabs are only
        # needed during construction.
        size = self.size
        lo = np.zeros((size, self.dim))
        hi = np.zeros((size, self.dim))
        lo[1] = self.bounds.lower
        hi[1] = self.bounds.upper
        for depth in range(self.max_depth + 1):
            idx = np.arange(1 << depth, 1 << (depth + 1))
            k = self.split_feature[idx]
            tau = 0.5 * (lo[idx, k] + hi[idx, k])
            self.split_value[idx] = tau
            if depth < self.max_depth:
                left, right = 2 * idx, 2 * idx + 1
                lo[left] = lo[idx]
                hi[left] = hi[idx]
                hi[left, k] = tau
                lo[right] = lo[idx]
                hi[right] = hi[idx]
                lo[right, k] = tau

    # -- traversal ---------------------------------------------------------

    def _walk(self, x: np.ndarray) -> list[int]:
        """Path of x from the root to the current terminal node (ties go right)."""
        idx = 1
        path = [1]
        node_type = self.node_type
        split_feature = self.split_feature
        split_value = self.split_value
        while node_type[idx] != TERMINAL:
            idx = 2 * idx + (1 if x[split_feature[idx]] >= split_value[idx] else 0)
            path.append(idx)
        return path

    def traverse(self, x: np.ndarray) -> TreeNode:
        """Route x to its terminal node, updating window masses and flags."""
        if x.shape[0] != self.dim:
            raise InputError(f"instance has dimension {x.shape[0]}, tree expects {self.dim}")
        path = self._walk(x)
        self.window_mass[path] += 1.0
        self.last_path = path
        return TreeNode(self, path[-1])

    def peek_terminal(self, x: np.ndarray) -> TreeNode:
        """Locate x's terminal node without touching any state."""
        if x.shape[0] != self.dim:
            raise InputError(f"instance has dimension {x.shape[0]}, tree expects {self.dim}")
        return TreeNode(self, self._walk(x)[-1])

    # -- scoring -----------------------------------------------------------

    def negative_probability(self, node: TreeNode, update_stats: bool = True) -> float:
        """Per-tree negative probability of the instance at ``node``.

        Scores with the statistics accumulated so far, then (by default)
        ingests the observed density, so an instance never sees itself.
        """
        if node.node_type != TERMINAL:
            raise RuntimeError("negative probability is only defined at a terminal node")
        m = node_density(node)
        y = 1.0 - logistic_cdf(m, self.welford.mean, self.welford.std, self.logistic_scale)
        if update_stats:
            self.welford.add(m)
        return y

    # -- training & window maintenance --------------------------------------

    def ingest_training_instance(self, x: np.ndarray) -> None:
        """Add one training instance's mass along its path, then record the
        resulting terminal density in the running statistics."""
        path = self._walk(x)
        self.mass[path] += 1.0
        self.window_mass[path] += 1.0
        self.last_path = path
        self.training_mass += 1.0
        terminal = path[-1]
        h = terminal.bit_length() - 1
        self.welford.add(self.mass[terminal] * float(2 ** h))

    def ingest_training_batch(self, X: np.ndarray) -> None:
        """Vectorized equivalent of ingesting rows of X one at a time."""
        n = X.shape[0]
        if n == 0:
            return
        idx = np.ones(n, dtype=np.int64)
        self.mass[1] += n
        self.window_mass[1] += n
        depth = 0
        while self.node_type[idx[0]] != TERMINAL:
            k = self.split_feature[idx]
            go_right = X[np.arange(n), k] >= self.split_value[idx]
            idx = 2 * idx + go_right.astype(np.int64)
            np.add.at(self.mass, idx, 1.0)
            np.add.at(self.window_mass, idx, 1.0)
            depth += 1
        # Per-instance terminal density at ingestion time: the j-th arrival
        # in a terminal sees that terminal's running count, not the final one.
        scale = float(2 ** depth)
        seen: dict[int, float] = {}
        base = {int(i): float(self.mass[i]) - c for i, c in
                zip(*np.unique(idx, return_counts=True))}
        for j in range(n):
            t = int(idx[j])
            seen[t] = seen.get(t, base[t]) + 1.0
            self.welford.add(seen[t] * scale)
        self.training_mass += n
        self.last_path = []

    def refresh_window(self, phi: int, rho: float) -> None:
        """Blend the current window's traffic into the reference masses.

        Window counts are rescaled by training_mass/phi so they are
        commensurate with reference-mass units before blending.
        """
        if phi < 1:
            raise ConfigurationError("phi must be >= 1")
        if not 0.0 <= rho <= 1.0:
            raise ConfigurationError("rho must lie in [0, 1]")
        phi_scale = self.training_mass / phi if phi else 1.0
        np.multiply(self.mass, 1.0 - rho, out=self.mass)
        self.mass += rho * phi_scale * self.window_mass
        self.window_mass[:] = 0.0
        self.instance_counter = 0

    def reset_window(self) -> None:
        """Zero window counters; called once when enrollment hands over to
        the stream so the first window only measures live traffic."""
        self.window_mass[:] = 0.0
        self.instance_counter = 0

    # -- structure helpers ---------------------------------------------------

    def terminal_of_path(self) -> TreeNode:
        return TreeNode(self, self.last_path[-1])

    def frontier_is_consistent(self) -> bool:
        """True iff every root-to-MaxDepth path crosses exactly one terminal."""
        leaves = np.arange(1 << self.max_depth, 1 << (self.max_depth + 1))
        for leaf in leaves:
            count = 0
            i = int(leaf)
            while i >= 1:
                if self.node_type[i] == TERMINAL:
                    count += 1
                i //= 2
            if count != 1:
                return False
        return True

    def state(self) -> dict:
        return {
            "max_depth": self.max_depth,
            "min_depth": self.min_depth,
            "terminal_depth_init": self.terminal_depth_init,
            "logistic_scale": self.logistic_scale,
            "bounds_lower": self.bounds.lower.tolist(),
            "bounds_upper": self.bounds.upper.tolist(),
            "split_feature": self.split_feature.tolist(),
            "split_value": self.split_value.tolist(),
            "mass": self.mass.tolist(),
            "window_mass": self.window_mass.tolist(),
            "pos_feedback": self.pos_feedback.tolist(),
            "neg_feedback": self.neg_feedback.tolist(),
            "node_type": self.node_type.tolist(),
            "welford": self.welford.state(),
            "instance_counter": self.instance_counter,
            "training_mass": self.training_mass,
        }

    @classmethod
    def from_state(cls, d: dict) -> "SpaceTree":
        bounds = WorkspaceBounds(np.asarray(d["bounds_lower"], dtype=float),
                                 np.asarray(d["bounds_upper"], dtype=float))
        tree = cls.__new__(cls)
        tree.bounds = bounds
        tree.max_depth = int(d["max_depth"])
        tree.min_depth = int(d["min_depth"])
        tree.terminal_depth_init = int(d["terminal_depth_init"])
        tree.logistic_scale = d["logistic_scale"]
        tree.dim = bounds.dim
        tree.size = 1 << (tree.max_depth + 1)
        tree.split_feature = np.asarray(d["split_feature"], dtype=np.int32)
        tree.split_value = np.asarray(d["split_value"], dtype=float)
        tree.mass = np.asarray(d["mass"], dtype=float)
        tree.window_mass = np.asarray(d["window_mass"], dtype=float)
        tree.pos_feedback = np.asarray(d["pos_feedback"], dtype=np.int64)
        tree.neg_feedback = np.asarray(d["neg_feedback"], dtype=np.int64)
        tree.node_type = np.asarray(d["node_type"], dtype=np.int8)
        tree.welford = Welford.from_state(d["welford"])
        tree.instance_counter = int(d["instance_counter"])
        tree.training_mass = float(d["training_mass"])
        tree.last_path = []
        return tree


def grow_tree(bounds: WorkspaceBounds, max_depth: int, min_depth: int,
              terminal_depth: int, rng: np.random.Generator,
              logistic_scale: str = "paper") -> SpaceTree:
    """Build a complete random space tree over ``bounds``."""
    return SpaceTree(bounds, max_depth, min_depth, terminal_depth, rng,
                     logistic_scale=logistic_scale)


def node_density(node: TreeNode) -> float:
    """Depth-corrected mass of a node: m = v * 2^h."""
    return node.v * float(2 ** node.h)


def traverse(tree: SpaceTree, x: np.ndarray) -> TreeNode:
    return tree.traverse(x)


def tree_negative_probability(tree: SpaceTree, node: TreeNode) -> float:
    return tree.negative_probability(node)


@dataclass
class Classifier:
    """Ensemble of M random space trees plus a calibrated decision threshold."""

    user_id: str
    trees: list
    threshold_y: float | None = None
    phi: int = 250
    rho: float = 0.3
    normalizer: object | None = None  # data.MinMaxNormalizer, set at enrollment
    clamp_lo: float = -0.5
    clamp_hi: float = 1.5

    @property
    def M(self) -> int:
        return len(self.trees)

    @property
    def dim(self) -> int:
        return self.trees[0].dim

    def prepare(self, x_raw: np.ndarray) -> np.ndarray:
        """Normalize a raw instance and clamp drifted values into routable range."""
        x = np.asarray(x_raw, dtype=float)
        if x.shape[0] != self.dim:
            raise InputError(f"instance has dimension {x.shape[0]}, classifier expects {self.dim}")
        if self.normalizer is not None:
            x = self.normalizer.transform(x)
        return np.clip(x, self.clamp_lo, self.clamp_hi)

    def negative_probability(self, x_raw: np.ndarray, streaming: bool = True):
        """Ensemble negative probability and the per-tree breakdown.

        With ``streaming=True`` traversal updates window masses/flags, each
        tree ingests its observed density, and the refresh window may fire.
        """
        x = self.prepare(x_raw)
        per_tree = []
        total = 0.0
        for tree in self.trees:
            node = tree.traverse(x)
            y_i = tree.negative_probability(node, update_stats=True)
            per_tree.append((node, y_i))
            total += y_i
            if streaming:
                tree.instance_counter += 1
                if tree.instance_counter >= self.phi:
                    tree.refresh_window(self.phi, self.rho)
        return total / self.M, per_tree

    def peek_negative_probability(self, x_raw: np.ndarray, stats=None):
        """Pure read of the current model's score; no state is touched.

        ``stats`` optionally pins per-tree (mean, std) pairs, so a re-score
        after update actions isolates the structural change from the running
        statistics' own drift.
        """
        x = self.prepare(x_raw)
        per_tree = []
        total = 0.0
        for i, tree in enumerate(self.trees):
            node = tree.peek_terminal(x)
            m = node_density(node)
            if stats is None:
                mean, std = tree.welford.mean, tree.welford.std
            else:
                mean, std = stats[i]
            y_i = 1.0 - logistic_cdf(m, mean, std, tree.logistic_scale)
            per_tree.append((node, y_i))
            total += y_i
        return total / self.M, per_tree

    def ingest_training_instance(self, x_raw: np.ndarray) -> None:
        x = self.prepare(x_raw)
        for tree in self.trees:
            tree.ingest_training_instance(x)

    def ingest_training_batch(self, X_raw: np.ndarray) -> None:
        X = np.stack([self.prepare(row) for row in np.asarray(X_raw, dtype=float)])
        for tree in self.trees:
            tree.ingest_training_batch(X)

    def decide(self, y: float) -> str:
        """Genuine iff the negative probability is strictly below the threshold."""
        if self.threshold_y is None:
            raise RuntimeError("classifier threshold has not been calibrated")
        return VERDICT_GENUINE if y < self.threshold_y else VERDICT_IMPOSTOR

    def reset_windows(self) -> None:
        for tree in self.trees:
            tree.reset_window()


def _f1_at_threshold(scores: np.ndarray, genuine: np.ndarray, threshold: float) -> float:
    predicted_genuine = scores < threshold
    tp = int(np.sum(predicted_genuine & genuine))
    fp = int(np.sum(predicted_genuine & ~genuine))
    fn = int(np.sum(~predicted_genuine & genuine))
    if tp == 0:
        return 0.0
    precision = tp / (tp + fp)
    recall = tp / (tp + fn)
    return 2.0 * precision * recall / (precision + recall)


def calibrate_threshold(classifier: Classifier, training_scores) -> float:
    """Pick the F1-maximizing threshold over candidate midpoints.

    Candidates are the midpoints between consecutive distinct sorted scores
    plus {0, 1}; ties resolve to the smallest threshold. Degenerate inputs
    (a single class, or all scores identical) fall back to the 95th
    percentile of the genuine scores.
    """
    scores = np.array([s for s, _ in training_scores], dtype=float)
    genuine = np.array([label == 0 for _, label in training_scores], dtype=bool)
    if scores.size == 0:
        raise ConfigurationError("cannot calibrate a threshold without training scores")

    distinct = np.unique(scores)
    single_class = genuine.all() or (~genuine).all()
    if single_class or distinct.size == 1:
        if not genuine.any():
            raise ConfigurationError("threshold fallback requires at least one genuine score")
        warnings.warn(
            f"degenerate training scores for {classifier.user_id}; "
            "falling back to the 95th percentile of genuine scores",
            stacklevel=2,
        )
        threshold = float(np.percentile(scores[genuine], 95))
        classifier.threshold_y = min(max(threshold, 0.0), 1.0)
        return classifier.threshold_y

    candidates = np.concatenate(([0.0], (distinct[:-1] + distinct[1:]) / 2.0, [1.0]))
    best_threshold = 0.0
    best_f1 = -1.0
    for t in candidates:
        f1 = _f1_at_threshold(scores, genuine, float(t))
        if f1 > best_f1:  # strict: ties keep the smallest threshold
            best_f1 = f1
            best_threshold = float(t)
    classifier.threshold_y = best_threshold
    return best_threshold
