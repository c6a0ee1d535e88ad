"""Deep Q-learning strategy selector, implemented from scratch in numpy.

The Q-network reads the path-based state matrix row by row with an
Elman-style recurrent layer, refines it through two rectified dense
layers, and emits five action values through a softmax head (a linear
head is available as a configuration switch). Training is plain DQN:
uniform experience replay, epsilon-greedy exploration, Bellman targets
computed against a frozen target parameter set that is re-synced every C
update steps, and stochastic gradient descent with hand-derived
gradients.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

N_ACTIONS = 5


class TrainingError(RuntimeError):
    """Raised when optimization produces a non-finite loss."""


@dataclass
class Transition:
    """One (s, a, r, s') replay record."""

    s: np.ndarray
    a: int
    r: float
    s_next: np.ndarray
    terminal: bool = False

    def __post_init__(self):
        if not -1.0 <= self.r <= 1.0:
            raise ValueError(f"reward {self.r} outside [-1, 1]")
        if self.s.shape != self.s_next.shape:
            raise ValueError("state and successor state must share a shape")


class ReplayMemory:
    """Fixed-capacity ring buffer with strictly FIFO eviction."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self._items: list[Transition] = []
        self._cursor = 0

    def push(self, t: Transition) -> None:
        if len(self._items) < self.capacity:
            self._items.append(t)
        else:
            self._items[self._cursor] = t
        self._cursor = (self._cursor + 1) % self.capacity

    def snapshot(self) -> list[Transition]:
        """Contents in insertion order, oldest first."""
        if len(self._items) < self.capacity:
            return list(self._items)
        return self._items[self._cursor:] + self._items[:self._cursor]

    def __len__(self) -> int:
        return len(self._items)


def sample_minibatch(memory: ReplayMemory, batch_size: int,
                     rng: np.random.Generator) -> list[Transition] | None:
    """Uniform sample; None signals an empty memory (skip training).

    Draws with replacement while the memory is smaller than the batch,
    without replacement once it is large enough.
    """
    items = memory.snapshot()
    n = len(items)
    if n == 0:
        return None
    if n < batch_size:
        picks = rng.integers(0, n, size=batch_size)
    else:
        picks = rng.choice(n, size=batch_size, replace=False)
    return [items[int(i)] for i in picks]


@dataclass
class TrainerConfig:
    """Hyperparameters of the update-strategy learner."""

    gamma: float = 0.9            # reward decay
    alpha: float = 0.01           # SGD learning rate
    replace_step: int = 200       # target re-sync period C
    # Exploration must stay light: every explored action permanently edits a
    # live, already-calibrated model, so high epsilon degrades it measurably.
    epsilon_start: float = 0.1
    epsilon_end: float = 0.02
    epsilon_decay: float = 0.95   # multiplicative, per update step
    batch_size: int = 32
    capacity: int = 2000
    h1: int = 32
    h2: int = 32
    h3: int = 16
    head: str = "softmax"         # or "linear"

    def __post_init__(self):
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must lie in [0, 1)")
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if self.replace_step < 1:
            raise ValueError("replace_step must be >= 1")
        if self.head not in ("softmax", "linear"):
            raise ValueError(f"unknown head {self.head!r}")

    def epsilon_at(self, step: int) -> float:
        return max(self.epsilon_end, self.epsilon_start * self.epsilon_decay ** step)


PARAM_NAMES = ("Wx", "Wh", "b1", "W2", "b2", "W3", "b3", "W4", "b4")


def _softmax(o: np.ndarray) -> np.ndarray:
    shifted = o - o.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


class QNetwork:
    """Recurrent-plus-dense Q-value approximator with online and target params."""

    def __init__(self, input_dim: int, h1: int = 32, h2: int = 32, h3: int = 16,
                 head: str = "softmax", init: str = "zeros",
                 rng: np.random.Generator | None = None):
        self.input_dim = input_dim
        self.h1, self.h2, self.h3 = h1, h2, h3
        self.head = head
        shapes = {
            "Wx": (input_dim, h1), "Wh": (h1, h1), "b1": (h1,),
            "W2": (h1, h2), "b2": (h2,),
            "W3": (h2, h3), "b3": (h3,),
            "W4": (h3, N_ACTIONS), "b4": (N_ACTIONS,),
        }
        if init == "zeros":
            self.theta = {k: np.zeros(s) for k, s in shapes.items()}
        elif init == "random":
            if rng is None:
                raise ValueError("random init requires an rng")
            self.theta = {k: rng.normal(0.0, 0.2, size=s) for k, s in shapes.items()}
        else:
            raise ValueError(f"unknown init {init!r}")
        self.theta_target = {k: v.copy() for k, v in self.theta.items()}

    # -- inference -----------------------------------------------------------

    def forward(self, states: np.ndarray, params: str = "online") -> np.ndarray:
        """Q-values for a batch of state matrices, shape (B, T, D) -> (B, 5)."""
        q, _ = self._forward_cached(np.asarray(states, dtype=float), params)
        return q

    def _params(self, which: str) -> dict:
        if which == "online":
            return self.theta
        if which == "target":
            return self.theta_target
        raise ValueError(f"unknown parameter set {which!r}")

    def _forward_cached(self, states: np.ndarray, params: str = "online"):
        if states.ndim == 2:
            states = states[None, :, :]
        if states.shape[2] != self.input_dim:
            raise ValueError(
                f"state rows have width {states.shape[2]}, network expects {self.input_dim}"
            )
        p = self._params(params)
        batch, steps, _ = states.shape
        hs = np.zeros((steps + 1, batch, self.h1))
        for t in range(steps):
            hs[t + 1] = np.tanh(states[:, t, :] @ p["Wx"] + hs[t] @ p["Wh"] + p["b1"])
        pre2 = hs[steps] @ p["W2"] + p["b2"]
        z2 = np.maximum(pre2, 0.0)
        pre3 = z2 @ p["W3"] + p["b3"]
        z3 = np.maximum(pre3, 0.0)
        o = z3 @ p["W4"] + p["b4"]
        q = _softmax(o) if self.head == "softmax" else o
        cache = {"states": states, "hs": hs, "pre2": pre2, "z2": z2,
                 "pre3": pre3, "z3": z3, "o": o, "q": q}
        return q, cache

    # -- training ------------------------------------------------------------

    def loss_and_grads(self, states: np.ndarray, actions: np.ndarray,
                       targets: np.ndarray):
        """Mean squared Bellman error at the taken actions, plus gradients.

        Targets are treated as constants; gradients flow only through the
        online Q-values.
        """
        q, cache = self._forward_cached(states, "online")
        batch = q.shape[0]
        rows = np.arange(batch)
        taken = q[rows, actions]
        residual = targets - taken
        loss = float(np.mean(residual ** 2))

        dq = np.zeros_like(q)
        dq[rows, actions] = -2.0 * residual / batch
        if self.head == "softmax":
            inner = (dq * cache["q"]).sum(axis=1, keepdims=True)
            do = cache["q"] * (dq - inner)
        else:
            do = dq

        p = self.theta
        grads = {}
        grads["W4"] = cache["z3"].T @ do
        grads["b4"] = do.sum(axis=0)
        dz3 = do @ p["W4"].T
        dpre3 = dz3 * (cache["pre3"] > 0.0)
        grads["W3"] = cache["z2"].T @ dpre3
        grads["b3"] = dpre3.sum(axis=0)
        dz2 = dpre3 @ p["W3"].T
        dpre2 = dz2 * (cache["pre2"] > 0.0)
        grads["W2"] = cache["hs"][-1].T @ dpre2
        grads["b2"] = dpre2.sum(axis=0)

        dh = dpre2 @ p["W2"].T
        states_arr = cache["states"]
        hs = cache["hs"]
        grads["Wx"] = np.zeros_like(p["Wx"])
        grads["Wh"] = np.zeros_like(p["Wh"])
        grads["b1"] = np.zeros_like(p["b1"])
        for t in range(states_arr.shape[1] - 1, -1, -1):
            dpre = dh * (1.0 - hs[t + 1] ** 2)
            grads["Wx"] += states_arr[:, t, :].T @ dpre
            grads["Wh"] += hs[t].T @ dpre
            grads["b1"] += dpre.sum(axis=0)
            dh = dpre @ p["Wh"].T
        return loss, grads

    def bellman_targets(self, batch: list[Transition], gamma: float) -> np.ndarray:
        """Vectorized Bellman targets for a batch (one target-network pass)."""
        rewards = np.array([t.r for t in batch])
        nonterminal = [i for i, t in enumerate(batch) if not t.terminal]
        targets = rewards.copy()
        if nonterminal:
            nxt = np.stack([batch[i].s_next for i in nonterminal])
            q_next = self.forward(nxt, params="target")
            targets[nonterminal] += gamma * q_next.max(axis=1)
        return targets

    def sgd_step(self, batch: list[Transition], gamma: float, alpha: float) -> float:
        """One descent step on a replay minibatch; returns the pre-update loss."""
        if not batch:
            raise ValueError("sgd_step requires a non-empty batch")
        states = np.stack([t.s for t in batch])
        actions = np.array([t.a for t in batch], dtype=int)
        targets = self.bellman_targets(batch, gamma)
        loss, grads = self.loss_and_grads(states, actions, targets)
        if not np.isfinite(loss):
            raise TrainingError(
                f"non-finite loss {loss}; targets={targets!r} actions={actions!r}"
            )
        for name, g in grads.items():
            self.theta[name] -= alpha * g
        return loss

    def bellman_target(self, t: Transition, gamma: float) -> float:
        """r for terminal transitions, else r + gamma * max target-Q(s')."""
        if t.terminal:
            return t.r
        q_next = self.forward(t.s_next[None, :, :], params="target")[0]
        return t.r + gamma * float(q_next.max())

    def sync_target(self) -> None:
        """Copy online parameters over the frozen target set."""
        self.theta_target = {k: v.copy() for k, v in self.theta.items()}

    # -- persistence ----------------------------------------------------------

    def state(self) -> dict:
        return {
            "input_dim": self.input_dim,
            "h1": self.h1, "h2": self.h2, "h3": self.h3,
            "head": self.head,
            "theta": {k: v.tolist() for k, v in self.theta.items()},
            "theta_target": {k: v.tolist() for k, v in self.theta_target.items()},
        }

    @classmethod
    def from_state(cls, d: dict) -> "QNetwork":
        net = cls(int(d["input_dim"]), int(d["h1"]), int(d["h2"]), int(d["h3"]),
                  head=d["head"], init="zeros")
        net.theta = {k: np.asarray(v, dtype=float) for k, v in d["theta"].items()}
        net.theta_target = {k: np.asarray(v, dtype=float)
                            for k, v in d["theta_target"].items()}
        return net


def select_action(net: QNetwork, state: np.ndarray, epsilon: float,
                  rng: np.random.Generator) -> int:
    """Epsilon-greedy over the five ordinals; argmax ties go to the lowest."""
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError("epsilon must lie in [0, 1]")
    if epsilon > 0.0 and rng.random() < epsilon:
        return int(rng.integers(0, N_ACTIONS))
    q = net.forward(state[None, :, :])[0]
    return int(np.argmax(q))


def select_actions_batch(net: QNetwork, states: np.ndarray, epsilon: float,
                         rng: np.random.Generator) -> list[int]:
    """Epsilon-greedy for many states with a single greedy forward pass.

    Consumes the rng in the same per-state order as repeated select_action
    calls: one coin per state, one integer draw per exploring state.
    """
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError("epsilon must lie in [0, 1]")
    greedy = np.argmax(net.forward(states), axis=1)
    chosen = []
    for i in range(states.shape[0]):
        if epsilon > 0.0 and rng.random() < epsilon:
            chosen.append(int(rng.integers(0, N_ACTIONS)))
        else:
            chosen.append(int(greedy[i]))
    return chosen
