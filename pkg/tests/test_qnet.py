import numpy as np
import pytest
from scipy.stats import chi2

from rltir.qnet import (N_ACTIONS, QNetwork, ReplayMemory, TrainerConfig,
                        Transition, sample_minibatch, select_action)

STATE_SHAPE = (6, 8)


def random_net(seed, head="softmax", h=(5, 4, 3)):
    rng = np.random.default_rng(seed)
    return QNetwork(input_dim=STATE_SHAPE[1], h1=h[0], h2=h[1], h3=h[2],
                    head=head, init="random", rng=rng), rng


def random_states(rng, n):
    return rng.normal(0.0, 1.0, size=(n, *STATE_SHAPE))


def fd_gradient(net, states, actions, targets, name, step=1e-5):
    """Central finite differences of the loss in every coordinate of one
    parameter array; the independent check for the analytic gradients."""
    param = net.theta[name]
    grad = np.zeros_like(param)
    it = np.nditer(param, flags=["multi_index"])
    while not it.finished:
        idx = it.multi_index
        original = param[idx]
        param[idx] = original + step
        up, _ = net.loss_and_grads(states, actions, targets)
        param[idx] = original - step
        down, _ = net.loss_and_grads(states, actions, targets)
        param[idx] = original
        grad[idx] = (up - down) / (2 * step)
        it.iternext()
    return grad


def make_transition(rng, terminal=False):
    return Transition(s=rng.normal(size=STATE_SHAPE), a=int(rng.integers(0, 5)),
                      r=float(rng.uniform(-1, 1)),
                      s_next=rng.normal(size=STATE_SHAPE), terminal=terminal)


# ---------------------------------------------------------------------------
# forward contracts


def test_zero_weights_softmax_gives_uniform_q():
    net = QNetwork(input_dim=8, head="softmax", init="zeros")
    q = net.forward(np.zeros((1, *STATE_SHAPE)))
    assert np.allclose(q, 0.2)
    assert q.sum() == pytest.approx(1.0, abs=1e-9)


def test_zero_weights_linear_gives_zero_q():
    net = QNetwork(input_dim=8, head="linear", init="zeros")
    q = net.forward(np.zeros((1, *STATE_SHAPE)))
    assert np.allclose(q, 0.0)


def test_softmax_rows_sum_to_one_on_random_input():
    net, rng = random_net(3)
    q = net.forward(random_states(rng, 7))
    assert np.allclose(q.sum(axis=1), 1.0, atol=1e-9)


def test_tail_zero_row_permutation_is_identity():
    net, rng = random_net(4)
    s = random_states(rng, 1)[0]
    s[4:, :] = 0.0  # zero tail padding
    permuted = s.copy()
    permuted[[4, 5]] = permuted[[5, 4]]
    assert np.array_equal(net.forward(s[None]), net.forward(permuted[None]))


def test_forward_rejects_wrong_width():
    net, _ = random_net(5)
    with pytest.raises(ValueError):
        net.forward(np.zeros((1, 6, 5)))


# ---------------------------------------------------------------------------
# gradients vs central finite differences


@pytest.mark.parametrize("head", ["softmax", "linear"])
@pytest.mark.parametrize("seed", [11, 29, 47])
def test_analytic_gradients_match_finite_differences(head, seed):
    net, rng = random_net(seed, head=head)
    states = random_states(rng, 4)
    actions = rng.integers(0, N_ACTIONS, size=4)
    targets = rng.uniform(-1, 1, size=4)
    _, grads = net.loss_and_grads(states, actions, targets)
    for name in grads:
        numeric = fd_gradient(net, states, actions, targets, name)
        scale = np.maximum(np.abs(numeric), 1e-7 / 1e-4)
        rel = np.abs(grads[name] - numeric) / scale
        assert rel.max() < 1e-4, f"{name}: max rel err {rel.max():.2e}"


def test_zero_residual_batch_has_zero_gradient_and_loss():
    net, rng = random_net(8)
    states = random_states(rng, 3)
    actions = np.array([0, 2, 4])
    q = net.forward(states)
    targets = q[np.arange(3), actions]  # targets already equal Q-values
    loss, grads = net.loss_and_grads(states, actions, targets)
    assert loss == 0.0
    assert all(np.allclose(g, 0.0) for g in grads.values())
    # terminal transitions whose rewards equal the current Q-values
    # (softmax keeps them inside [-1, 1]) leave the parameters untouched
    before = {k: v.copy() for k, v in net.theta.items()}
    batch = [Transition(s=states[i], a=int(actions[i]), r=float(targets[i]),
                        s_next=states[i], terminal=True) for i in range(3)]
    assert net.sgd_step(batch, gamma=0.9, alpha=0.05) == 0.0
    assert all(np.array_equal(before[k], net.theta[k]) for k in before)


def test_repeated_steps_on_fixed_batch_do_not_increase_loss():
    net, rng = random_net(13)
    batch = [make_transition(rng, terminal=True) for _ in range(6)]
    losses = [net.sgd_step(batch, gamma=0.9, alpha=1e-3) for _ in range(50)]
    diffs = np.diff(losses)
    assert np.all(diffs <= 1e-12)


# ---------------------------------------------------------------------------
# Bellman targets and the target network


def test_bellman_terminal_returns_reward():
    net, rng = random_net(17)
    t = make_transition(rng, terminal=True)
    t.r = 1.0
    assert net.bellman_target(t, gamma=0.9) == 1.0


def test_bellman_nonterminal_adds_discounted_max():
    net, rng = random_net(19, head="linear")
    t = make_transition(rng)
    q_next = net.forward(t.s_next[None], params="target")[0]
    expected = t.r + 0.9 * q_next.max()
    assert net.bellman_target(t, gamma=0.9) == pytest.approx(expected)
    assert net.bellman_target(t, gamma=0.0) == pytest.approx(t.r)


def test_bellman_uses_target_parameters():
    net, rng = random_net(23, head="linear")
    t = make_transition(rng)
    before = net.bellman_target(t, gamma=0.9)
    # training moves theta but must not move the target estimate
    for _ in range(5):
        net.sgd_step([make_transition(rng) for _ in range(4)], gamma=0.9, alpha=0.05)
    assert net.bellman_target(t, gamma=0.9) == before


def test_target_freeze_and_sync():
    net, rng = random_net(31)
    s = random_states(rng, 2)
    frozen = net.forward(s, params="target").copy()
    for _ in range(10):
        net.sgd_step([make_transition(rng) for _ in range(4)], gamma=0.9, alpha=0.02)
        assert np.array_equal(net.forward(s, params="target"), frozen)
    net.sync_target()
    assert np.array_equal(net.forward(s, params="target"), net.forward(s))
    again = net.forward(s, params="target").copy()
    net.sync_target()  # idempotent
    assert np.array_equal(net.forward(s, params="target"), again)


# ---------------------------------------------------------------------------
# action selection


def test_greedy_action_argmax_and_tie_break():
    class StubNet:
        def __init__(self, q):
            self.q = np.asarray(q, dtype=float)

        def forward(self, s, params="online"):
            return self.q[None, :]

    rng = np.random.default_rng(0)
    assert select_action(StubNet([0.1, 0.9, 0.3, 0.2, 0.2]), np.zeros(STATE_SHAPE), 0.0, rng) == 1
    assert select_action(StubNet([0.2] * 5), np.zeros(STATE_SHAPE), 0.0, rng) == 0


def test_full_exploration_is_uniform():
    net, _ = random_net(37)
    rng = np.random.default_rng(99)
    draws = [select_action(net, np.zeros(STATE_SHAPE), 1.0, rng) for _ in range(10_000)]
    counts = np.bincount(draws, minlength=5)
    freqs = counts / 10_000
    assert np.all(freqs >= 0.17) and np.all(freqs <= 0.23)
    chi_stat = float(((counts - 2000.0) ** 2 / 2000.0).sum())
    assert chi_stat < chi2.ppf(0.99, df=4)


def test_epsilon_schedule_never_increases():
    cfg = TrainerConfig()
    eps = [cfg.epsilon_at(step) for step in range(0, 5000, 7)]
    assert all(a >= b for a, b in zip(eps, eps[1:]))
    assert eps[0] == cfg.epsilon_start
    assert eps[-1] == cfg.epsilon_end


# ---------------------------------------------------------------------------
# replay memory


def test_replay_fifo_eviction():
    mem = ReplayMemory(capacity=5)
    rng = np.random.default_rng(1)
    items = [make_transition(rng) for _ in range(8)]
    for t in items:
        mem.push(t)
    assert len(mem) == 5
    assert mem.snapshot() == items[3:]  # exactly the last `capacity`, in order


def test_sample_from_singleton_memory_repeats_it():
    mem = ReplayMemory(capacity=4)
    rng = np.random.default_rng(2)
    t = make_transition(rng)
    mem.push(t)
    batch = sample_minibatch(mem, 3, rng)
    assert batch == [t, t, t]


def test_sample_without_replacement_is_permutation_at_full_batch():
    mem = ReplayMemory(capacity=10)
    rng = np.random.default_rng(3)
    items = [make_transition(rng) for _ in range(10)]
    for t in items:
        mem.push(t)
    batch = sample_minibatch(mem, 10, rng)
    assert sorted(map(id, batch)) == sorted(map(id, items))


def test_sample_empty_memory_signals_skip():
    assert sample_minibatch(ReplayMemory(4), 2, np.random.default_rng(0)) is None


def test_sampling_is_uniform_over_memory():
    mem = ReplayMemory(capacity=1000)
    rng = np.random.default_rng(7)
    for _ in range(1000):
        mem.push(make_transition(rng))
    items = mem.snapshot()
    index_of = {id(t): i for i, t in enumerate(items)}
    counts = np.zeros(1000)
    for _ in range(100_000):
        (pick,) = sample_minibatch(mem, 1, rng)
        counts[index_of[id(pick)]] += 1
    # each item expected 100 times; frequency within +/-30% of uniform
    assert counts.min() >= 70
    assert counts.max() <= 130
    chi_stat = float(((counts - 100.0) ** 2 / 100.0).sum())
    assert chi_stat < chi2.ppf(0.999, df=999)


# ---------------------------------------------------------------------------
# determinism and validation


def test_training_trajectory_deterministic_under_seed():
    def run():
        net, rng = random_net(101)
        batches = [[make_transition(rng) for _ in range(4)] for _ in range(20)]
        return [net.sgd_step(b, gamma=0.9, alpha=0.01) for b in batches]

    assert run() == run()


def test_transition_validates_reward_range():
    rng = np.random.default_rng(0)
    with pytest.raises(ValueError):
        Transition(s=np.zeros(STATE_SHAPE), a=0, r=1.5,
                   s_next=np.zeros(STATE_SHAPE))


def test_trainer_config_validation():
    with pytest.raises(ValueError):
        TrainerConfig(gamma=1.0)
    with pytest.raises(ValueError):
        TrainerConfig(alpha=0.0)
    with pytest.raises(ValueError):
        TrainerConfig(replace_step=0)
    with pytest.raises(ValueError):
        TrainerConfig(head="gelu")
