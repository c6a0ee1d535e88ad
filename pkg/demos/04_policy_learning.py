"""Train the update-strategy Q-network on replayed transitions.

Shows the full DQN cycle in isolation: replay memory filling up,
epsilon-greedy selection, Bellman targets against the frozen target
parameters, descending loss under repeated minibatch steps, and the
target re-sync that follows every C updates.
"""

import numpy as np

from rltir.qnet import (QNetwork, ReplayMemory, TrainerConfig, Transition,
                        sample_minibatch, select_action)

rng = np.random.default_rng(11)
cfg = TrainerConfig(replace_step=25, batch_size=16, epsilon_start=0.5,
                    epsilon_decay=0.9)

net = QNetwork(input_dim=8, h1=16, h2=16, h3=8, head="softmax",
               init="random", rng=rng)
memory = ReplayMemory(capacity=500)

# Synthetic transitions: pretend action 1 is reliably rewarded so the
# greedy policy has something to discover.
for _ in range(300):
    s = rng.normal(size=(8, 8))
    a = int(rng.integers(0, 5))
    r = 1.0 if a == 1 else -0.2
    memory.push(Transition(s=s, a=a, r=r, s_next=rng.normal(size=(8, 8)),
                           terminal=bool(rng.random() < 0.1)))

losses = []
for step in range(1, 201):
    batch = sample_minibatch(memory, cfg.batch_size, rng)
    losses.append(net.sgd_step(batch, gamma=cfg.gamma, alpha=0.05))
    if step % cfg.replace_step == 0:
        net.sync_target()

print("loss head:", " ".join(f"{v:.4f}" for v in losses[:5]))
print("loss tail:", " ".join(f"{v:.4f}" for v in losses[-5:]))

probe = rng.normal(size=(8, 8))
q = net.forward(probe[None])[0]
print("Q(probe)  :", np.array_str(q, precision=3))
print("greedy    :", select_action(net, probe, epsilon=0.0, rng=rng))
print("exploring :", [select_action(net, probe, epsilon=1.0, rng=rng)
                      for _ in range(10)])
print(f"epsilon schedule: "
      f"{[round(cfg.epsilon_at(s), 3) for s in (0, 10, 30, 100)]}")
