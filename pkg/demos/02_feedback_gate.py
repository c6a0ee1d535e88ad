"""Watch the uncertainty gate decide when the expert should be asked.

Uncertainty compares each tree's reported negative probability with the
empirical share of negative feedback at the instance's terminal node; a
node with no history is maximally uncertain, which is exactly what forces
the first few requests.
"""

import numpy as np

from rltir.feedback import (FEEDBACK_NEGATIVE, FEEDBACK_POSITIVE, SOURCE_HUMAN,
                            FeedbackEvent, instance_uncertainty,
                            record_feedback, should_request_feedback)
from rltir.forest import Classifier, build_workspace, calibrate_threshold, grow_tree

rng = np.random.default_rng(1)
genuine = rng.normal(0.35, 0.05, size=(60, 4))
impostor = rng.normal(0.7, 0.05, size=(25, 4))

trees = []
for seed in range(5):
    tree_rng = np.random.default_rng(100 + seed)
    ws = build_workspace(np.clip(genuine, 0, 1), dim=4, rng=tree_rng)
    trees.append(grow_tree(ws, max_depth=5, min_depth=1, terminal_depth=2,
                           rng=tree_rng))
clf = Classifier(user_id="u", trees=trees)
clf.ingest_training_batch(genuine[:40])
calibrate_threshold(clf, [(clf.negative_probability(r, streaming=False)[0], 0)
                          for r in genuine[40:]] +
                         [(clf.negative_probability(r, streaming=False)[0], 1)
                          for r in impostor[:10]])

GATE = 0.35
print(f"gate threshold = {GATE}\n")
for step, row in enumerate(np.vstack([genuine[45:50], impostor[10:15]])):
    y, per_tree = clf.negative_probability(row, streaming=True)
    U = instance_uncertainty(per_tree)
    ask = should_request_feedback(U, GATE)
    truth = "genuine" if step < 5 else "impostor"
    print(f"instance {step:>2} ({truth:>8}): y={y:.3f} U={U:.3f} "
          f"-> {'REQUEST FEEDBACK' if ask else 'accept verdict'}")
    if ask:
        event = FeedbackEvent(instance_id=f"i{step}", claimed_user="u", x=row,
                              y=y, U=U, verdict_before=clf.decide(y))
        f = FEEDBACK_POSITIVE if truth == "genuine" else FEEDBACK_NEGATIVE
        event.resolve(f, SOURCE_HUMAN)
        record_feedback(clf, event, [node for node, _ in per_tree])

# Counters accumulated at the terminal nodes pull uncertainty down for
# instances routed to the same regions.
y, per_tree = clf.negative_probability(genuine[51], streaming=True)
print(f"\nafter feedback, a fresh genuine instance: U={instance_uncertainty(per_tree):.3f}")
print("terminal counters of tree 0:",
      [(int(n.p), int(n.n)) for n, _ in per_tree][:1])
