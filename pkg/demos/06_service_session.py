"""Drive the HTTP service end to end, playing the expert ourselves.

Starts the /v1 API in-process (interactive mode, low gate), streams a few
instances, answers the pending queue with Yes/No exactly as the console
would, and reads the audit log and metrics back.
"""

import numpy as np
from fastapi.testclient import TestClient

from rltir.bench import BenchConfig
from rltir.pipeline import PipelineConfig, UserRegistry
from rltir.qnet import TrainerConfig
from rltir.service import build_service

rng = np.random.default_rng(2)
genuine = rng.normal(0.3, 0.04, size=(50, 6))
impostor = rng.normal(0.7, 0.04, size=(25, 6))

pipeline = PipelineConfig(trees=6, max_depth=5, terminal_depth=2, gate=0.2,
                          trainer=TrainerConfig(batch_size=8))
registry = UserRegistry(pipeline, seed=3)
registry.enroll("alice", genuine[:35], impostor[:10])

app = build_service(BenchConfig(mode="rltir-interactive", pipeline=pipeline),
                    feedback_timeout=30.0, registry=registry)

with TestClient(app) as client:
    stream = [(genuine[i], "genuine") for i in range(35, 42)] + \
             [(impostor[i], "impostor") for i in range(10, 17)]
    for x, truth in stream:
        r = client.post("/v1/identify", json={
            "claimed_user": "alice", "features": [float(v) for v in x]}).json()
        print(f"identify -> y={r['y']:.3f} verdict={r['verdict']:<8} "
              f"feedback_requested={r['feedback_requested']} (truth: {truth})")

        for item in client.get("/v1/feedback/pending").json():
            # the expert clicks Yes when the shown verdict matches the truth
            correct = item["verdict_before"] == truth
            resolved = client.post(f"/v1/feedback/{item['event_id']}",
                                   json={"correct": correct}).json()
            print(f"  expert clicked {'Yes' if correct else 'No':<3} "
                  f"on {item['event_id']} -> f={resolved['f']}")

    metrics = client.get("/v1/metrics").json()
    outcomes = client.get("/v1/outcomes").json()["outcomes"]

print(f"\nprocessed {metrics['n_instances']} instances, "
      f"{metrics['resolved_feedback']} expert answers")
print(f"last audit record keys: {sorted(outcomes[-1])}")
