import json

import numpy as np
import pytest

from rltir.persist import (MODEL_SCHEMA, SchemaError, load_registry,
                           save_registry, user_from_doc, user_to_doc)
from rltir.pipeline import UserRegistry

from test_pipeline import ConstantOracle, enrolled_registry, small_config, two_cluster_rows


def test_user_document_schema_and_round_trip():
    registry, genuine, impostor = enrolled_registry(seed=4)
    user = registry.users["alice"]
    # push some stream state through before checkpointing
    for x in genuine[30:34]:
        registry.identify("alice", x, ConstantOracle(0))

    doc = user_to_doc(user)
    assert doc["schema"] == MODEL_SCHEMA
    restored = user_from_doc(json.loads(json.dumps(doc)))

    assert restored.classifier.threshold_y == user.classifier.threshold_y
    assert restored.step_counter == user.step_counter
    for t1, t2 in zip(user.classifier.trees, restored.classifier.trees):
        assert np.array_equal(t1.mass, t2.mass)
        assert np.array_equal(t1.node_type, t2.node_type)
        assert t1.welford.state() == t2.welford.state()
    for name in user.qnet.theta:
        assert np.array_equal(user.qnet.theta[name], restored.qnet.theta[name])
        assert np.array_equal(user.qnet.theta_target[name],
                              restored.qnet.theta_target[name])


def test_restored_user_scores_bit_identically():
    registry, genuine, impostor = enrolled_registry(seed=6)
    user = registry.users["alice"]
    doc = user_to_doc(user)
    restored = user_from_doc(doc)
    for x in np.vstack([genuine[30:35], impostor[10:15]]):
        y1, _ = user.classifier.peek_negative_probability(x)
        y2, _ = restored.classifier.peek_negative_probability(x)
        assert y1 == y2


def test_restored_rng_continues_identically():
    registry, genuine, _ = enrolled_registry(seed=8)
    user = registry.users["alice"]
    doc = user_to_doc(user)
    restored = user_from_doc(doc)
    assert [user.rng.random() for _ in range(5)] == \
        [restored.rng.random() for _ in range(5)]


def test_registry_save_load(tmp_path):
    genuine, impostor = two_cluster_rows()
    registry = UserRegistry(small_config(), seed=12)
    registry.enroll("alice", genuine[:30], impostor[:10])
    registry.enroll("bob", impostor[:30], genuine[:10])
    path = tmp_path / "model.json"
    save_registry(registry, str(path))

    loaded = load_registry(str(path))
    assert set(loaded.users) == {"alice", "bob"}
    assert loaded.seed == 12
    y1, _ = registry.users["bob"].classifier.peek_negative_probability(genuine[5])
    y2, _ = loaded.users["bob"].classifier.peek_negative_probability(genuine[5])
    assert y1 == y2


def test_schema_tag_enforced(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"schema": "something-else/9", "users": {}}))
    with pytest.raises(SchemaError):
        load_registry(str(path))
    with pytest.raises(SchemaError):
        user_from_doc({"schema": "nope"})
