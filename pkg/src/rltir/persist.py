"""Versioned JSON checkpoints for enrolled users and whole registries.

Schema tag "rltir-model/1". A checkpoint carries the full classifier
(trees, running statistics, threshold, normalizer), both Q-network
parameter sets, the update-step counter that gates target re-syncs, and
the user's generator state, so a resumed run scores bit-identically and
re-syncs its target network on the original schedule. Replay memory is
ephemeral and restarts empty.
"""

from __future__ import annotations

import json

import numpy as np

from .data import MinMaxNormalizer
from .forest import Classifier, SpaceTree
from .pipeline import EnrolledUser, PipelineConfig, RewardSpec, UserRegistry
from .qnet import QNetwork, ReplayMemory, TrainerConfig

MODEL_SCHEMA = "rltir-model/1"


class SchemaError(ValueError):
    """Document does not carry the expected schema tag."""


def user_to_doc(user: EnrolledUser) -> dict:
    classifier = user.classifier
    return {
        "schema": MODEL_SCHEMA,
        "user_id": user.user_id,
        "config": user.config.as_dict(),
        "threshold_y": classifier.threshold_y,
        "normalizer": classifier.normalizer.state() if classifier.normalizer else None,
        "trees": [tree.state() for tree in classifier.trees],
        "qnet": user.qnet.state(),
        "step_counter": user.step_counter,
        "instance_seq": user.instance_seq,
        "rng_state": _jsonable_rng_state(user.rng),
    }


def _jsonable_rng_state(rng: np.random.Generator) -> dict:
    state = rng.bit_generator.state
    return json.loads(json.dumps(state, default=int))


def _config_from_doc(doc: dict) -> PipelineConfig:
    cfg = dict(doc)
    trainer = TrainerConfig(**cfg.pop("trainer"))
    reward = RewardSpec(sigma=cfg.pop("sigma"))
    return PipelineConfig(trainer=trainer, reward=reward, **cfg)


def user_from_doc(doc: dict) -> EnrolledUser:
    if doc.get("schema") != MODEL_SCHEMA:
        raise SchemaError(f"expected schema {MODEL_SCHEMA!r}, got {doc.get('schema')!r}")
    config = _config_from_doc(doc["config"])
    trees = [SpaceTree.from_state(t) for t in doc["trees"]]
    classifier = Classifier(
        user_id=doc["user_id"],
        trees=trees,
        threshold_y=doc["threshold_y"],
        phi=config.phi,
        rho=config.rho,
        normalizer=MinMaxNormalizer.from_state(doc["normalizer"])
        if doc["normalizer"] else None,
    )
    rng = np.random.default_rng(0)
    rng.bit_generator.state = doc["rng_state"]
    return EnrolledUser(
        user_id=doc["user_id"],
        classifier=classifier,
        qnet=QNetwork.from_state(doc["qnet"]),
        memory=ReplayMemory(config.trainer.capacity),
        config=config,
        rng=rng,
        step_counter=int(doc["step_counter"]),
        instance_seq=int(doc["instance_seq"]),
    )


def save_registry(registry: UserRegistry, path: str) -> None:
    doc = {
        "schema": MODEL_SCHEMA,
        "seed": registry.seed,
        "config": registry.config.as_dict(),
        "users": {uid: user_to_doc(u) for uid, u in registry.users.items()},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True)


def load_registry(path: str, audit_sink=None) -> UserRegistry:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("schema") != MODEL_SCHEMA:
        raise SchemaError(f"expected schema {MODEL_SCHEMA!r}, got {doc.get('schema')!r}")
    registry = UserRegistry(_config_from_doc(doc["config"]), seed=doc["seed"],
                            audit_sink=audit_sink)
    for uid, user_doc in doc["users"].items():
        registry.users[uid] = user_from_doc(user_doc)
    return registry
