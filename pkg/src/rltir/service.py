"""HTTP/JSON facade for interactive runs.

POST /v1/identify scores an instance synchronously; when the uncertainty
gate fires in interactive mode the instance joins a FIFO pending queue
that the expert console reads (long-poll) and resolves with Yes/No
clicks. A Yes confirms the verdict shown, a No refutes it; the resolved
feedback value is derived from the verdict the expert saw. Resolution
(or expiry as a timeout-skip) completes that instance's update step and
appends its outcome to the audit log endpoint.
"""

from __future__ import annotations

import asyncio
import itertools
import json
import time
from contextlib import asynccontextmanager
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone

import numpy as np
from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from . import feedback as fb
from .bench import BenchConfig, load_instances
from .data import make_split
from .forest import TreeNode
from .pipeline import (IdentificationOutcome, UserRegistry,
                       complete_with_feedback, score_and_gate)

LONG_POLL_CAP_S = 25.0


class ServiceError(Exception):
    def __init__(self, status: int, code: str, message: str):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message


class IdentifyBody(BaseModel):
    claimed_user: str
    features: list[float]
    true_label: int | None = None  # oracle mode benchmarks only


class ResolveBody(BaseModel):
    correct: bool


@dataclass
class PendingRecord:
    event_id: str
    event: fb.FeedbackEvent
    user_id: str
    ctx: dict
    outcome: IdentificationOutcome
    expires_at: datetime
    label: int | None = None  # driver-provided truth, metrics only
    resolved: bool = False

    def to_json(self, dim: int) -> dict:
        return {
            "event_id": self.event_id,
            "claimed_user": self.user_id,
            "y": self.event.y,
            "U": self.event.U,
            "verdict_before": self.event.verdict_before,
            "feature_summary": self.ctx["x_prepared"][:8].tolist(),
            "dimension": dim,
            "requested_at": fb.rfc3339(self.event.requested_at),
            "expires_at": fb.rfc3339(self.expires_at),
        }


class ServiceState:
    """Registry plus the pending-feedback queue and live counters."""

    def __init__(self, registry: UserRegistry, mode: str,
                 feedback_timeout: float, audit_path: str | None = None):
        self.registry = registry
        self.mode = mode
        self.feedback_timeout = feedback_timeout
        self.pending: dict[str, PendingRecord] = {}  # insertion order = FIFO
        self.terminal_resolutions: dict[str, str] = {}  # event_id -> source
        self.outcomes: list[dict] = []
        self.records: list = []  # (y, verdict, label_or_None, fed_back)
        self.resolved_feedback = 0
        self.event_seq = itertools.count(1)
        self.lock = asyncio.Lock()
        self.changed = asyncio.Condition()
        self.audit_path = audit_path

    # -- bookkeeping ---------------------------------------------------------

    def _audit(self, outcome: IdentificationOutcome, label: int | None) -> None:
        doc = json.loads(outcome.to_json_line())
        self.outcomes.append(doc)
        if outcome.feedback is not None and outcome.feedback.f is not None:
            self.resolved_feedback += 1
        self.records.append((outcome.y_final(), outcome.verdict_final, label,
                             outcome.feedback is not None
                             and outcome.feedback.f is not None))
        if self.audit_path:
            with open(self.audit_path, "a", encoding="utf-8") as fh:
                fh.write(outcome.to_json_line() + "\n")

    def _refresh_ctx(self, user, ctx: dict) -> dict:
        """Re-anchor a stored context on the model's current frontier.

        Between a feedback request and its resolution other instances may
        have moved terminals, so paths and terminal nodes are recomputed
        for the instance; scores and statistics stay as requested.
        """
        paths = [tree._walk(ctx["x_prepared"]) for tree in user.classifier.trees]
        per_tree = [(TreeNode(tree, path[-1]), y_i) for (tree, path), (_, y_i)
                    in zip(zip(user.classifier.trees, paths), ctx["per_tree"])]
        out = dict(ctx)
        out["paths"] = paths
        out["per_tree"] = per_tree
        return out

    def _complete(self, record: PendingRecord, f: int | None, source: str,
                  label: int | None = None) -> None:
        record.event.resolve(f, source)
        record.resolved = True
        self.terminal_resolutions[record.event_id] = source
        user = self.registry.users[record.user_id]
        record.outcome.feedback = record.event
        if f is None:
            self._audit(record.outcome, label)
            return
        ctx = self._refresh_ctx(user, record.ctx)
        complete_with_feedback(user, ctx, record.event, record.outcome)
        self._audit(record.outcome, label)

    def sweep_expired(self) -> None:
        now = datetime.now(timezone.utc)
        for event_id in [k for k, r in self.pending.items() if r.expires_at <= now]:
            record = self.pending.pop(event_id)
            self._complete(record, None, fb.SOURCE_TIMEOUT, label=record.label)

    # -- request handlers ------------------------------------------------------

    def identify(self, body: IdentifyBody) -> dict:
        user = self.registry.users.get(body.claimed_user)
        if user is None:
            raise ServiceError(404, "unknown_user",
                               f"no enrolled user {body.claimed_user!r}")
        if len(body.features) != user.classifier.dim:
            raise ServiceError(422, "bad_dimension",
                               f"expected {user.classifier.dim} features, "
                               f"got {len(body.features)}")
        x = np.asarray(body.features, dtype=float)
        ctx = score_and_gate(user, x)
        outcome = IdentificationOutcome(
            instance_id=user.next_instance_id(),
            claimed_user=user.user_id,
            y_before=ctx["y"],
            verdict_before=ctx["verdict"],
            verdict_final=ctx["verdict"],
        )
        gated = ctx["gated"] and self.mode != "nofeed"
        if not gated:
            self._audit(outcome, body.true_label)
            return {"instance_id": outcome.instance_id, "y": outcome.y_before,
                    "verdict": outcome.verdict_before, "feedback_requested": False}

        event = fb.FeedbackEvent(
            instance_id=outcome.instance_id,
            claimed_user=user.user_id,
            x=x,
            y=ctx["y"],
            U=ctx["U"],
            verdict_before=ctx["verdict"],
        )
        if self.mode == "rltir-oracle":
            # the oracle stands in for the expert, in-process and instantly
            if body.true_label not in (0, 1):
                raise ServiceError(422, "missing_truth",
                                   "oracle mode needs true_label in {0, 1}")
            record = PendingRecord(event_id=f"e{next(self.event_seq):06d}",
                                   event=event, user_id=user.user_id, ctx=ctx,
                                   outcome=outcome,
                                   expires_at=event.requested_at)
            self._complete(record, body.true_label, fb.SOURCE_ORACLE,
                           label=body.true_label)
        else:
            record = PendingRecord(
                event_id=f"e{next(self.event_seq):06d}",
                event=event, user_id=user.user_id, ctx=ctx, outcome=outcome,
                expires_at=event.requested_at + timedelta(seconds=self.feedback_timeout),
                label=body.true_label,
            )
            self.pending[record.event_id] = record
        return {"instance_id": outcome.instance_id, "y": outcome.y_before,
                "verdict": outcome.verdict_before, "feedback_requested": True}

    def resolve(self, event_id: str, correct: bool) -> dict:
        self.sweep_expired()
        record = self.pending.get(event_id)
        if record is None:
            source = self.terminal_resolutions.get(event_id)
            if source == fb.SOURCE_TIMEOUT:
                raise ServiceError(410, "expired", f"event {event_id} expired")
            if source is not None:
                raise ServiceError(409, "already_resolved",
                                   f"event {event_id} was already resolved")
            raise ServiceError(404, "unknown_event", f"no pending event {event_id}")
        if record.expires_at <= datetime.now(timezone.utc):
            self.pending.pop(event_id)
            self._complete(record, None, fb.SOURCE_TIMEOUT)
            raise ServiceError(410, "expired", f"event {event_id} expired")
        self.pending.pop(event_id)
        # Yes confirms the shown verdict; No refutes it. f encodes the
        # expert's category judgment: 0 genuine, 1 impostor.
        was_genuine = record.event.verdict_before == "genuine"
        f = (0 if was_genuine else 1) if correct else (1 if was_genuine else 0)
        self._complete(record, f, fb.SOURCE_HUMAN, label=record.label)
        return {"accepted": True, "event_id": event_id, "f": f}

    def pending_list(self) -> list[dict]:
        self.sweep_expired()
        return [r.to_json(self.registry.users[r.user_id].classifier.dim)
                for r in self.pending.values()]

    def metrics_snapshot(self) -> dict:
        from .metrics import UndefinedMetricError, confusion, roc_auc

        verdicts = [r[1] for r in self.records]
        labels = [r[2] for r in self.records if r[2] is not None]
        snapshot = {
            "schema": "rltir-report/1",
            "n_instances": len(self.records),
            "resolved_feedback": self.resolved_feedback,
            "pending": len(self.pending),
            "feedback_proportion": (self.resolved_feedback / len(self.records)
                                    if self.records else 0.0),
        }
        if labels and len(labels) == len(verdicts):
            block = confusion(verdicts, labels).as_dict()
            try:
                block["auc"] = roc_auc([r[0] for r in self.records], labels)
            except UndefinedMetricError:
                block["auc"] = None
            snapshot["aggregate"] = block
        else:
            snapshot["aggregate"] = confusion([], []).as_dict() | {"auc": None}
        return snapshot


def build_service(bench: BenchConfig, feedback_timeout: float = 60.0,
                  audit_path: str | None = None,
                  registry: UserRegistry | None = None) -> FastAPI:
    """Enroll users from the benchmark's split plan and serve the /v1 API."""
    if registry is None:
        from dataclasses import replace

        pipeline_cfg = bench.pipeline
        if bench.mode == "nofeed":
            pipeline_cfg = replace(pipeline_cfg, gate=1.0)
        instances = load_instances(bench)
        plan = make_split(instances, enrolled_fraction=bench.enrolled_fraction,
                          seed=bench.seed)
        registry = UserRegistry(pipeline_cfg, seed=bench.seed)
        for user_id in plan.enrolled_initially:
            split = plan.users[user_id]
            genuine = np.stack([i.features for i in split.train_genuine])
            impostor = (np.stack([i.features for i in split.train_impostor])
                        if split.train_impostor
                        else np.empty((0, genuine.shape[1])))
            registry.enroll(user_id, genuine, impostor)

    state = ServiceState(registry, bench.mode, feedback_timeout, audit_path)

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        sweeper = asyncio.create_task(_sweeper())
        yield
        sweeper.cancel()

    app = FastAPI(title="rltir service", version="1", lifespan=lifespan)
    app.state.service = state
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"],
        allow_headers=["*"],
    )

    @app.exception_handler(ServiceError)
    async def service_error_handler(request: Request, exc: ServiceError):
        return JSONResponse(status_code=exc.status,
                            content={"code": exc.code, "message": exc.message})

    @app.exception_handler(RequestValidationError)
    async def validation_handler(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=422,
                            content={"code": "validation_error",
                                     "message": str(exc.errors()[:1])})

    @app.post("/v1/identify")
    async def identify(body: IdentifyBody):
        async with state.lock:
            state.sweep_expired()
            response = state.identify(body)
        async with state.changed:
            state.changed.notify_all()
        return response

    @app.get("/v1/feedback/pending")
    async def pending(wait: float = 0.0):
        deadline = time.monotonic() + min(max(wait, 0.0), LONG_POLL_CAP_S)
        while True:
            async with state.lock:
                items = state.pending_list()
            if items or time.monotonic() >= deadline:
                return items
            async with state.changed:
                try:
                    await asyncio.wait_for(
                        state.changed.wait(),
                        timeout=max(0.05, deadline - time.monotonic()))
                except asyncio.TimeoutError:
                    pass

    @app.post("/v1/feedback/{event_id}")
    async def resolve(event_id: str, body: ResolveBody):
        async with state.lock:
            response = state.resolve(event_id, body.correct)
        async with state.changed:
            state.changed.notify_all()
        return response

    @app.get("/v1/metrics")
    async def metrics():
        async with state.lock:
            return state.metrics_snapshot()

    @app.get("/v1/users")
    async def users():
        async with state.lock:
            return [{"user_id": uid, "threshold_y": u.classifier.threshold_y}
                    for uid, u in sorted(state.registry.users.items())]

    @app.get("/v1/outcomes")
    async def outcomes(since: int = 0):
        async with state.lock:
            return {"next": len(state.outcomes),
                    "outcomes": state.outcomes[since:]}

    async def _sweeper():
        while True:
            await asyncio.sleep(0.5)
            async with state.lock:
                before = len(state.pending)
                state.sweep_expired()
                expired = before - len(state.pending)
            if expired:
                async with state.changed:
                    state.changed.notify_all()

    return app
