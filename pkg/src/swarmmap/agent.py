"""The per-agent control step: sense, store, query, vote, consolidate, route."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .classes import ClassModel
from .ensemble import plurality_vote
from .env import SceneObject, classifier_sample
from .mesh.node import MeshNode
from .mesh.tuples import MeshTuple, TupleValue, tuple_hash


class QueryState(Enum):
    PENDING = "pending"
    EXPIRED = "expired"
    CONSOLIDATED = "consolidated"
    CLEANED = "cleaned"


@dataclass
class QueryLedgerEntry:
    qid: int
    xy: tuple[float, float]
    start: int
    last_reply: int
    replies: dict[int, MeshTuple] = field(default_factory=dict)
    state: QueryState = QueryState.PENDING


@dataclass
class TimeoutState:
    recording: int = 0
    querying: int = 0

    def tick(self) -> None:
        self.recording = max(0, self.recording - 1)
        self.querying = max(0, self.querying - 1)


@dataclass
class Consolidation:
    step: int
    agent: int
    tau: int
    xy: tuple[float, float]
    label: int
    votes: tuple[int, ...]


@dataclass
class StepReport:
    """What one agent did this step, for the simulator's metrics."""

    detected: int | None = None
    label: int | None = None
    consolidations: list[Consolidation] = field(default_factory=list)


class Agent:
    def __init__(
        self,
        agent_id: int,
        model: ClassModel,
        rng: np.random.Generator,
        *,
        min_votes: int = 3,
        recording_timeout: int = 100,
        querying_timeout: int = 50,
        reply_wait: int = 30,
        stale_after: int = 300,
        storage_capacity: int = 10,
        routing_capacity: int = 10,
        store_ttl: int = 50,
        hash_step: int = 5,
    ):
        self.agent_id = agent_id
        self.model = model
        self.rng = rng
        self.min_votes = min_votes
        self.recording_timeout = recording_timeout
        self.querying_timeout = querying_timeout
        self.reply_wait = reply_wait
        self.stale_after = stale_after
        self.hash_step = hash_step
        self.mesh = MeshNode(agent_id, storage_capacity, routing_capacity, store_ttl, store_ttl)
        self.timeouts = TimeoutState()
        self.queries: dict[int, QueryLedgerEntry] = {}
        self.active: dict[tuple[float, float], int] = {}
        self.last_query: dict[tuple[float, float], int] = {}
        self.verified: set[int] = set()
        # created tuples the mesh could not take yet, with an optional erase to follow
        self.deferred: list[tuple[MeshTuple, tuple | None]] = []

    def receive(self, messages, step: int) -> None:
        self.mesh.receive(messages, step)

    def make_tuple(self, value: TupleValue) -> MeshTuple:
        rho = tuple_hash(value.label, self.model, self.hash_step, value.consolidated)
        return MeshTuple(self.mesh.next_tuple_id(), rho, value)

    def act(
        self,
        step: int,
        neighbors,
        detection: SceneObject | None,
        bandwidth: int,
    ) -> tuple[bytes | None, StepReport]:
        """Everything after moving: sensing, queries, consolidation and routing."""
        report = StepReport()
        mesh = self.mesh
        mesh.begin_step(step, neighbors)

        pending, self.deferred = self.deferred, []
        for item, erase in pending:
            self._store(item, erase, step)

        if self.timeouts.recording == 0 and detection is not None:
            self.timeouts.recording = self.recording_timeout
            label = classifier_sample(detection.label, self.model, self.rng)
            value = TupleValue(label, detection.center, detection.yaw, detection.front_right())
            self._store(self.make_tuple(value), None, step)
            report.detected = detection.object_id
            report.label = label

        if self.timeouts.querying == 0:
            xy = self._duplicate_location()
            if xy is None:
                xy = self._stale_location(step)
            if xy is not None:
                self.timeouts.querying = self.querying_timeout
                qid = mesh.get(xy[0], xy[1], 0.0, step)
                self.queries[qid] = QueryLedgerEntry(qid, xy, step, step)
                self.active[xy] = qid
                self.last_query[xy] = step

        for qid, item in mesh.take_delivered():
            entry = self.queries.get(qid)
            if entry is not None and entry.state is QueryState.PENDING:
                entry.replies[item.tau] = item
                entry.last_reply = step

        for qid in list(self.queries):
            entry = self.queries[qid]
            if step - max(entry.start, entry.last_reply) < self.reply_wait:
                continue
            self._finish(entry, step, report)
            del self.queries[qid]
            del self.active[entry.xy]
        if len(self.verified) > 4 * self.mesh.storage_capacity:
            self.verified &= set(self.mesh.storage)
        if len(self.last_query) > 256:
            horizon = step - self.stale_after
            self.last_query = {xy: s for xy, s in self.last_query.items() if s >= horizon}

        self.timeouts.tick()
        return mesh.route(step, bandwidth), report

    def _store(self, item: MeshTuple, erase: tuple | None, step: int) -> None:
        if not self.mesh.store(item):
            self.deferred.append((item, erase))
            return
        if erase is not None:
            self.mesh.erase_except(*erase, step=step)

    def _duplicate_location(self) -> tuple[float, float] | None:
        counts: dict[tuple[float, float], int] = {}
        for t in self.mesh.storage.values():
            xy = t.value.xy
            counts[xy] = counts.get(xy, 0) + 1
        best = None
        for xy, cnt in counts.items():
            if cnt < 2 or xy in self.active:
                continue
            if best is None or (cnt, -xy[0], -xy[1]) > (best[1], -best[0][0], -best[0][1]):
                best = (xy, cnt)
        return None if best is None else best[0]

    def _stale_location(self, step: int) -> tuple[float, float] | None:
        """A location whose lone local tuple has sat unresolved for a long time.

        Catches raw leftovers and duplicate consolidations that ended up on
        different agents, which the duplicate scan alone never sees.
        Consolidated tuples are checked once per arrival here.
        """
        if self.stale_after <= 0:
            return None
        best = None
        since = self.mesh.since
        for tau, t in self.mesh.storage.items():
            if t.value.consolidated and tau in self.verified:
                continue
            held = step - since[tau]
            xy = t.value.xy
            if held < self.stale_after or xy in self.active:
                continue
            if step - self.last_query.get(xy, -self.stale_after) < self.stale_after:
                continue
            if best is None or (held, -tau) > (best[0], -best[1]):
                best = (held, tau, xy)
        if best is None:
            return None
        if self.mesh.storage[best[1]].value.consolidated:
            self.verified.add(best[1])
        return best[2]

    def _finish(self, entry: QueryLedgerEntry, step: int, report: StepReport) -> None:
        x, y = entry.xy
        merged = [t for t in entry.replies.values() if t.value.consolidated]
        if merged:
            # already consolidated: sweep leftovers instead of voting again
            keep = min(t.tau for t in merged)
            self.mesh.erase_except(x, y, 0.0, [keep], step)
            entry.state = QueryState.CLEANED
            return
        raw = sorted(entry.replies.values(), key=lambda t: t.tau)
        if len(raw) < self.min_votes:
            entry.state = QueryState.EXPIRED
            return
        votes = tuple(t.value.label for t in raw)
        label = plurality_vote(votes, self.rng)
        src = raw[0].value
        value = TupleValue(label, src.center, src.yaw, src.front_right, consolidated=True)
        item = self.make_tuple(value)
        self._store(item, (x, y, 0.0, [item.tau]), step)
        entry.state = QueryState.CONSOLIDATED
        report.consolidations.append(Consolidation(step, self.agent_id, item.tau, entry.xy, label, votes))
