"""One agent's share of the mesh: storage, routing queue and request handling.

Store requests are owned tuples and must never be lost or duplicated, so a
hand-off to a neighbor takes three messages: the holder offers the key, the
neighbor reserves a routing slot and accepts, then the holder transfers the
tuple. Ownership moves when the transfer is put on the air; the medium
delivers every message to all agents that were in range when it was sent,
so the reserved slot is always there to receive it.

Get and erase requests are flooded once per query id. Replies travel back
hop by hop along the reverse path recorded by the flood. These are copies,
not owned data, and may be dropped when the queue overflows or a hop
stays out of range for longer than the TTL.
"""

from __future__ import annotations

import logging
from collections.abc import Iterable
from dataclasses import dataclass, field

from . import wire
from .tuples import MeshTuple, make_tuple_id, node_id

log = logging.getLogger(__name__)

STORE_TTL = 50
SEEN_RETENTION = 500
# a reservation covers the ACCEPT -> XFER -> receipt round trip
RESERVATION_STEPS = 2
# how long an offer waits for an ACCEPT before it may be re-offered
OFFER_WAIT = 2

# lower = sent first when the bandwidth cap bites
_PRIORITY = {
    wire.StoreAccept: 0,
    wire.Reply: 0,
    wire.EraseRequest: 1,
    wire.StoreTransfer: 2,
    wire.StoreOffer: 2,
    wire.GetRequest: 3,
}
# lower = evicted first when the routing queue overflows
_DROP_ORDER = {wire.GetRequest: 0, wire.EraseRequest: 1, wire.Reply: 2}


def _drop_key(entry) -> tuple[int, int]:
    rho = entry.item.rho if isinstance(entry, wire.Reply) else 0
    return _DROP_ORDER[type(entry)], rho


def _entry_of(obj):
    if isinstance(obj, Queued):
        return obj.entry
    if isinstance(obj, tuple):
        return obj[1]
    return obj


@dataclass
class StoreJob:
    item: MeshTuple
    age: int = 0
    offered_to: int | None = None
    offered_at: int = -1


@dataclass
class Queued:
    """A droppable entry waiting to go out (flood rebroadcast or reply hop)."""

    entry: object
    age: int = 0


@dataclass
class MeshStats:
    dropped_gets: int = 0
    dropped_erases: int = 0
    dropped_replies: int = 0
    ttl_fallbacks: int = 0
    evictions: int = 0
    offers: int = 0
    transfers: int = 0
    deferred_entries: int = 0


@dataclass
class MeshEvents:
    """Per-step record of ownership changes, drained by the simulator's audit."""

    created: list[MeshTuple] = field(default_factory=list)
    erased: list[int] = field(default_factory=list)
    # (tau, rho, node id at acceptance, forced by TTL fallback)
    accepted: list[tuple[int, int, int, bool]] = field(default_factory=list)
    # transfers put on the air this step, owned by nobody until received
    in_flight: list[MeshTuple] = field(default_factory=list)

    def clear(self):
        self.created.clear()
        self.erased.clear()
        self.accepted.clear()
        self.in_flight.clear()


def make_query_id(agent: int, count: int) -> int:
    return make_tuple_id(agent, count)


class MeshNode:
    """Mesh participation of a single agent.

    Per step the owner calls :meth:`receive` with the raw messages heard,
    any of :meth:`store`, :meth:`get`, :meth:`erase_except`, and finally
    :meth:`route`, which returns the bytes to broadcast.
    """

    def __init__(
        self,
        agent_id: int,
        storage_capacity: int = 10,
        routing_capacity: int = 10,
        store_ttl: int = STORE_TTL,
        reply_ttl: int = STORE_TTL,
    ):
        if storage_capacity < 1 or routing_capacity < 1:
            raise ValueError("capacities must be positive")
        self.agent_id = agent_id
        self.storage_capacity = storage_capacity
        self.routing_capacity = routing_capacity
        self.store_ttl = store_ttl
        self.reply_ttl = reply_ttl

        self.storage: dict[int, MeshTuple] = {}
        # step at which each stored tuple arrived here
        self.since: dict[int, int] = {}
        self.jobs: dict[int, StoreJob] = {}
        self.outbox: list[Queued] = []
        self.reservations: dict[tuple[int, int], int] = {}
        self.seen: dict[int, tuple[int | None, int]] = {}
        self.heard: dict[int, int] = {}
        self.neighbors: frozenset[int] = frozenset()
        self.delivered: list[tuple[int, MeshTuple]] = []
        self.stats = MeshStats()
        self.events = MeshEvents()

        self._step = 0
        self._created = 0
        self._queries = 0
        self._offers_in: list[tuple[int, wire.StoreOffer]] = []
        self._accepts_in: set[tuple[int, int]] = set()

    # -- bookkeeping -----------------------------------------------------

    @property
    def available(self) -> int:
        return self.storage_capacity - len(self.storage)

    @property
    def queue_length(self) -> int:
        return len(self.jobs) + len(self.outbox) + len(self.reservations)

    @property
    def queue_free(self) -> int:
        return self.routing_capacity - self.queue_length

    @property
    def delta(self) -> int:
        """NodeID for the current neighbor set and memory use."""
        return node_id(self.available, len(self.neighbors))

    def begin_step(self, step: int, neighbors: Iterable[int]) -> None:
        """Set this step's neighbor set; call after moving, before any operation."""
        self.neighbors = frozenset(neighbors)
        self._step = step
        self._expire(step)

    def next_tuple_id(self) -> int:
        tau = make_tuple_id(self.agent_id, self._created)
        self._created += 1
        return tau

    def holdings(self) -> Iterable[int]:
        """Every tau this node is responsible for, stored or queued."""
        yield from self.storage
        yield from self.jobs

    def tuples_at(self, x: float, y: float, r: float = 0.0) -> list[MeshTuple]:
        return [t for t in self.storage.values() if t.value.within(x, y, r)]

    def dump(self) -> list[str]:
        """One line per stored tuple: agent, tau, rho, class, x, y, consolidated."""
        return [
            f"{self.agent_id} {t.tau} {t.rho} {t.value.label} "
            f"{t.value.center[0]:.6f} {t.value.center[1]:.6f} {int(t.value.consolidated)}"
            for t in sorted(self.storage.values(), key=lambda t: t.tau)
        ]

    def _accept_locally(self, item: MeshTuple, forced: bool = False) -> None:
        self.events.accepted.append((item.tau, item.rho, self.delta, forced))
        self.storage[item.tau] = item
        self.since[item.tau] = self._step

    def _enqueue(self, entry) -> bool:
        """Queue a droppable entry, evicting a lower-priority one if full."""
        if self.queue_free > 0:
            self.outbox.append(Queued(entry))
            return True
        if self.outbox:
            k = min(range(len(self.outbox)), key=lambda k: _drop_key(self.outbox[k].entry))
            if _drop_key(self.outbox[k].entry) < _drop_key(entry):
                self._count_drop(self.outbox.pop(k).entry)
                self.outbox.append(Queued(entry))
                return True
        self._count_drop(entry)
        return False

    def _count_drop(self, entry) -> None:
        if isinstance(entry, wire.GetRequest):
            self.stats.dropped_gets += 1
        elif isinstance(entry, wire.EraseRequest):
            self.stats.dropped_erases += 1
        else:
            self.stats.dropped_replies += 1

    def _make_room_for_job(self) -> bool:
        if self.queue_free > 0:
            return True
        if not self.outbox:
            return False
        k = min(range(len(self.outbox)), key=lambda k: _drop_key(self.outbox[k].entry))
        self._count_drop(self.outbox.pop(k).entry)
        return True

    # -- operations used by the owning agent -----------------------------

    def store(self, item: MeshTuple) -> bool:
        """Insert a freshly created tuple into the mesh.

        Returns False when it can be neither stored here nor queued; the
        caller keeps it and retries on a later step.
        """
        if self.delta > item.rho and self.available > 0:
            self.events.created.append(item)
            self._accept_locally(item)
            return True
        if not self._make_room_for_job():
            return False
        self.events.created.append(item)
        self.jobs[item.tau] = StoreJob(item)
        return True

    def get(self, x: float, y: float, r: float, step: int) -> int:
        """Start a flooded location query; local matches are delivered at once."""
        if r < 0:
            raise ValueError("query radius must be nonnegative")
        qid = make_query_id(self.agent_id, self._queries)
        self._queries += 1
        self.seen[qid] = (None, step)
        for t in self.tuples_at(x, y, r):
            self.delivered.append((qid, t))
        self._enqueue(wire.GetRequest(qid, self.agent_id, x, y, r))
        return qid

    def erase_except(self, x: float, y: float, r: float, keep: Iterable[int], step: int) -> int:
        if r < 0:
            raise ValueError("erase radius must be nonnegative")
        qid = make_query_id(self.agent_id, self._queries)
        self._queries += 1
        self.seen[qid] = (None, step)
        req = wire.EraseRequest(qid, self.agent_id, x, y, r, tuple(sorted(set(keep))))
        self._apply_erase(req)
        self._enqueue(req)
        return qid

    def _apply_erase(self, req: wire.EraseRequest) -> None:
        keep = set(req.keep)
        floor = min(keep) if keep else None

        def doomed(t: MeshTuple) -> bool:
            if t.tau in keep or not t.value.within(req.x, req.y, req.r):
                return False
            # two concurrent consolidations must not erase each other: the
            # older-keyed consolidated tuple survives
            if t.value.consolidated and floor is not None and t.tau < floor:
                return False
            return True

        for tau in [tau for tau, t in self.storage.items() if doomed(t)]:
            del self.storage[tau]
            del self.since[tau]
            self.events.erased.append(tau)
        for tau in [tau for tau, j in self.jobs.items() if doomed(j.item)]:
            del self.jobs[tau]
            self.events.erased.append(tau)

    def take_delivered(self) -> list[tuple[int, MeshTuple]]:
        out, self.delivered = self.delivered, []
        return out

    # -- message handling --------------------------------------------------

    def receive(self, messages: Iterable[bytes], step: int) -> None:
        self.heard = {}
        self._offers_in = []
        self._accepts_in = set()
        me = self.agent_id
        for raw in messages:
            if len(raw) == wire.HEADER.size:
                sender, nid, _, _ = wire.decode_header(raw)
                self.heard[sender] = nid
                continue
            msg = wire.decode(raw)
            self.heard[msg.sender] = msg.node_id
            for e in msg.requests:
                if isinstance(e, wire.GetRequest):
                    self._on_get(e, msg.sender, step)
                elif isinstance(e, wire.EraseRequest):
                    self._on_erase(e, msg.sender, step)
                elif e.dest != me:
                    continue
                elif isinstance(e, wire.StoreOffer):
                    self._offers_in.append((msg.sender, e))
                else:
                    self._on_transfer(e, msg.sender, step)
            for e in msg.replies:
                if e.dest != me:
                    continue
                if isinstance(e, wire.StoreAccept):
                    self._accepts_in.add((msg.sender, e.tau))
                else:
                    self._on_reply(e)

    def _on_get(self, req: wire.GetRequest, sender: int, step: int) -> None:
        if req.qid in self.seen:
            return
        self.seen[req.qid] = (sender, step)
        for t in self.tuples_at(req.x, req.y, req.r):
            self._enqueue(wire.Reply(req.qid, sender, t))
        self._enqueue(req)

    def _on_erase(self, req: wire.EraseRequest, sender: int, step: int) -> None:
        if req.qid in self.seen:
            return
        self.seen[req.qid] = (sender, step)
        self._apply_erase(req)
        self._enqueue(req)

    def _on_transfer(self, xfer: wire.StoreTransfer, sender: int, step: int) -> None:
        slot = (sender, xfer.item.tau)
        expiry = self.reservations.pop(slot, None)
        if expiry is None or expiry < step:
            raise RuntimeError(
                f"agent {self.agent_id} got tuple {xfer.item.tau} from {sender} without a reservation"
            )
        self.jobs[xfer.item.tau] = StoreJob(xfer.item, age=xfer.age)

    def _on_reply(self, rep: wire.Reply) -> None:
        entry = self.seen.get(rep.qid)
        if entry is None:
            self.stats.dropped_replies += 1
            return
        back = entry[0]
        if back is None:
            self.delivered.append((rep.qid, rep.item))
        else:
            self._enqueue(wire.Reply(rep.qid, back, rep.item))

    # -- routing -------------------------------------------------------------

    def route(self, step: int, bandwidth: int) -> bytes | None:
        """Place or forward store requests, then serialize within ``bandwidth`` bytes.

        Returns None when there is nobody in range to hear a message.
        """
        if bandwidth < wire.HEADER.size:
            raise ValueError(f"bandwidth cap below the {wire.HEADER.size}-byte header")

        candidates: list[tuple[int, int, object]] = []
        self._route_jobs(step, candidates)
        self._answer_offers(candidates)

        for q in self.outbox:
            e = q.entry
            if isinstance(e, wire.Reply) and e.dest not in self.neighbors:
                continue
            key = e.qid
            candidates.append((_PRIORITY[type(e)], key, q))

        if not self.neighbors:
            self._settle(step, [], candidates)
            return None

        candidates.sort(key=lambda c: (c[0], c[1]))
        budget = bandwidth - wire.HEADER.size
        sent, nreq, nrep = [], 0, 0
        for cand in candidates:
            entry = _entry_of(cand[2])
            is_reply = isinstance(entry, (wire.Reply, wire.StoreAccept))
            size = wire.entry_size(entry)
            if size > budget or (nrep if is_reply else nreq) >= wire.MAX_ENTRIES:
                self.stats.deferred_entries += 1
                continue
            budget -= size
            sent.append(cand)
            if is_reply:
                nrep += 1
            else:
                nreq += 1
        msg = self._settle(step, sent, candidates)
        return wire.encode(msg)

    def _expire(self, step: int) -> None:
        for slot in [s for s, exp in self.reservations.items() if exp < step]:
            del self.reservations[slot]
        kept = []
        for q in self.outbox:
            q.age += 1
            if q.age > self.reply_ttl:
                self._count_drop(q.entry)
            else:
                kept.append(q)
        self.outbox = kept
        if step % SEEN_RETENTION == 0:
            horizon = step - SEEN_RETENTION
            self.seen = {q: v for q, v in self.seen.items() if v[1] >= horizon}

    def _route_jobs(self, step: int, candidates: list) -> None:
        best = None
        for j in sorted(self.neighbors):
            nid = self.heard.get(j)
            if nid is not None and (best is None or nid > best[1]):
                best = (j, nid)
        for tau in sorted(self.jobs):
            job = self.jobs[tau]
            job.age += 1
            item = job.item
            if self.delta > item.rho and self.available > 0:
                del self.jobs[tau]
                self._accept_locally(item)
                continue
            if job.offered_to is not None and step - job.offered_at >= OFFER_WAIT:
                if (job.offered_to, tau) in self._accepts_in and job.offered_to in self.neighbors:
                    candidates.append(
                        (_PRIORITY[wire.StoreTransfer], tau, wire.StoreTransfer(job.offered_to, job.age, item))
                    )
                    continue
                job.offered_to = None
            if job.offered_to is not None:
                continue
            if job.age >= self.store_ttl:
                self._fallback(tau)
                continue
            if best is not None and best[1] > self.delta:
                candidates.append((_PRIORITY[wire.StoreOffer], tau, wire.StoreOffer(best[0], tau, item.rho)))

    def _fallback(self, tau: int) -> None:
        """Store an expired request here, pushing out the lowest-hash tuple if full."""
        job = self.jobs.pop(tau)
        self.stats.ttl_fallbacks += 1
        if self.available <= 0:
            victim = min(self.storage.values(), key=lambda t: (t.rho, t.tau))
            del self.storage[victim.tau]
            del self.since[victim.tau]
            self.jobs[victim.tau] = StoreJob(victim)
            self.stats.evictions += 1
        self._accept_locally(job.item, forced=True)

    def _answer_offers(self, candidates: list) -> None:
        free = self.queue_free
        for sender, offer in sorted(self._offers_in, key=lambda so: (so[1].tau, so[0])):
            if free <= 0:
                break
            if sender not in self.neighbors or offer.tau in self.jobs:
                continue
            free -= 1
            candidates.append((_PRIORITY[wire.StoreAccept], offer.tau, (sender, wire.StoreAccept(sender, offer.tau))))

    def _settle(self, step: int, sent: list, candidates: list) -> wire.MeshMessage:
        """Commit state for what actually went out; everything else waits."""
        msg = wire.MeshMessage(self.agent_id, self.delta)
        sent_ids = {id(c) for c in sent}
        forwarded: set[int] = set()
        for cand in candidates:
            obj = cand[2]
            went = id(cand) in sent_ids
            if isinstance(obj, Queued):
                if went:
                    forwarded.add(id(obj))
                    (msg.replies if isinstance(obj.entry, wire.Reply) else msg.requests).append(obj.entry)
            elif isinstance(obj, tuple):
                sender, accept = obj
                if went:
                    self.reservations[(sender, accept.tau)] = step + RESERVATION_STEPS
                    msg.replies.append(accept)
            elif isinstance(obj, wire.StoreTransfer):
                job = self.jobs[obj.item.tau]
                if went:
                    del self.jobs[obj.item.tau]
                    self.events.in_flight.append(obj.item)
                    self.stats.transfers += 1
                    msg.requests.append(obj)
                else:
                    job.offered_to = None
            elif isinstance(obj, wire.StoreOffer):
                if went:
                    job = self.jobs[obj.tau]
                    job.offered_to = obj.dest
                    job.offered_at = step
                    self.stats.offers += 1
                    msg.requests.append(obj)
        if forwarded:
            self.outbox = [q for q in self.outbox if id(q) not in forwarded]
        return msg
