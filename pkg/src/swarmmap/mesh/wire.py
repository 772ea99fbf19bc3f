"""Byte-exact message format exchanged between neighbors once per step.

All fields are little-endian and fixed width::

    header   sender u16 | node_id u32 | n_requests u8 | n_replies u8      8 B
    tuple    tau u32 | rho u16 | label u8 | consolidated u8 |
             cx cy cz yaw fx fy fz (7 x f32)                             36 B

Request entries start with a kind byte::

    OFFER    0x01 | dest u16 | tau u32 | rho u16                          9 B
    XFER     0x02 | dest u16 | age u16 | tuple                           41 B
    GET      0x03 | qid u32 | origin u16 | x f32 | y f32 | r f32         19 B
    ERASE    0x04 | qid u32 | origin u16 | x f32 | y f32 | r f32 |
             n_keep u8 | keep tau u32 * n_keep                      20 + 4k B

Reply entries::

    REPLY    0x11 | qid u32 | dest u16 | tuple                           43 B
    ACCEPT   0x12 | dest u16 | tau u32                                    7 B

OFFER, XFER, REPLY and ACCEPT are point-to-point: every neighbor hears
them but only ``dest`` acts on them.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

from .tuples import MeshTuple, TupleValue

HEADER = struct.Struct("<HIBB")
TUPLE = struct.Struct("<IHBB7f")
_OFFER = struct.Struct("<BHIH")
_XFER = struct.Struct("<BHH")
_GET = struct.Struct("<BIHfff")
_ERASE = struct.Struct("<BIHfffB")
_REPLY = struct.Struct("<BIH")
_ACCEPT = struct.Struct("<BHI")
_TAU = struct.Struct("<I")

OFFER, XFER, GET, ERASE = 0x01, 0x02, 0x03, 0x04
REPLY, ACCEPT = 0x11, 0x12
MAX_ENTRIES = 255
MAX_KEEP = 255


class WireError(ValueError):
    pass


@dataclass(frozen=True, slots=True)
class StoreOffer:
    dest: int
    tau: int
    rho: int


@dataclass(frozen=True, slots=True)
class StoreTransfer:
    dest: int
    age: int
    item: MeshTuple


@dataclass(frozen=True, slots=True)
class GetRequest:
    qid: int
    origin: int
    x: float
    y: float
    r: float


@dataclass(frozen=True, slots=True)
class EraseRequest:
    qid: int
    origin: int
    x: float
    y: float
    r: float
    keep: tuple[int, ...] = ()


@dataclass(frozen=True, slots=True)
class Reply:
    qid: int
    dest: int
    item: MeshTuple


@dataclass(frozen=True, slots=True)
class StoreAccept:
    dest: int
    tau: int


@dataclass
class MeshMessage:
    sender: int
    node_id: int
    requests: list = field(default_factory=list)
    replies: list = field(default_factory=list)


def _pack_tuple(t: MeshTuple) -> bytes:
    v = t.value
    return TUPLE.pack(t.tau, t.rho, v.label, int(v.consolidated), *v.center, v.yaw, *v.front_right)


def _unpack_tuple(buf, off: int) -> MeshTuple:
    tau, rho, label, cons, cx, cy, cz, yaw, fx, fy, fz = TUPLE.unpack_from(buf, off)
    return MeshTuple(tau, rho, TupleValue(label, (cx, cy, cz), yaw, (fx, fy, fz), bool(cons)))


def entry_size(entry) -> int:
    if isinstance(entry, StoreOffer):
        return _OFFER.size
    if isinstance(entry, StoreTransfer):
        return _XFER.size + TUPLE.size
    if isinstance(entry, GetRequest):
        return _GET.size
    if isinstance(entry, EraseRequest):
        return _ERASE.size + _TAU.size * len(entry.keep)
    if isinstance(entry, Reply):
        return _REPLY.size + TUPLE.size
    if isinstance(entry, StoreAccept):
        return _ACCEPT.size
    raise TypeError(f"not a wire entry: {entry!r}")


def encode_entry(entry) -> bytes:
    if isinstance(entry, StoreOffer):
        return _OFFER.pack(OFFER, entry.dest, entry.tau, entry.rho)
    if isinstance(entry, StoreTransfer):
        return _XFER.pack(XFER, entry.dest, min(entry.age, 0xFFFF)) + _pack_tuple(entry.item)
    if isinstance(entry, GetRequest):
        return _GET.pack(GET, entry.qid, entry.origin, entry.x, entry.y, entry.r)
    if isinstance(entry, EraseRequest):
        if len(entry.keep) > MAX_KEEP:
            raise WireError(f"keep list too long: {len(entry.keep)}")
        head = _ERASE.pack(ERASE, entry.qid, entry.origin, entry.x, entry.y, entry.r, len(entry.keep))
        return head + b"".join(_TAU.pack(t) for t in entry.keep)
    if isinstance(entry, Reply):
        return _REPLY.pack(REPLY, entry.qid, entry.dest) + _pack_tuple(entry.item)
    if isinstance(entry, StoreAccept):
        return _ACCEPT.pack(ACCEPT, entry.dest, entry.tau)
    raise TypeError(f"not a wire entry: {entry!r}")


def encode(msg: MeshMessage) -> bytes:
    if len(msg.requests) > MAX_ENTRIES or len(msg.replies) > MAX_ENTRIES:
        raise WireError("too many entries for a u8 count")
    parts = [HEADER.pack(msg.sender, msg.node_id, len(msg.requests), len(msg.replies))]
    for e in msg.requests:
        if isinstance(e, (Reply, StoreAccept)):
            raise WireError(f"{type(e).__name__} belongs in the reply section")
        parts.append(encode_entry(e))
    for e in msg.replies:
        if not isinstance(e, (Reply, StoreAccept)):
            raise WireError(f"{type(e).__name__} belongs in the request section")
        parts.append(encode_entry(e))
    return b"".join(parts)


def _decode_entry(buf, off: int):
    kind = buf[off]
    if kind == OFFER:
        _, dest, tau, rho = _OFFER.unpack_from(buf, off)
        return StoreOffer(dest, tau, rho), off + _OFFER.size
    if kind == XFER:
        _, dest, age = _XFER.unpack_from(buf, off)
        off += _XFER.size
        return StoreTransfer(dest, age, _unpack_tuple(buf, off)), off + TUPLE.size
    if kind == GET:
        _, qid, origin, x, y, r = _GET.unpack_from(buf, off)
        return GetRequest(qid, origin, x, y, r), off + _GET.size
    if kind == ERASE:
        _, qid, origin, x, y, r, nkeep = _ERASE.unpack_from(buf, off)
        off += _ERASE.size
        keep = struct.unpack_from(f"<{nkeep}I", buf, off)
        return EraseRequest(qid, origin, x, y, r, keep), off + 4 * nkeep
    if kind == REPLY:
        _, qid, dest = _REPLY.unpack_from(buf, off)
        off += _REPLY.size
        return Reply(qid, dest, _unpack_tuple(buf, off)), off + TUPLE.size
    if kind == ACCEPT:
        _, dest, tau = _ACCEPT.unpack_from(buf, off)
        return StoreAccept(dest, tau), off + _ACCEPT.size
    raise WireError(f"unknown entry kind 0x{kind:02x} at offset {off}")


def decode(buf: bytes) -> MeshMessage:
    try:
        sender, nid, nreq, nrep = HEADER.unpack_from(buf, 0)
        msg = MeshMessage(sender, nid)
        off = HEADER.size
        for _ in range(nreq):
            entry, off = _decode_entry(buf, off)
            msg.requests.append(entry)
        for _ in range(nrep):
            entry, off = _decode_entry(buf, off)
            msg.replies.append(entry)
    except struct.error as exc:
        raise WireError(f"truncated message: {exc}") from None
    if off != len(buf):
        raise WireError(f"{len(buf) - off} trailing bytes")
    return msg


def decode_header(buf: bytes) -> tuple[int, int, int, int]:
    return HEADER.unpack_from(buf, 0)
