"""Tuple keys and values stored in the mesh, plus the NodeID and hash rules."""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from functools import lru_cache

from ..classes import ClassModel

COUNT_BITS = 20
MAX_AGENTS = 1 << (32 - COUNT_BITS)
DEFAULT_HASH_STEP = 5
LOCATION_EPS = 1e-6

_f32 = struct.Struct("<f")


def f32(x: float) -> float:
    """Round to the nearest float32 so values survive the wire unchanged."""
    return _f32.unpack(_f32.pack(x))[0]


def make_tuple_id(agent: int, count: int) -> int:
    """Concatenate the creator id (high bits) and its creation count (low bits)."""
    if not 0 <= agent < MAX_AGENTS:
        raise ValueError(f"agent id {agent} does not fit in {32 - COUNT_BITS} bits")
    if not 0 <= count < (1 << COUNT_BITS):
        raise OverflowError(f"agent {agent} exhausted its {COUNT_BITS}-bit tuple counter")
    return (agent << COUNT_BITS) | count


def split_tuple_id(tau: int) -> tuple[int, int]:
    return tau >> COUNT_BITS, tau & ((1 << COUNT_BITS) - 1)


@dataclass(frozen=True, slots=True)
class TupleValue:
    label: int
    center: tuple[float, float, float]
    yaw: float
    front_right: tuple[float, float, float]
    consolidated: bool = False

    def __post_init__(self):
        geom = (*self.center, self.yaw, *self.front_right)
        if len(self.center) != 3 or len(self.front_right) != 3:
            raise ValueError("center and front_right must be 3-vectors")
        if not all(math.isfinite(v) for v in geom):
            raise ValueError(f"non-finite geometry: {geom}")
        object.__setattr__(self, "center", tuple(f32(v) for v in self.center))
        object.__setattr__(self, "yaw", f32(self.yaw))
        object.__setattr__(self, "front_right", tuple(f32(v) for v in self.front_right))

    @property
    def xy(self) -> tuple[float, float]:
        return self.center[0], self.center[1]

    def within(self, x: float, y: float, r: float) -> bool:
        return math.hypot(self.center[0] - x, self.center[1] - y) <= r + LOCATION_EPS


@dataclass(frozen=True, slots=True)
class MeshTuple:
    tau: int
    rho: int
    value: TupleValue

    @property
    def key(self) -> tuple[int, int]:
        return self.tau, self.rho


def node_id(m: int, neighbor_count: int) -> int:
    """Willingness of an agent to take tuples: free slots times neighbors, 1 if alone."""
    if m < 0:
        raise ValueError(f"available memory cannot be negative: {m}")
    return m * neighbor_count if neighbor_count > 0 else 1


@lru_cache(maxsize=64)
def _uncertainty_rank(model: ClassModel) -> dict[int, int]:
    # rank 0 = most accurate class; equal accuracies share a rank
    levels = sorted(set(model.accuracy), reverse=True)
    return {cid: levels.index(model.p(cid)) for cid in model.ids}


def tuple_hash(
    label: int, model: ClassModel, step: int = DEFAULT_HASH_STEP, consolidated: bool = False
) -> int:
    """Staircase hash, higher for labels of less accurate classes.

    Consolidated annotations are the most certain and hash to 0.
    """
    if step < 1:
        raise ValueError("hash step must be >= 1")
    rank = _uncertainty_rank(model).get(label)
    if rank is None:
        raise KeyError(f"unknown class id {label}")
    if consolidated:
        return 0
    return step * (1 + rank)
