"""Simulation parameters and their flat ``key = value`` file format."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, fields
from pathlib import Path


class ConfigError(ValueError):
    pass


@dataclass
class SimConfig:
    n_agents: int = 30
    comm_range: float = 2.0
    arena: float = 8.0
    seed: int = 0

    dt: float = 0.1
    speed: float = 0.05
    robot_radius: float = 0.07
    avoid_range: float = 0.15
    jitter: float = 0.05

    n_objects: int = 40
    scene_file: str = ""
    classes_file: str = ""

    frustum_near: float = 0.2
    frustum_far: float = 1.5
    frustum_hfov_deg: float = 60.0
    frustum_vfov_deg: float = 60.0
    mount_height: float = 0.1

    min_votes: int = 3
    recording_timeout: int = 100
    querying_timeout: int = 50
    reply_wait: int = 30
    # re-query a lone tuple held this long without resolution (0 = off)
    stale_after: int = 300

    memory_capacity: int = 20
    storage_capacity: int = 10
    routing_capacity: int = 10
    store_ttl: int = 50
    hash_step: int = 5
    bandwidth: int = 1024

    # forced disconnections: each agent is radio-silent for a step with this probability
    blackout_prob: float = 0.0
    # stop sensing / motion from this step on (-1 = never), to reach quiescence
    sense_until: int = -1
    freeze_at: int = -1
    audit: bool = False

    def validate(self) -> "SimConfig":
        positive_int = (
            "n_agents", "n_objects", "min_votes", "memory_capacity", "storage_capacity",
            "routing_capacity", "store_ttl", "hash_step",
        )
        for name in positive_int:
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        for name in ("comm_range", "arena", "dt", "speed", "robot_radius", "frustum_far"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise ConfigError(f"{name} must be positive, got {v}")
        for name in ("recording_timeout", "querying_timeout", "reply_wait", "stale_after", "jitter", "avoid_range"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be nonnegative")
        if self.storage_capacity + self.routing_capacity != self.memory_capacity:
            raise ConfigError(
                f"storage ({self.storage_capacity}) + routing ({self.routing_capacity}) "
                f"must equal memory capacity ({self.memory_capacity})"
            )
        if self.n_agents > 4095:
            raise ConfigError("at most 4095 agents fit in a tuple id")
        if self.bandwidth < 8 + 41:
            raise ConfigError("bandwidth cap must fit a header and one transfer (49 bytes)")
        if not 0 <= self.blackout_prob <= 1:
            raise ConfigError("blackout_prob must lie in [0, 1]")
        if not 0 <= self.frustum_near < self.frustum_far:
            raise ConfigError("need 0 <= frustum_near < frustum_far")
        for name in ("frustum_hfov_deg", "frustum_vfov_deg"):
            if not 0 < getattr(self, name) < 180:
                raise ConfigError(f"{name} must lie in (0, 180)")
        return self

    def replace(self, **changes) -> "SimConfig":
        return dataclasses.replace(self, **changes)

    def to_text(self) -> str:
        return "".join(f"{f.name} = {getattr(self, f.name)}\n" for f in fields(self))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_text())

    @classmethod
    def from_text(cls, text: str) -> "SimConfig":
        types = {f.name: f.type for f in fields(cls)}
        values = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
            key, val = (s.strip() for s in line.split("=", 1))
            if key not in types:
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
            values[key] = _parse(val, types[key], key)
        return cls(**values).validate()

    @classmethod
    def load(cls, path: str | Path) -> "SimConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        return cls.from_text(text)


def _parse(val: str, typ, key: str):
    typ = typ if isinstance(typ, str) else typ.__name__
    try:
        if typ == "bool":
            low = val.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(val)
        if typ == "int":
            return int(val)
        if typ == "float":
            return float(val)
        return val
    except ValueError:
        raise ConfigError(f"bad value for {key}: {val!r}") from None
