"""Lock-step swarm simulation tying the world, the agents and the mesh together.

Every step each agent reads what its neighbors broadcast on the previous
step, moves, senses, runs its control logic and broadcasts one message.
A message sent at step ``t`` reaches exactly the agents adjacent to the
sender in the neighbor graph of step ``t``.
"""

from __future__ import annotations

import csv
import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .agent import Agent, Consolidation
from .binpack import load_cost
from .classes import ClassModel, default_classes
from .config import ConfigError, SimConfig
from .env import FrustumSpec, MotionSpec, Scene, detect_all, diffusion_step, generate_scene, neighbor_graph
from .metrics import MetricsFrame, map_accuracy, write_trace

log = logging.getLogger(__name__)


class InvariantViolation(RuntimeError):
    """A conservation, capacity or acceptance check failed during an audited run."""


def load_classes(path: str | Path | None) -> ClassModel:
    """Class table from a ``class,p`` CSV, or the built-in one when no path is given."""
    if not path:
        return default_classes()
    try:
        return ClassModel.from_csv(path)
    except (OSError, ValueError, IndexError) as exc:
        raise ConfigError(f"bad class table {path}: {exc}") from None


def load_model(config: SimConfig) -> ClassModel:
    return load_classes(config.classes_file)


def place_agents(scene: Scene, n: int, rng: np.random.Generator, radius: float) -> np.ndarray:
    pos = np.empty((n, 2))
    margin = radius + 0.05
    for i in range(n):
        for _ in range(100_000):
            p = rng.uniform(margin, scene.size - margin, size=2)
            if len(scene) and scene.box_distance(p[None, :])[0].min() < margin:
                continue
            if i and np.hypot(*(pos[:i] - p).T).min() < 2 * radius:
                continue
            pos[i] = p
            break
        else:
            raise RuntimeError(f"no free spot for agent {i}")
    return pos


@dataclass
class SimResult:
    config: SimConfig
    scene: Scene
    model: ClassModel
    frames: list[MetricsFrame]
    consolidations: list[Consolidation]
    final_map: list[tuple[int, int, int | None, int | None]]
    detections: list[tuple[int, int, int, int]] = field(default_factory=list)

    def write(self, out: str | Path) -> None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        write_trace(self.frames, out / "trace.csv")
        self.config.save(out / "config.txt")
        self.scene.save(out / "scene.txt", self.model)
        with open(out / "final_map.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["object_id", "true_class", "consolidated_class", "votes"])
            for row in self.final_map:
                w.writerow(["" if v is None else v for v in row])
        with open(out / "consolidations.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["step", "agent", "tau", "object_id", "true_class", "label", "n_votes", "votes"])
            for c in self.consolidations:
                k = self.scene.locate(*c.xy)
                ob = self.scene.objects[k]
                w.writerow([c.step, c.agent, c.tau, ob.object_id, ob.label, c.label, len(c.votes),
                            " ".join(map(str, c.votes))])


class World:
    def __init__(self, config: SimConfig, model: ClassModel | None = None, scene: Scene | None = None):
        self.config = config.validate()
        self.model = model or load_model(config)
        seeds = np.random.SeedSequence(config.seed).spawn(4 + config.n_agents)
        scene_rng, place_rng, self.motion_rng, self.blackout_rng = (np.random.default_rng(s) for s in seeds[:4])
        if scene is None:
            if config.scene_file:
                try:
                    scene = Scene.load(config.scene_file, self.model, config.arena)
                except (OSError, ValueError, KeyError) as exc:
                    raise ConfigError(f"bad scene file {config.scene_file}: {exc}") from None
            else:
                scene = generate_scene(self.model, scene_rng, config.n_objects, config.arena)
        self.scene = scene
        self.frustum = FrustumSpec(
            config.frustum_near,
            config.frustum_far,
            math.radians(config.frustum_hfov_deg),
            math.radians(config.frustum_vfov_deg),
            config.mount_height,
        )
        self.motion = MotionSpec(config.speed, config.dt, config.robot_radius, config.avoid_range, config.jitter)
        n = config.n_agents
        self.pos = place_agents(scene, n, place_rng, config.robot_radius)
        self.heading = place_rng.uniform(-math.pi, math.pi, size=n)
        self.agents = [
            Agent(
                i,
                self.model,
                np.random.default_rng(seeds[4 + i]),
                min_votes=config.min_votes,
                recording_timeout=config.recording_timeout,
                querying_timeout=config.querying_timeout,
                reply_wait=config.reply_wait,
                stale_after=config.stale_after,
                storage_capacity=config.storage_capacity,
                routing_capacity=config.routing_capacity,
                store_ttl=config.store_ttl,
                hash_step=config.hash_step,
            )
            for i in range(n)
        ]
        self.step_no = 0
        self.inbox: list[list[bytes]] = [[] for _ in range(n)]
        self.adjacency = np.zeros((n, n), dtype=bool)
        self.observed: set[int] = set()
        self.consolidations: list[Consolidation] = []
        self.detections: list[tuple[int, int, int, int]] = []
        self.bytes_total = 0
        self._alive: set[int] = set()
        self._truth = {k: ob.label for k, ob in enumerate(scene.objects)}

    # -- one step ----------------------------------------------------------

    def step(self) -> MetricsFrame:
        cfg = self.config
        t = self.step_no
        agents = self.agents
        n = len(agents)

        for i, a in enumerate(agents):
            try:
                a.receive(self.inbox[i], t)
            except RuntimeError as exc:
                raise InvariantViolation(str(exc)) from None

        frozen = 0 <= cfg.freeze_at <= t
        self.pos, self.heading = diffusion_step(self.pos, self.heading, self.scene, self.motion_rng, self.motion, frozen)

        adj = neighbor_graph(self.pos, cfg.comm_range)
        if cfg.blackout_prob > 0:
            silent = self.blackout_rng.random(n) < cfg.blackout_prob
            adj[silent, :] = False
            adj[:, silent] = False
        self.adjacency = adj

        sensing = cfg.sense_until < 0 or t < cfg.sense_until
        if sensing:
            ready = np.array([a.timeouts.recording == 0 for a in agents])
            seen = detect_all(self.pos, self.heading, self.frustum, self.scene, ready)
        else:
            seen = [None] * n

        neighbor_lists = [np.flatnonzero(adj[i]).tolist() for i in range(n)]
        sent: list[bytes | None] = []
        for i, a in enumerate(agents):
            k = seen[i]
            ob = self.scene.objects[k] if k is not None else None
            data, report = a.act(t, neighbor_lists[i], ob, cfg.bandwidth)
            sent.append(data)
            if report.detected is not None:
                self.observed.add(k)
                self.detections.append((t, i, k, report.label))
            self.consolidations.extend(report.consolidations)

        inbox: list[list[bytes]] = [[] for _ in range(n)]
        sizes = []
        for i, data in enumerate(sent):
            if data is None:
                sizes.append(0)
                continue
            sizes.append(len(data))
            for j in neighbor_lists[i]:
                inbox[j].append(data)
        self.inbox = inbox
        self.bytes_total += sum(sizes)

        frame = self._measure(t, sizes, neighbor_lists)
        if cfg.audit:
            self._audit(t)
        for a in agents:
            a.mesh.events.clear()
        self.step_no += 1
        return frame

    def _measure(self, t: int, sizes: list[int], neighbor_lists) -> MetricsFrame:
        cfg = self.config
        covered = set()
        pairs = []
        new_hashes = []
        for a in self.agents:
            mesh = a.mesh
            new_hashes.extend(item.rho for item in mesh.events.created)
            for item in _owned(mesh):
                if item.value.consolidated:
                    k = self.scene.locate(*item.value.xy)
                    covered.add(k)
                    pairs.append((item.value.label, self._truth[k]))
        loads = [len(a.mesh.storage) for a in self.agents]
        counts = [len(nl) for nl in neighbor_lists]
        n_obj = len(self.scene)
        return MetricsFrame(
            step=t,
            observed_coverage=len(self.observed) / n_obj if n_obj else 0.0,
            consolidation_coverage=len(covered) / n_obj if n_obj else 0.0,
            map_accuracy=map_accuracy(pairs),
            bytes_sent_total=sum(sizes),
            realized_cost=load_cost(loads, counts, cfg.storage_capacity),
            neighbor_counts=counts,
            loads=loads,
            bytes_per_agent=sizes,
            node_ids=[a.mesh.delta for a in self.agents],
            new_hashes=new_hashes,
        )

    def _audit(self, t: int) -> None:
        cfg = self.config
        for a in self.agents:
            ev = a.mesh.events
            for item in ev.created:
                if item.tau in self._alive:
                    raise InvariantViolation(f"step {t}: tuple {item.tau} created twice")
                self._alive.add(item.tau)
            for tau in ev.erased:
                self._alive.discard(tau)
            for tau, rho, delta, forced in ev.accepted:
                if not forced and delta <= rho:
                    raise InvariantViolation(
                        f"step {t}: agent {a.agent_id} accepted tuple {tau} (hash {rho}) with NodeID {delta}"
                    )
            if len(a.mesh.storage) > cfg.storage_capacity:
                raise InvariantViolation(f"step {t}: agent {a.agent_id} stores {len(a.mesh.storage)} tuples")
            if a.mesh.queue_length > cfg.routing_capacity:
                raise InvariantViolation(f"step {t}: agent {a.agent_id} queues {a.mesh.queue_length} entries")
        held = Counter()
        for a in self.agents:
            held.update(a.mesh.storage.keys())
            held.update(a.mesh.jobs.keys())
            held.update(item.tau for item in a.mesh.events.in_flight)
        dup = [tau for tau, c in held.items() if c > 1]
        if dup:
            raise InvariantViolation(f"step {t}: tuples held more than once: {dup[:5]}")
        if set(held) != self._alive:
            lost = sorted(self._alive - set(held))[:5]
            extra = sorted(set(held) - self._alive)[:5]
            raise InvariantViolation(f"step {t}: lost {lost}, unexpected {extra}")

    # -- whole runs ----------------------------------------------------------

    def run(self, steps: int) -> SimResult:
        frames = [self.step() for _ in range(steps)]
        return SimResult(
            self.config, self.scene, self.model, frames, list(self.consolidations), self.final_map(), list(self.detections)
        )

    def final_map(self) -> list[tuple[int, int, int | None, int | None]]:
        votes = {c.tau: len(c.votes) for c in self.consolidations}
        best: dict[int, tuple[int, int]] = {}
        for a in self.agents:
            for item in _owned(a.mesh):
                if item.value.consolidated:
                    k = self.scene.locate(*item.value.xy)
                    if k not in best or item.tau < best[k][0]:
                        best[k] = (item.tau, item.value.label)
        rows = []
        for k, ob in enumerate(self.scene.objects):
            if k in best:
                tau, label = best[k]
                rows.append((ob.object_id, ob.label, label, votes.get(tau)))
            else:
                rows.append((ob.object_id, ob.label, None, None))
        return rows

    def holdings(self) -> dict[int, list[int]]:
        """tau -> agents holding it (stored or queued), for tests."""
        out: dict[int, list[int]] = {}
        for a in self.agents:
            for tau in a.mesh.holdings():
                out.setdefault(tau, []).append(a.agent_id)
        return out


def _owned(mesh):
    yield from mesh.storage.values()
    for job in mesh.jobs.values():
        yield job.item
    yield from mesh.events.in_flight


def run_experiment(config: SimConfig, steps: int, out: str | Path | None = None, **kw) -> SimResult:
    """Run one seeded simulation and optionally write its outputs to ``out``."""
    result = World(config, **kw).run(steps)
    if out is not None:
        result.write(out)
    return result
