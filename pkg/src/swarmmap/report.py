"""Figure data from a directory of simulation runs: CSV tables plus PNG plots.

Each run directory is what ``simulate`` writes (``config.txt``,
``trace.csv``, ...). Runs are grouped by (agents, min votes) and
replicate seeds are summarized by median and interquartile range.
"""

from __future__ import annotations

import csv
import logging
from collections import defaultdict
from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path

from .binpack import optimal_cost, worst_cost
from .classes import ClassModel, default_classes
from .config import SimConfig
from .ensemble import ensemble_accuracy
from .metrics import (
    MetricsFrame,
    aggregate_series,
    bandwidth_per_agent,
    median_iqr,
    nodeid_hash_histograms,
    read_trace,
)

log = logging.getLogger(__name__)

FIGURES = (
    "ensemble_accuracy",
    "coverage",
    "map_accuracy",
    "storage_cost",
    "nodeid_hash_histograms",
    "bandwidth",
)


@dataclass
class Run:
    path: Path
    config: SimConfig
    frames: list[MetricsFrame]

    @property
    def group(self) -> tuple[int, int]:
        return self.config.n_agents, self.config.min_votes


def load_runs(root: str | Path) -> list[Run]:
    root = Path(root)
    runs = []
    for trace in sorted(root.rglob("trace.csv")):
        cfg_path = trace.parent / "config.txt"
        if not cfg_path.exists():
            log.warning("skipping %s: no config.txt next to it", trace)
            continue
        runs.append(Run(trace.parent, SimConfig.load(cfg_path), read_trace(trace)))
    return runs


def _grouped(runs: Sequence[Run]) -> dict[tuple[int, int], list[Run]]:
    out: dict[tuple[int, int], list[Run]] = defaultdict(list)
    for r in runs:
        out[r.group].append(r)
    return dict(sorted(out.items()))


def _write(path: Path, header: Sequence[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _fmt(v) -> str:
    if isinstance(v, float):
        return "" if v != v else f"{v:.6g}"
    return str(v)


def ensemble_rows(model: ClassModel, n_max: int):
    for cid in model.ids:
        p = model.p(cid)
        for n in range(1, n_max + 1):
            yield model.name(cid), p, n, ensemble_accuracy(n, p, model.c)


def cost_rows(frames: Sequence[MetricsFrame], capacity: int, stride: int = 1):
    """(step, realized, optimal, worst) for every ``stride``-th frame."""
    for f in frames[::stride]:
        items = sum(f.loads)
        yield (
            f.step,
            f.realized_cost,
            optimal_cost(items, f.neighbor_counts, capacity),
            worst_cost(items, f.neighbor_counts, capacity),
        )


def build_report(
    runs: Sequence[Run],
    out: str | Path,
    *,
    model: ClassModel | None = None,
    n_max: int = 8,
    stride: int = 10,
    window: int = 100,
    plots: bool = True,
) -> dict[str, Path]:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    model = model or default_classes()
    groups = _grouped(runs)
    paths = {name: out / f"{name}.csv" for name in FIGURES}

    _write(paths["ensemble_accuracy"], ("class", "p", "n", "p_ens"), ensemble_rows(model, n_max))

    cov_rows, acc_rows = [], []
    for (n, v), members in groups.items():
        obs = aggregate_series([[f.observed_coverage for f in r.frames] for r in members])
        con = aggregate_series([[f.consolidation_coverage for f in r.frames] for r in members])
        acc = aggregate_series([[f.map_accuracy for f in r.frames] for r in members])
        steps = [f.step for f in members[0].frames]
        for k in range(0, len(obs), stride):
            t = steps[k] * members[0].config.dt
            cov_rows.append((n, v, steps[k], t, *obs[k], *con[k]))
            acc_rows.append((n, v, steps[k], t, *acc[k], *con[k]))
    _write(
        paths["coverage"],
        ("agents", "min_votes", "step", "time_s", "observed_median", "observed_q25", "observed_q75",
         "consolidated_median", "consolidated_q25", "consolidated_q75"),
        cov_rows,
    )
    _write(
        paths["map_accuracy"],
        ("agents", "min_votes", "step", "time_s", "accuracy_median", "accuracy_q25", "accuracy_q75",
         "consolidated_median", "consolidated_q25", "consolidated_q75"),
        acc_rows,
    )

    cost = []
    for (n, v), members in groups.items():
        r = members[0]
        for row in cost_rows(r.frames, r.config.storage_capacity, stride):
            cost.append((n, v, r.config.seed, *row))
    _write(paths["storage_cost"], ("agents", "min_votes", "seed", "step", "realized", "optimal", "worst"), cost)

    hist = []
    for (n, v), members in groups.items():
        nid, rho = {}, {}
        for r in members:
            a, b = nodeid_hash_histograms(r.frames)
            for k, c in a.items():
                nid[k] = nid.get(k, 0) + c
            for k, c in b.items():
                rho[k] = rho.get(k, 0) + c
        hist += [(n, v, "node_id", k, c) for k, c in sorted(nid.items())]
        hist += [(n, v, "hash", k, c) for k, c in sorted(rho.items())]
    _write(paths["nodeid_hash_histograms"], ("agents", "min_votes", "kind", "value", "count"), hist)

    bw = []
    for (n, v), members in groups.items():
        series = [bandwidth_per_agent(r.frames, r.config.dt, window)["series"] for r in members]
        agg = aggregate_series([[rate for _, rate in s] for s in series])
        for (step, _), stats in zip(series[0], agg):
            bw.append((n, v, step, step * members[0].config.dt, *stats))
    _write(paths["bandwidth"], ("agents", "min_votes", "step", "time_s", "median", "q25", "q75"), bw)

    if plots:
        paths.update(render_plots(out, paths))
    return paths


def summary_rows(runs: Sequence[Run]):
    """Per (agents, min votes): medians over seeds of the run-level statistics."""
    for (n, v), members in _grouped(runs).items():
        last_acc = [next((f.map_accuracy for f in reversed(r.frames) if f.map_accuracy is not None), None) for r in members]
        yield {
            "agents": n,
            "min_votes": v,
            "runs": len(members),
            "final_accuracy": median_iqr(last_acc)[0],
            "final_consolidated": median_iqr([r.frames[-1].consolidation_coverage for r in members])[0],
            "final_observed": median_iqr([r.frames[-1].observed_coverage for r in members])[0],
            "bytes_per_agent_s": median_iqr([bandwidth_per_agent(r.frames, r.config.dt)["mean"] for r in members])[0],
        }


# -- plotting ------------------------------------------------------------------


def _read(path: Path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _num(v: str) -> float:
    return float(v) if v else float("nan")


def render_plots(out: Path, paths: dict[str, Path]) -> dict[str, Path]:
    """One PNG per figure table; matplotlib is only needed here."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    pngs = {}

    def save(fig, name):
        p = out / f"{name}.png"
        fig.tight_layout()
        fig.savefig(p, dpi=120)
        plt.close(fig)
        pngs[name + "_png"] = p

    rows = _read(paths["ensemble_accuracy"])
    fig, ax = plt.subplots(figsize=(6, 4))
    by_class = defaultdict(list)
    for r in rows:
        by_class[(r["class"], float(r["p"]))].append((int(r["n"]), float(r["p_ens"])))
    for (name, p), pts in sorted(by_class.items(), key=lambda kv: -kv[0][1]):
        ax.plot(*zip(*pts), marker="o", ms=3, label=f"{name} ({p:.3f})")
    ax.set_xlabel("votes n")
    ax.set_ylabel("ensemble accuracy")
    ax.legend(fontsize=6, ncol=2)
    save(fig, "ensemble_accuracy")

    for name, cols, ylabel in (
        ("coverage", (("observed", "-"), ("consolidated", "--")), "coverage"),
        ("map_accuracy", (("accuracy", "-"), ("consolidated", "--")), "accuracy / coverage"),
    ):
        rows = _read(paths[name])
        fig, ax = plt.subplots(figsize=(6, 4))
        groups = defaultdict(list)
        for r in rows:
            groups[(int(r["agents"]), int(r["min_votes"]))].append(r)
        for (n, v), rs in groups.items():
            t = [float(r["time_s"]) for r in rs]
            for col, style in cols:
                ax.plot(t, [_num(r[f"{col}_median"]) for r in rs], style, label=f"N={n} V={v} {col}")
        ax.set_xlabel("time (s)")
        ax.set_ylabel(ylabel)
        ax.set_ylim(0, 1.02)
        ax.legend(fontsize=6)
        save(fig, name)

    rows = _read(paths["storage_cost"])
    fig, ax = plt.subplots(figsize=(6, 4))
    groups = defaultdict(list)
    for r in rows:
        groups[(int(r["agents"]), int(r["min_votes"]))].append(r)
    for (n, v), rs in groups.items():
        t = [int(r["step"]) for r in rs]
        for col in ("realized", "optimal", "worst"):
            ax.plot(t, [float(r[col]) for r in rs], label=f"N={n} V={v} {col}")
    ax.set_xlabel("step")
    ax.set_ylabel("storage cost")
    ax.legend(fontsize=6)
    save(fig, "storage_cost")

    rows = _read(paths["nodeid_hash_histograms"])
    fig, axes = plt.subplots(1, 2, figsize=(8, 3.5))
    groups = defaultdict(lambda: defaultdict(list))
    for r in rows:
        groups[r["kind"]][(int(r["agents"]), int(r["min_votes"]))].append((int(r["value"]), int(r["count"])))
    for ax, kind in zip(axes, ("hash", "node_id")):
        for (n, v), pts in groups[kind].items():
            vals, counts = zip(*pts)
            total = sum(counts)
            ax.step(vals, [c / total for c in counts], where="mid", label=f"N={n} V={v}")
        ax.set_xlabel(kind)
        ax.set_ylabel("fraction")
        ax.legend(fontsize=6)
    save(fig, "nodeid_hash_histograms")

    rows = _read(paths["bandwidth"])
    fig, ax = plt.subplots(figsize=(6, 4))
    groups = defaultdict(list)
    for r in rows:
        groups[(int(r["agents"]), int(r["min_votes"]))].append(r)
    for (n, v), rs in groups.items():
        ax.plot([float(r["time_s"]) for r in rs], [_num(r["median"]) for r in rs], label=f"N={n} V={v}")
    ax.set_xlabel("time (s)")
    ax.set_ylabel("bytes / s / agent")
    ax.legend(fontsize=6)
    save(fig, "bandwidth")
    return pngs
