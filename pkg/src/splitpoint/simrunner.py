"""Sequential multi-client split-learning timeline.

Clients train one after another inside each round. Before its epoch a
client downloads the latest client-side weights, and afterwards uploads
them for the next client. The very first client has nothing to download
and the very last client has nobody to upload for.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .baselines import SelectorKind, exhaustive_optimal, naive_select
from .delaymodel import DelayBreakdown, ResourceState, TrainingConfig, epoch_delay
from .montecarlo import MonteCarloConfig, draw_resources
from .netprofile import NetworkProfile
from .ocla import SplitRegionTable, select_cut_layer

log = logging.getLogger(__name__)

SEED_ENV = "SPLITPOINT_SEED"


class TraceError(ValueError):
    pass


@dataclass(frozen=True)
class FixedResources:
    state: ResourceState

    def draws(self, n: int, seed: int) -> list[ResourceState]:
        return [self.state] * n


@dataclass(frozen=True)
class SampledResources:
    """Fresh folded-normal draw for every client epoch."""

    mc: MonteCarloConfig
    r_cv: float
    beta_cv: float

    def draws(self, n: int, seed: int) -> list[ResourceState]:
        rng = np.random.default_rng(np.random.SeedSequence(seed))
        d = draw_resources(self.mc, (self.r_cv, self.beta_cv), rng, n)
        return [d.state(i) for i in range(n)]


@dataclass(frozen=True)
class TraceResources:
    states: tuple[ResourceState, ...]

    @classmethod
    def from_csv(cls, path: str | Path) -> "TraceResources":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        try:
            states = tuple(ResourceState(float(r["f_k"]), float(r["f_s"]), float(r["R"])) for r in rows)
        except KeyError as exc:
            raise TraceError(f"resource trace needs columns f_k,f_s,R (missing {exc})") from exc
        return cls(states)

    def draws(self, n: int, seed: int) -> list[ResourceState]:
        if len(self.states) < n:
            raise TraceError(f"resource trace has {len(self.states)} rows but the run needs {n}")
        return list(self.states[:n])


@dataclass(frozen=True)
class SimulationConfig:
    training: TrainingConfig = field(default_factory=lambda: TrainingConfig(batch_mode="ceil"))
    selector: SelectorKind = SelectorKind("ocla")
    resources: FixedResources | SampledResources | TraceResources | None = None
    seed: int = 0

    @property
    def n_events(self) -> int:
        t = self.training
        return t.n_rounds * t.n_clients * t.epochs


@dataclass(frozen=True)
class EpochEvent:
    round: int
    client: int
    epoch: int
    cut: int
    breakdown: DelayBreakdown
    charged: float  # epoch delay after the first/last sync exceptions
    cumulative: float


@dataclass
class Timeline:
    selector: str
    events: list[EpochEvent]

    @property
    def total(self) -> float:
        return self.events[-1].cumulative if self.events else 0.0

    def round_totals(self) -> np.ndarray:
        n_rounds = max(e.round for e in self.events)
        out = np.zeros(n_rounds)
        for e in self.events:
            out[e.round - 1] += e.charged
        return out

    def round_cumulative(self) -> np.ndarray:
        """Wall clock at the end of each round."""
        ends = {}
        for e in self.events:
            ends[e.round] = e.cumulative
        return np.array([ends[r] for r in sorted(ends)])

    def rows(self) -> list[dict]:
        return [
            {
                "round": e.round,
                "client": e.client,
                "cut": e.cut,
                "tau_k": e.breakdown.client_compute,
                "tau_s": e.breakdown.server_compute,
                "t0": e.breakdown.activation_tx,
                "tp": e.breakdown.sync_tx,
                "epoch_T": e.charged,
                "cum_T": e.cumulative,
            }
            for e in self.events
        ]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=TIMELINE_COLUMNS, lineterminator="\n")
        w.writeheader()
        for row in self.rows():
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
        return buf.getvalue()


TIMELINE_COLUMNS = ["round", "client", "cut", "tau_k", "tau_s", "t0", "tp", "epoch_T", "cum_T"]


def _choose(profile, table, selector: SelectorKind, res, cfg) -> int:
    if selector.kind == "ocla":
        return select_cut_layer(table, res)
    if selector.kind == "exhaustive":
        return exhaustive_optimal(profile, res, cfg)[0]
    return naive_select(selector, profile)


def simulate_training(profile: NetworkProfile, table: SplitRegionTable | None, cfg: SimulationConfig) -> Timeline:
    tc = cfg.training
    if cfg.selector.kind == "ocla":
        if table is None:
            raise ValueError("region-based selection needs a region table")
        if table.dataset_size and table.dataset_size != tc.effective_dataset_size:
            log.warning(
                "region table built for dataset size %s but the epoch model uses %s",
                table.dataset_size, tc.effective_dataset_size,
            )
    if cfg.resources is None:
        raise ValueError("no resource source configured")
    draws = cfg.resources.draws(cfg.n_events, cfg.seed)

    events = []
    clock = 0.0
    k = 0
    for t in range(1, tc.n_rounds + 1):
        for c in range(1, tc.n_clients + 1):
            for e in range(1, tc.epochs + 1):
                res = draws[k]
                k += 1
                cut = _choose(profile, table, cfg.selector, res, tc)
                b = epoch_delay(profile, cut, res, tc)
                download = e == 1 and not (t == 1 and c == 1)
                upload = e == tc.epochs and not (t == tc.n_rounds and c == tc.n_clients)
                charged = 2.0 * b.n_batches * (b.client_compute + b.activation_tx + b.server_compute)
                charged += b.sync_tx * (int(download) + int(upload))
                clock += charged
                events.append(EpochEvent(t, c, e, cut, b, charged, clock))
    return Timeline(str(cfg.selector), events)


@dataclass(frozen=True)
class LossPoint:
    epoch: int
    loss: float
    accuracy: float


def load_loss_trace(path: str | Path) -> list[LossPoint]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    try:
        return [LossPoint(int(r["epoch"]), float(r["loss"]), float(r.get("accuracy") or "nan")) for r in rows]
    except KeyError as exc:
        raise TraceError(f"loss trace needs columns epoch,loss,accuracy (missing {exc})") from exc


def attach_loss_trace(timeline: Timeline, trace: list[LossPoint]) -> list[tuple[float, float, float]]:
    """Pair the i-th recorded loss/accuracy with the wall clock after the i-th epoch."""
    if not trace:
        raise TraceError("loss trace is empty")
    if len(trace) < len(timeline.events):
        raise TraceError(f"loss trace has {len(trace)} epochs but the timeline has {len(timeline.events)}")
    return [(ev.cumulative, p.loss, p.accuracy) for ev, p in zip(timeline.events, trace)]


def load_simulation_config(doc: dict | str | Path, base_dir: Path | None = None, mc_defaults: dict | None = None) -> SimulationConfig:
    """Build a :class:`SimulationConfig` from its JSON form.

    ``SPLITPOINT_SEED`` in the environment overrides the document's seed.
    A sampled source without ``client_speed`` is left for the caller to fill
    (see ``mc_defaults``).
    """
    if isinstance(doc, Path) or (isinstance(doc, str) and not doc.lstrip().startswith("{")):
        path = Path(doc)
        base_dir = base_dir or path.parent
        doc = json.loads(path.read_text())
    elif isinstance(doc, str):
        doc = json.loads(doc)
    base_dir = base_dir or Path.cwd()

    training = TrainingConfig(**{"batch_mode": "ceil", **doc.get("training", {})})
    selector = SelectorKind.parse(doc.get("selector", "ocla"))
    seed = int(os.environ.get(SEED_ENV, doc.get("seed", 0)))

    src = doc.get("resources", {"kind": "sampled"})
    kind = src.get("kind", "sampled")
    if kind == "fixed":
        resources = FixedResources(ResourceState(float(src["client_speed"]), float(src["server_speed"]), float(src["rate"])))
    elif kind == "trace":
        p = Path(src["path"])
        resources = TraceResources.from_csv(p if p.is_absolute() else base_dir / p)
    elif kind == "sampled":
        params = {**(mc_defaults or {}), **{k: v for k, v in src.items() if v is not None}}
        if "client_speed" not in params:
            raise ValueError("sampled resources need client_speed")
        mc = MonteCarloConfig(
            client_speed=float(params["client_speed"]),
            mean_rate=float(params.get("mean_rate", 20e6)),
            mean_speed_gap=float(params.get("mean_speed_gap", 0.03)),
            training=TrainingConfig(training.dataset_size, training.batch_size),
        )
        resources = SampledResources(mc, float(params.get("r_cv", 0.5)), float(params.get("beta_cv", 0.5)))
    else:
        raise ValueError(f"unknown resource source {kind!r}")
    return SimulationConfig(training, selector, resources, seed)
