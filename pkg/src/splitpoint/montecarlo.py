"""Monte Carlo comparison of region-based selection against a fixed-layer baseline.

Link rate and the client/server speed ratio are drawn from folded normal
distributions; each grid cell fixes their coefficients of variation.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .baselines import exhaustive_optimal_many
from .delaymodel import ResourceState, TrainingConfig
from .netprofile import NetworkProfile
from .ocla import SplitRegionTable


@dataclass(frozen=True)
class FoldedNormalParams:
    mean: float
    sigma: float

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")

    @classmethod
    def from_cv(cls, mean: float, cv: float) -> "FoldedNormalParams":
        return cls(mean, cv * mean)


def sample_folded_normal(p: FoldedNormalParams, rng: np.random.Generator, size=None):
    """``|mean + sigma * Z|`` with ``Z`` standard normal."""
    z = rng.standard_normal(size)
    return np.abs(p.mean + p.sigma * z)


@dataclass(frozen=True)
class MonteCarloConfig:
    """Monte Carlo settings. ``mean_speed_gap`` is the mean of
    ``client_speed / server_speed`` (the complement of the server advantage)."""

    client_speed: float
    iterations: int = 1000
    samples: int = 300
    r_cvs: tuple[float, ...] = (0.01, 0.5)
    beta_cvs: tuple[float, ...] = (0.01, 0.5)
    mean_rate: float = 20e6
    mean_speed_gap: float = 0.03
    naive_layer: int = 3
    seed: int = 0
    training: TrainingConfig = field(default_factory=TrainingConfig)

    def __post_init__(self):
        if not 0 < self.mean_speed_gap < 1:
            raise ValueError("mean_speed_gap must lie in (0, 1)")
        if any(cv <= 0 for cv in (*self.r_cvs, *self.beta_cvs)):
            raise ValueError("coefficients of variation must be positive")
        if self.iterations < 1 or self.samples < 1:
            raise ValueError("iterations and samples must be positive")

    @property
    def cells(self) -> list[tuple[float, float]]:
        return [(r, b) for r in self.r_cvs for b in self.beta_cvs]


def parse_grid(text: str) -> tuple[float, ...]:
    """``"lo:hi:n"`` -> n evenly spaced values; ``"a,b,c"`` -> explicit list."""
    if ":" in text:
        lo, hi, n = text.split(":")
        return tuple(float(v) for v in np.linspace(float(lo), float(hi), int(n)))
    return tuple(float(v) for v in text.split(","))


@dataclass
class ResourceDraws:
    client_speed: np.ndarray
    server_speed: np.ndarray
    rate: np.ndarray
    rejections: int = 0

    def __len__(self) -> int:
        return len(self.rate)

    def state(self, i: int) -> ResourceState:
        return ResourceState(float(self.client_speed[i]), float(self.server_speed[i]), float(self.rate[i]))

    def operating_points(self) -> np.ndarray:
        # same arithmetic as ResourceState.operating_point
        a = self.server_speed / self.client_speed
        return ((a - 1.0) / a) * self.rate / self.client_speed


def draw_resources(cfg: MonteCarloConfig, cell: tuple[float, float], rng: np.random.Generator, n: int) -> ResourceDraws:
    """Draw ``n`` resource states for one (rate cv, speed-gap cv) cell.

    Speed-gap draws outside (0, 1) would make the server no faster than
    the client; they are redrawn and counted.
    """
    r_cv, gap_cv = cell
    rate_p = FoldedNormalParams.from_cv(cfg.mean_rate, r_cv)
    gap_p = FoldedNormalParams.from_cv(cfg.mean_speed_gap, gap_cv)
    rate = sample_folded_normal(rate_p, rng, n)
    gap = sample_folded_normal(gap_p, rng, n)
    rejections = 0
    bad = ~((gap > 0) & (gap < 1))
    while bad.any():
        k = int(bad.sum())
        rejections += k
        gap[bad] = sample_folded_normal(gap_p, rng, k)
        bad = ~((gap > 0) & (gap < 1))
    # a zero rate draw has probability zero but would break the delay model
    while (rate <= 0).any():
        bad_r = rate <= 0
        rate[bad_r] = sample_folded_normal(rate_p, rng, int(bad_r.sum()))
    fk = np.full(n, float(cfg.client_speed))
    return ResourceDraws(fk, fk / gap, rate, rejections)


def draw_resource(cfg: MonteCarloConfig, cell: tuple[float, float], rng: np.random.Generator) -> ResourceState:
    return draw_resources(cfg, cell, rng, 1).state(0)


def selection_rate(predictions, truths) -> float:
    predictions = np.asarray(predictions)
    truths = np.asarray(truths)
    if predictions.shape != truths.shape:
        raise ValueError("predictions and truths must have equal length")
    if predictions.size == 0:
        raise ValueError("no predictions to score")
    return float(np.mean(predictions == truths))


def iteration_rng(seed: int, cell_index: tuple[int, int], iteration: int) -> np.random.Generator:
    """Generator keyed by (seed, cell, iteration) so results never depend on
    evaluation order or worker count."""
    ss = np.random.SeedSequence(seed, spawn_key=(cell_index[0], cell_index[1], iteration))
    return np.random.default_rng(ss)


@dataclass
class GainSurface:
    r_cvs: tuple[float, ...]
    beta_cvs: tuple[float, ...]
    a_ocla: np.ndarray  # (len(r_cvs), len(beta_cvs)), mean over iterations
    a_naive: np.ndarray
    a_ocla_std: np.ndarray
    a_naive_std: np.ndarray
    rejections: np.ndarray
    iterations: int
    samples: int
    naive_layer: int

    @property
    def gain(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(self.a_naive > 0, self.a_ocla / self.a_naive, np.inf)

    @property
    def stderr(self) -> np.ndarray:
        """Standard error of the baseline's selection rate across iterations."""
        return self.a_naive_std / math.sqrt(self.iterations)

    def at(self, r_cv: float, beta_cv: float) -> dict:
        i = int(np.argmin(np.abs(np.asarray(self.r_cvs) - r_cv)))
        j = int(np.argmin(np.abs(np.asarray(self.beta_cvs) - beta_cv)))
        return self.rows()[i * len(self.beta_cvs) + j]

    def rows(self) -> list[dict]:
        gain, se = self.gain, self.stderr
        return [
            {
                "r_cv": r,
                "beta_cv": b,
                "a_ocla": float(self.a_ocla[i, j]),
                "a_naive": float(self.a_naive[i, j]),
                "gain": float(gain[i, j]),
                "stderr": float(se[i, j]),
            }
            for i, r in enumerate(self.r_cvs)
            for j, b in enumerate(self.beta_cvs)
        ]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=GAIN_COLUMNS, lineterminator="\n")
        w.writeheader()
        for row in self.rows():
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
        return buf.getvalue()


GAIN_COLUMNS = ["r_cv", "beta_cv", "a_ocla", "a_naive", "gain", "stderr"]


def _run_cell(profile: NetworkProfile, table: SplitRegionTable, cfg: MonteCarloConfig, ci: tuple[int, int]):
    cell = (cfg.r_cvs[ci[0]], cfg.beta_cvs[ci[1]])
    a_ocla = np.empty(cfg.iterations)
    a_naive = np.empty(cfg.iterations)
    rejections = 0
    for it in range(cfg.iterations):
        rng = iteration_rng(cfg.seed, ci, it)
        d = draw_resources(cfg, cell, rng, cfg.samples)
        rejections += d.rejections
        truth = exhaustive_optimal_many(profile, d.client_speed, d.server_speed, d.rate, cfg.training)
        picked = table.lookup_many(d.operating_points())
        a_ocla[it] = selection_rate(picked, truth)
        a_naive[it] = selection_rate(np.full_like(truth, cfg.naive_layer), truth)
    return a_ocla, a_naive, rejections


def run_gain_grid(profile: NetworkProfile, table: SplitRegionTable, cfg: MonteCarloConfig, workers: int = 1) -> GainSurface:
    if not 1 <= cfg.naive_layer < profile.n_layers:
        raise ValueError(f"naive layer must lie in 1..{profile.n_layers - 1}")
    index = [(i, j) for i in range(len(cfg.r_cvs)) for j in range(len(cfg.beta_cvs))]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_cell, *zip(*[(profile, table, cfg, ci) for ci in index])))
    else:
        results = [_run_cell(profile, table, cfg, ci) for ci in index]

    shape = (len(cfg.r_cvs), len(cfg.beta_cvs))
    out = {k: np.zeros(shape) for k in ("ao", "an", "aos", "ans")}
    rej = np.zeros(shape, dtype=np.int64)
    for (i, j), (ao, an, r) in zip(index, results):
        out["ao"][i, j], out["an"][i, j] = ao.mean(), an.mean()
        out["aos"][i, j], out["ans"][i, j] = ao.std(), an.std()
        rej[i, j] = r
    return GainSurface(
        cfg.r_cvs, cfg.beta_cvs, out["ao"], out["an"], out["aos"], out["ans"], rej,
        cfg.iterations, cfg.samples, cfg.naive_layer,
    )


def calibrate_client_speed(table: SplitRegionTable, layer: int, mean_rate: float = 20e6, mean_speed_gap: float = 0.03) -> float:
    """Client speed that puts the mean operating point at the geometric
    centre of ``layer``'s split region."""
    e = table.region_of(layer)
    if math.isinf(e.high):
        target = 10.0 * e.low
    elif e.low == 0.0:
        target = e.high / 10.0
    else:
        target = math.sqrt(e.low * e.high)
    return (1.0 - mean_speed_gap) * mean_rate / target
