"""Optimal cut-layer selection: offline pruning + split regions, online lookup.

Write ``g(n) = act_size(n) + cum_params(n) / D`` for the per-sample
communication footprint of cutting after layer ``n``. Up to terms shared
by every cut, the epoch delay is proportional to

    operating_point * cum_flops(n) + scalar_bits * g(n)

so the best cut for a given operating point is the minimiser of a linear
function over the points ``(cum_flops(n), scalar_bits * g(n))``. The
offline phase keeps only the layers on the lower-left convex chain of
those points; each survivor then owns an interval of operating points.
"""

from __future__ import annotations

import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from .delaymodel import ResourceState
from .netprofile import NetworkProfile

INF = math.inf

# sentinel for the zero-cost layer appended after the deepest candidate
VIRTUAL = -1


class SelectionError(ValueError):
    pass


@dataclass(frozen=True)
class CandidateSet:
    layers: tuple[int, ...]
    stage: str  # "after_step1" | "after_step2"
    passes: int = 1


def _dataset(dataset_size) -> Fraction:
    d = Fraction(dataset_size)
    if d <= 0:
        raise ValueError("dataset size must be positive")
    return d


def _footprint(profile: NetworkProfile, n: int, d: Fraction) -> Fraction:
    return int(profile.act_size[n]) + Fraction(int(profile.cum_params[n])) / d


def prune_profile_function(profile: NetworkProfile, dataset_size) -> CandidateSet:
    """Drop layers whose communication footprint does not shrink.

    A deeper layer costs at least as much client compute, so it is only
    worth keeping if it also sends less than its surviving predecessor.
    The comparison chains to the surviving predecessor after each removal.
    """
    d = _dataset(dataset_size)
    m = profile.n_layers
    if m < 2:
        raise ValueError("a network needs at least two layers to be split")
    kept = [1]
    for j in range(2, m):
        i = kept[-1]
        # integer-exact form of act(j) + (params(j) - params(i)) / D >= act(i)
        grows = int(profile.act_size[j]) * d + (int(profile.cum_params[j]) - int(profile.cum_params[i])) >= int(profile.act_size[i]) * d
        if not grows:
            kept.append(j)
    return CandidateSet(tuple(kept), "after_step1")


def _tradeoff_exact(profile: NetworkProfile, prev: int, nxt: int, d: Fraction):
    if prev == 0:
        return INF
    bits = profile.scalar_bits
    if nxt == VIRTUAL:
        # virtual layer has zero activations, load and parameters
        num = _footprint(profile, prev, d)
        den = -int(profile.cum_flops[prev])
        if den == 0:
            return -INF
        return bits * num / den
    num = _footprint(profile, prev, d) - _footprint(profile, nxt, d)
    den = int(profile.cum_flops[nxt]) - int(profile.cum_flops[prev])
    if den == 0:
        return INF if num > 0 else -INF
    return bits * num / den


def tradeoff(profile: NetworkProfile, prev: int, nxt: int, dataset_size) -> float:
    """Bits of communication saved per extra client FLOP when moving the cut
    from ``prev`` to ``nxt`` (``prev=0`` and ``nxt=VIRTUAL`` are sentinels)."""
    if prev != 0 and nxt != VIRTUAL and not prev < nxt:
        raise ValueError(f"expected prev < nxt, got {prev}, {nxt}")
    return float(_tradeoff_exact(profile, prev, nxt, _dataset(dataset_size)))


def _chain(layers) -> list[tuple[int, int]]:
    seq = [0, *layers, VIRTUAL]
    return list(zip(seq[:-1], seq[1:]))


def prune_tradeoff(candidates: CandidateSet, profile: NetworkProfile, dataset_size) -> CandidateSet:
    """Remove layers until the trade-off is strictly decreasing along the chain.

    Each pass drops every layer with ``tradeoff(prev, j) <= tradeoff(j, next)``
    and the next pass re-evaluates against the new neighbours.
    """
    d = _dataset(dataset_size)
    layers = list(candidates.layers)
    passes = 0
    while True:
        passes += 1
        deltas = [_tradeoff_exact(profile, a, b, d) for a, b in _chain(layers)]
        bad = {layers[k] for k in range(len(layers)) if not deltas[k] > deltas[k + 1]}
        if not bad:
            return CandidateSet(tuple(layers), "after_step2", passes)
        layers = [n for n in layers if n not in bad]


@dataclass(frozen=True)
class RegionEntry:
    layer: int
    low: float  # inclusive, bits/FLOP
    high: float  # exclusive; inf for the shallowest layer


@dataclass(frozen=True)
class SplitRegionTable:
    entries: tuple[RegionEntry, ...]
    arch_digest: str = ""
    dataset_size: float = 0.0
    scalar_bits: int = 32
    convention: str = ""
    _lows: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        # deepest layer first so the lows are ascending for searchsorted
        object.__setattr__(self, "_lows", np.array([e.low for e in reversed(self.entries)]))

    @property
    def layers(self) -> tuple[int, ...]:
        return tuple(e.layer for e in self.entries)

    @property
    def boundaries(self) -> list[float]:
        """Interior boundaries, shallow to deep (strictly decreasing)."""
        return [e.low for e in self.entries[:-1]]

    def key(self) -> str:
        return f"{self.arch_digest}|{self.convention}|{self.scalar_bits}|{self.dataset_size!r}"

    def region_of(self, layer: int) -> RegionEntry:
        for e in self.entries:
            if e.layer == layer:
                return e
        raise KeyError(layer)

    def lookup(self, point: float) -> int:
        if not point > 0:
            raise SelectionError(f"operating point must be positive, got {point!r}")
        for e in self.entries:
            if e.low <= point < e.high:
                return e.layer
        raise AssertionError("region table does not cover the operating point")

    def lookup_many(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        if np.any(~(points > 0)):
            raise SelectionError("operating points must be positive")
        idx = np.searchsorted(self._lows, points, side="right") - 1
        deep_first = np.array([e.layer for e in reversed(self.entries)])
        return deep_first[idx]

    def to_dict(self) -> dict:
        return {
            "arch_hash": self.arch_digest,
            "convention": self.convention,
            "D_k": self.dataset_size,
            "scalar_bits": self.scalar_bits,
            "entries": [
                {"layer": e.layer, "theta_low": e.low, "theta_high": None if math.isinf(e.high) else e.high}
                for e in self.entries
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SplitRegionTable":
        entries = tuple(
            RegionEntry(int(e["layer"]), float(e["theta_low"]), INF if e["theta_high"] is None else float(e["theta_high"]))
            for e in d["entries"]
        )
        table = cls(entries, d.get("arch_hash", ""), d.get("D_k", 0.0), int(d.get("scalar_bits", 32)), d.get("convention", ""))
        check_partition(table)
        return table

    def save(self, path: str | Path) -> None:
        _atomic_write_json(Path(path), self.to_dict())

    @classmethod
    def load(cls, path: str | Path) -> "SplitRegionTable":
        return cls.from_dict(json.loads(Path(path).read_text()))


def check_partition(table: SplitRegionTable) -> None:
    es = table.entries
    if not es:
        raise ValueError("empty region table")
    if not math.isinf(es[0].high) or es[-1].low != 0.0:
        raise ValueError("regions must span (0, inf)")
    for prev, cur in zip(es, es[1:]):
        if cur.high != prev.low:
            raise ValueError(f"regions of layers {prev.layer} and {cur.layer} are not contiguous")
    for e in es:
        if not e.low < e.high:
            raise ValueError(f"empty region for layer {e.layer}")


def build_region_table(candidates: CandidateSet, profile: NetworkProfile, dataset_size) -> SplitRegionTable:
    if candidates.stage != "after_step2":
        raise ValueError("region table needs the fully pruned candidate set")
    d = _dataset(dataset_size)
    layers = candidates.layers
    deltas = [float(_tradeoff_exact(profile, a, b, d)) for a, b in _chain(layers)]
    entries = tuple(
        RegionEntry(n, max(deltas[k + 1], 0.0), deltas[k]) for k, n in enumerate(layers)
    )
    table = SplitRegionTable(
        entries,
        arch_digest=profile.arch_digest,
        dataset_size=float(dataset_size),
        scalar_bits=profile.scalar_bits,
        convention=profile.convention.key(),
    )
    check_partition(table)
    return table


@dataclass(frozen=True)
class OfflineResult:
    step1: CandidateSet
    step2: CandidateSet
    table: SplitRegionTable


def offline_phase(profile: NetworkProfile, dataset_size) -> OfflineResult:
    step1 = prune_profile_function(profile, dataset_size)
    step2 = prune_tradeoff(step1, profile, dataset_size)
    return OfflineResult(step1, step2, build_region_table(step2, profile, dataset_size))


def select_cut_layer(table: SplitRegionTable, res: ResourceState) -> int:
    """Online phase: locate the resource operating point in the region table.

    A point exactly on a boundary goes to the shallower layer, the one with
    the smaller client-side load among the tied cuts.
    """
    if not res.server_advantage > 0:
        raise SelectionError(
            "server must be faster than the client (speed ratio > 1) for region-based selection"
        )
    return table.lookup(res.operating_point)


class RegionStore:
    """JSON file holding region tables keyed by architecture, FLOP convention,
    scalar width and dataset size. Writes replace the file atomically."""

    def __init__(self, path: str | Path):
        self.path = Path(path)

    def _read(self) -> dict:
        if not self.path.exists():
            return {}
        return json.loads(self.path.read_text()).get("tables", {})

    def get(self, profile: NetworkProfile, dataset_size) -> SplitRegionTable | None:
        probe = SplitRegionTable((), profile.arch_digest, float(dataset_size), profile.scalar_bits, profile.convention.key())
        raw = self._read().get(probe.key())
        return SplitRegionTable.from_dict(raw) if raw else None

    def put(self, table: SplitRegionTable) -> None:
        tables = self._read()
        tables[table.key()] = table.to_dict()
        _atomic_write_json(self.path, {"tables": tables})

    def get_or_build(self, profile: NetworkProfile, dataset_size) -> SplitRegionTable:
        table = self.get(profile, dataset_size)
        if table is None:
            table = offline_phase(profile, dataset_size).table
            self.put(table)
        return table


def _atomic_write_json(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    with os.fdopen(fd, "w") as fh:
        json.dump(payload, fh, indent=2)
    os.replace(tmp, path)
