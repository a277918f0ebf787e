"""Reference selectors: exhaustive search over every cut and a fixed-layer baseline."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .delaymodel import DelayBreakdown, ResourceState, TrainingConfig, epoch_delay, epoch_delay_matrix
from .netprofile import NetworkProfile


@dataclass(frozen=True)
class SelectorKind:
    kind: str  # "ocla" | "exhaustive" | "naive"
    fixed_layer: int | None = None

    @classmethod
    def parse(cls, text: str) -> "SelectorKind":
        """Parse ``ocla``, ``exhaustive`` or ``naive:<layer>``."""
        name, _, arg = text.partition(":")
        if name in ("ocla", "exhaustive") and not arg:
            return cls(name)
        if name == "naive" and arg:
            try:
                return cls("naive", int(arg))
            except ValueError:
                pass
        raise ValueError(f"unknown selector {text!r}; expected ocla, exhaustive or naive:<layer>")

    def __str__(self) -> str:
        return f"naive:{self.fixed_layer}" if self.kind == "naive" else self.kind


def exhaustive_optimal(profile: NetworkProfile, res: ResourceState, cfg: TrainingConfig) -> tuple[int, DelayBreakdown]:
    """Evaluate every cut 1..M-1 and return the fastest.

    Ties in epoch delay go to the cut with the smaller client-side load;
    because that load is cumulative, this is the shallowest tied cut.
    """
    best = None
    for cut in range(1, profile.n_layers):
        b = epoch_delay(profile, cut, res, cfg)
        if best is None or b.total < best.total:
            best = b
    return best.cut, best


def exhaustive_optimal_many(profile, client_speed, server_speed, rate, cfg: TrainingConfig) -> np.ndarray:
    """Vectorised :func:`exhaustive_optimal` (np.argmin keeps the first minimum)."""
    delays = epoch_delay_matrix(profile, client_speed, server_speed, rate, cfg)
    return np.argmin(delays, axis=1) + 1


def naive_select(kind: SelectorKind, profile: NetworkProfile) -> int:
    if kind.kind != "naive":
        raise ValueError("naive_select needs a naive selector")
    k = kind.fixed_layer
    if k is None or not 1 <= k < profile.n_layers:
        raise ValueError(f"fixed layer must lie in 1..{profile.n_layers - 1}, got {k}")
    return k
