"""Per-epoch split-learning delay for a given cut layer and resource state."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .netprofile import NetworkProfile


class ResourceError(ValueError):
    pass


@dataclass(frozen=True)
class ResourceState:
    """Compute speeds (FLOP/s) of client and server and link rate (bit/s)."""

    client_speed: float
    server_speed: float
    rate: float

    def __post_init__(self):
        for name in ("client_speed", "server_speed", "rate"):
            v = getattr(self, name)
            if not v > 0:
                raise ResourceError(f"{name} must be positive, got {v!r}")

    @property
    def speed_ratio(self) -> float:
        return self.server_speed / self.client_speed

    @property
    def server_advantage(self) -> float:
        """``1 - client_speed/server_speed``; positive iff the server is faster."""
        a = self.speed_ratio
        return (a - 1.0) / a

    @property
    def operating_point(self) -> float:
        """Link bits available per client FLOP saved, scaled by the server advantage."""
        return self.server_advantage * self.rate / self.client_speed

    def scaled(self, c: float) -> "ResourceState":
        return ResourceState(self.client_speed * c, self.server_speed * c, self.rate * c)


def resource_for_operating_point(point: float, client_speed: float = 1e9, speed_ratio: float = 10.0) -> ResourceState:
    """Build a resource state whose operating point equals ``point`` (bits/FLOP)."""
    if speed_ratio <= 1:
        raise ResourceError("speed_ratio must exceed 1")
    adv = (speed_ratio - 1.0) / speed_ratio
    return ResourceState(client_speed, client_speed * speed_ratio, point * client_speed / adv)


@dataclass(frozen=True)
class TrainingConfig:
    """Per-client training workload.

    ``batch_mode`` selects how the batch count enters the epoch formula:
    ``"exact"`` uses dataset_size/batch_size as a real number, ``"ceil"``
    rounds up to whole batches (the last batch may be partial).
    """

    dataset_size: int = 9992
    batch_size: int = 100
    n_clients: int = 10
    n_rounds: int = 35
    epochs: int = 1
    batch_mode: str = "exact"

    def __post_init__(self):
        for name in ("dataset_size", "batch_size", "n_clients", "n_rounds", "epochs"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, int) or v < 1:
                raise ValueError(f"{name} must be a positive integer, got {v!r}")
        if self.batch_mode not in ("exact", "ceil"):
            raise ValueError(f"batch_mode must be 'exact' or 'ceil', got {self.batch_mode!r}")

    @property
    def n_batches(self) -> float:
        if self.batch_mode == "ceil":
            return float(math.ceil(self.dataset_size / self.batch_size))
        return self.dataset_size / self.batch_size

    @property
    def effective_dataset_size(self) -> float:
        """Dataset size that makes the epoch formula exact under ``batch_mode``."""
        return self.n_batches * self.batch_size


@dataclass(frozen=True)
class DelayBreakdown:
    cut: int
    client_compute: float  # s per batch
    server_compute: float  # s per batch
    activation_tx: float  # s per batch, forward activations (= backward gradients)
    sync_tx: float  # s per client-side model transfer
    n_batches: float
    total: float  # s per epoch

    def as_row(self) -> dict:
        return {
            "cut": self.cut,
            "tau_k": self.client_compute,
            "tau_s": self.server_compute,
            "t0": self.activation_tx,
            "tp": self.sync_tx,
            "T_epoch": self.total,
        }


def _check_cut(profile: NetworkProfile, cut: int) -> None:
    m = profile.n_layers
    if cut == m:
        raise ValueError(f"cut {cut} is the final layer; the whole model would run on the client")
    if not 1 <= cut < m:
        raise ValueError(f"cut must lie in 1..{m - 1}, got {cut}")


def compute_delays(profile: NetworkProfile, cut: int, res: ResourceState, cfg: TrainingConfig) -> tuple[float, float]:
    """Client and server computation time per batch."""
    _check_cut(profile, cut)
    client = float(profile.cum_flops[cut]) * cfg.batch_size / res.client_speed
    server = float(profile.server_flops(cut)) * cfg.batch_size / res.server_speed
    return client, server


def transmission_delays(profile: NetworkProfile, cut: int, res: ResourceState, cfg: TrainingConfig) -> tuple[float, float]:
    """Per-batch activation transfer time and one-way client-model sync time."""
    _check_cut(profile, cut)
    if not res.rate > 0:
        raise ResourceError("link rate must be positive")
    bits = profile.scalar_bits
    act = float(profile.act_size[cut]) * bits * cfg.batch_size / res.rate
    sync = float(profile.cum_params[cut]) * bits / res.rate
    return act, sync


def epoch_total(n_batches: float, client: float, act: float, server: float, sync: float) -> float:
    return 2.0 * n_batches * (client + act + server) + 2.0 * sync


def epoch_delay(profile: NetworkProfile, cut: int, res: ResourceState, cfg: TrainingConfig) -> DelayBreakdown:
    client, server = compute_delays(profile, cut, res, cfg)
    act, sync = transmission_delays(profile, cut, res, cfg)
    nb = cfg.n_batches
    return DelayBreakdown(cut, client, server, act, sync, nb, epoch_total(nb, client, act, server, sync))


def epoch_delay_matrix(
    profile: NetworkProfile,
    client_speed: np.ndarray,
    server_speed: np.ndarray,
    rate: np.ndarray,
    cfg: TrainingConfig,
) -> np.ndarray:
    """Epoch delay for many resource draws at once.

    Returns an array of shape ``(n_draws, n_layers - 1)`` whose column
    ``j`` holds the delay of cut ``j + 1``. Same arithmetic, term by term,
    as :func:`epoch_delay`.
    """
    m = profile.n_layers
    fk = np.asarray(client_speed, dtype=float)[:, None]
    fs = np.asarray(server_speed, dtype=float)[:, None]
    r = np.asarray(rate, dtype=float)[:, None]
    cuts = slice(1, m)
    b = cfg.batch_size
    bits = profile.scalar_bits
    client = profile.cum_flops[cuts].astype(float) * b / fk
    server = (profile.total_flops - profile.cum_flops[cuts]).astype(float) * b / fs
    act = profile.act_size[cuts].astype(float) * bits * b / r
    sync = profile.cum_params[cuts].astype(float) * bits / r
    return epoch_total(cfg.n_batches, client, act, server, sync)
