"""Per-epoch and per-round latency for split training and its baselines.

One split-training epoch for a user is strictly sequential: device forward
compute, activation upload, server compute (forward remainder plus the full
backward pass share), activation-gradient download. A round wraps the
epochs with device-model upload/download and a fixed aggregation term.

Round-time policies:

* ``esfl_round_time`` - per-user cuts and server compute from an
  allocation; the round ends when the slowest user (straggler) finishes.
* ``fl_round_time``   - every user trains the full model locally (cut at
  the last layer, no server compute).
* ``sfl_round_time``  - one shared cut layer, server compute split
  equally; straggler paced, like ESFL.
* ``sl_round_time``   - users train sequentially through the server one
  at a time with the full server compute, so the round is a sum.

All functions are pure; inputs are immutable profiles.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Sequence

from .comm import LinkRates
from .errors import AllocationError, InfeasibleLinkError, InfeasibleUserError
from .users import UserProfile
from .workload import CutWorkload, ModelArchitecture, cut_workload

if TYPE_CHECKING:  # pragma: no cover
    from .allocation import Allocation


@dataclass(frozen=True)
class EpochBreakdown:
    """The four sequential parts of one split-training epoch, in seconds."""

    t_c: float  # device compute
    t_b: float  # activation upload
    t_C: float  # server compute
    t_B: float  # activation-gradient download

    @property
    def total(self) -> float:
        return self.t_c + self.t_b + self.t_C + self.t_B


@dataclass(frozen=True)
class RoundBreakdown:
    """One user's full round: model movement, epochs, aggregation."""

    t_up: float                            # device-side model upload
    t_down: float                          # device-side model download
    epochs: tuple[EpochBreakdown, ...]     # identical within a round
    t_agg: float

    @property
    def total(self) -> float:
        return self.t_up + self.t_down + sum(e.total for e in self.epochs) + self.t_agg

    @property
    def communication(self) -> float:
        """Model movement plus activation traffic across all epochs."""
        return self.t_up + self.t_down + sum(e.t_b + e.t_B for e in self.epochs)


def epoch_time(
    n_samples: float,
    compute_flops: float,
    rates: LinkRates,
    cw: CutWorkload,
    total_flops: float,
    server_flops: float,
) -> EpochBreakdown:
    """One epoch under a given cut and server-compute assignment.

    ``total_flops`` is the whole network's training compute per sample;
    the server processes ``total_flops - cw.user_compute`` per sample.
    """
    if compute_flops <= 0:
        raise AllocationError("device compute must be strictly positive")
    server_share = total_flops - cw.user_compute
    if server_share < 0:
        raise AllocationError("cut workload exceeds the network's total compute")

    t_c = cw.user_compute * n_samples / compute_flops
    traffic = cw.act_bytes * n_samples
    if traffic > 0 and (rates.up == 0 or rates.down == 0):
        raise InfeasibleLinkError("activation traffic scheduled over a zero-rate link")
    t_b = traffic / rates.up if traffic > 0 else 0.0
    t_B = traffic / rates.down if traffic > 0 else 0.0
    if server_share == 0:
        t_C = 0.0
    else:
        if server_flops <= 0:
            raise AllocationError(
                "server compute must be positive when the cut leaves server work"
            )
        t_C = server_share * n_samples / server_flops
    return EpochBreakdown(t_c=t_c, t_b=t_b, t_C=t_C, t_B=t_B)


def round_time(
    user: UserProfile,
    arch: ModelArchitecture,
    l: int,
    server_flops: float,
    t_agg: float = 0.0,
) -> RoundBreakdown:
    """One user's round with cut ``l`` and the given server compute."""
    cw = cut_workload(arch, l)
    if cw.model_bytes > user.storage_bytes:
        raise InfeasibleUserError(
            f"user {user.user_id}: cut {l} model exceeds storage"
        )
    if cw.model_bytes > 0 and (user.rates.up == 0 or user.rates.down == 0):
        raise InfeasibleLinkError("model transfer scheduled over a zero-rate link")
    t_up = cw.model_bytes / user.rates.up if cw.model_bytes > 0 else 0.0
    t_down = cw.model_bytes / user.rates.down if cw.model_bytes > 0 else 0.0
    epoch = epoch_time(
        user.n_samples,
        user.compute_flops,
        user.rates,
        cw,
        arch.total_compute_per_sample,
        server_flops,
    )
    return RoundBreakdown(
        t_up=t_up,
        t_down=t_down,
        epochs=(epoch,) * user.epochs,
        t_agg=t_agg,
    )


def esfl_round_time(
    alloc: "Allocation",
    users: Sequence[UserProfile],
    arch: ModelArchitecture,
    t_agg: float = 0.0,
) -> float:
    """Synchronous round time under a per-user allocation (straggler max)."""
    if len(alloc.cuts) != len(users):
        raise AllocationError("allocation does not cover every user")
    totals = [
        round_time(u, arch, l, c, t_agg).total
        for u, l, c in zip(users, alloc.cuts, alloc.server_compute)
    ]
    return max(totals)


def fl_round_time(
    users: Sequence[UserProfile],
    arch: ModelArchitecture,
    t_agg: float = 0.0,
) -> float:
    """Fully local training: cut at the last layer, no server compute."""
    L = arch.num_layers
    return max(round_time(u, arch, L, 0.0, t_agg).total for u in users)


def sfl_round_time(
    users: Sequence[UserProfile],
    arch: ModelArchitecture,
    fixed_l: int,
    server_total_flops: float,
    t_agg: float = 0.0,
) -> float:
    """Shared cut layer with the server budget split equally."""
    share = server_total_flops / len(users)
    return max(round_time(u, arch, fixed_l, share, t_agg).total for u in users)


def sl_round_time(
    users: Sequence[UserProfile],
    arch: ModelArchitecture,
    fixed_l: int,
    server_total_flops: float,
    t_agg: float = 0.0,
) -> float:
    """Sequential relay: each user in turn gets the whole server."""
    per_user = [
        round_time(u, arch, fixed_l, server_total_flops, 0.0).total for u in users
    ]
    return sum(per_user) + t_agg


def default_fixed_cut(
    users: Sequence[UserProfile],
    arch: ModelArchitecture,
    batch: int = 1,
) -> int:
    """Smallest cut index whose storage/memory needs every user can meet."""
    for l in range(1, arch.num_layers + 1):
        cw = cut_workload(arch, l, batch)
        if all(
            cw.model_bytes <= u.storage_bytes and cw.mem_bytes <= u.memory_bytes
            for u in users
        ):
            return l
    raise InfeasibleUserError("no cut layer is feasible for every user")
