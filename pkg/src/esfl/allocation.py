"""Joint cut-layer and server-compute allocation.

The planner minimizes the straggler's round time over a discrete choice
(each user's cut layer) coupled with a continuous one (how to divide the
server's compute budget among users). The two are solved alternately:

1. Cut pass: with server compute fixed, each user's best cut is an
   independent exhaustive scan over its feasible layers, so one pass costs
   O(S*L) instead of the O(L^S) joint enumeration.
2. Resource pass: with cuts fixed, each user's time is ``a_i/C_i + b_i``
   with constants ``a_i`` (server FLOPs owed to user i) and ``b_i``
   (everything compute-allocation-independent). Minimizing the maximum
   subject to ``sum C_i <= C_total`` equalizes the finishers: the optimum
   satisfies ``C_i = a_i / (K - b_i)`` for a level ``K`` found by monotone
   bisection on the budget equation ``sum a_i/(K - b_i) = C_total``.

Each pass is an exact minimization with the other block fixed, so the
objective is non-increasing across iterations; the loop stops when the
compute vector stalls. Everything is deterministic: ties in the cut scan
break toward the smaller index, and no randomness is used.

By default a user's objective is its full round time (model up/down plus
all local epochs plus aggregation). Setting ``epoch_objective`` restricts
both passes to a single epoch's time, which drops the cut-dependent model
transfer term from the cut decision.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import AllocationError, InfeasibleUserError
from .users import UserProfile
from .workload import ModelArchitecture

_TINY = 1e-300  # denominator floor: guards 0/0 in relative-change tests


@dataclass(frozen=True)
class OptimizerConfig:
    max_iters: int = 50
    stall_tolerance: float = 1e-6       # relative inf-norm change in C treated as stalled
    bisection_tolerance: float = 1e-9   # relative accuracy of the level K
    bisection_max_steps: int = 200
    epoch_objective: bool = False       # optimize one epoch instead of the full round
    t_agg: float = 0.0
    batch_size: int = 1                 # used by the memory feasibility check

    def __post_init__(self) -> None:
        if self.max_iters < 1 or self.bisection_max_steps < 1:
            raise ValueError("iteration limits must be >= 1")
        if self.stall_tolerance <= 0 or self.bisection_tolerance <= 0:
            raise ValueError("tolerances must be positive")


@dataclass(frozen=True)
class Allocation:
    """A complete decision: per-user cut, per-user server compute, objective."""

    cuts: tuple[int, ...]
    server_compute: tuple[float, ...]
    objective: float


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    objective: float
    cuts: tuple[int, ...]
    server_compute: tuple[float, ...]


@dataclass(frozen=True)
class AlternateResult:
    allocation: Allocation
    trace: tuple[IterationRecord, ...]
    iterations: int
    converged: bool


# ---------------------------------------------------------------------------
# Vectorized per-user time evaluation

def _user_arrays(users: Sequence[UserProfile]):
    n = np.array([u.n_samples for u in users], dtype=float)
    c = np.array([u.compute_flops for u in users], dtype=float)
    bu = np.array([u.rates.up for u in users], dtype=float)
    bd = np.array([u.rates.down for u in users], dtype=float)
    eps = np.array([u.epochs for u in users], dtype=float)
    return n, c, bu, bd, eps


def feasibility_mask(
    users: Sequence[UserProfile],
    arch: ModelArchitecture,
    batch: int = 1,
) -> np.ndarray:
    """Boolean (S, L) mask of cuts satisfying storage and memory limits."""
    model_b = arch.model_bytes_by_cut
    mem_b = model_b + batch * arch.cum_act_bytes_by_cut
    s = np.array([u.storage_bytes for u in users], dtype=float)
    m = np.array([u.memory_bytes for u in users], dtype=float)
    return (model_b[None, :] <= s[:, None]) & (mem_b[None, :] <= m[:, None])


def _guarded_div(numerator: np.ndarray, denominator: np.ndarray) -> np.ndarray:
    """numerator / denominator with 0/x = 0 even for x = 0; +inf otherwise."""
    with np.errstate(divide="ignore", invalid="ignore"):
        out = numerator / denominator
    return np.where(numerator == 0.0, 0.0, out)


def _time_matrix(
    users: Sequence[UserProfile],
    arch: ModelArchitecture,
    server_compute: np.ndarray,
    cfg: OptimizerConfig,
) -> np.ndarray:
    """(S, L) matrix of per-user objective times; infeasible cuts are +inf."""
    n, c, bu, bd, eps = _user_arrays(users)
    w_c = arch.user_flops_by_cut[None, :]
    act = arch.act_bytes_by_cut[None, :]
    model = arch.model_bytes_by_cut[None, :]
    share = arch.total_compute_per_sample - arch.user_flops_by_cut  # (L,)

    n_ = n[:, None]
    # rates may legitimately be zero (dead link): such cuts price to +inf
    # unless they move no bytes; zero server work always costs nothing
    epoch = (
        w_c * n_ / c[:, None]
        + _guarded_div(act * n_, bu[:, None])
        + _guarded_div(share[None, :] * n_, server_compute[:, None])
        + _guarded_div(act * n_, bd[:, None])
    )
    if cfg.epoch_objective:
        times = epoch
    else:
        times = (
            _guarded_div(model, bu[:, None])
            + _guarded_div(model, bd[:, None])
            + eps[:, None] * epoch
            + cfg.t_agg
        )
    mask = feasibility_mask(users, arch, cfg.batch_size)
    return np.where(mask, times, np.inf)


def feasible_cuts(
    user: UserProfile,
    arch: ModelArchitecture,
    batch: int = 1,
) -> list[int]:
    """All cut indices the user can hold, 1-based; empty set is an error."""
    mask = feasibility_mask([user], arch, batch)[0]
    cuts = [int(i) + 1 for i in np.nonzero(mask)[0]]
    if not cuts:
        raise InfeasibleUserError(
            f"user {user.user_id}: no cut satisfies storage/memory limits"
        )
    return cuts


def best_cut(
    user: UserProfile,
    arch: ModelArchitecture,
    server_flops: float,
    cfg: OptimizerConfig | None = None,
) -> int:
    """Exhaustive scan for the user's fastest feasible cut given its server share.

    Ties break toward the smaller index. A zero server share restricts the
    scan to cuts with no server-side work.
    """
    cfg = cfg or OptimizerConfig()
    times = _time_matrix([user], arch, np.array([server_flops], dtype=float), cfg)[0]
    if not np.isfinite(times).any():
        if feasibility_mask([user], arch, cfg.batch_size)[0].any():
            raise AllocationError(
                f"user {user.user_id}: no feasible cut is affordable with "
                f"server compute {server_flops}"
            )
        raise InfeasibleUserError(
            f"user {user.user_id}: no cut satisfies storage/memory limits"
        )
    return int(np.argmin(times)) + 1


def server_demand_terms(
    users: Sequence[UserProfile],
    cuts: Sequence[int],
    arch: ModelArchitecture,
    cfg: OptimizerConfig | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Constants (a, b) with per-user time a_i / C_i + b_i for fixed cuts."""
    cfg = cfg or OptimizerConfig()
    n, c, bu, bd, eps = _user_arrays(users)
    idx = np.asarray(cuts, dtype=int) - 1
    if idx.min() < 0 or idx.max() >= arch.num_layers:
        raise ValueError("cut index out of range")
    w_c = arch.user_flops_by_cut[idx]
    act = arch.act_bytes_by_cut[idx]
    model = arch.model_bytes_by_cut[idx]
    share = arch.total_compute_per_sample - w_c

    epoch_fixed = (w_c * n / c + _guarded_div(act * n, bu)
                   + _guarded_div(act * n, bd))
    if cfg.epoch_objective:
        a = share * n
        b = epoch_fixed
    else:
        a = eps * share * n
        b = (_guarded_div(model, bu) + _guarded_div(model, bd)
             + eps * epoch_fixed + cfg.t_agg)
    return a, b


def equalize_min_max(
    a: np.ndarray,
    b: np.ndarray,
    c_total: float,
    tol: float = 1e-9,
    max_steps: int = 200,
    upper_hint: float | None = None,
) -> tuple[np.ndarray, float]:
    """Minimize max_i (a_i/C_i + b_i) subject to sum C_i <= C_total, C_i >= 0.

    Returns the compute vector and the achieved objective. Users with
    a_i = 0 need no compute; if any a_i > 0 the budget is fully spent and
    every funded user finishes at the common level. The bisection bracket
    always exists: demand sum a_i/(K - b_i) runs from +inf (K just above
    the pole max b_i) down to 0. The bracket width is driven below ``tol``
    relative to the level's offset above the pole, which bounds the budget
    shortfall by about ``tol`` in every regime.

    ``upper_hint`` may pass the objective of any known-feasible allocation;
    the level never exceeds it, so callers iterating on (a, b) keep a
    non-increasing objective regardless of bisection resolution.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("a and b must be 1-d arrays of equal length")
    if c_total <= 0:
        raise ValueError("compute budget must be strictly positive")
    if np.any(a < 0) or np.any(b < 0):
        raise ValueError("demand terms must be >= 0")
    if not (np.isfinite(a).all() and np.isfinite(b).all()):
        raise ValueError("demand terms must be finite (dead link with traffic?)")

    active = a > 0
    if not active.any():
        return np.zeros_like(a), float(b.max(initial=0.0))

    aa = a[active]
    ba = b[active]
    pole = float(ba.max())
    gap = pole - ba  # >= 0, exact data differences (no cancellation)
    # bisect the level's offset d above the pole, K = pole + d; working in
    # d keeps full precision even when d is tiny relative to the pole
    d_lo = 0.0
    d_hi = float(aa.sum()) / c_total  # demand(d_hi) <= c_total by construction
    if upper_hint is not None and 0.0 < upper_hint - pole < d_hi:
        d_hi = upper_hint - pole
    for _ in range(max_steps):
        mid = 0.5 * (d_lo + d_hi)
        if not d_lo < mid < d_hi:
            break  # bracket exhausted at float resolution
        if float(np.sum(aa / (mid + gap))) > c_total:
            d_lo = mid
        else:
            d_hi = mid
        if d_hi - d_lo <= tol * d_hi:
            break

    # feasible end of the bracket: demand(d_hi) <= c_total
    compute = np.zeros_like(a)
    compute[active] = aa / (d_hi + gap)
    level = pole + d_hi
    objective = max(level, float(b[~active].max(initial=-math.inf)))
    return compute, float(objective)


def allocate_server_compute(
    users: Sequence[UserProfile],
    cuts: Sequence[int],
    c_total: float,
    arch: ModelArchitecture,
    cfg: OptimizerConfig | None = None,
    upper_hint: float | None = None,
) -> tuple[np.ndarray, float]:
    """Optimal server-compute division for fixed cuts; returns (C, objective)."""
    cfg = cfg or OptimizerConfig()
    a, b = server_demand_terms(users, cuts, arch, cfg)
    return equalize_min_max(
        a, b, c_total, cfg.bisection_tolerance, cfg.bisection_max_steps, upper_hint
    )


def alternate(
    users: Sequence[UserProfile],
    arch: ModelArchitecture,
    c_total: float,
    cfg: OptimizerConfig | None = None,
) -> AlternateResult:
    """Alternate cut and resource passes from an equal compute split.

    Stops when the compute vector's relative change drops below the stall
    tolerance or after ``max_iters`` passes; returns the best allocation
    seen with the full iteration trace. ``converged`` is False when the
    iteration cap was hit first.
    """
    cfg = cfg or OptimizerConfig()
    if not users:
        raise ValueError("at least one user is required")
    if c_total <= 0:
        raise ValueError("compute budget must be strictly positive")
    if not feasibility_mask(users, arch, cfg.batch_size).any(axis=1).all():
        bad = [
            u.user_id
            for u, ok in zip(users, feasibility_mask(users, arch, cfg.batch_size).any(axis=1))
            if not ok
        ]
        raise InfeasibleUserError(f"users without any feasible cut: {bad}")

    S = len(users)
    compute = np.full(S, c_total / S)
    prev = compute.copy()
    trace: list[IterationRecord] = []
    best: Allocation | None = None
    converged = False

    for it in range(1, cfg.max_iters + 1):
        times = _time_matrix(users, arch, compute, cfg)
        choice = np.argmin(times, axis=1)
        best_times = times[np.arange(S), choice]
        if not np.isfinite(best_times).all():
            bad = [users[i].user_id for i in np.nonzero(~np.isfinite(best_times))[0]]
            raise AllocationError(
                f"users {bad}: every feasible cut prices to infinity "
                f"(dead link with unavoidable traffic?)"
            )
        cuts = tuple(int(i) + 1 for i in choice)
        # the incoming allocation achieves this much, so the level can't
        # need to exceed it; passing it keeps the trace non-increasing
        reachable = float(best_times.max())
        compute, objective = allocate_server_compute(
            users, cuts, c_total, arch, cfg, upper_hint=reachable
        )
        trace.append(IterationRecord(it, objective, cuts, tuple(compute)))
        if best is None or objective < best.objective:
            best = Allocation(cuts, tuple(compute), objective)
        rel = np.abs(compute - prev) / np.maximum(
            np.maximum(np.abs(compute), np.abs(prev)), _TINY
        )
        # 0 -> 0 is no change even though the relative form is 0/0
        rel = np.where((compute == 0) & (prev == 0), 0.0, rel)
        prev = compute.copy()
        if float(rel.max(initial=0.0)) < cfg.stall_tolerance:
            converged = True
            break

    assert best is not None
    return AlternateResult(
        allocation=best,
        trace=tuple(trace),
        iterations=len(trace),
        converged=converged,
    )


def brute_force_joint(
    users: Sequence[UserProfile],
    arch: ModelArchitecture,
    c_total: float,
    cfg: OptimizerConfig | None = None,
    *,
    max_users: int = 3,
    max_layers: int = 6,
) -> Allocation:
    """Exact joint optimum by enumerating every cut tuple.

    Only for oracle-sized instances: the resource subproblem is convex and
    solved exactly per tuple, so exhaustiveness over cuts gives the global
    optimum. Larger instances are refused.
    """
    cfg = cfg or OptimizerConfig()
    if len(users) > max_users or arch.num_layers > max_layers:
        raise ValueError(
            f"instance too large for enumeration: "
            f"{len(users)} users x {arch.num_layers} layers "
            f"(limits {max_users} x {max_layers})"
        )
    per_user = [feasible_cuts(u, arch, cfg.batch_size) for u in users]
    best: Allocation | None = None
    for cuts in itertools.product(*per_user):
        compute, objective = allocate_server_compute(users, cuts, c_total, arch, cfg)
        if best is None or objective < best.objective:
            best = Allocation(tuple(cuts), tuple(compute), objective)
    assert best is not None
    return best
