"""Monte-Carlo round simulator comparing ESFL with FL, SL, and SFL.

A scenario fixes the option lists that heterogeneous users draw from
(link rate in KB/s, device compute in TFLOPs, local sample count) plus the
population size, per-round selection count, epochs, and the server budget.
Each simulated round selects users uniformly at random, draws their
resources, plans ESFL with the alternating optimizer, prices the baselines
on the same users (paired comparison), and records totals, communication
components, and the ESFL cut choices.

Every random draw flows from the scenario seed through one generator, so a
(scenario, seed) pair reproduces bit-identical reports.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .allocation import Allocation, AlternateResult, OptimizerConfig, alternate
from .comm import LinkRates
from .errors import ConfigError
from .timing import default_fixed_cut, round_time
from .users import UserProfile
from .workload import ModelArchitecture

ALGORITHMS = ("esfl", "sfl", "fl", "sl")

TFLOPS = 1e12


@dataclass(frozen=True)
class ScenarioSpec:
    """Resource options and run shape for one simulated deployment."""

    name: str
    comm_options: tuple[float, ...]   # symmetric link rates, KB/s
    comp_options: tuple[float, ...]   # device compute, TFLOPs
    data_options: tuple[float, ...]   # local samples per user
    population: int = 100
    selected_per_round: int = 10
    rounds: int = 100
    epochs: int = 5
    server_tflops: float = 130.0
    seed: int = 0

    def __post_init__(self) -> None:
        if not (self.comm_options and self.comp_options and self.data_options):
            raise ConfigError("option lists must be nonempty")
        if self.selected_per_round > self.population:
            raise ConfigError("selected_per_round cannot exceed the population")
        if self.selected_per_round < 1 or self.rounds < 1:
            raise ConfigError("selected_per_round and rounds must be >= 1")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if self.server_tflops <= 0:
            raise ConfigError("server_tflops must be positive")


def preset_scenarios() -> dict[str, ScenarioSpec]:
    """The eight stock scenarios.

    BP/PR/RP/BR vary how rich communication and compute are (identical
    data volumes); SH/SL/LS/LH keep option means fixed and vary how spread
    out the options are, with heterogeneous data volumes.
    """
    poor_comm = (10.0, 15.0, 20.0, 25.0)
    rich_comm = (50.0, 75.0, 100.0, 125.0)
    poor_comp = (1.3, 1.95, 2.6, 3.25)
    rich_comp = (6.5, 9.75, 13.0, 16.25)
    wide_comm = (5.0, 10.0, 20.0, 35.0)
    wide_comp = (0.65, 1.3, 2.6, 4.55)
    het_data = (200.0, 400.0, 600.0, 800.0)
    iid_data = (500.0,)

    def spec(name, comm, comp, data):
        return ScenarioSpec(name=name, comm_options=comm, comp_options=comp,
                            data_options=data)

    return {
        "BP": spec("BP", poor_comm, poor_comp, iid_data),
        "PR": spec("PR", poor_comm, rich_comp, iid_data),
        "RP": spec("RP", rich_comm, poor_comp, iid_data),
        "BR": spec("BR", rich_comm, rich_comp, iid_data),
        "SH": spec("SH", poor_comm, poor_comp, het_data),
        "SL": spec("SL", poor_comm, wide_comp, het_data),
        "LS": spec("LS", wide_comm, poor_comp, het_data),
        "LH": spec("LH", wide_comm, wide_comp, het_data),
    }


@dataclass(frozen=True)
class SimOptions:
    """Knobs shared by all algorithms within a run."""

    t_agg: float = 0.0
    kb_bytes: float = 1024.0
    sticky_resources: bool = False   # draw resources once per user, not per round
    fixed_cut: int | None = None     # SFL/SL cut; default: first universally feasible
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)

    def resolved_optimizer(self) -> OptimizerConfig:
        return replace(self.optimizer, t_agg=self.t_agg)


@dataclass(frozen=True)
class RoundRecord:
    index: int
    user_ids: tuple[int, ...]
    times: dict[str, float]
    comm_times: dict[str, float]
    esfl_allocation: Allocation | None
    esfl_iterations: int | None
    esfl_converged: bool | None


@dataclass(frozen=True)
class CutLayerDistribution:
    """Empirical cut frequencies per population user and pooled."""

    user_ids: tuple[int, ...]
    matrix: np.ndarray          # (users, L); each row sums to 1
    pooled: np.ndarray          # (L,); sums to 1

    def entropies(self) -> np.ndarray:
        """Per-user cut entropy in bits."""
        p = self.matrix
        with np.errstate(divide="ignore", invalid="ignore"):
            terms = np.where(p > 0, -p * np.log2(p), 0.0)
        return terms.sum(axis=1)

    def entropy_variance(self) -> float:
        ent = self.entropies()
        return float(np.var(ent)) if ent.size else 0.0


@dataclass(frozen=True)
class SimulationReport:
    scenario: ScenarioSpec
    arch_name: str
    algorithms: tuple[str, ...]
    records: tuple[RoundRecord, ...]
    mean_round_time: dict[str, float]
    total_time: dict[str, float]
    mean_comm_time: dict[str, float]
    cut_distribution: CutLayerDistribution | None
    convergence: dict[str, float]

    def to_dict(self) -> dict:
        """JSON-ready structure with deterministic content."""
        out = {
            "scenario": {
                "name": self.scenario.name,
                "comm_options_kbps": list(self.scenario.comm_options),
                "comp_options_tflops": list(self.scenario.comp_options),
                "data_options": list(self.scenario.data_options),
                "population": self.scenario.population,
                "selected_per_round": self.scenario.selected_per_round,
                "rounds": self.scenario.rounds,
                "epochs": self.scenario.epochs,
                "server_tflops": self.scenario.server_tflops,
                "seed": self.scenario.seed,
            },
            "architecture": self.arch_name,
            "algorithms": list(self.algorithms),
            "mean_round_time_s": self.mean_round_time,
            "total_time_s": self.total_time,
            "mean_communication_time_s": self.mean_comm_time,
            "convergence": self.convergence,
            "records": [
                {
                    "round": r.index,
                    "user_ids": list(r.user_ids),
                    "times_s": r.times,
                    "communication_times_s": r.comm_times,
                    "esfl_cuts": list(r.esfl_allocation.cuts) if r.esfl_allocation else None,
                    "esfl_server_compute": (
                        list(r.esfl_allocation.server_compute)
                        if r.esfl_allocation
                        else None
                    ),
                    "esfl_iterations": r.esfl_iterations,
                }
                for r in self.records
            ],
        }
        if self.cut_distribution is not None:
            out["cut_distribution"] = {
                "user_ids": list(self.cut_distribution.user_ids),
                "per_user": self.cut_distribution.matrix.tolist(),
                "pooled": self.cut_distribution.pooled.tolist(),
                "entropy_variance_bits": self.cut_distribution.entropy_variance(),
            }
        return out


def sample_population_data(spec: ScenarioSpec, rng: np.random.Generator) -> np.ndarray:
    """Per-user sample counts, fixed for the whole run."""
    return rng.choice(np.asarray(spec.data_options, dtype=float), size=spec.population)


def sample_population_resources(
    spec: ScenarioSpec, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Per-user (rate KB/s, compute TFLOPs) draws for sticky-resource mode."""
    comm = rng.choice(np.asarray(spec.comm_options, dtype=float), size=spec.population)
    comp = rng.choice(np.asarray(spec.comp_options, dtype=float), size=spec.population)
    return comm, comp


def sample_round_users(
    spec: ScenarioSpec,
    rng: np.random.Generator,
    population_data: np.ndarray,
    sticky: tuple[np.ndarray, np.ndarray] | None = None,
    kb_bytes: float = 1024.0,
) -> list[UserProfile]:
    """Select users uniformly without replacement and draw their resources."""
    selected = np.sort(rng.choice(spec.population, size=spec.selected_per_round,
                                  replace=False))
    if sticky is not None:
        comm_kb = sticky[0][selected]
        comp_tf = sticky[1][selected]
    else:
        comm_kb = rng.choice(np.asarray(spec.comm_options, dtype=float),
                             size=spec.selected_per_round)
        comp_tf = rng.choice(np.asarray(spec.comp_options, dtype=float),
                             size=spec.selected_per_round)
    return [
        UserProfile(
            user_id=int(uid),
            n_samples=float(population_data[uid]),
            compute_flops=float(comp_tf[k]) * TFLOPS,
            rates=LinkRates(up=float(comm_kb[k]) * kb_bytes,
                            down=float(comm_kb[k]) * kb_bytes),
            epochs=spec.epochs,
        )
        for k, uid in enumerate(selected)
    ]


def _esfl_record(
    users: Sequence[UserProfile],
    arch: ModelArchitecture,
    c_total: float,
    options: SimOptions,
) -> tuple[float, float, AlternateResult]:
    result = alternate(users, arch, c_total, options.resolved_optimizer())
    alloc = result.allocation
    breakdowns = [
        round_time(u, arch, l, c, options.t_agg)
        for u, l, c in zip(users, alloc.cuts, alloc.server_compute)
    ]
    totals = [bd.total for bd in breakdowns]
    straggler = int(np.argmax(totals))
    return totals[straggler], breakdowns[straggler].communication, result


def run_round(
    users: Sequence[UserProfile],
    algorithms: Sequence[str],
    arch: ModelArchitecture,
    spec: ScenarioSpec,
    options: SimOptions | None = None,
    index: int = 0,
) -> RoundRecord:
    """Price one round for the requested algorithms on a shared user draw.

    The recorded communication time follows the straggler for the
    synchronous algorithms (model up/down plus activation traffic; model
    up/down only for FL, which moves no activations) and the per-user sum
    for sequential SL.
    """
    options = options or SimOptions()
    unknown = set(algorithms) - set(ALGORITHMS)
    if unknown:
        raise ConfigError(f"unknown algorithms: {sorted(unknown)}")
    c_total = spec.server_tflops * TFLOPS
    fixed = options.fixed_cut or default_fixed_cut(
        users, arch, options.optimizer.batch_size
    )

    times: dict[str, float] = {}
    comms: dict[str, float] = {}
    alloc = iters = converged = None
    for algo in algorithms:
        if algo == "esfl":
            total, comm, result = _esfl_record(users, arch, c_total, options)
            alloc = result.allocation
            iters = result.iterations
            converged = result.converged
        elif algo == "fl":
            bds = [round_time(u, arch, arch.num_layers, 0.0, options.t_agg)
                   for u in users]
            totals = [bd.total for bd in bds]
            straggler = int(np.argmax(totals))
            total = totals[straggler]
            comm = bds[straggler].t_up + bds[straggler].t_down
        elif algo == "sfl":
            share = c_total / len(users)
            bds = [round_time(u, arch, fixed, share, options.t_agg) for u in users]
            totals = [bd.total for bd in bds]
            straggler = int(np.argmax(totals))
            total = totals[straggler]
            comm = bds[straggler].communication
        else:  # sl
            bds = [round_time(u, arch, fixed, c_total, 0.0) for u in users]
            total = sum(bd.total for bd in bds) + options.t_agg
            comm = sum(bd.communication for bd in bds)
        times[algo] = total
        comms[algo] = comm

    return RoundRecord(
        index=index,
        user_ids=tuple(u.user_id for u in users),
        times=times,
        comm_times=comms,
        esfl_allocation=alloc,
        esfl_iterations=iters,
        esfl_converged=converged,
    )


def run_simulation(
    spec: ScenarioSpec,
    algorithms: Sequence[str],
    arch: ModelArchitecture,
    options: SimOptions | None = None,
) -> SimulationReport:
    """Run all rounds of a scenario and aggregate the records."""
    options = options or SimOptions()
    algorithms = tuple(algorithms)
    rng = np.random.default_rng(spec.seed)
    population_data = sample_population_data(spec, rng)
    sticky = (
        sample_population_resources(spec, rng) if options.sticky_resources else None
    )

    records = []
    for r in range(spec.rounds):
        users = sample_round_users(spec, rng, population_data, sticky,
                                   options.kb_bytes)
        records.append(
            run_round(users, algorithms, arch, spec, options, index=r)
        )

    mean_time = {
        a: float(np.mean([rec.times[a] for rec in records])) for a in algorithms
    }
    total_time = {
        a: float(np.sum([rec.times[a] for rec in records])) for a in algorithms
    }
    mean_comm = {
        a: float(np.mean([rec.comm_times[a] for rec in records])) for a in algorithms
    }

    dist = None
    if "esfl" in algorithms:
        dist = _cut_distribution(records, arch.num_layers)
    convergence = {}
    if "esfl" in algorithms:
        its = [rec.esfl_iterations for rec in records]
        convergence = {
            "mean_iterations": float(np.mean(its)),
            "max_iterations": float(np.max(its)),
            "all_converged": bool(all(rec.esfl_converged for rec in records)),
        }

    return SimulationReport(
        scenario=spec,
        arch_name=arch.name,
        algorithms=algorithms,
        records=tuple(records),
        mean_round_time=mean_time,
        total_time=total_time,
        mean_comm_time=mean_comm,
        cut_distribution=dist,
        convergence=convergence,
    )


def _cut_distribution(records: Sequence[RoundRecord], n_layers: int) -> CutLayerDistribution:
    counts: dict[int, np.ndarray] = {}
    for rec in records:
        if rec.esfl_allocation is None:
            continue
        for uid, cut in zip(rec.user_ids, rec.esfl_allocation.cuts):
            row = counts.setdefault(uid, np.zeros(n_layers))
            row[cut - 1] += 1
    user_ids = tuple(sorted(counts))
    matrix = np.array([counts[uid] / counts[uid].sum() for uid in user_ids])
    pooled_counts = np.sum([counts[uid] for uid in user_ids], axis=0)
    pooled = pooled_counts / pooled_counts.sum()
    return CutLayerDistribution(user_ids=user_ids, matrix=matrix, pooled=pooled)


@dataclass(frozen=True)
class ConvergenceCell:
    scenario: str
    scale: int
    iterations: tuple[int, ...]   # one entry per repetition

    @property
    def max_iterations(self) -> int:
        return max(self.iterations)


def convergence_study(
    arch: ModelArchitecture,
    scenarios: Sequence[ScenarioSpec] | None = None,
    scales: Sequence[int] = (100, 200, 400, 800),
    repetitions: int = 3,
    options: SimOptions | None = None,
    seed: int = 0,
) -> list[ConvergenceCell]:
    """Iterations to the optimizer's fixed point across user scales.

    For each (scenario, scale) cell the optimizer runs on ``scale`` freshly
    drawn users, ``repetitions`` times.
    """
    options = options or SimOptions()
    if scenarios is None:
        presets = preset_scenarios()
        scenarios = [presets[k] for k in ("BP", "PR", "RP", "BR")]
    cells = []
    for s_idx, spec in enumerate(scenarios):
        for scale in scales:
            rng = np.random.default_rng([seed, s_idx, scale])
            sized = replace(spec, population=scale, selected_per_round=scale)
            population_data = sample_population_data(sized, rng)
            its = []
            for _ in range(repetitions):
                users = sample_round_users(sized, rng, population_data,
                                           None, options.kb_bytes)
                result = alternate(users, arch, sized.server_tflops * TFLOPS,
                                   options.resolved_optimizer())
                its.append(result.iterations)
            cells.append(ConvergenceCell(spec.name, scale, tuple(its)))
    return cells
