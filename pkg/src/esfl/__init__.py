"""Split federated learning: latency models, joint cut-layer/server-compute
allocation, Monte-Carlo round simulation, and a toy split-training engine."""

from .allocation import (
    Allocation,
    AlternateResult,
    OptimizerConfig,
    allocate_server_compute,
    alternate,
    best_cut,
    brute_force_joint,
    equalize_min_max,
    feasible_cuts,
    server_demand_terms,
)
from .comm import ChannelParams, LinkRates, link_rates, shannon_rate
from .errors import (
    AllocationError,
    ConfigError,
    EsflError,
    InfeasibleLinkError,
    InfeasibleUserError,
    ProfileError,
)
from .simulation import (
    ALGORITHMS,
    CutLayerDistribution,
    RoundRecord,
    ScenarioSpec,
    SimOptions,
    SimulationReport,
    convergence_study,
    preset_scenarios,
    run_round,
    run_simulation,
    sample_round_users,
)
from .split_training import (
    DenseNet,
    SplitState,
    ToyUser,
    concatenate,
    esfl_train,
    federated_aggregate,
    init_dense_net,
    loss_and_grads,
    loss_value,
    make_blobs,
    monolithic_update,
    predict,
    split_net,
    split_update,
)
from .timing import (
    EpochBreakdown,
    RoundBreakdown,
    default_fixed_cut,
    epoch_time,
    esfl_round_time,
    fl_round_time,
    round_time,
    sfl_round_time,
    sl_round_time,
)
from .users import UserProfile
from .workload import (
    CutWorkload,
    LayerProfile,
    ModelArchitecture,
    builtin_profiles,
    cut_workload,
    load_architecture,
    load_builtin,
    serialize_architecture,
    total_compute,
)

__version__ = "0.1.0"
