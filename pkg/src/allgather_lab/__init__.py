"""allgather-lab: executable communication schedules and a Hockney cost lab.

Five allgather algorithms (ring, neighbor exchange, recursive doubling,
bruck, sparbit) plus a binomial broadcast are expressed as explicit
per-step schedules, run in a deterministic simulator against a brute-force
oracle, and priced under a topology-aware alpha-beta cost model.
"""

from .core import (
    Block,
    CommSchedule,
    Direction,
    MessageAction,
    ProcessGroup,
    Rank,
    Step,
    block_payload,
    blocks_received_per_rank,
    blocks_sent_per_rank,
    make_block,
    make_group,
    validate_schedule,
)
from .schedules import (
    ALLGATHER_ALGORITHMS,
    AlgorithmId,
    NonPowerOfTwoError,
    OddProcessCountError,
    SparbitPlan,
    binomial_broadcast_schedule,
    bruck_schedule,
    build_schedule,
    neighbor_exchange_schedule,
    recursive_doubling_schedule,
    ring_schedule,
    skip_reason,
    sparbit_ignore_steps,
    sparbit_plan,
    sparbit_schedule,
)
from .executor import (
    DoubleWriteError,
    ExecutionTimeoutError,
    ExecutionTrace,
    GatherState,
    ScheduleError,
    SendFromEmptySlotError,
    execute,
    execute_concurrent,
    oracle_allgather,
    verify_final_state,
)
from .netmodel import (
    ConfigError,
    CostProfile,
    CostReport,
    HockneyParams,
    InsufficientSlotsError,
    RankMapping,
    Topology,
    cervino_topology,
    closed_form_cost,
    cost_profile,
    explicit_mapping,
    load_topology,
    locality_profile,
    make_mapping,
    save_topology,
    simulate_cost,
    step_distance_sequence,
    topology_from_dict,
    topology_to_dict,
    uniform_topology,
    yahoo_topology,
)
from .bench import (
    HeatmapCell,
    IncompleteGridError,
    SweepResult,
    SweepRow,
    SweepSpec,
    VerifyReport,
    default_procs,
    default_sizes,
    default_spec,
    emit_heatmap,
    heatmap_cells,
    read_sweep_csv,
    run_sweep,
    run_timing,
    verify_all,
)

__version__ = "0.1.0"
