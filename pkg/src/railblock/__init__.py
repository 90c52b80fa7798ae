"""Integrated train blocking and shipment path optimization toolkit."""

__version__ = "0.1.0"

from .builders import (
    FULL,
    REDUCED,
    BuildError,
    BuildOptions,
    InfeasibleByConstruction,
    build_block_model,
    build_integrated,
    build_path_model,
    containment,
    default_big_m,
)
from .instance import (
    Instance,
    InstanceError,
    InstanceParseError,
    InstanceSummary,
    InstanceValidationError,
    Link,
    Yard,
    load_instance,
    load_instance_csv,
    save_instance,
    summarize,
)
from .milp import (
    BINARY,
    CONTINUOUS,
    INTEGER,
    LinearConstraint,
    MilpModel,
    ModelStats,
    Variable,
    predicted_size,
    stats,
)
from .mps import MpsError, export_mps, read_mps
from .oracle import OracleLimitError, OracleLimits, OracleResult, oracle_optimum, random_instance
from .pathgen import (
    Path,
    PathCatalog,
    PathEnumerationError,
    build_catalog,
    candidate_sets,
    enumerate_block_sequences,
    enumerate_legal_paths,
    path_from_nodes,
    reclassification_yards,
    shortest_distances,
)
from .sequential import (
    BlockPlan,
    CostBreakdown,
    LinkLoad,
    SequentialOutcome,
    SolutionError,
    StageError,
    TbspSolution,
    check_link_trains,
    derive_frequencies,
    extract_paths,
    integrated_assignment,
    solution_from_values,
    solve_sequential,
)
from .solver import (
    SolveOptions,
    SolveResult,
    SolverError,
    WarmStartError,
    solve_lp,
    solve_milp,
    warm_start,
)
from .validate import (
    ComparisonRow,
    RunReport,
    SolutionFormatError,
    Violation,
    compare_reports,
    expected_tracks,
    relative_deviation,
    render_comparison,
    render_report,
    validate,
)
