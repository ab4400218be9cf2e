"""Glitch-minimizing weight bases, representation mappers and DAC simulation."""

__version__ = "0.1.0"

from .core import (
    Basis,
    RepDistribution,
    TransitionModel,
    binary_basis,
    canonical_rep,
    canonical_table,
    decode,
    glitch_error,
    published_basis,
    segmented_basis,
    thermometer_basis,
)
from .errors import (
    CapacityError,
    ConsistencyError,
    CoverageError,
    DacGlitchError,
    DimensionError,
    IncompleteTableError,
    InfeasibleError,
    RangeError,
    UndefinedMeasurementError,
    ValidationError,
)
from .mappers import (
    MappingTable,
    TrellisPath,
    build_greedy_lut,
    greedy_map,
    make_mapper,
    memoryless_solve,
    replay_greedy_lut,
    viterbi_map,
)
from .optimizer import AnnealConfig, SearchResult, anneal, exhaustive_search, objective
from .representations import (
    MetricReport,
    enumerate_reps,
    metric_complete,
    metric_monte_carlo,
    metric_overcomplete,
    rep_count_stats,
)
from .simulator import EdgeModel, SimResult, StimulusConfig, run_experiment, synthesize
