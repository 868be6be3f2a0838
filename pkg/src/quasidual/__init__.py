"""Dual representation of quasiconvex conditional maps on finite probability spaces."""

from .dual import (
    AtomReport,
    DualReport,
    duality_gap,
    fenchel_conjugate,
    glue_density,
    h_value,
    k_value,
    r_value,
    restrict_to_P_G,
    split_density,
)
from .errors import InputError, QuasidualError, SolverError
from .harness import SuiteReport, gen_instance, run_property_suite
from .maps import (
    CertaintyEquivalent,
    Coarsened,
    Composite,
    Entropic,
    Loss,
    MapSpec,
    Mirrored,
    Outer,
    Transform,
    Transformed,
    Utility,
    WorstCase,
    cce_evaluate,
    coarsen,
    evaluate,
    mirror,
    support_value,
    transformed,
)
from .oracle import GridCfg, enumerate_partitions, equality_k, grid_k
from .prob import (
    QNULL,
    Density,
    FiniteSpace,
    Partition,
    PerAtom,
    build_partition,
    build_space,
    cond_expect,
    make_density,
    normalize_density,
    reference_density,
    uniform_space,
)
from .scenario import Scenario, load_scenario
from .solvers import SolverCfg, bisect, simplex_search, threshold

__version__ = "0.1.0"
