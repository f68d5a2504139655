"""sdpbounds: bounds for sparse semidefinite programs.

Combines clique decomposition of the aggregate sparsity pattern with
structured-subset cone restrictions (diagonal, diagonally dominant, scaled
diagonally dominant, factor-width-k, block factor-width-2) to approximate
semidefinite programs from above and below, with tightness certification and
iterative change-of-basis refinement. Includes an H-infinity LMI front end and
a sparse sum-of-squares polynomial optimization front end.
"""

from .core import (
    Block,
    ConeKind,
    ConicProblem,
    SymMatrix,
    SVec,
    Solution,
    DD,
    DIAGONAL,
    FREE,
    FREEMAT,
    NONNEG,
    PSD,
    RSOC,
    SDD,
    SOC,
    ZERO,
    ZEROMAT,
    block_fw2,
    dualize,
    factor_width,
    smat,
    svec,
)
from .sparsity import (
    CliqueCover,
    MergePolicy,
    PatternGraph,
    aggregate_pattern,
    chordal_extend,
    maximal_cliques,
    merge_cliques,
)
from .cones import (
    ConeReformulation,
    clique_dd_split,
    clique_sdd_split,
    dd_extreme_decomposition,
    dd_membership,
    membership,
    reformulate,
    reformulate_dual,
    sdd_membership,
)
from .decomp import (
    ConeAssignment,
    DecomposedProblem,
    assign_cones,
    build_completion,
    build_construction,
    lower_problem,
    recover_entries,
)
from .solver import (
    SolverSettings,
    check_solution,
    export_json,
    export_sdpa,
    import_json,
    import_sdpa,
    min_eigenvalue,
    solve,
)
from .refine import BasisSet, TightnessReport, certify, cob_run, cob_step
from .sos import (
    Polynomial,
    SOSProgram,
    build_putinar,
    build_sos,
    build_sparse_putinar,
    csp_graph,
    gen_lehmer_rosenbrock,
    restrict_gram,
)
from .apps import (
    LTISystem,
    bounded_real_lmi,
    gen_block_arrow,
    gen_sea_star,
    hnorm_sweep,
)

__version__ = "0.1.0"
