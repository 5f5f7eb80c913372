"""Nonlocal capacities, Hardy inequalities and their grid discretization."""

__version__ = "0.1.0"

from .capacity import (
    CapacityResult,
    SetMask,
    SolverOptions,
    ball_estimate_sweep,
    bump_upper_bound,
    capacitary_inequality_check,
    coarea_check,
    compute_capacity,
    direct_capacity,
    maximal_capacitary_check,
    nu_perimeter,
    perimeter_capacity_upper,
    property_suite,
)
from .errors import NlcapError
from .grid import (
    GridFunction,
    KernelCellMasses,
    build_cell_masses,
    indicator,
    lp_norm,
    maximal_function,
    minmax_pair,
    seminorm,
    seminorm_parts,
    sobolev_norm,
)
from .hardy import (
    HardyContext,
    HardyReport,
    delta_step,
    fullspace_constant,
    hardy_constant,
    regularize_kernel,
    verify_embedding,
    verify_fullspace_hardy,
    verify_halfspace_hardy,
    verify_regularized_hardy,
)
from .kernel import (
    KernelSpec,
    check_integrability,
    concentration_hp,
    doubling_beta,
    halfspace_tail_w,
    hp_via_L,
    load_kernel,
    matuszewska_lower_index,
    tabulate_L,
    tail_mass_L,
)
from .tabulated import TabulatedRadial
