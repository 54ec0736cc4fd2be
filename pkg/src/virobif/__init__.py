"""Equilibria, stability, bifurcations and dynamics of a four-compartment
oncolytic virotherapy model and its immune-free reduction."""

__version__ = "0.1.0"

from .bifurcation import (  # noqa: E402
    BifurcationDiagram,
    CriticalPoint,
    RegionMap2D,
    locate_critical,
    region_label,
    region_map,
    sweep_branches,
)
from .dynamics import (  # noqa: E402
    Cycle,
    CycleBranch,
    NoRecurrenceError,
    Orbit,
    continue_cycles,
    cycle_from_hopf,
    find_limit_cycle,
    first_lyapunov_coefficient,
    integrate,
    largest_lyapunov_exponent,
)
from .equilibria import Equilibrium, all_equilibria, fold_parameters, immune_window  # noqa: E402
from .model import ModelParams, jacobian, load_params, rescale, vector_field  # noqa: E402
from .stability import (  # noqa: E402
    StabilityReport,
    classify,
    eigenvalues,
    hopf_burst_3d,
    locate_bH,
    routh_hurwitz,
)

__all__ = [
    "__version__",
    "BifurcationDiagram",
    "CriticalPoint",
    "Cycle",
    "CycleBranch",
    "Equilibrium",
    "ModelParams",
    "NoRecurrenceError",
    "Orbit",
    "RegionMap2D",
    "StabilityReport",
    "all_equilibria",
    "classify",
    "continue_cycles",
    "cycle_from_hopf",
    "eigenvalues",
    "find_limit_cycle",
    "first_lyapunov_coefficient",
    "fold_parameters",
    "hopf_burst_3d",
    "immune_window",
    "integrate",
    "jacobian",
    "largest_lyapunov_exponent",
    "load_params",
    "locate_bH",
    "locate_critical",
    "region_label",
    "region_map",
    "rescale",
    "routh_hurwitz",
    "sweep_branches",
    "vector_field",
]
