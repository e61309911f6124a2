"""Sequential parameter optimization with Kriging surrogates."""

from .kriging import KrigingConfig, KrigingModel, build_correlation, fit, neg_ln_like
from .objectives import FunControl, make_objective
from .ocba import allocate
from .optimize import OptimizerConfig, differential_evolution, suggest_new_X
from .sampling import lhd, random_point
from .space import SearchSpace, VariableSpec, bounds_vectors, design_table, transform_value
from .spot import RunState, Spot, SpotConfig, best, grid_slice, importance, progress_series, run

__version__ = "0.1.0"

__all__ = [
    "KrigingConfig", "KrigingModel", "build_correlation", "fit", "neg_ln_like",
    "FunControl", "make_objective", "allocate",
    "OptimizerConfig", "differential_evolution", "suggest_new_X",
    "lhd", "random_point",
    "SearchSpace", "VariableSpec", "bounds_vectors", "design_table", "transform_value",
    "RunState", "Spot", "SpotConfig", "best", "grid_slice", "importance", "progress_series", "run",
]
