"""Adaptive multiresolution wavelet collocation PDE solver."""

import os as _os

# honor the thread cap before numpy ever loads; numpy reads these at import
_threads = _os.environ.get("MRPDE_THREADS")
if _threads:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                 "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS"):
        _os.environ.setdefault(_var, _threads)

__version__ = "0.1.0"

from .config import ConfigError, RunConfig, from_dict, from_toml
from .filters import FilterBank, build_filter_bank
from .transform import CoefficientSet, forward, inverse, threshold
from .sparse_grid import (Domain, SparseField, compress, merge, prune,
                          validate)
from .plans import Workset, reconstruct_at, to_dense
from .time_integrator import TABLEAUS, StepController, rk_step
from .adaptivity import (RefinementCapError, check_significance, predict,
                         step_adaptive)
from .driver import RunResult, converge, evaluate_exact, solve

__all__ = [
    "FilterBank", "build_filter_bank",
    "CoefficientSet", "forward", "inverse", "threshold",
    "Domain", "SparseField", "compress", "merge", "prune", "validate",
    "Workset", "reconstruct_at", "to_dense",
    "TABLEAUS", "StepController", "rk_step",
    "RefinementCapError", "check_significance", "predict", "step_adaptive",
    "ConfigError", "RunConfig", "from_dict", "from_toml",
    "RunResult", "converge", "evaluate_exact", "solve",
    "__version__",
]
