"""Heritability curves from exchangeable Gaussian mixtures of twin and trio data."""

from .datasets import TrioDataset, TwinDataset, read_trios, read_twins, standardize_trios
from .errors import (
    BootstrapUnreliableError,
    DataError,
    DefinitenessError,
    HeritCurvesError,
    InferenceUnavailableError,
    OptimizationError,
)
from .estimation import (
    FitConfig,
    FitResult,
    ParamVector,
    ScanTable,
    curve_bands,
    delta_method_se,
    fit,
    model_scan,
    negloglik,
    parameter_se,
    to_natural,
    to_unconstrained,
)
from .heritability import (
    ade_moments,
    classical_decomposition,
    falconer_ace,
    heritability_curves,
    model_choice,
    trio_ace,
)
from .mixture import (
    BivariateMixture,
    MixtureComponent,
    TrioMixture,
    TwinJointModel,
    correlation_curve,
    global_moments,
    local_moments,
    posterior_weights,
    tail_limits,
)
from .simulation import parametric_bootstrap, sample

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
