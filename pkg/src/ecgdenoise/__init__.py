"""Synthetic ECG beats, structured noise, and factor-analysis denoising."""

__version__ = "0.1.0"

from ._kernels import BACKEND, available_backends
from .align import Delineation, align_beats, detect_r_peaks
from .bench import (
    BenchmarkConfig,
    BenchmarkReport,
    EstimatorSpec,
    LatentDimRule,
    TauRegime,
    emit_plot_data,
    mse,
    run_benchmark,
    sum_squared_error,
)
from .errors import (
    EcgDenoiseError,
    EmptyInputError,
    FitDivergedError,
    InsufficientReplicatesError,
    IntegrationDivergedError,
    InvalidJitterError,
    NoBeatsError,
    WindowTooLongError,
    ZeroNoiseError,
)
from .estimators import (
    AtomPrior,
    FaModel,
    MogFaModel,
    fa_posterior_mean,
    fit_factor_analysis,
    fit_mog_fa,
    mle_average,
    mog_fa_posterior_mean,
    oracle_bayes,
    select_latent_dim,
)
from .noise import (
    CovarianceMatrix,
    EcgSample,
    NoisePrecision,
    estimate_noise,
    matern_covariance,
    sample_noise_beats,
    unwhiten,
    whiten,
)
from .simulate import (
    DEFAULT_PARAMS,
    OdeParams,
    RawTrace,
    ThetaBeat,
    extract_canonical_beat,
    integrate_mcsharry,
    sample_jittered_params,
)

__all__ = [
    "BACKEND",
    "available_backends",
    "AtomPrior",
    "BenchmarkConfig",
    "BenchmarkReport",
    "CovarianceMatrix",
    "DEFAULT_PARAMS",
    "Delineation",
    "EcgDenoiseError",
    "EcgSample",
    "EmptyInputError",
    "EstimatorSpec",
    "FaModel",
    "FitDivergedError",
    "InsufficientReplicatesError",
    "IntegrationDivergedError",
    "InvalidJitterError",
    "LatentDimRule",
    "MogFaModel",
    "NoBeatsError",
    "NoisePrecision",
    "OdeParams",
    "RawTrace",
    "TauRegime",
    "ThetaBeat",
    "WindowTooLongError",
    "ZeroNoiseError",
    "align_beats",
    "detect_r_peaks",
    "emit_plot_data",
    "estimate_noise",
    "extract_canonical_beat",
    "fa_posterior_mean",
    "fit_factor_analysis",
    "fit_mog_fa",
    "integrate_mcsharry",
    "matern_covariance",
    "mle_average",
    "mog_fa_posterior_mean",
    "mse",
    "oracle_bayes",
    "run_benchmark",
    "sample_jittered_params",
    "sample_noise_beats",
    "select_latent_dim",
    "sum_squared_error",
    "unwhiten",
    "whiten",
]
