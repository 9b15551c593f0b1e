"""Bayesian quantile regression with free-knot regression splines.

Fits quantile curves by MH-within-Gibbs sampling over knot indicators,
knot locations, latent scale-mixture weights and a g-prior shrinkage
parameter, with the regression and scale parameters integrated out in
closed form. Includes additive-model fitting and a reweighting
postprocessor that removes crossings between two separately fitted
quantile curves.
"""

from .basis import (
    BSPLINE,
    TRUNCATED_POWER,
    AffineScaler,
    DesignMatrix,
    IntervalPartition,
    KnotConfiguration,
    SplineSpec,
    build_additive_design,
    build_design,
    equal_intervals,
    make_intervals,
)
from .errors import (
    ChainDiagnosticError,
    ConstraintInfeasibleError,
    DataFormatError,
    InvalidInputError,
    SingularDesignError,
    SplineQRError,
)
from .estimate import (
    ComponentCurves,
    CurveEstimate,
    additive_components,
    bma_curve,
    default_grid,
    map_curve,
    mse,
    partial_residuals,
    plugin_curve,
    posterior_beta_mean,
)
from .noncross import (
    PairedChains,
    ReweightedCurves,
    ordering_indicator,
    reweighted_estimate,
)
from .posterior import (
    LatentState,
    PriorConfig,
    QuantileModelSpec,
    al_log_density,
    check_loss,
    log_marginal_posterior,
    quad_form_S,
    shifted_response,
)
from .runner import RunConfig, fit_level, read_table, run_benchmark, run_noncross
from .sampler import (
    ChainEngine,
    ChainOutput,
    SamplerConfig,
    TunerState,
    draw_initial_state,
    run_chain,
    tune_step,
    update_c,
    update_gamma,
    update_w,
    update_z,
)
from .simulate import DatasetTable, generate_example

__version__ = "0.1.0"
