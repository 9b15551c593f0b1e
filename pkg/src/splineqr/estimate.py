"""Curve estimates from recorded chains.

The regression coefficients never appear in the chain; each recorded state
yields a plug-in coefficient vector (the conditional posterior mean under
the g-prior) and curves are model averages or the single best state.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .basis import build_design
from .errors import InvalidInputError, SingularDesignError
from .posterior import LatentState, QuantileModelSpec, shifted_response
from .sampler import ChainOutput

logger = logging.getLogger(__name__)

BMA = "bma"
MAP = "map"
REWEIGHTED = "reweighted"


@dataclass(frozen=True)
class CurveEstimate:
    """A fitted quantile curve on a sorted evaluation grid."""

    grid: np.ndarray
    values: np.ndarray
    kind: str
    p: float

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)
        if grid.shape != values.shape:
            raise InvalidInputError("grid and values must have equal length")
        if np.any(np.diff(grid) < 0):
            raise InvalidInputError("grid must be sorted ascending")
        if not np.all(np.isfinite(values)):
            raise InvalidInputError("curve values must be finite")


@dataclass(frozen=True)
class ComponentCurves:
    """Per-covariate additive components plus the global intercept."""

    components: tuple[CurveEstimate, ...]
    intercept: float


def default_grid(x, num: int = 200) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return np.linspace(x.min(), x.max(), num)


def posterior_beta_mean(state: LatentState, y, x, spec: QuantileModelSpec) -> np.ndarray:
    """Conditional posterior mean of the regression coefficients.

    beta_hat = c/(c+1) (X'W^-1X)^-1 X'W^-1 (y - shift), computed through a
    Cholesky factorization of the weighted cross-product.
    """
    design = spec.design_values(np.asarray(x, dtype=float), state.z, state.gamma)
    return _beta_mean_from_design(design, state, np.asarray(y, dtype=float), spec.p)


def _beta_mean_from_design(
    design: np.ndarray, state: LatentState, y: np.ndarray, p: float
) -> np.ndarray:
    u = 1.0 / state.w
    yw = shifted_response(y, state.w, p)
    Xu = design * u[:, None]
    G = Xu.T @ design
    try:
        fac = cho_factor(G, lower=True, check_finite=False)
    except np.linalg.LinAlgError:
        raise SingularDesignError("X'W^-1X is not positive definite")
    diag = np.diagonal(fac[0])
    if diag.min() <= 1e-10 * diag.max():
        raise SingularDesignError("X'W^-1X is numerically rank deficient")
    beta = cho_solve(fac, Xu.T @ yw, check_finite=False)
    return (state.c / (state.c + 1.0)) * beta


def plugin_curve(state: LatentState, y, x, spec: QuantileModelSpec, points) -> np.ndarray:
    """Plug-in fitted curve of one state evaluated at ``points``."""
    beta = posterior_beta_mean(state, y, x, spec)
    design = spec.design_values(np.asarray(points, dtype=float), state.z, state.gamma)
    return design @ beta


def _averaged_curve(states, y, x, spec, grid) -> tuple[np.ndarray, int]:
    """Mean plug-in curve over states; returns (values, n_skipped)."""
    grid = np.asarray(grid, dtype=float)
    total = np.zeros(grid.shape[0])
    used = 0
    skipped = 0
    for state in states:
        try:
            total += plugin_curve(state, y, x, spec, grid)
        except SingularDesignError:
            skipped += 1
            continue
        used += 1
    if used == 0:
        raise SingularDesignError("every chain state had a singular design")
    return total / used, skipped


def bma_curve(chain: ChainOutput, y, x, spec: QuantileModelSpec, grid) -> CurveEstimate:
    """Model-averaged curve over all recorded states.

    Singular states (grid-evaluation edge cases) are skipped and counted; a
    warning is emitted when more than 1% are dropped.
    """
    if len(chain) == 0:
        raise InvalidInputError("empty chain")
    values, skipped = _averaged_curve(chain.samples, y, x, spec, grid)
    if skipped > 0.01 * len(chain):
        logger.warning(
            "bma_curve skipped %d of %d states with singular designs",
            skipped,
            len(chain),
        )
    return CurveEstimate(grid=np.asarray(grid, dtype=float), values=values, kind=BMA, p=spec.p)


def map_curve(chain: ChainOutput, y, x, spec: QuantileModelSpec, grid) -> CurveEstimate:
    """Plug-in curve at the recorded state with the highest log posterior.

    Ties break to the earliest recorded state.
    """
    if len(chain) == 0:
        raise InvalidInputError("empty chain")
    if not np.any(np.isfinite(chain.log_post)):
        raise InvalidInputError("no recorded state has a finite log posterior")
    best = int(np.argmax(chain.log_post))
    values = plugin_curve(chain.samples[best], y, x, spec, grid)
    return CurveEstimate(grid=np.asarray(grid, dtype=float), values=values, kind=MAP, p=spec.p)


def mse(fitted: CurveEstimate, truth) -> float:
    """Mean squared error of a fitted curve against true values."""
    truth = np.asarray(truth, dtype=float)
    if truth.shape != fitted.values.shape:
        raise InvalidInputError("fitted curve and truth must have equal length")
    diff = fitted.values - truth
    return float(diff @ diff / diff.size)


def _column_blocks(spec: QuantileModelSpec, z: np.ndarray) -> list[np.ndarray]:
    """Column indices of each covariate in the additive active design."""
    if spec.d == 1:
        return [np.arange(spec.n_columns(z))]
    out = []
    start = 1  # global intercept occupies column 0
    for spline, sl in zip(spec.splines, spec.block_slices):
        width = spline.degree + int(z[sl].sum())
        out.append(np.arange(start, start + width))
        start += width
    return out


def _component_values(
    chain: ChainOutput, y, X: np.ndarray, spec: QuantileModelSpec, eval_sets
) -> tuple[list[np.ndarray], float, int]:
    """Centered per-covariate component values averaged over the chain.

    ``eval_sets[j]`` is any array of evaluation points for covariate j (no
    ordering requirement). Returns (per-covariate values, intercept, skipped).
    """
    totals = [np.zeros(np.asarray(pts).size) for pts in eval_sets]
    intercept_total = 0.0
    used = 0
    skipped = 0
    for state in chain.samples:
        try:
            beta = posterior_beta_mean(state, y, X, spec)
        except SingularDesignError:
            skipped += 1
            continue
        blocks = _column_blocks(spec, state.z)
        configs = spec.knot_configs(state.z, state.gamma)
        intercept = float(beta[0]) if spec.d > 1 else 0.0
        for j, (cols, pts) in enumerate(zip(blocks, eval_sets)):
            dm_obs = build_design(X[:, j], configs[j], spec.splines[j]).values
            dm_pts = build_design(
                np.asarray(pts, dtype=float), configs[j], spec.splines[j]
            ).values
            if spec.d > 1:
                dm_obs = dm_obs[:, 1:]
                dm_pts = dm_pts[:, 1:]
            center = float((dm_obs @ beta[cols]).mean())
            totals[j] += dm_pts @ beta[cols] - center
            intercept += center
        intercept_total += intercept
        used += 1
    if used == 0:
        raise SingularDesignError("every chain state had a singular design")
    return [tot / used for tot in totals], intercept_total / used, skipped


def additive_components(
    chain: ChainOutput, y, X, spec: QuantileModelSpec, grids
) -> ComponentCurves:
    """Per-covariate model-averaged component curves plus intercept.

    Each component is centered to mean zero over the observed values of its
    covariate, with the removed mass folded into the intercept, so that the
    components and intercept sum exactly to the joint fit.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if len(grids) != spec.d:
        raise InvalidInputError("need one evaluation grid per covariate")
    values, intercept, skipped = _component_values(chain, y, X, spec, grids)
    if skipped > 0.01 * len(chain):
        logger.warning(
            "additive_components skipped %d of %d states", skipped, len(chain)
        )
    curves = tuple(
        CurveEstimate(grid=np.asarray(g, dtype=float), values=v, kind=BMA, p=spec.p)
        for g, v in zip(grids, values)
    )
    return ComponentCurves(components=curves, intercept=intercept)


def component_values_at_observations(
    chain: ChainOutput, y, X, spec: QuantileModelSpec
) -> tuple[list[np.ndarray], float]:
    """Component values at the observed covariate rows (order preserved)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    values, intercept, _ = _component_values(
        chain, y, X, spec, [X[:, j] for j in range(spec.d)]
    )
    return values, intercept


def partial_residuals(
    chain: ChainOutput, y, X, spec: QuantileModelSpec, which: int
) -> np.ndarray:
    """Observed y minus the intercept and every other covariate's component."""
    values, intercept = component_values_at_observations(chain, y, X, spec)
    resid = np.asarray(y, dtype=float) - intercept
    for j, vals in enumerate(values):
        if j != which:
            resid = resid - vals
    return resid
