"""Noncrossing postprocessing for a pair of separately fitted chains.

Two chains at quantile levels p1 < p2 are combined through the product
quasi-posterior carrying an indicator that the lower plug-in curve stays
strictly below the upper one at every observed x. Averaging only the pairs
that satisfy the indicator yields reweighted curves that inherit the
ordering pointwise.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import ConstraintInfeasibleError, InvalidInputError, SingularDesignError
from .estimate import REWEIGHTED, CurveEstimate, plugin_curve
from .posterior import LatentState, QuantileModelSpec
from .sampler import ChainOutput

logger = logging.getLogger(__name__)

ALIGNED = "aligned"
CARTESIAN = "cartesian"


@dataclass(frozen=True)
class PairedChains:
    """Chains for two quantile levels and how their samples are paired."""

    chain_lo: ChainOutput
    chain_hi: ChainOutput
    p1: float
    p2: float
    combination: str = CARTESIAN

    def __post_init__(self):
        if not self.p1 < self.p2:
            raise InvalidInputError("need p1 < p2")
        if self.combination not in (ALIGNED, CARTESIAN):
            raise InvalidInputError(f"unknown combination {self.combination!r}")
        if self.combination == ALIGNED and len(self.chain_lo) != len(self.chain_hi):
            raise InvalidInputError("aligned pairing needs equal sample counts")


@dataclass(frozen=True)
class ReweightedCurves:
    """Noncrossing curve pair plus the surviving-pair statistics."""

    curve_lo: CurveEstimate
    curve_hi: CurveEstimate
    kept: int
    total: int


def ordering_indicator(
    state_lo: LatentState,
    state_hi: LatentState,
    eval_points,
    y,
    x,
    spec_lo: QuantileModelSpec,
    spec_hi: QuantileModelSpec,
) -> bool:
    """True iff the lower plug-in curve is strictly below the upper one
    at every evaluation point. Singular states count as violations."""
    try:
        f_lo = plugin_curve(state_lo, y, x, spec_lo, eval_points)
        f_hi = plugin_curve(state_hi, y, x, spec_hi, eval_points)
    except SingularDesignError:
        return False
    return bool(np.all(f_lo < f_hi))


def _fitted_matrix(chain, y, x, spec, points) -> tuple[np.ndarray, np.ndarray]:
    """Plug-in fits of every recorded state at ``points``; flags singulars."""
    points = np.asarray(points, dtype=float)
    fits = np.empty((len(chain), points.size))
    ok = np.ones(len(chain), dtype=bool)
    for t, state in enumerate(chain.samples):
        try:
            fits[t] = plugin_curve(state, y, x, spec, points)
        except SingularDesignError:
            ok[t] = False
            fits[t] = np.nan
    return fits, ok


def reweighted_estimate(
    pairs: PairedChains,
    y,
    x,
    spec_lo: QuantileModelSpec,
    spec_hi: QuantileModelSpec,
    grid,
) -> ReweightedCurves:
    """Average the plug-in curves over the sample pairs whose lower curve
    stays strictly below the upper curve at every observed x.

    Raises ConstraintInfeasibleError when no pair satisfies the constraint;
    longer chains (or the cartesian combination) are then required.
    """
    x_arr = np.asarray(x, dtype=float)
    obs = x_arr if x_arr.ndim == 1 else x_arr[:, 0]
    f_lo, ok_lo = _fitted_matrix(pairs.chain_lo, y, x, spec_lo, obs)
    f_hi, ok_hi = _fitted_matrix(pairs.chain_hi, y, x, spec_hi, obs)
    t_lo, t_hi = len(pairs.chain_lo), len(pairs.chain_hi)

    if pairs.combination == ALIGNED:
        total = t_lo
        keep = ok_lo & ok_hi & np.all(f_lo < f_hi, axis=1)
        weight_lo = keep.astype(float)
        weight_hi = keep.astype(float)
        kept = int(keep.sum())
    else:
        total = t_lo * t_hi
        weight_lo = np.zeros(t_lo)
        weight_hi = np.zeros(t_hi)
        kept = 0
        for s in range(t_lo):
            if not ok_lo[s]:
                continue
            mask = ok_hi & np.all(f_lo[s][None, :] < f_hi, axis=1)
            count = int(mask.sum())
            if count:
                weight_lo[s] = count
                weight_hi += mask
                kept += count
    if kept == 0:
        raise ConstraintInfeasibleError(
            "no sample pair satisfies the noncrossing constraint; "
            "run longer chains or use the cartesian combination"
        )

    grid = np.asarray(grid, dtype=float)
    curve_lo = _weighted_curve(pairs.chain_lo, weight_lo, y, x, spec_lo, grid)
    curve_hi = _weighted_curve(pairs.chain_hi, weight_hi, y, x, spec_hi, grid)
    # ordering is preserved under the common convex weights; check at the
    # constraint points
    lo_obs = (weight_lo @ np.nan_to_num(f_lo)) / kept
    hi_obs = (weight_hi @ np.nan_to_num(f_hi)) / kept
    if not np.all(lo_obs < hi_obs):
        raise ConstraintInfeasibleError(
            "reweighted curves violate the ordering at an observed x"
        )
    return ReweightedCurves(
        curve_lo=CurveEstimate(grid=grid, values=curve_lo, kind=REWEIGHTED, p=pairs.p1),
        curve_hi=CurveEstimate(grid=grid, values=curve_hi, kind=REWEIGHTED, p=pairs.p2),
        kept=kept,
        total=total,
    )


def _weighted_curve(chain, weights, y, x, spec, grid) -> np.ndarray:
    total = np.zeros(grid.size)
    wsum = 0.0
    for t, state in enumerate(chain.samples):
        if weights[t] == 0.0:
            continue
        total += weights[t] * plugin_curve(state, y, x, spec, grid)
        wsum += weights[t]
    return total / wsum
