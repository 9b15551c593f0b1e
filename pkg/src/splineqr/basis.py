"""Knot-interval partitions and spline design matrices.

Two interchangeable basis flavors are supported for the same model space:
the truncated power basis (1, x, ..., x^P, (x-g)_+^P per active knot) and a
B-spline basis on the active knots. Additive designs concatenate
per-covariate blocks under a single global intercept.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.interpolate import BSpline

from .errors import InvalidInputError

TRUNCATED_POWER = "truncated_power"
BSPLINE = "bspline"
_BASIS_FLAVORS = (TRUNCATED_POWER, BSPLINE)


@dataclass(frozen=True)
class IntervalPartition:
    """Ordered disjoint intervals; half-open [lo, hi), last one closed."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=float)
        hi = np.asarray(self.hi, dtype=float)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        if lo.ndim != 1 or lo.shape != hi.shape or lo.size == 0:
            raise InvalidInputError("interval bounds must be equal-length 1-d arrays")
        if not np.all(hi > lo):
            raise InvalidInputError("every interval needs strictly positive width")
        if not np.all(lo[1:] >= hi[:-1]):
            raise InvalidInputError("intervals must be sorted and pairwise disjoint")

    def __len__(self) -> int:
        return self.lo.size

    def contains(self, k: int, value: float) -> bool:
        if k == len(self) - 1:
            return self.lo[k] <= value <= self.hi[k]
        return self.lo[k] <= value < self.hi[k]

    def contains_all(self, values: np.ndarray) -> bool:
        values = np.asarray(values, dtype=float)
        last = len(self) - 1
        ok = (values >= self.lo) & (values < self.hi)
        ok[last] = self.lo[last] <= values[last] <= self.hi[last]
        return bool(np.all(ok))

    def sample(self, k: int, rng: np.random.Generator) -> float:
        return float(rng.uniform(self.lo[k], self.hi[k]))

    @property
    def hull(self) -> tuple[float, float]:
        return float(self.lo[0]), float(self.hi[-1])


@dataclass(frozen=True)
class SplineSpec:
    """Degree, knot intervals and basis flavor of one spline component.

    ``domain`` fixes the B-spline boundary knots and the valid evaluation
    range; it defaults to the interval hull (the observed x-range when the
    partition was built with :func:`make_intervals`). The boundary placement
    is a convention of this package, not implied by the model.
    """

    degree: int
    intervals: IntervalPartition
    basis: str = BSPLINE
    domain: tuple[float, float] | None = None

    def __post_init__(self):
        if self.degree < 1:
            raise InvalidInputError(f"spline degree must be >= 1, got {self.degree}")
        if self.basis not in _BASIS_FLAVORS:
            raise InvalidInputError(f"unknown basis flavor {self.basis!r}")
        if self.domain is not None:
            lo, hi = self.domain
            h0, h1 = self.intervals.hull
            if not (lo <= h0 and hi >= h1):
                raise InvalidInputError("domain must contain the interval hull")

    @property
    def k_max(self) -> int:
        return len(self.intervals)

    @property
    def bounds(self) -> tuple[float, float]:
        return self.domain if self.domain is not None else self.intervals.hull


@dataclass(frozen=True)
class KnotConfiguration:
    """Indicator vector z and per-interval knot locations gamma."""

    z: np.ndarray
    gamma: np.ndarray

    def __post_init__(self):
        z = np.asarray(self.z, dtype=bool)
        gamma = np.asarray(self.gamma, dtype=float)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "gamma", gamma)
        if z.shape != gamma.shape or z.ndim != 1:
            raise InvalidInputError("z and gamma must be 1-d arrays of equal length")

    @property
    def n_active(self) -> int:
        return int(self.z.sum())

    def validate_against(self, spec: SplineSpec) -> None:
        if len(self.z) != spec.k_max:
            raise InvalidInputError(
                f"configuration length {len(self.z)} != K_max {spec.k_max}"
            )
        if not spec.intervals.contains_all(self.gamma):
            raise InvalidInputError("every gamma_k must lie inside its interval I_k")


@dataclass(frozen=True)
class DesignMatrix:
    """Dense design with per-column provenance tags.

    Tags are tuples: ("poly", j) for x^j, ("knot", k) for interval k's
    truncated power column, ("bspline", j) for the j-th B-spline column
    (left to right), and ("intercept",) / (cov, tag...) in additive designs.
    """

    values: np.ndarray
    column_map: tuple

    @property
    def n_columns(self) -> int:
        return self.values.shape[1]


def make_intervals(x: Sequence[float], n_x: int) -> IntervalPartition:
    """Partition the x-range at every ``n_x``-th sorted distinct value.

    The union of the returned intervals covers (min x, max x); interval
    boundaries fall on the observed values themselves.
    """
    if n_x < 2:
        raise InvalidInputError(f"n_x must be >= 2, got {n_x}")
    values = np.unique(np.asarray(x, dtype=float))
    if values.size < 2:
        raise InvalidInputError("need at least 2 distinct x values")
    if not np.all(np.isfinite(values)):
        raise InvalidInputError("x contains non-finite values")
    cut = values[n_x - 1 :: n_x]
    cut = cut[cut < values[-1]]
    edges = np.concatenate(([values[0]], cut, [values[-1]]))
    return IntervalPartition(lo=edges[:-1], hi=edges[1:])


def equal_intervals(
    lo: float, hi: float, count: int, drop_edges: bool = False
) -> IntervalPartition:
    """Equal-width partition of [lo, hi] into ``count`` intervals.

    With ``drop_edges`` the first and last intervals are removed from the
    partition (no knots allowed there) while the full [lo, hi] range remains
    the evaluation domain; pair with ``SplineSpec(domain=(lo, hi))``.
    """
    if count < 1 or (drop_edges and count < 3):
        raise InvalidInputError("need count >= 1 (>= 3 when dropping edges)")
    if not hi > lo:
        raise InvalidInputError("need hi > lo")
    edges = np.linspace(lo, hi, count + 1)
    part = IntervalPartition(lo=edges[:-1], hi=edges[1:])
    if drop_edges:
        part = IntervalPartition(lo=part.lo[1:-1], hi=part.hi[1:-1])
    return part


def _truncated_power_values(
    x: np.ndarray, degree: int, knots: np.ndarray
) -> np.ndarray:
    cols = [np.ones_like(x)]
    for j in range(1, degree + 1):
        cols.append(x**j)
    for g in knots:
        cols.append(np.clip(x - g, 0.0, None) ** degree)
    return np.column_stack(cols)


def _bspline_values(
    x: np.ndarray, degree: int, knots: np.ndarray, bounds: tuple[float, float]
) -> np.ndarray:
    lo, hi = bounds
    if x.size and (x.min() < lo or x.max() > hi):
        raise InvalidInputError(
            f"x values outside the spline domain [{lo}, {hi}] cannot be evaluated"
        )
    t = np.concatenate((np.full(degree + 1, lo), np.sort(knots), np.full(degree + 1, hi)))
    return BSpline.design_matrix(x, t, degree).toarray()


def active_design_values(
    x: np.ndarray, z: np.ndarray, gamma: np.ndarray, spec: SplineSpec
) -> np.ndarray:
    """Raw design values for the active knots only (no provenance tags)."""
    x = np.asarray(x, dtype=float)
    knots = np.asarray(gamma, dtype=float)[np.asarray(z, dtype=bool)]
    if spec.basis == TRUNCATED_POWER:
        return _truncated_power_values(x, spec.degree, knots)
    return _bspline_values(x, spec.degree, knots, spec.bounds)


def build_design(
    x: Sequence[float], config: KnotConfiguration, spec: SplineSpec
) -> DesignMatrix:
    """Design matrix for one covariate under the given knot configuration."""
    config.validate_against(spec)
    x = np.asarray(x, dtype=float)
    values = active_design_values(x, config.z, config.gamma, spec)
    active = np.flatnonzero(config.z)
    if spec.basis == TRUNCATED_POWER:
        tags = [("poly", j) for j in range(spec.degree + 1)]
        tags += [("knot", int(k)) for k in active]
    else:
        tags = [("bspline", j) for j in range(values.shape[1])]
    return DesignMatrix(values=values, column_map=tuple(tags))


def build_additive_design(
    X: np.ndarray,
    configs: Sequence[KnotConfiguration],
    specs: Sequence[SplineSpec],
) -> DesignMatrix:
    """Concatenated per-covariate designs under a single intercept.

    Each covariate contributes its design minus one column spanning the
    constant (the leading column in either flavor); one global intercept is
    prepended. With a single covariate this reduces to :func:`build_design`.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.ndim != 2:
        raise InvalidInputError("X must be an n x d matrix")
    d = X.shape[1]
    if d == 0 or len(configs) != d or len(specs) != d:
        raise InvalidInputError("need one config and one spec per covariate (d >= 1)")
    if d == 1:
        return build_design(X[:, 0], configs[0], specs[0])
    blocks = [np.ones((X.shape[0], 1))]
    tags: list[tuple] = [("intercept",)]
    for j in range(d):
        block = build_design(X[:, j], configs[j], specs[j])
        blocks.append(block.values[:, 1:])
        tags.extend((j, *tag) for tag in block.column_map[1:])
    return DesignMatrix(values=np.hstack(blocks), column_map=tuple(tags))


@dataclass(frozen=True)
class AffineScaler:
    """Maps observed covariate values onto [0, 1] and back."""

    shift: float
    scale: float

    @classmethod
    def from_data(cls, x: Sequence[float]) -> "AffineScaler":
        x = np.asarray(x, dtype=float)
        lo, hi = float(x.min()), float(x.max())
        if not hi > lo:
            raise InvalidInputError("cannot rescale a constant covariate")
        return cls(shift=lo, scale=hi - lo)

    def transform(self, x):
        return (np.asarray(x, dtype=float) - self.shift) / self.scale

    def inverse(self, u):
        return np.asarray(u, dtype=float) * self.scale + self.shift
