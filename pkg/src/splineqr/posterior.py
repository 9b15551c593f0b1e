"""Model densities in log space.

The regression/scale coefficients are integrated out analytically, leaving a
posterior over (z, gamma, W, c) whose kernel is

    pi(c) * pi_z(z) / ( sqrt(prod w_i) * (c+1)^(q/2) )
        * { p(1-p)/4 * S + sum w_i }^(-3n/2)

with q the active column count and S the g-prior-shrunk weighted quadratic
form. Everything here is an unnormalized log density; only ratios are used
by the sampler.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import gammaln

from .basis import SplineSpec, KnotConfiguration, build_additive_design
from .errors import InvalidInputError, SingularDesignError

# Cholesky diagonal ratio below which the weighted cross-product is treated
# as rank deficient (the state gets posterior density zero).
_RANK_TOL = 1e-10


@dataclass(frozen=True)
class PriorConfig:
    """Hyperparameters of the knot-count and shrinkage priors.

    ``lam`` and ``max_knots`` parameterize the right-truncated Poisson-style
    prior on the number of active knots (applied per covariate in additive
    models). The shrinkage parameter c has an inverse-gamma prior with shape
    ``c_shape`` (fixed at 1) and scale ``c_scale``; the default None resolves
    to 2n at evaluation time, putting the prior mode at the sample size.
    """

    lam: float = 3.0
    max_knots: int = 10
    c_shape: float = 1.0
    c_scale: float | None = None

    def __post_init__(self):
        if self.lam <= 0:
            raise InvalidInputError("lam must be positive")
        if self.max_knots < 0:
            raise InvalidInputError("max_knots must be nonnegative")


@dataclass(frozen=True)
class QuantileModelSpec:
    """Quantile level, spline structure (one block per covariate), priors."""

    p: float
    splines: tuple[SplineSpec, ...]
    priors: PriorConfig

    def __post_init__(self):
        if not 0.0 < self.p < 1.0:
            raise InvalidInputError(f"quantile level must be in (0,1), got {self.p}")
        if isinstance(self.splines, SplineSpec):
            object.__setattr__(self, "splines", (self.splines,))
        else:
            object.__setattr__(self, "splines", tuple(self.splines))
        if not self.splines:
            raise InvalidInputError("need at least one spline block")

    @classmethod
    def single(cls, p: float, spline: SplineSpec, priors: PriorConfig) -> "QuantileModelSpec":
        return cls(p=p, splines=(spline,), priors=priors)

    @property
    def d(self) -> int:
        return len(self.splines)

    @property
    def spline(self) -> SplineSpec:
        if self.d != 1:
            raise InvalidInputError("spline property is for single-covariate specs")
        return self.splines[0]

    @property
    def k_total(self) -> int:
        return sum(s.k_max for s in self.splines)

    @property
    def block_slices(self) -> tuple[slice, ...]:
        out, start = [], 0
        for s in self.splines:
            out.append(slice(start, start + s.k_max))
            start += s.k_max
        return tuple(out)

    def knot_configs(self, z: np.ndarray, gamma: np.ndarray) -> tuple[KnotConfiguration, ...]:
        return tuple(
            KnotConfiguration(z=z[sl], gamma=gamma[sl]) for sl in self.block_slices
        )

    def design_values(self, x: np.ndarray, z: np.ndarray, gamma: np.ndarray) -> np.ndarray:
        """Active design at the points ``x`` (n x d, or 1-d when d = 1)."""
        X = np.asarray(x, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        return build_additive_design(X, self.knot_configs(z, gamma), self.splines).values

    def n_columns(self, z: np.ndarray) -> int:
        k = int(np.asarray(z, dtype=bool).sum())
        if self.d == 1:
            return self.splines[0].degree + 1 + k
        return 1 + sum(s.degree for s in self.splines) + k

    def log_prior_z(self, z: np.ndarray) -> float:
        """Per-block lambda^|z_j| / |z_j|! truncated at max_knots."""
        lam, L = self.priors.lam, self.priors.max_knots
        total = 0.0
        z = np.asarray(z, dtype=bool)
        for sl in self.block_slices:
            m = int(z[sl].sum())
            if m > L:
                return -np.inf
            total += m * np.log(lam) - gammaln(m + 1)
        return total

    def log_prior_c(self, c: float, n: int) -> float:
        if c <= 0:
            return -np.inf
        shape = self.priors.c_shape
        scale = self.priors.c_scale if self.priors.c_scale is not None else 2.0 * n
        return -(shape + 1.0) * np.log(c) - scale / c

    def in_support(self, z: np.ndarray, gamma: np.ndarray) -> bool:
        z = np.asarray(z, dtype=bool)
        for sl, spline in zip(self.block_slices, self.splines):
            if int(z[sl].sum()) > self.priors.max_knots:
                return False
            if not spline.intervals.contains_all(np.asarray(gamma, dtype=float)[sl]):
                return False
        return True


@dataclass
class LatentState:
    """Sampler state after marginalizing the regression and scale parameters."""

    z: np.ndarray
    gamma: np.ndarray
    w: np.ndarray
    c: float

    def __post_init__(self):
        self.z = np.asarray(self.z, dtype=bool)
        self.gamma = np.asarray(self.gamma, dtype=float)
        self.w = np.asarray(self.w, dtype=float)
        if np.any(self.w <= 0):
            raise InvalidInputError("all latent weights w_i must be positive")
        if self.c <= 0:
            raise InvalidInputError("c must be positive")

    def copy(self) -> "LatentState":
        return LatentState(
            z=self.z.copy(), gamma=self.gamma.copy(), w=self.w.copy(), c=self.c
        )


def check_loss(p: float, eps) -> np.ndarray | float:
    """Piecewise-linear quantile loss: p*eps above 0, (p-1)*eps below."""
    if not 0.0 < p < 1.0:
        raise InvalidInputError("quantile level must be in (0,1)")
    eps = np.asarray(eps, dtype=float)
    out = np.where(eps >= 0, p * eps, (p - 1.0) * eps)
    return float(out) if out.ndim == 0 else out


def al_log_density(p: float, sigma: float, eps) -> np.ndarray | float:
    """Log density of the asymmetric Laplace error law with scale sigma."""
    if sigma <= 0:
        raise InvalidInputError("sigma must be positive")
    out = np.log(p * (1.0 - p) / sigma) - check_loss(p, eps) / sigma
    return float(out) if np.ndim(out) == 0 else out


def shifted_response(y: np.ndarray, w: np.ndarray, p: float) -> np.ndarray:
    """y minus the conditional noise mean (1-2p)/(p(1-p)) w."""
    y = np.asarray(y, dtype=float)
    w = np.asarray(w, dtype=float)
    if y.shape != w.shape:
        raise InvalidInputError("y and w must have the same length")
    return y - w * ((1.0 - 2.0 * p) / (p * (1.0 - p)))


def _shrunk_quad_form(
    yw: np.ndarray, design: np.ndarray, w: np.ndarray, c: float
) -> float:
    """S = yw' W^-1 yw - c/(c+1) * yw' W^-1 X (X'W^-1X)^-1 X'W^-1 yw."""
    su = 1.0 / np.sqrt(w)
    Xs = design * su[:, None]
    ys = yw * su
    G = Xs.T @ Xs
    try:
        L = np.linalg.cholesky(G)
    except np.linalg.LinAlgError:
        raise SingularDesignError("X'W^-1X is not positive definite")
    diag = np.diagonal(L)
    if diag.min() <= _RANK_TOL * diag.max():
        raise SingularDesignError("X'W^-1X is numerically rank deficient")
    v = solve_triangular(L, Xs.T @ ys, lower=True, check_finite=False)
    s = float(ys @ ys - (c / (c + 1.0)) * (v @ v))
    return max(s, 0.0)


def quad_form_S(y, design, w, c: float, p: float) -> float:
    """Weighted residual quadratic form with g-prior shrinkage.

    ``design`` may be a DesignMatrix or a plain array. Raises
    SingularDesignError when the weighted cross-product is rank deficient;
    callers treat such states as log density -inf.
    """
    values = getattr(design, "values", design)
    values = np.asarray(values, dtype=float)
    y = np.asarray(y, dtype=float)
    w = np.asarray(w, dtype=float)
    if c <= 0:
        raise InvalidInputError("c must be positive")
    if np.any(w <= 0):
        raise InvalidInputError("weights must be positive")
    return _shrunk_quad_form(shifted_response(y, w, p), values, w, c)


def log_marginal_posterior(
    state: LatentState, y, spec: QuantileModelSpec, x
) -> float:
    """Unnormalized log posterior of (z, gamma, W, c) given the data.

    Returns -inf outside the support (too many knots, a gamma outside its
    interval, c <= 0) and for rank-deficient active designs.
    """
    y = np.asarray(y, dtype=float)
    n = y.size
    if state.c <= 0 or np.any(state.w <= 0):
        return -np.inf
    if not spec.in_support(state.z, state.gamma):
        return -np.inf
    lp_z = spec.log_prior_z(state.z)
    if not np.isfinite(lp_z):
        return -np.inf
    design = spec.design_values(x, state.z, state.gamma)
    try:
        s = quad_form_S(y, design, state.w, state.c, spec.p)
    except SingularDesignError:
        return -np.inf
    q = design.shape[1]
    coef = spec.p * (1.0 - spec.p) / 4.0
    return float(
        spec.log_prior_c(state.c, n)
        + lp_z
        - 0.5 * np.log(state.w).sum()
        - 0.5 * q * np.log1p(state.c)
        - 1.5 * n * np.log(coef * s + state.w.sum())
    )
