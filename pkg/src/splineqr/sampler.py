"""MH-within-Gibbs sampler over (z, gamma, W, c).

One iteration runs a block of indicator moves, a knot-location sweep, a
random-walk sweep over the latent weights, and a random-walk move on the
shrinkage parameter, in that order. Proposal scales for the weight and
shrinkage walks are tuned automatically during a dedicated first phase and
frozen afterwards.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import gammaln

from .errors import ChainDiagnosticError, InvalidInputError
from .posterior import LatentState, QuantileModelSpec

_RANK_TOL = 1e-10

ADD_DELETE = "add_delete"
SWAP = "swap"


@dataclass(frozen=True)
class SamplerConfig:
    """Chain schedule, proposal bookkeeping and seeding."""

    n_tune: int = 500
    n_burn: int = 500
    n_record: int = 1500
    z_steps_per_gamma: int = 20
    seed: int = 0
    p_star: float = 0.44
    record_tuner_trace: bool = False

    def __post_init__(self):
        if min(self.n_tune, self.n_burn) < 0 or self.z_steps_per_gamma < 1:
            raise InvalidInputError("invalid sampler schedule")
        if not 0.0 < self.p_star < 1.0:
            raise InvalidInputError("p_star must be in (0,1)")


@dataclass
class TunerState:
    """Scaling state of the automatic random-walk tuner for one parameter.

    ``clock`` counts tuning steps since the last restart; it drives the
    restart window when the caller does not supply an explicit step index.
    """

    sigma_current: float = 1.0
    sigma_anchor: float = 1.0
    j: int = 0
    restarts: int = 0
    frozen: bool = False
    clock: int = 0


def tune_step(
    tuner: TunerState, alpha: float, u: float, t: int | None = None,
    p_star: float = 0.44,
) -> TunerState:
    """One scaling update of the proposal std dev.

    ``alpha`` is the acceptance probability of the move just attempted and
    ``u`` the uniform draw compared against it (u < alpha grows the scale,
    u >= alpha shrinks it). No change happens during the first 19 steps
    after a (re)start. Early on (t < 100) a scale drifting past a factor 3
    of its anchor restarts the schedule, at most 5 times; restarting also
    resets the tuner's own clock, which is used when ``t`` is None.
    """
    if tuner.frozen:
        raise InvalidInputError("tuner is frozen")
    tuner.j += 1
    tuner.clock += 1
    if tuner.j >= 20:
        kappa = tuner.sigma_current / (p_star * (1.0 - p_star))
        if u < alpha:
            tuner.sigma_current += kappa * (1.0 - p_star) / tuner.j
        else:
            tuner.sigma_current -= kappa * p_star / tuner.j
    window = tuner.clock if t is None else t
    if (
        window < 100
        and tuner.restarts < 5
        and (
            tuner.sigma_current > 3.0 * tuner.sigma_anchor
            or tuner.sigma_current < tuner.sigma_anchor / 3.0
        )
    ):
        tuner.sigma_anchor = tuner.sigma_current
        tuner.j = 0
        tuner.restarts += 1
        tuner.clock = 0
    return tuner


@dataclass
class AcceptancePhase:
    """Accept/propose counters for one chain phase."""

    z_counts: dict = field(
        default_factory=lambda: {ADD_DELETE: [0, 0], SWAP: [0, 0]}
    )
    gamma: list = field(default_factory=lambda: [0, 0])
    w_accepted: np.ndarray | None = None
    w_sweeps: int = 0
    c: list = field(default_factory=lambda: [0, 0])

    def w_rates(self) -> np.ndarray:
        if self.w_sweeps == 0:
            return np.zeros_like(self.w_accepted, dtype=float)
        return self.w_accepted / self.w_sweeps

    def c_rate(self) -> float:
        return self.c[0] / self.c[1] if self.c[1] else 0.0

    def to_dict(self) -> dict:
        out = {
            "z": {
                move: {"accepted": acc, "proposed": prop}
                for move, (acc, prop) in self.z_counts.items()
            },
            "gamma": {"accepted": self.gamma[0], "proposed": self.gamma[1]},
            "c": {"accepted": self.c[0], "proposed": self.c[1]},
            "w_sweeps": self.w_sweeps,
        }
        if self.w_sweeps:
            rates = self.w_rates()
            out["w"] = {
                "mean_rate": float(rates.mean()),
                "min_rate": float(rates.min()),
                "max_rate": float(rates.max()),
            }
        return out


@dataclass
class ChainOutput:
    """Recorded draws plus log posteriors and acceptance bookkeeping."""

    samples: list[LatentState]
    log_post: np.ndarray
    acceptance: dict[str, AcceptancePhase]
    proposal_scales: dict
    tuner_trace: dict | None = None

    def __len__(self) -> int:
        return len(self.samples)


class ChainEngine:
    """Mutable sampler state with cached posterior pieces.

    Caches the active design, its weighted Gram factorization and the two
    quadratic forms q0 = yw' W^-1 yw and q1 = b' G^-1 b, so that kernel
    moves only recompute what they disturb. The weight sweep updates the
    Gram matrix by rank-one corrections and refreshes it from scratch at
    the start of every sweep to stop round-off drift.
    """

    def __init__(self, y, x, spec: QuantileModelSpec):
        self.y = np.asarray(y, dtype=float)
        self.n = self.y.size
        if self.n == 0:
            raise InvalidInputError("empty dataset")
        X = np.asarray(x, dtype=float)
        self.x = X[:, None] if X.ndim == 1 else X
        if self.x.shape[0] != self.n:
            raise InvalidInputError("x and y lengths differ")
        if self.x.shape[1] != spec.d:
            raise InvalidInputError(
                f"data has {self.x.shape[1]} covariates, spec has {spec.d}"
            )
        self.spec = spec
        p = spec.p
        self.theta = (1.0 - 2.0 * p) / (p * (1.0 - p))
        self.coef = p * (1.0 - p) / 4.0
        self.k_total = spec.k_total
        self.int_lo = np.concatenate([s.intervals.lo for s in spec.splines])
        self.int_hi = np.concatenate([s.intervals.hi for s in spec.splines])
        self._blocks = spec.block_slices
        self._lam = spec.priors.lam
        self._L = spec.priors.max_knots

    # -- cache plumbing -------------------------------------------------

    def set_state(self, state: LatentState) -> float:
        """Load a state, rebuild all caches; returns the log posterior."""
        if state.z.size != self.k_total or state.w.size != self.n:
            raise InvalidInputError("state dimensions do not match the model")
        self.z = state.z.copy()
        self.gamma = state.gamma.copy()
        self.w = state.w.copy()
        self.c = float(state.c)
        self.u = 1.0 / self.w
        self.yw = self.y - self.theta * self.w
        self.sumw = float(self.w.sum())
        self.sumlogw = float(np.log(self.w).sum())
        self.lp_z = self._log_prior_z_counts(self._block_counts(self.z))
        self.lp_c = self.spec.log_prior_c(self.c, self.n)
        if not self.spec.in_support(self.z, self.gamma):
            self.design = None
            self.lp = -np.inf
            return self.lp
        self.design = self.spec.design_values(self.x, self.z, self.gamma)
        self.ncols = self.design.shape[1]
        if not self._refresh_gram():
            self.lp = -np.inf
            return self.lp
        self.lp = self._lp_value(
            self.lp_c, self.lp_z, self.sumlogw, self.ncols, self.c, self.q0, self.q1, self.sumw
        )
        return self.lp

    def snapshot(self) -> LatentState:
        return LatentState(
            z=self.z.copy(), gamma=self.gamma.copy(), w=self.w.copy(), c=self.c
        )

    def _block_counts(self, z: np.ndarray) -> list[int]:
        return [int(z[sl].sum()) for sl in self._blocks]

    def _log_prior_z_counts(self, counts) -> float:
        total = 0.0
        for m in counts:
            if m > self._L:
                return -np.inf
            total += m * np.log(self._lam) - gammaln(m + 1)
        return total

    def _lp_value(self, lp_c, lp_z, sumlogw, ncols, c, q0, q1, sumw) -> float:
        s = q0 - (c / (c + 1.0)) * q1
        if s < 0.0:
            s = 0.0
        return float(
            lp_c
            + lp_z
            - 0.5 * sumlogw
            - 0.5 * ncols * np.log1p(c)
            - 1.5 * self.n * np.log(self.coef * s + sumw)
        )

    def _gram_of(self, design: np.ndarray):
        """(G, b, L, q0, q1) under current weights, or None if singular."""
        Xu = design * self.u[:, None]
        G = Xu.T @ design
        b = Xu.T @ self.yw
        fac = self._chol(G)
        if fac is None:
            return None
        v = solve_triangular(fac, b, lower=True, check_finite=False)
        q0 = float((self.u * self.yw) @ self.yw)
        return G, b, fac, q0, float(v @ v)

    @staticmethod
    def _chol(G: np.ndarray):
        try:
            fac = np.linalg.cholesky(G)
        except np.linalg.LinAlgError:
            return None
        diag = np.diagonal(fac)
        if diag.min() <= _RANK_TOL * diag.max():
            return None
        return fac

    def _refresh_gram(self) -> bool:
        got = self._gram_of(self.design)
        if got is None:
            return False
        self.G, self.b, self.chol, self.q0, self.q1 = got
        return True

    def _try_design(self, z: np.ndarray, gamma: np.ndarray):
        """Candidate design + Gram pieces for a z/gamma proposal."""
        design = self.spec.design_values(self.x, z, gamma)
        got = self._gram_of(design)
        if got is None:
            return None
        G, b, fac, q0, q1 = got
        return design, G, b, fac, q1

    # -- kernels --------------------------------------------------------

    def step_z(self, rng: np.random.Generator) -> tuple[bool, str]:
        """One indicator move: add/delete a knot or swap two indicators."""
        n_active = int(self.z.sum())
        swap_feasible = 0 < n_active < self.k_total
        if rng.random() < 0.5 or not swap_feasible:
            move = ADD_DELETE
            k = int(rng.integers(self.k_total))
            z2 = self.z.copy()
            z2[k] = not z2[k]
            # asymmetric fallback: flips are proposed with prob 1 when a
            # swap is infeasible, else 0.5 -- the q-ratio uses both ends
            n2 = n_active + (1 if z2[k] else -1)
            f_fwd = 0.5 if swap_feasible else 1.0
            f_rev = 0.5 if 0 < n2 < self.k_total else 1.0
            log_q_ratio = np.log(f_rev) - np.log(f_fwd)
        else:
            move = SWAP
            active = np.flatnonzero(self.z)
            inactive = np.flatnonzero(~self.z)
            i = int(active[rng.integers(active.size)])
            j = int(inactive[rng.integers(inactive.size)])
            z2 = self.z.copy()
            z2[i] = False
            z2[j] = True
            log_q_ratio = 0.0
        u = rng.random()
        counts2 = self._block_counts(z2)
        lp_z2 = self._log_prior_z_counts(counts2)
        if not np.isfinite(lp_z2):
            return False, move
        got = self._try_design(z2, self.gamma)
        if got is None:
            return False, move
        design, G, b, fac, q1 = got
        lp2 = self._lp_value(
            self.lp_c, lp_z2, self.sumlogw, design.shape[1], self.c, self.q0, q1, self.sumw
        )
        alpha = np.exp(min(lp2 - self.lp + log_q_ratio, 0.0))
        if u >= alpha:
            return False, move
        self.z = z2
        self.lp_z = lp_z2
        self.design, self.G, self.b, self.chol, self.q1 = design, G, b, fac, q1
        self.ncols = design.shape[1]
        self.lp = lp2
        return True, move

    def sweep_gamma(self, rng: np.random.Generator) -> tuple[int, int]:
        """Refresh every knot location; returns (accepted, proposed) for
        the active-knot MH updates (inactive draws are exact)."""
        proposed = accepted = 0
        for k in range(self.k_total):
            g2 = rng.uniform(self.int_lo[k], self.int_hi[k])
            if not self.z[k]:
                self.gamma[k] = g2
                continue
            proposed += 1
            u = rng.random()
            old = self.gamma[k]
            self.gamma[k] = g2
            got = self._try_design(self.z, self.gamma)
            if got is None:
                self.gamma[k] = old
                continue
            design, G, b, fac, q1 = got
            lp2 = self._lp_value(
                self.lp_c, self.lp_z, self.sumlogw, self.ncols, self.c, self.q0, q1, self.sumw
            )
            alpha = np.exp(min(lp2 - self.lp, 0.0))
            if u < alpha:
                accepted += 1
                self.design, self.G, self.b, self.chol, self.q1 = design, G, b, fac, q1
                self.lp = lp2
            else:
                self.gamma[k] = old
        return accepted, proposed

    def sweep_w(
        self,
        rng: np.random.Generator,
        tuners: list[TunerState],
        tune: bool = False,
        p_star: float = 0.44,
    ) -> np.ndarray:
        """Random-walk update of every latent weight; returns accept flags."""
        self._refresh_gram()
        steps = rng.standard_normal(self.n)
        us = rng.random(self.n)
        accepted = np.zeros(self.n, dtype=bool)
        cc = self.c / (self.c + 1.0)
        base = self.lp_c + self.lp_z - 0.5 * self.ncols * np.log1p(self.c)
        for i in range(self.n):
            wp = self.w[i] + tuners[i].sigma_current * steps[i]
            alpha = 0.0
            if wp > 0.0:
                up = 1.0 / wp
                ywp = self.y[i] - self.theta * wp
                xi = self.design[i]
                G2 = self.G + (up - self.u[i]) * np.outer(xi, xi)
                fac = self._chol(G2)
                if fac is not None:
                    b2 = self.b + xi * (up * ywp - self.u[i] * self.yw[i])
                    v = solve_triangular(fac, b2, lower=True, check_finite=False)
                    q1_2 = float(v @ v)
                    q0_2 = self.q0 + up * ywp * ywp - self.u[i] * self.yw[i] * self.yw[i]
                    sumw2 = self.sumw + wp - self.w[i]
                    sumlogw2 = self.sumlogw + np.log(wp) - np.log(self.w[i])
                    s = q0_2 - cc * q1_2
                    if s < 0.0:
                        s = 0.0
                    lp2 = base - 0.5 * sumlogw2 - 1.5 * self.n * np.log(
                        self.coef * s + sumw2
                    )
                    alpha = np.exp(min(lp2 - self.lp, 0.0))
                    if us[i] < alpha:
                        accepted[i] = True
                        self.w[i] = wp
                        self.u[i] = up
                        self.yw[i] = ywp
                        self.G, self.b, self.chol = G2, b2, fac
                        self.q0, self.q1 = q0_2, q1_2
                        self.sumw, self.sumlogw = sumw2, sumlogw2
                        self.lp = lp2
            if tune:
                tune_step(tuners[i], alpha, us[i], p_star=p_star)
        return accepted

    def step_c(
        self,
        rng: np.random.Generator,
        tuner: TunerState,
        tune: bool = False,
        p_star: float = 0.44,
    ) -> bool:
        """Random-walk update of the shrinkage parameter."""
        cp = self.c + tuner.sigma_current * rng.standard_normal()
        u = rng.random()
        alpha = 0.0
        if cp > 0.0:
            lp_c2 = self.spec.log_prior_c(cp, self.n)
            lp2 = self._lp_value(
                lp_c2, self.lp_z, self.sumlogw, self.ncols, cp, self.q0, self.q1, self.sumw
            )
            alpha = np.exp(min(lp2 - self.lp, 0.0))
        accepted = u < alpha
        if accepted:
            self.c = cp
            self.lp_c = lp_c2
            self.lp = lp2
        if tune:
            tune_step(tuner, alpha, u, p_star=p_star)
        return accepted


# -- spec-shaped functional kernels (thin wrappers over the engine) ------


def _loaded_engine(state, y, x, spec) -> ChainEngine:
    engine = ChainEngine(y, x, spec)
    engine.set_state(state)
    return engine


def update_z(state, y, x, spec, rng) -> tuple[LatentState, bool, str]:
    engine = _loaded_engine(state, y, x, spec)
    accepted, move = engine.step_z(rng)
    return engine.snapshot(), accepted, move


def update_gamma(state, y, x, spec, rng) -> LatentState:
    engine = _loaded_engine(state, y, x, spec)
    engine.sweep_gamma(rng)
    return engine.snapshot()


def update_w(state, y, x, spec, tuners, rng) -> LatentState:
    if len(tuners) != np.asarray(y).size:
        raise InvalidInputError("need one tuner per observation")
    engine = _loaded_engine(state, y, x, spec)
    engine.sweep_w(rng, tuners)
    return engine.snapshot()


def update_c(state, y, x, spec, tuner, rng) -> LatentState:
    engine = _loaded_engine(state, y, x, spec)
    engine.step_c(rng, tuner)
    return engine.snapshot()


# -- initialization and the chain driver ---------------------------------


def _truncated_poisson(lam: float, upper: int, rng: np.random.Generator) -> int:
    m = np.arange(upper + 1)
    logpmf = m * np.log(lam) - gammaln(m + 1)
    pmf = np.exp(logpmf - logpmf.max())
    pmf /= pmf.sum()
    return int(rng.choice(m, p=pmf))


def draw_initial_state(
    spec: QuantileModelSpec, n: int, rng: np.random.Generator
) -> LatentState:
    """Draw (z, gamma, w) from their priors; start c at its prior mode.

    The shrinkage prior is heavy tailed (infinite mean), and an inverse-CDF
    draw lands in its far tail often enough to leave the c random walk
    tuned for a transient region. Starting at the mode keeps the automatic
    tuning representative; the burn-in still decides where c settles.
    """
    z = np.zeros(spec.k_total, dtype=bool)
    for sl, spline in zip(spec.block_slices, spec.splines):
        upper = min(spec.priors.max_knots, spline.k_max)
        m = _truncated_poisson(spec.priors.lam, upper, rng)
        if m:
            idx = rng.choice(spline.k_max, size=m, replace=False)
            block = z[sl]
            block[idx] = True
            z[sl] = block
    int_lo = np.concatenate([s.intervals.lo for s in spec.splines])
    int_hi = np.concatenate([s.intervals.hi for s in spec.splines])
    gamma = rng.uniform(int_lo, int_hi)
    w = -np.log1p(-rng.random(n))
    scale = spec.priors.c_scale if spec.priors.c_scale is not None else 2.0 * n
    c = scale / (spec.priors.c_shape + 1.0)  # prior mode (= n at defaults)
    return LatentState(z=z, gamma=gamma, w=w, c=c)


def _acceptance_phases(n: int) -> dict[str, AcceptancePhase]:
    return {
        phase: AcceptancePhase(w_accepted=np.zeros(n, dtype=np.int64))
        for phase in ("tune", "burn", "record")
    }


def run_chain(
    y, x, spec: QuantileModelSpec, config: SamplerConfig, rng=None
) -> ChainOutput:
    """Tune, burn in, and record the MH-within-Gibbs chain.

    All randomness derives from ``config.seed`` (or an explicit SeedSequence
    passed as ``rng``), with separate streams per kernel; identical inputs
    give bit-identical output.
    """
    if config.n_record < 1:
        raise InvalidInputError("n_record must be >= 1")
    if rng is None:
        rng = np.random.SeedSequence(config.seed)
    elif isinstance(rng, int):
        rng = np.random.SeedSequence(rng)
    if not isinstance(rng, np.random.SeedSequence):
        raise InvalidInputError("rng must be a seed or numpy SeedSequence")
    r_init, r_z, r_g, r_w, r_c = (np.random.default_rng(s) for s in rng.spawn(5))

    y = np.asarray(y, dtype=float)
    engine = ChainEngine(y, x, spec)
    n = engine.n
    state = draw_initial_state(spec, n, r_init)
    for _ in range(1000):
        if np.isfinite(engine.set_state(state)):
            break
        state = draw_initial_state(spec, n, r_init)
    else:
        raise ChainDiagnosticError("could not find a finite-posterior initial state")

    w_tuners = [TunerState() for _ in range(n)]
    c_tuner = TunerState()
    acceptance = _acceptance_phases(n)
    trace_c = []
    trace_w = [] if config.record_tuner_trace else None

    def one_iteration(phase: str, tune: bool) -> None:
        acc = acceptance[phase]
        for _ in range(config.z_steps_per_gamma):
            ok, move = engine.step_z(r_z)
            acc.z_counts[move][0] += int(ok)
            acc.z_counts[move][1] += 1
        g_acc, g_prop = engine.sweep_gamma(r_g)
        acc.gamma[0] += g_acc
        acc.gamma[1] += g_prop
        flags = engine.sweep_w(r_w, w_tuners, tune=tune, p_star=config.p_star)
        acc.w_accepted += flags
        acc.w_sweeps += 1
        acc.c[0] += int(engine.step_c(r_c, c_tuner, tune=tune, p_star=config.p_star))
        acc.c[1] += 1
        trace_c.append(c_tuner.sigma_current)
        if trace_w is not None:
            trace_w.append([tun.sigma_current for tun in w_tuners])

    for _ in range(config.n_tune):
        one_iteration("tune", tune=True)
    for tuner in w_tuners:
        tuner.frozen = True
    c_tuner.frozen = True
    for _ in range(config.n_burn):
        one_iteration("burn", tune=False)
    samples: list[LatentState] = []
    log_post = np.empty(config.n_record)
    for t in range(config.n_record):
        one_iteration("record", tune=False)
        samples.append(engine.snapshot())
        log_post[t] = engine.lp

    if not np.any(np.isfinite(log_post)):
        raise ChainDiagnosticError("every recorded log posterior is -inf")
    trace = {"c": np.asarray(trace_c)}
    if trace_w is not None:
        trace["w"] = np.asarray(trace_w)
    return ChainOutput(
        samples=samples,
        log_post=log_post,
        acceptance=acceptance,
        proposal_scales={
            "w": np.array([tun.sigma_current for tun in w_tuners]),
            "c": c_tuner.sigma_current,
        },
        tuner_trace=trace,
    )
