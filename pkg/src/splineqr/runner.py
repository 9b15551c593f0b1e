"""Fit orchestration and artifact persistence.

Covariates are rescaled to [0, 1] before interval construction and sampling
and mapped back for every user-facing artifact. All file outputs are
deterministic functions of the data, configuration and seed.
"""

from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .basis import (
    BSPLINE,
    AffineScaler,
    IntervalPartition,
    SplineSpec,
    equal_intervals,
    make_intervals,
)
from .errors import ConstraintInfeasibleError, DataFormatError, InvalidInputError
from .estimate import (
    CurveEstimate,
    additive_components,
    bma_curve,
    default_grid,
    map_curve,
    mse,
)
from .noncross import ALIGNED, CARTESIAN, PairedChains, reweighted_estimate
from .posterior import PriorConfig, QuantileModelSpec
from .sampler import ChainOutput, SamplerConfig, run_chain
from .simulate import DatasetTable, generate_example

logger = logging.getLogger(__name__)

TRUTH_COLUMN = "true_median"
AUTO = "auto"


@dataclass(frozen=True)
class RunConfig:
    """User-level knobs shared by the CLI commands."""

    quantiles: tuple[float, ...] = (0.5,)
    degree: int = 2
    lam: float = 3.0
    max_knots: int = 10
    n_x: int = 5
    boundaries: tuple[float, ...] | None = None
    n_intervals: int | None = None
    exclude_edge_intervals: bool = False
    basis: str = BSPLINE
    n_tune: int = 500
    n_burn: int = 500
    n_record: int = 1500
    z_steps_per_gamma: int = 20
    seed: int = 0
    grid_size: int = 200
    chain_verbose: bool = False
    jobs: int = 1

    def __post_init__(self):
        qs = tuple(float(q) for q in self.quantiles)
        object.__setattr__(self, "quantiles", qs)
        if not qs or any(not 0.0 < q < 1.0 for q in qs):
            raise InvalidInputError("quantiles must be nonempty, each in (0,1)")
        if any(b >= a for a, b in zip(qs[1:], qs[:-1])):
            raise InvalidInputError("quantiles must be strictly increasing")
        if self.degree < 1:
            raise InvalidInputError("degree must be >= 1")
        if self.grid_size < 2:
            raise InvalidInputError("grid_size must be >= 2")
        if self.jobs < 1:
            raise InvalidInputError("jobs must be >= 1")

    def sampler_config(self, seed: int | None = None) -> SamplerConfig:
        return SamplerConfig(
            n_tune=self.n_tune,
            n_burn=self.n_burn,
            n_record=self.n_record,
            z_steps_per_gamma=self.z_steps_per_gamma,
            seed=self.seed if seed is None else seed,
        )

    def priors(self) -> PriorConfig:
        return PriorConfig(lam=self.lam, max_knots=self.max_knots)


@dataclass
class QuantileFit:
    """One fitted quantile level in standardized coordinates.

    The bma/map curves are populated for single-covariate fits; additive
    fits are summarized through their component curves instead.
    """

    p: float
    spec: QuantileModelSpec
    chain: ChainOutput
    scalers: tuple[AffineScaler, ...]
    u: np.ndarray
    y: np.ndarray
    grid: np.ndarray | None
    bma: CurveEstimate | None
    map: CurveEstimate | None


def _partition(cfg: RunConfig, u: np.ndarray, scaler: AffineScaler) -> IntervalPartition:
    if cfg.boundaries is not None:
        edges = np.asarray(scaler.transform(np.asarray(cfg.boundaries, dtype=float)))
        if edges.size < 2 or np.any(np.diff(edges) <= 0):
            raise InvalidInputError("boundaries must be >= 2 strictly increasing values")
        part = IntervalPartition(lo=edges[:-1], hi=edges[1:])
        if cfg.exclude_edge_intervals:
            if len(part) < 3:
                raise InvalidInputError("need >= 3 intervals to exclude the edges")
            part = IntervalPartition(lo=part.lo[1:-1], hi=part.hi[1:-1])
        return part
    if cfg.n_intervals is not None:
        return equal_intervals(
            0.0, 1.0, cfg.n_intervals, drop_edges=cfg.exclude_edge_intervals
        )
    part = make_intervals(u, cfg.n_x)
    if cfg.exclude_edge_intervals:
        if len(part) < 3:
            raise InvalidInputError("need >= 3 intervals to exclude the edges")
        part = IntervalPartition(lo=part.lo[1:-1], hi=part.hi[1:-1])
    return part


def build_model_spec(cfg: RunConfig, data: DatasetTable, p: float):
    """Standardize covariates and assemble the model spec for one level."""
    scalers = tuple(AffineScaler.from_data(data.x[:, j]) for j in range(data.d))
    u = np.column_stack(
        [scalers[j].transform(data.x[:, j]) for j in range(data.d)]
    )
    splines = tuple(
        SplineSpec(
            degree=cfg.degree,
            intervals=_partition(cfg, u[:, j], scalers[j]),
            basis=cfg.basis,
            domain=(0.0, 1.0),
        )
        for j in range(data.d)
    )
    spec = QuantileModelSpec(p=p, splines=splines, priors=cfg.priors())
    return spec, scalers, u


def fit_level(
    data: DatasetTable, cfg: RunConfig, p: float, rng=None
) -> QuantileFit:
    """Run the chain for one quantile level and compute both curve estimates."""
    if data.n < cfg.degree + 2:
        raise InvalidInputError(
            f"need at least degree+2 = {cfg.degree + 2} observations, got {data.n}"
        )
    spec, scalers, u = build_model_spec(cfg, data, p)
    x_for_chain = u[:, 0] if data.d == 1 else u
    chain = run_chain(data.y, x_for_chain, spec, cfg.sampler_config(), rng=rng)
    grid = bma = mp = None
    if data.d == 1:
        grid = default_grid(u[:, 0], cfg.grid_size)
        bma = bma_curve(chain, data.y, u[:, 0], spec, grid)
        mp = map_curve(chain, data.y, u[:, 0], spec, grid)
    return QuantileFit(
        p=p, spec=spec, chain=chain, scalers=scalers, u=u, y=data.y,
        grid=grid, bma=bma, map=mp,
    )


# -- file format helpers ---------------------------------------------------


def _fmt(value: float) -> str:
    return repr(float(value))


def write_curves_csv(path, curves, scaler: AffineScaler, covariate: str = "x") -> None:
    """Curve rows as (x, fitted, kind, p) with x mapped to original scale."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([covariate, "fitted", "kind", "p"])
        for curve in curves:
            xs = scaler.inverse(curve.grid)
            for xv, fv in zip(xs, curve.values):
                writer.writerow([_fmt(xv), _fmt(fv), curve.kind, _fmt(curve.p)])


def write_component_csv(path, name_curve_pairs, scalers) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["covariate", "x", "fitted", "kind", "p"])
        for (name, curve), scaler in zip(name_curve_pairs, scalers):
            xs = scaler.inverse(curve.grid)
            for xv, fv in zip(xs, curve.values):
                writer.writerow([name, _fmt(xv), _fmt(fv), curve.kind, _fmt(curve.p)])


def write_chain_jsonl(path, fit: QuantileFit, verbose: bool = False) -> None:
    """One JSON record per recorded state: iteration, c, knot count, active
    knot locations (original scale), log posterior; w only when verbose."""
    path = Path(path)
    blocks = fit.spec.block_slices
    with path.open("w") as fh:
        for t, (state, lp) in enumerate(zip(fit.chain.samples, fit.chain.log_post)):
            if fit.spec.d == 1:
                knots = [
                    float(fit.scalers[0].inverse(g))
                    for g in state.gamma[state.z]
                ]
            else:
                knots = []
                for j, sl in enumerate(blocks):
                    zb, gb = state.z[sl], state.gamma[sl]
                    knots.extend(
                        [j, float(fit.scalers[j].inverse(g))] for g in gb[zb]
                    )
            rec = {
                "iter": t,
                "c": float(state.c),
                "k": int(state.z.sum()),
                "knots": knots,
                "log_post": float(lp),
            }
            if verbose:
                rec["w"] = [float(v) for v in state.w]
            fh.write(json.dumps(rec, sort_keys=True))
            fh.write("\n")


def write_summary_json(path, payload: dict) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def acceptance_summary(chain: ChainOutput) -> dict:
    return {phase: acc.to_dict() for phase, acc in chain.acceptance.items()}


def config_echo(cfg: RunConfig) -> dict:
    echo = asdict(cfg)
    echo["quantiles"] = list(cfg.quantiles)
    if cfg.boundaries is not None:
        echo["boundaries"] = list(cfg.boundaries)
    return echo


# -- CSV ingestion --------------------------------------------------------


def read_table(path, y_col: str | None = None, x_cols=None) -> DatasetTable:
    """Load a headered numeric CSV into a DatasetTable.

    The response column is ``y_col`` if given, else a column named 'y',
    else the last column. Covariates are ``x_cols`` if given, else every
    remaining column except the recognized truth column.
    """
    path = Path(path)
    with path.open("r", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataFormatError(f"{path}: file is empty")
    header, body = rows[0], rows[1:]
    if not body:
        raise DataFormatError(f"{path}: no data rows")
    names = [h.strip() for h in header]
    if len(set(names)) != len(names):
        raise DataFormatError(f"{path}: duplicate column names")
    if y_col is None:
        y_col = "y" if "y" in names else names[-1]
    if y_col not in names:
        raise DataFormatError(f"{path}: no column named {y_col!r}")
    if x_cols:
        missing = [c for c in x_cols if c not in names]
        if missing:
            raise DataFormatError(f"{path}: no column named {missing[0]!r}")
        x_names = list(x_cols)
    else:
        x_names = [c for c in names if c not in (y_col, TRUTH_COLUMN)]
    if not x_names:
        raise DataFormatError(f"{path}: no covariate columns left")

    table = np.empty((len(body), len(names)))
    for i, row in enumerate(body):
        if len(row) != len(names):
            raise DataFormatError(
                f"{path}: row {i + 2} has {len(row)} fields, expected {len(names)}"
            )
        for j, cell in enumerate(row):
            cell = cell.strip()
            if not cell:
                raise DataFormatError(
                    f"{path}: row {i + 2}, column {names[j]!r}: missing value"
                )
            try:
                table[i, j] = float(cell)
            except ValueError:
                raise DataFormatError(
                    f"{path}: row {i + 2}, column {names[j]!r}: "
                    f"cannot parse {cell!r} as a number"
                )
    col = {name: table[:, j] for j, name in enumerate(names)}
    truth = col.get(TRUTH_COLUMN)
    return DatasetTable(
        x=np.column_stack([col[c] for c in x_names]),
        y=col[y_col],
        truth=truth,
        x_names=tuple(x_names),
        y_name=y_col,
    )


def write_dataset_csv(path, data: DatasetTable) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        header = list(data.x_names) + [data.y_name]
        if data.truth is not None:
            header.append(TRUTH_COLUMN)
        writer.writerow(header)
        for i in range(data.n):
            row = [_fmt(v) for v in data.x[i]] + [_fmt(data.y[i])]
            if data.truth is not None:
                row.append(_fmt(data.truth[i]))
            writer.writerow(row)


# -- commands -------------------------------------------------------------


def _p_tag(p: float) -> str:
    return repr(float(p))


def fit_command(data: DatasetTable, cfg: RunConfig, out_dir) -> list[Path]:
    """Fit every requested quantile level and persist the artifacts."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    root = np.random.SeedSequence(cfg.seed)
    children = root.spawn(len(cfg.quantiles))
    written: list[Path] = []
    for p, child in zip(cfg.quantiles, children):
        fit = fit_level(data, cfg, p, rng=child)
        tag = _p_tag(p)
        curve_path = out_dir / f"curves_p{tag}.csv"
        write_curves_csv(curve_path, [fit.bma, fit.map], fit.scalers[0])
        chain_path = out_dir / f"chain_p{tag}.jsonl"
        write_chain_jsonl(chain_path, fit, verbose=cfg.chain_verbose)
        summary = {
            "command": "fit",
            "quantile": p,
            "n": data.n,
            "config": config_echo(cfg),
            "acceptance": acceptance_summary(fit.chain),
            "map_log_posterior": float(np.max(fit.chain.log_post)),
            "proposal_scale_c": float(fit.chain.proposal_scales["c"]),
        }
        if data.truth is not None and data.d == 1:
            order = np.argsort(fit.u[:, 0])
            obs_curve = bma_curve(
                fit.chain, data.y, fit.u[:, 0], fit.spec, fit.u[order, 0]
            )
            summary["mse_bma_vs_truth"] = mse(obs_curve, data.truth[order])
        summary_path = out_dir / f"summary_p{tag}.json"
        write_summary_json(summary_path, summary)
        written += [curve_path, chain_path, summary_path]
    return written


def fit_additive_command(data: DatasetTable, cfg: RunConfig, out_dir) -> list[Path]:
    """Additive fit: component curves per covariate plus chain artifacts."""
    if data.d < 1:
        raise InvalidInputError("additive fit needs at least one covariate")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    root = np.random.SeedSequence(cfg.seed)
    children = root.spawn(len(cfg.quantiles))
    written: list[Path] = []
    for p, child in zip(cfg.quantiles, children):
        fit = fit_level(data, cfg, p, rng=child)
        grids = [np.linspace(0.0, 1.0, cfg.grid_size) for _ in range(data.d)]
        comps = additive_components(fit.chain, data.y, fit.u, fit.spec, grids)
        tag = _p_tag(p)
        comp_path = out_dir / f"components_p{tag}.csv"
        write_component_csv(
            comp_path,
            list(zip(data.x_names, comps.components)),
            fit.scalers,
        )
        chain_path = out_dir / f"chain_p{tag}.jsonl"
        write_chain_jsonl(chain_path, fit, verbose=cfg.chain_verbose)
        summary = {
            "command": "fit-additive",
            "quantile": p,
            "n": data.n,
            "covariates": list(data.x_names),
            "config": config_echo(cfg),
            "acceptance": acceptance_summary(fit.chain),
            "map_log_posterior": float(np.max(fit.chain.log_post)),
            "intercept": comps.intercept,
        }
        summary_path = out_dir / f"summary_p{tag}.json"
        write_summary_json(summary_path, summary)
        written += [comp_path, chain_path, summary_path]
    return written


def _benchmark_replicate(args) -> dict:
    example, cfg, data_seed, chain_seed, rep = args
    data = generate_example(example, data_seed)
    fit = fit_level(data, cfg, 0.5, rng=chain_seed)
    order = np.argsort(fit.u[:, 0])
    pts = fit.u[order, 0]
    truth = data.truth[order]
    res_bma = mse(bma_curve(fit.chain, data.y, fit.u[:, 0], fit.spec, pts), truth)
    res_map = mse(map_curve(fit.chain, data.y, fit.u[:, 0], fit.spec, pts), truth)
    return {"replicate": rep, "bma_mse": res_bma, "map_mse": res_map}


def run_benchmark(example: int, replicates: int, cfg: RunConfig) -> dict:
    """Repeated simulated fits at p = 0.5 with per-estimator MSE summaries."""
    if replicates < 1:
        raise InvalidInputError("replicates must be >= 1")
    root = np.random.SeedSequence(cfg.seed)
    tasks = []
    for rep, child in enumerate(root.spawn(replicates)):
        data_seed, chain_seed = child.spawn(2)
        tasks.append((example, cfg, data_seed, chain_seed, rep))
    if cfg.jobs > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            rows = list(pool.map(_benchmark_replicate, tasks))
    else:
        rows = [_benchmark_replicate(t) for t in tasks]
    bma = np.array([r["bma_mse"] for r in rows])
    mp = np.array([r["map_mse"] for r in rows])
    ddof = 1 if replicates > 1 else 0
    return {
        "example": example,
        "replicates": replicates,
        "rows": rows,
        "bma": {"mean_mse": float(bma.mean()), "sd": float(bma.std(ddof=ddof))},
        "map": {"mean_mse": float(mp.mean()), "sd": float(mp.std(ddof=ddof))},
    }


def benchmark_command(example: int, replicates: int, cfg: RunConfig, out_dir) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    result = run_benchmark(example, replicates, cfg)
    table_path = out_dir / f"benchmark_example{example}.csv"
    with table_path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["replicate", "bma_mse", "map_mse"])
        for row in result["rows"]:
            writer.writerow(
                [row["replicate"], _fmt(row["bma_mse"]), _fmt(row["map_mse"])]
            )
    summary = {
        "command": "benchmark",
        "example": example,
        "replicates": replicates,
        "config": config_echo(cfg),
        "bma": result["bma"],
        "map": result["map"],
    }
    summary_path = out_dir / f"benchmark_example{example}.json"
    write_summary_json(summary_path, summary)
    return [table_path, summary_path]


def run_noncross(
    data: DatasetTable, cfg: RunConfig, p1: float, p2: float, combination: str = AUTO
):
    """Fit two levels and reweight their sample pairs into ordered curves."""
    if data.d != 1:
        raise InvalidInputError("noncrossing postprocessing is single-covariate")
    root = np.random.SeedSequence(cfg.seed)
    child_lo, child_hi = root.spawn(2)
    fit_lo = fit_level(data, cfg, p1, rng=child_lo)
    fit_hi = fit_level(data, cfg, p2, rng=child_hi)
    grid = default_grid(fit_lo.u[:, 0], cfg.grid_size)
    used = combination
    if combination == AUTO:
        pairs = PairedChains(
            chain_lo=fit_lo.chain, chain_hi=fit_hi.chain, p1=p1, p2=p2,
            combination=ALIGNED,
        )
        try:
            result = reweighted_estimate(
                pairs, data.y, fit_lo.u[:, 0], fit_lo.spec, fit_hi.spec, grid
            )
            if result.kept / result.total >= 0.05:
                return fit_lo, fit_hi, result, ALIGNED
        except ConstraintInfeasibleError:
            pass
        used = CARTESIAN
    pairs = PairedChains(
        chain_lo=fit_lo.chain, chain_hi=fit_hi.chain, p1=p1, p2=p2,
        combination=used,
    )
    result = reweighted_estimate(
        pairs, data.y, fit_lo.u[:, 0], fit_lo.spec, fit_hi.spec, grid
    )
    return fit_lo, fit_hi, result, used


def noncross_command(
    data: DatasetTable, cfg: RunConfig, p1: float, p2: float, out_dir,
    combination: str = AUTO,
) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    fit_lo, fit_hi, result, used = run_noncross(data, cfg, p1, p2, combination)
    curve_path = out_dir / "noncross_curves.csv"
    write_curves_csv(
        curve_path,
        [fit_lo.bma, fit_hi.bma, result.curve_lo, result.curve_hi],
        fit_lo.scalers[0],
    )
    summary = {
        "command": "noncross",
        "p1": p1,
        "p2": p2,
        "combination": used,
        "kept": result.kept,
        "total": result.total,
        "config": config_echo(cfg),
    }
    summary_path = out_dir / "noncross_summary.json"
    write_summary_json(summary_path, summary)
    return [curve_path, summary_path]
