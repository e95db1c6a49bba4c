"""Pressure-compensated-temperature (PCT) case-study harness.

Ground truth combines the Antoine and Clausius-Clapeyron relations:
1/PCT = (R/H_v) * ln(P/P_ref) + 1/T.  Scenario generation samples (P, T)
either in three linearly separable clusters or uniformly over the operating
box, computes PCT, min-max normalizes everything to [0, 1], splits 50/50
and corrupts the training outputs (only) with seeded Gaussian noise.

RNG streams are split by name from the scenario seed:
``default_rng([seed, k])`` with k = 0 for sampling, 1 for the split and
2 for the noise, so every artifact is bit-reproducible from the seed.
"""

from __future__ import annotations

import csv
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .classify import kmeans
from .core import Dataset, Scaler, SensorModel, predict_batch, rmse
from .design import (
    DesignConfig,
    DesignReport,
    design_mis_con,
    design_mis_con_lab,
    design_mis_std,
    design_sis,
)

METHODS = ("sis", "mis-std", "mis-con", "mis-con-lab")

P_RANGE = (2000.0, 20000.0)
T_RANGE = (523.15, 573.15)


@dataclass(frozen=True)
class PctGroundTruth:
    R: float = 8.314            # J/mol/K
    H_v: float = 55940.550      # J/mol
    P_ref: float = 145325.0     # Pa

    def __post_init__(self):
        if min(self.R, self.H_v, self.P_ref) <= 0:
            raise ValueError("ground-truth constants must be positive")


def pct(p: float, t: float, gt: PctGroundTruth = PctGroundTruth()) -> float:
    """PCT in kelvin for absolute pressure p [Pa] and temperature t [K]."""
    if p <= 0 or t <= 0:
        raise ValueError("pressure and temperature must be positive")
    denom = (gt.R / gt.H_v) * np.log(p / gt.P_ref) + 1.0 / t
    if denom <= 0:
        raise ValueError(f"PCT undefined at P={p}, T={t}: nonpositive denominator")
    return float(1.0 / denom)


@dataclass(frozen=True)
class ClusterSpec:
    """Uniform sampling box center +/- spread, in engineering units."""

    center_p: float
    center_t: float
    spread_p: float
    spread_t: float


def default_clusters(p_range=P_RANGE, t_range=T_RANGE) -> tuple[ClusterSpec, ...]:
    """Three separable clusters along the anti-diagonal of the operating box.

    Placing the low-pressure cluster at high temperature (and vice versa)
    spans the full PCT range and puts one cluster in the most curved part of
    the surface.  Spreads are 8 % of each range.
    """
    pw = p_range[1] - p_range[0]
    tw = t_range[1] - t_range[0]
    fracs = ((0.12, 0.88), (0.50, 0.50), (0.88, 0.12))
    return tuple(
        ClusterSpec(p_range[0] + fp * pw, t_range[0] + ft * tw, 0.08 * pw, 0.08 * tw)
        for fp, ft in fracs)


@dataclass
class ScenarioConfig:
    kind: str = "clustered"            # "clustered" | "uniform"
    n_total: int = 90
    noise_sigma: float = 0.005         # std of Gaussian noise on normalized PCT
    train_fraction: float = 0.5
    p_range: tuple[float, float] = P_RANGE
    t_range: tuple[float, float] = T_RANGE
    clusters: tuple[ClusterSpec, ...] | None = None   # clustered kind only
    seed: int = 0

    def validate(self) -> None:
        if self.kind not in ("clustered", "uniform"):
            raise ValueError(f"unknown scenario kind {self.kind!r}")
        if self.n_total < 2:
            raise ValueError("n_total must be at least 2")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be nonnegative")
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError("train_fraction must lie strictly between 0 and 1")
        if self.p_range[0] >= self.p_range[1]:
            raise ValueError("p_range minimum must be below its maximum")
        if self.t_range[0] >= self.t_range[1]:
            raise ValueError("t_range minimum must be below its maximum")
        if self.kind == "clustered":
            for i, c in enumerate(self.effective_clusters()):
                if (c.center_p - c.spread_p < self.p_range[0] - 1e-9
                        or c.center_p + c.spread_p > self.p_range[1] + 1e-9
                        or c.center_t - c.spread_t < self.t_range[0] - 1e-9
                        or c.center_t + c.spread_t > self.t_range[1] + 1e-9):
                    raise ValueError(f"cluster {i} spread leaves the sampling box")

    def effective_clusters(self) -> tuple[ClusterSpec, ...]:
        return self.clusters if self.clusters is not None else default_clusters(
            self.p_range, self.t_range)


def generate_scenario(cfg: ScenarioConfig,
                      gt: PctGroundTruth = PctGroundTruth()
                      ) -> tuple[Dataset, Dataset, Scaler]:
    """Sample a scenario; returns (train, test, scaler) in normalized units.

    Test outputs stay noise-free ground truth; training outputs carry the
    additive noise, so only the test split is flagged `normalized`.
    """
    cfg.validate()
    rng_sample = np.random.default_rng([cfg.seed, 0])
    rng_split = np.random.default_rng([cfg.seed, 1])
    rng_noise = np.random.default_rng([cfg.seed, 2])
    if cfg.kind == "uniform":
        p = rng_sample.uniform(cfg.p_range[0], cfg.p_range[1], size=cfg.n_total)
        t = rng_sample.uniform(cfg.t_range[0], cfg.t_range[1], size=cfg.n_total)
    else:
        clusters = cfg.effective_clusters()
        counts = [cfg.n_total // len(clusters)] * len(clusters)
        for i in range(cfg.n_total - sum(counts)):
            counts[i] += 1
        p_parts, t_parts = [], []
        for c, m in zip(clusters, counts):
            p_parts.append(rng_sample.uniform(c.center_p - c.spread_p,
                                              c.center_p + c.spread_p, size=m))
            t_parts.append(rng_sample.uniform(c.center_t - c.spread_t,
                                              c.center_t + c.spread_t, size=m))
        p = np.concatenate(p_parts)
        t = np.concatenate(t_parts)
    y = np.array([pct(pi, ti, gt) for pi, ti in zip(p, t)])
    raw = Dataset(np.column_stack([p, t]), y, np.arange(cfg.n_total))
    from .core import normalize

    norm, scaler = normalize(raw)
    n_train = int(round(cfg.n_total * cfg.train_fraction))
    n_train = min(max(n_train, 1), cfg.n_total - 1)
    perm = rng_split.permutation(cfg.n_total)
    train_idx = np.sort(perm[:n_train])
    test_idx = np.sort(perm[n_train:])
    noise = rng_noise.normal(0.0, 1.0, size=n_train) * cfg.noise_sigma
    train = Dataset(norm.inputs[train_idx], norm.outputs[train_idx] + noise,
                    norm.ids[train_idx], normalized=False)
    test = Dataset(norm.inputs[test_idx], norm.outputs[test_idx],
                   norm.ids[test_idx], normalized=True)
    return train, test, scaler


# ---------------------------------------------------------------------------
# method dispatch and comparison tables

def run_method(method: str, train: Dataset, cfg: DesignConfig,
               scaler: Scaler | None = None) -> DesignReport:
    if method == "sis":
        return design_sis(train, scaler)
    if method == "mis-std":
        return design_mis_std(train, cfg, scaler)
    if method == "mis-con":
        labels = kmeans(train.inputs, cfg.n_cl, seed=cfg.seed).labels
        return design_mis_con(train, labels, cfg, scaler)
    if method == "mis-con-lab":
        return design_mis_con_lab(train, cfg, scaler)
    raise ValueError(f"unknown method {method!r}; valid: {', '.join(METHODS)}")


@dataclass
class MethodRow:
    method: str
    status: str = "ok"
    train_rmse: float | None = None
    test_rmse: float | None = None
    t_comp_s: float | None = None
    continuity_max: float | None = None
    milp_gap: float | None = None
    milp_nodes: int | None = None

    def to_dict(self) -> dict:
        return {
            "method": self.method, "status": self.status,
            "train_rmse": self.train_rmse, "test_rmse": self.test_rmse,
            "t_comp_s": self.t_comp_s, "continuity_max": self.continuity_max,
            "milp_gap": self.milp_gap, "milp_nodes": self.milp_nodes,
        }


COMPARISON_COLUMNS = ("method", "status", "train_rmse", "test_rmse", "t_comp_s",
                      "continuity_max", "milp_gap", "milp_nodes")


@dataclass
class ComparisonReport:
    rows: list[MethodRow]
    sensors: dict[str, SensorModel]
    train: Dataset
    test: Dataset
    scaler: Scaler

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(COMPARISON_COLUMNS)
            for row in self.rows:
                d = row.to_dict()
                wr.writerow([_cell(d[c]) for c in COMPARISON_COLUMNS])

    def write_json(self, path) -> None:
        doc = {"schema": 1, "rows": [r.to_dict() for r in self.rows]}
        with open(path, "w") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def run_comparison(scenario: ScenarioConfig, methods: list[str],
                   cfg: DesignConfig, timing: str = "wall") -> ComparisonReport:
    """Train every method on one scenario draw and tabulate both splits.

    A method failure is recorded in its row; the remaining methods still run.
    With timing="fixed" the wall-clock column is written as 0.0 so repeated
    runs are byte-identical.
    """
    if not methods:
        raise ValueError("methods list must not be empty")
    for m in methods:
        if m not in METHODS:
            raise ValueError(f"unknown method {m!r}; valid: {', '.join(METHODS)}")
    train, test, scaler = generate_scenario(scenario)
    rows = []
    sensors = {}
    for method in methods:
        t0 = time.perf_counter()
        try:
            report = run_method(method, train, cfg, scaler)
        except Exception as exc:  # failure stays in the table
            rows.append(MethodRow(method, status=f"error: {exc}"))
            continue
        elapsed = time.perf_counter() - t0
        sensors[method] = report.sensor
        stats = report.solver_stats
        milp = stats.get("milp", {})
        rows.append(MethodRow(
            method,
            train_rmse=report.train_rmse,
            test_rmse=rmse(test.outputs, predict_batch(test.inputs, report.sensor)),
            t_comp_s=0.0 if timing == "fixed" else elapsed,
            continuity_max=stats.get("continuity_max"),
            milp_gap=milp.get("gap"),
            milp_nodes=milp.get("nodes_explored"),
        ))
    return ComparisonReport(rows, sensors, train, test, scaler)


def export_surface(sensors: dict[str, SensorModel], path, grid_n: int = 41) -> None:
    """Prediction surface on the normalized unit square (two-input sensors)."""
    grid = np.linspace(0.0, 1.0, grid_n)
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["method", "x1", "x2", "region", "prediction"])
        for method in sorted(sensors):
            sensor = sensors[method]
            if sensor.n_p != 2:
                continue
            from .core import assign_regions

            xs = np.array([[a, b] for a in grid for b in grid])
            preds = predict_batch(xs, sensor)
            if sensor.switching is None:
                regions = np.ones(len(xs), dtype=int)
            else:
                regions = assign_regions(xs, sensor.switching)
            for (a, b), r, v in zip(xs, regions, preds):
                wr.writerow([method, repr(float(a)), repr(float(b)), int(r), repr(float(v))])


# ---------------------------------------------------------------------------
# Monte Carlo

@dataclass
class MonteCarloRecord:
    run: int
    method: str
    split: str        # "train" | "test"
    rmse: float
    t_comp_s: float


@dataclass
class BoxplotRow:
    method: str
    split: str
    q1: float
    median: float
    q3: float
    outliers: tuple[float, ...]
    n_runs: int


@dataclass
class MonteCarloReport:
    records: list[MonteCarloRecord]
    failures: list[tuple[int, str, str]]   # (run, method, message)
    boxplot: list[BoxplotRow]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["run", "method", "split", "rmse", "t_comp_s"])
            for r in self.records:
                wr.writerow([r.run, r.method, r.split, repr(r.rmse), repr(r.t_comp_s)])

    def write_boxplot_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["method", "split", "q1", "median", "q3", "n_outliers",
                         "outliers", "n_runs"])
            for b in self.boxplot:
                wr.writerow([b.method, b.split, repr(b.q1), repr(b.median), repr(b.q3),
                             len(b.outliers), ";".join(repr(v) for v in b.outliers),
                             b.n_runs])


def _montecarlo_one(args) -> tuple[int, list[MonteCarloRecord], list[tuple[int, str, str]]]:
    scenario, cfg, methods, run, timing = args
    per_run = replace(scenario, seed=scenario.seed + run)
    report = run_comparison(per_run, methods, cfg, timing=timing)
    records = []
    failures = []
    for row in report.rows:
        if row.status != "ok":
            failures.append((run, row.method, row.status))
            continue
        records.append(MonteCarloRecord(run, row.method, "train", row.train_rmse,
                                        row.t_comp_s))
        records.append(MonteCarloRecord(run, row.method, "test", row.test_rmse,
                                        row.t_comp_s))
    return run, records, failures


def run_montecarlo(scenario: ScenarioConfig, runs: int, methods: list[str],
                   cfg: DesignConfig, jobs: int = 1,
                   timing: str = "wall") -> MonteCarloReport:
    """Repeat run_comparison over seeds scenario.seed + 0..runs-1.

    Runs are independent (each owns its RNG streams); aggregation sorts by
    run index, so worker scheduling cannot change the output.
    """
    if runs < 1:
        raise ValueError("runs must be at least 1")
    tasks = [(scenario, cfg, methods, run, timing) for run in range(runs)]
    outcomes = []
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(_montecarlo_one, tasks))
    else:
        outcomes = [_montecarlo_one(t) for t in tasks]
    outcomes.sort(key=lambda o: o[0])
    records = [r for _, recs, _ in outcomes for r in recs]
    failures = [f for _, _, fails in outcomes for f in fails]
    boxplot = []
    for method in methods:
        for split in ("train", "test"):
            vals = np.array([r.rmse for r in records
                             if r.method == method and r.split == split])
            if vals.size == 0:
                continue
            q1, med, q3 = np.percentile(vals, [25.0, 50.0, 75.0])
            iqr = q3 - q1
            lo, hi = q1 - 1.5 * iqr, q3 + 1.5 * iqr
            outliers = tuple(sorted(float(v) for v in vals if v < lo or v > hi))
            boxplot.append(BoxplotRow(method, split, float(q1), float(med), float(q3),
                                      outliers, int(vals.size)))
    return MonteCarloReport(records, failures, boxplot)
