"""PDPs, delay spread, distribution distances and validation reports."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Any, Callable, Iterable, Sequence

import numpy as np

from .params import Direction, DirectionParams

CLUSTER_GAP_NS = 10.0
DEFAULT_RMSDS_THRESHOLD_DB = 25.0


class MetricsInputError(ValueError):
    pass


class UndefinedResult(ArithmeticError):
    pass


@dataclass
class PdpMatrix:
    """Snapshots x delay bins of power in dB, plus the metadata needed to interpret it."""

    values: np.ndarray
    snapshot_interval: float
    delay_resolution: float
    direction: Direction
    seed: int = 0

    def __post_init__(self):
        self.direction = Direction(self.direction)
        if self.values.ndim != 2:
            raise MetricsInputError("PDP matrix must be two-dimensional")
        if not (self.snapshot_interval > 0 and self.delay_resolution > 0):
            raise MetricsInputError("PDP metadata must be positive")

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]

    def delays(self) -> np.ndarray:
        return np.arange(self.cols) * self.delay_resolution


def pdp_from_cir(taps: np.ndarray, power_floor: float = -120.0) -> np.ndarray:
    """Per-bin 10 log10 |h|^2, floored at ``power_floor``."""
    mag2 = taps.real * taps.real + taps.imag * taps.imag
    with np.errstate(divide="ignore"):
        db = 10.0 * np.log10(mag2)
    return np.maximum(db, power_floor)


def rmsds(row_db, relative_threshold: float = DEFAULT_RMSDS_THRESHOLD_DB, delay_resolution: float = 1.0,
          delays=None) -> float:
    """Power-weighted delay standard deviation over bins within ``relative_threshold`` dB of the peak."""
    p = np.asarray(row_db, dtype=float)
    if p.size == 0:
        raise MetricsInputError("empty PDP row")
    if not relative_threshold > 0:
        raise MetricsInputError("relative_threshold must be > 0")
    tau = np.arange(p.size) * delay_resolution if delays is None else np.asarray(delays, dtype=float)
    finite = np.isfinite(p)
    if not finite.any():
        raise UndefinedResult("no finite bins in PDP row")
    peak = p[finite].max()
    keep = finite & (p >= peak - relative_threshold)
    # weights relative to the peak keep the sums well scaled
    w = 10.0 ** ((p[keep] - peak) / 10.0)
    t = tau[keep]
    total = w.sum()
    mean = (w * t).sum() / total
    var = (w * (t - mean) ** 2).sum() / total
    return math.sqrt(max(var, 0.0))


def rmsds_rows(pdp_db: np.ndarray, relative_threshold: float = DEFAULT_RMSDS_THRESHOLD_DB,
               delay_resolution: float = 1.0, chunk: int = 4096) -> np.ndarray:
    """Vectorized :func:`rmsds` for every row of a matrix."""
    m = np.asarray(pdp_db)
    tau = np.arange(m.shape[1]) * delay_resolution
    out = np.empty(m.shape[0])
    for s in range(0, m.shape[0], chunk):
        block = m[s:s + chunk].astype(float)
        peak = block.max(axis=1, keepdims=True)
        w = np.where(block >= peak - relative_threshold, 10.0 ** ((block - peak) / 10.0), 0.0)
        total = w.sum(axis=1)
        mean = (w @ tau) / total
        var = (w * (tau[None, :] - mean[:, None]) ** 2).sum(axis=1) / total
        out[s:s + chunk] = np.sqrt(np.maximum(var, 0.0))
    return out


def ks_distance(samples, analytic_cdf: Callable[[np.ndarray], np.ndarray]) -> float:
    """Two-sided sup distance between the empirical CDF of ``samples`` and ``analytic_cdf``."""
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    n = x.size
    if n == 0:
        raise MetricsInputError("ks_distance needs at least one sample")
    f = np.asarray(analytic_cdf(x), dtype=float)
    i = np.arange(1, n + 1)
    d_plus = np.max(i / n - f)
    d_minus = np.max(f - (i - 1) / n)
    return float(min(1.0, max(d_plus, d_minus, 0.0)))


def ks_two_sample(a, b) -> float:
    x = np.sort(np.asarray(a, dtype=float).ravel())
    y = np.sort(np.asarray(b, dtype=float).ravel())
    if x.size == 0 or y.size == 0:
        raise MetricsInputError("ks_two_sample needs nonempty inputs")
    grid = np.concatenate([x, y])
    fx = np.searchsorted(x, grid, side="right") / x.size
    fy = np.searchsorted(y, grid, side="right") / y.size
    return float(np.max(np.abs(fx - fy)))


def pmf_distance(empirical: Sequence[float], target: Sequence[float]) -> float:
    """Max absolute gap; the shorter PMF is zero-padded."""
    a = np.asarray(empirical, dtype=float)
    b = np.asarray(target, dtype=float)
    if a.size == 0 or b.size == 0:
        raise MetricsInputError("empty PMF")
    n = max(a.size, b.size)
    a = np.pad(a, (0, n - a.size))
    b = np.pad(b, (0, n - b.size))
    return float(np.max(np.abs(a - b)))


def empirical_pmf(counts, support_start: int, length: int) -> np.ndarray:
    c = np.asarray(counts, dtype=np.int64) - support_start
    if c.size == 0:
        return np.zeros(length)
    hist = np.bincount(c[(c >= 0)], minlength=length).astype(float)
    return hist / c.size


def cluster_sizes_from_points(snapshots: np.ndarray, delays: np.ndarray, gap: float = CLUSTER_GAP_NS) -> np.ndarray:
    """Sizes of maximal same-snapshot groups whose neighbouring delays differ by at most ``gap``."""
    k = np.asarray(snapshots)
    d = np.asarray(delays, dtype=float)
    if k.size == 0:
        return np.zeros(0, dtype=np.int64)
    order = np.lexsort((d, k))
    k, d = k[order], d[order]
    new = np.ones(k.size, dtype=bool)
    new[1:] = (k[1:] != k[:-1]) | (np.diff(d) > gap)
    starts = np.flatnonzero(new)
    return np.diff(np.append(starts, k.size))


@dataclass
class StatisticSamples:
    lifetimes: np.ndarray
    new_counts: np.ndarray
    initial_delays: np.ndarray
    initial_powers: np.ndarray
    power_increments: np.ndarray
    delay_increments: np.ndarray
    cluster_sizes: np.ndarray


def _increments(trajectories: Iterable[tuple[np.ndarray, np.ndarray]]):
    dp, dd = [], []
    for delays, powers in trajectories:
        if len(delays) > 1:
            dd.append(np.diff(delays))
            dp.append(np.diff(powers))
    cat = lambda xs: np.concatenate(xs) if xs else np.zeros(0)
    return cat(dp), cat(dd)


def extract_statistics(source, snapshot_interval: float, num_snapshots: int | None = None) -> StatisticSamples:
    """Pull the modelled quantities out of a ground-truth log or a list of tracks.

    For tracks, increments are only taken between detections in adjacent
    snapshots and the new-count series covers every snapshot up to the last
    detection (or ``num_snapshots`` when given).
    """
    if hasattr(source, "spawns"):
        gt = source
        if not gt.spawns:
            raise MetricsInputError("empty ground truth")
        done = [p for p in gt.paths if p.completed]
        lifetimes = np.array([p.lifetime_snapshots for p in done], dtype=float) * snapshot_interval
        new_counts = gt.birth_counts[gt.birth_snapshots]
        init_d = np.array([s.delay for s in gt.spawns])
        init_p = np.array([s.power for s in gt.spawns])
        dp, dd = _increments((p.delays, p.powers) for p in gt.paths)
        s = gt.samples
        sizes = cluster_sizes_from_points(s[:, 0], s[:, 2]) if s.size else np.zeros(0, dtype=np.int64)
        return StatisticSamples(lifetimes, new_counts, init_d, init_p, dp, dd, sizes)

    tracks = list(source)
    if not tracks:
        raise MetricsInputError("no tracks")
    firsts = np.array([t.detections[0].snapshot for t in tracks])
    lasts = np.array([t.detections[-1].snapshot for t in tracks])
    lifetimes = (lasts - firsts + 1).astype(float) * snapshot_interval
    n = int(num_snapshots if num_snapshots is not None else lasts.max() + 1)
    new_counts = np.bincount(firsts, minlength=n)[:n]
    init_d = np.array([t.detections[0].delay for t in tracks])
    init_p = np.array([t.detections[0].power for t in tracks])
    dp, dd = [], []
    ks, ds = [], []
    for t in tracks:
        k = np.array([x.snapshot for x in t.detections])
        d = np.array([x.delay for x in t.detections])
        w = np.array([x.power for x in t.detections])
        adj = np.diff(k) == 1
        dp.append(np.diff(w)[adj])
        dd.append(np.diff(d)[adj])
        ks.append(k)
        ds.append(d)
    sizes = cluster_sizes_from_points(np.concatenate(ks), np.concatenate(ds))
    return StatisticSamples(lifetimes, new_counts, init_d, init_p, np.concatenate(dp), np.concatenate(dd), sizes)


# -- validation report ------------------------------------------------------------------


@dataclass
class StatisticCheck:
    name: str
    sample_size: int
    moments: dict[str, float]
    targets: dict[str, Any]
    distance_kind: str
    distance: float
    tolerance: float
    passed: bool
    enforced: bool = True
    note: str = ""


@dataclass
class ValidationReport:
    direction: str
    seed: int
    snapshots: int
    snapshot_interval: float
    checks: list[StatisticCheck] = field(default_factory=list)
    rmsds_quantiles: dict[str, float] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks if c.enforced)

    def check(self, name: str) -> StatisticCheck:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["passed"] = self.passed
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, allow_nan=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "ValidationReport":
        d = json.loads(text)
        d.pop("passed", None)
        checks = [StatisticCheck(**c) for c in d.pop("checks")]
        return cls(checks=checks, **d)


def _moments(x: np.ndarray) -> dict[str, float]:
    if x.size == 0:
        return {"mean": math.nan, "std": math.nan}
    return {"mean": float(np.mean(x)), "std": float(np.std(x, ddof=1)) if x.size > 1 else 0.0}


def _ks_tolerance(n: int) -> float:
    # 1% critical value of the one-sample KS statistic
    return 1.63 / math.sqrt(max(n, 1))


def residual_pit(spawns, params: DirectionParams) -> np.ndarray:
    """Probability-integral transform of initial-power residuals under their segment GEV."""
    from .distributions import gev_cdf

    res = np.array([s.residual for s in spawns])
    delays = np.array([s.delay for s in spawns])
    low = delays <= params.initial_power.breakpoint
    u = np.empty(res.size)
    u[low] = gev_cdf(res[low], params.residual_low)
    u[~low] = gev_cdf(res[~low], params.residual_high)
    return u


def _uniform_cdf(x):
    return np.clip(x, 0.0, 1.0)


def ground_truth_checks(gt, params: DirectionParams, snapshot_interval: float) -> list[StatisticCheck]:
    from scipy.stats import gamma as gamma_dist

    stats = extract_statistics(gt, snapshot_interval)
    checks = []

    lt = stats.lifetimes
    m = _moments(lt)
    rel_mean = abs(m["mean"] - params.lifetime_mean) / params.lifetime_mean if lt.size else math.inf
    rel_std = abs(m["std"] - params.lifetime_std) / params.lifetime_std if lt.size > 1 else math.inf
    checks.append(StatisticCheck(
        "lifetime", int(lt.size), m, {"mean": params.lifetime_mean, "std": params.lifetime_std},
        "relative_mean_error", rel_mean, 0.05, bool(rel_mean <= 0.05)))
    checks.append(StatisticCheck(
        "lifetime_std", int(lt.size), m, {"std": params.lifetime_std},
        "relative_std_error", rel_std, 0.10, bool(rel_std <= 0.10)))

    pmf = params.birth_pmf
    emp = empirical_pmf(stats.new_counts, pmf.support_start, len(pmf.probabilities))
    gap = pmf_distance(emp, pmf.probabilities)
    checks.append(StatisticCheck(
        "birth_counts", int(stats.new_counts.size), {"mean": float(np.mean(stats.new_counts))},
        {"pmf": list(pmf.probabilities)}, "max_abs_pmf", gap, 0.005, bool(gap <= 0.005),
        note=f"empirical={[round(v, 6) for v in emp.tolist()]}"))

    dd = stats.delay_increments
    rate = float(np.mean(dd != 0)) if dd.size else math.nan
    err = abs(rate - params.delay_gate) if dd.size else math.inf
    checks.append(StatisticCheck(
        "delay_change_rate", int(dd.size), {"rate": rate}, {"k_d": params.delay_gate},
        "abs_error", err, 0.005, bool(err <= 0.005)))

    u = residual_pit(gt.spawns, params)
    ks = ks_distance(u, _uniform_cdf) if u.size else 1.0
    res = np.array([s.residual for s in gt.spawns])
    checks.append(StatisticCheck(
        "initial_power_residual", int(u.size), _moments(res),
        {"low": asdict(params.residual_low), "high": asdict(params.residual_high)},
        "ks_segment_gev", ks, 0.02, bool(ks < 0.02)))

    fresh = np.array([s.delay for s in gt.spawns if s.opened_cluster])
    law = gamma_dist(params.delay_shape, scale=params.delay_scale)
    ks_d = ks_distance(fresh, law.cdf) if fresh.size else 1.0
    tol_d = _ks_tolerance(fresh.size)
    checks.append(StatisticCheck(
        "initial_delay", int(fresh.size), _moments(fresh),
        {"shape": params.delay_shape, "scale": params.delay_scale, "mean": params.delay_shape * params.delay_scale},
        "ks_gamma", ks_d, tol_d, bool(ks_d <= tol_d), note="cluster-opening spawns only"))

    cpmf = params.cluster_pmf
    targets = np.asarray(gt.cluster_targets)
    emp_t = empirical_pmf(targets, cpmf.support_start, len(cpmf.probabilities))
    gap_t = pmf_distance(emp_t, cpmf.probabilities)
    tol_t = _ks_tolerance(targets.size)
    checks.append(StatisticCheck(
        "cluster_targets", int(targets.size), {"mean": float(targets.mean()) if targets.size else math.nan},
        {"pmf": list(cpmf.probabilities)}, "max_abs_pmf", gap_t, tol_t, bool(gap_t <= tol_t)))

    sizes = stats.cluster_sizes
    emp_s = empirical_pmf(np.minimum(sizes, len(cpmf.probabilities)), cpmf.support_start, len(cpmf.probabilities))
    gap_s = pmf_distance(emp_s, cpmf.probabilities) if sizes.size else 1.0
    checks.append(StatisticCheck(
        "cluster_sizes", int(sizes.size), {"mean": float(sizes.mean()) if sizes.size else math.nan},
        {"pmf": list(cpmf.probabilities)}, "max_abs_pmf", gap_s, 0.03, bool(gap_s <= 0.03), enforced=False,
        note=f"realized per-snapshot sizes (10 ns gap rule, tail folded into 7): {[round(v, 4) for v in emp_s]}"))
    return checks


def validate_run(pdp: PdpMatrix, ground_truth, params: DirectionParams, config=None, tracks=None,
                 rmsds_threshold: float = DEFAULT_RMSDS_THRESHOLD_DB) -> ValidationReport:
    """Compare a run's ground truth (and optionally tracker output) against its generating parameters."""
    if Direction(pdp.direction) != params.direction:
        raise MetricsInputError("PDP direction does not match parameters")
    if ground_truth.num_snapshots != pdp.rows:
        raise MetricsInputError("ground truth and PDP disagree on snapshot count")
    if not math.isclose(ground_truth.snapshot_interval, pdp.snapshot_interval):
        raise MetricsInputError("ground truth and PDP disagree on snapshot interval")
    if config is not None and (config.num_snapshots != pdp.rows or config.delay_bins != pdp.cols):
        raise MetricsInputError("config does not match PDP shape")

    report = ValidationReport(params.direction.value, int(pdp.seed), pdp.rows, pdp.snapshot_interval)
    report.checks.extend(ground_truth_checks(ground_truth, params, pdp.snapshot_interval))

    spreads = rmsds_rows(pdp.values, rmsds_threshold, pdp.delay_resolution)
    qs = (0.05, 0.1, 0.25, 0.5, 0.75, 0.9, 0.95)
    report.rmsds_quantiles = {f"q{int(q * 100):02d}": float(v) for q, v in zip(qs, np.quantile(spreads, qs))}
    report.checks.append(StatisticCheck(
        "rmsds", int(spreads.size), _moments(spreads), {}, "none", 0.0, 0.0, True, enforced=False,
        note=f"rows within {rmsds_threshold} dB of each row peak"))

    if tracks:
        st = extract_statistics(tracks, pdp.snapshot_interval, pdp.rows)
        m = _moments(st.lifetimes)
        rel = abs(m["mean"] - params.lifetime_mean) / params.lifetime_mean
        report.checks.append(StatisticCheck(
            "tracked_lifetime", int(st.lifetimes.size), m, {"mean": params.lifetime_mean},
            "relative_mean_error", rel, 0.05, bool(rel <= 0.05), enforced=False))
        pmf = params.birth_pmf
        emp = empirical_pmf(st.new_counts, 0, len(pmf.probabilities))
        gap = pmf_distance(emp, pmf.probabilities)
        report.checks.append(StatisticCheck(
            "tracked_birth_counts", int(st.new_counts.size), {"mean": float(st.new_counts.mean())},
            {"pmf": list(pmf.probabilities)}, "max_abs_pmf", gap, 0.005, bool(gap <= 0.005), enforced=False))
    return report


def write_rmsds_csv(path, spreads: np.ndarray) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("rmsds_ns\n")
        for v in spreads:
            fh.write(f"{v:.6g}\n")
