"""Dynamic tapped-delay-line generator for vehicular ISAC channels.

The engine is a per-snapshot state machine over sensing multipaths (S-MPCs):

* snapshot 0 emits an initial population of one to five paths;
* every later snapshot reaps dead paths, restarts the population if it went
  empty, otherwise evolves survivors and spawns the snapshot's new paths;
* a fresh clutter floor (one C-MPC per delay bin) is drawn and added to the
  S-MPC taps.

Two independent PCG64 streams are derived from ``SimConfig.seed``: the first
drives the S-MPC process, the second the clutter floor. Clutter is drawn in
fixed blocks of :data:`CLUTTER_BLOCK` snapshots, so the output does not depend
on how callers interleave :meth:`Engine.step` with other work.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import distributions as dist
from .metrics import PdpMatrix, pdp_from_cir
from .params import Direction, DirectionParams, validate

CLUTTER_BLOCK = 256
CLUSTER_HALF_WIDTH_NS = 10.0


class ConfigError(ValueError):
    pass


class SequenceExhausted(RuntimeError):
    pass


@dataclass(frozen=True)
class SimConfig:
    direction: Direction
    duration: float
    snapshot_interval: float = 0.01
    delay_bins: int = 600
    delay_resolution: float = 1.0
    seed: int = 0
    power_floor: float = -120.0
    power_ceiling: float = 0.0

    @classmethod
    def from_snapshots(cls, direction, snapshots: int, snapshot_interval: float = 0.01, **kw) -> "SimConfig":
        return cls(Direction(direction), snapshots * snapshot_interval, snapshot_interval, **kw)

    @property
    def num_snapshots(self) -> int:
        ratio = self.duration / self.snapshot_interval
        nearest = round(ratio)
        if abs(ratio - nearest) <= 1e-9 * max(1.0, ratio):
            return int(nearest)
        return int(math.ceil(ratio))

    @property
    def delay_max(self) -> float:
        return (self.delay_bins - 1) * self.delay_resolution

    def bin_centers(self) -> np.ndarray:
        return np.arange(self.delay_bins) * self.delay_resolution

    def problems(self) -> list[str]:
        out = []
        if not self.duration > 0:
            out.append("duration must be > 0")
        if not self.snapshot_interval > 0:
            out.append("snapshot_interval must be > 0")
        if self.delay_bins < 64:
            out.append("delay_bins must be >= 64")
        if not self.delay_resolution > 0:
            out.append("delay_resolution must be > 0")
        if not self.power_floor < self.power_ceiling:
            out.append("power_floor must be below power_ceiling")
        if not (0 <= self.seed < 2**64):
            out.append("seed must be a 64-bit unsigned integer")
        return out


@dataclass
class SMpc:
    id: int
    birth_snapshot: int
    lifetime_snapshots: int
    delay: float
    power: float
    phase: float

    def alive_at(self, k: int) -> bool:
        return self.birth_snapshot <= k < self.birth_snapshot + self.lifetime_snapshots


@dataclass
class CirSnapshot:
    snapshot_index: int
    taps: np.ndarray


@dataclass
class StepEvents:
    snapshot: int
    births: list[int] = field(default_factory=list)
    deaths: list[int] = field(default_factory=list)
    reinitialized: bool = False


@dataclass
class SpawnRecord:
    """Birth-time facts about one path."""

    id: int
    birth_snapshot: int
    lifetime_snapshots: int
    delay: float
    power: float
    residual: float
    opened_cluster: bool
    cluster_id: int
    cause: str  # "init", "reinit" or "birth"


@dataclass
class PathTrajectory:
    id: int
    birth_snapshot: int
    lifetime_snapshots: int
    delays: np.ndarray
    powers: np.ndarray

    @property
    def completed(self) -> bool:
        return len(self.delays) == self.lifetime_snapshots


@dataclass
class GroundTruthLog:
    num_snapshots: int
    snapshot_interval: float
    delay_resolution: float
    spawns: list[SpawnRecord]
    paths: list[PathTrajectory]
    birth_counts: np.ndarray  # per snapshot, regular births only
    birth_snapshots: np.ndarray  # bool, snapshots whose births came from the birth PMF
    alive_counts: np.ndarray
    cluster_targets: list[int]
    # flat (snapshot, id, delay, power) rows, ordered by snapshot then id
    samples: np.ndarray = field(repr=False, default_factory=lambda: np.zeros((0, 4)))

    def path(self, pid: int) -> PathTrajectory:
        return self.paths[self._index[pid]]

    def __post_init__(self):
        self._index = {p.id: i for i, p in enumerate(self.paths)}

    def to_jsonl(self) -> str:
        spawn = {s.id: s for s in self.spawns}
        lines = []
        for p in self.paths:
            s = spawn[p.id]
            rec = {
                "id": p.id,
                "birth_snapshot": p.birth_snapshot,
                "lifetime_snapshots": p.lifetime_snapshots,
                "completed": p.completed,
                "cause": s.cause,
                "cluster_id": s.cluster_id,
                "opened_cluster": s.opened_cluster,
                "trajectory": [[round(float(d), 6), round(float(w), 6)] for d, w in zip(p.delays, p.powers)],
            }
            lines.append(json.dumps(rec))
        return "\n".join(lines) + ("\n" if lines else "")


@dataclass
class _Cluster:
    target: int
    created: int
    assigned: int = 0
    alive: int = 0


class Engine:
    """Snapshot-by-snapshot channel generator; see module docstring for the flow."""

    def __init__(self, params: DirectionParams, config: SimConfig, record_truth: bool = True):
        problems = config.problems()
        if problems:
            raise ConfigError("; ".join(problems))
        violations = validate(params)
        if violations:
            raise ConfigError("; ".join(str(v) for v in violations))
        self.params = params
        self.config = config
        self.num_snapshots = config.num_snapshots
        self.record_truth = record_truth
        self.rng, self.clutter_rng = dist.spawn_rngs(config.seed, 2)

        p = params
        self._life_mu, self._life_sigma = dist.lognormal_from_moments(p.lifetime_mean, p.lifetime_std)
        self._birth_cdf = dist.pmf_cdf(p.birth_pmf)
        self._cluster_cdf = dist.pmf_cdf(p.cluster_pmf)
        # birth PMF conditioned on count >= 1
        probs = np.asarray(p.birth_pmf.probabilities, dtype=float)
        start = p.birth_pmf.support_start
        cond = np.where(np.arange(start, start + len(probs)) >= 1, probs, 0.0)
        if cond.sum() <= 0:
            raise ConfigError("birth_pmf has no mass on counts >= 1")
        self._init_cdf = np.cumsum(cond / cond.sum())
        self._init_cdf[-1] = 1.0
        self._init_start = start

        self._centers = config.bin_centers()
        self._clutter_mean_db = dist.dual_slope_eval(self._centers, p.clutter_decay) + p.fading_mean
        self._clutter_buf: np.ndarray | None = None
        self._clutter_base = 0

        self.index = 0
        self._next_id = 0
        self._ids = np.zeros(0, dtype=np.int64)
        self._birth = np.zeros(0, dtype=np.int64)
        self._death = np.zeros(0, dtype=np.int64)
        self._delay = np.zeros(0)
        self._power = np.zeros(0)
        self._phase = np.zeros(0)
        self._cluster = np.zeros(0, dtype=np.int64)
        self._clusters: dict[int, _Cluster] = {}
        self._open: list[int] = []
        self._next_cluster = 0

        self.spawns: list[SpawnRecord] = []
        self.cluster_targets: list[int] = []
        self._birth_counts = np.zeros(self.num_snapshots, dtype=np.int64)
        self._birth_flags = np.zeros(self.num_snapshots, dtype=bool)
        self._alive_counts = np.zeros(self.num_snapshots, dtype=np.int64)
        self._log: list[tuple[int, np.ndarray, np.ndarray, np.ndarray]] = []

        self._populate(cause="init")

    # -- population -----------------------------------------------------------------

    @property
    def alive(self) -> list[SMpc]:
        return [
            SMpc(int(i), int(b), int(d - b), float(t), float(w), float(ph))
            for i, b, d, t, w, ph in zip(self._ids, self._birth, self._death, self._delay, self._power, self._phase)
        ]

    def _draw_initial_count(self) -> int:
        u = self.rng.random()
        idx = min(int(np.searchsorted(self._init_cdf, u, side="right")), len(self._init_cdf) - 1)
        return self._init_start + idx

    def _populate(self, cause: str) -> list[int]:
        n = self._draw_initial_count()
        return [self.spawn(cause) for _ in range(n)]

    def _open_cluster_for_spawn(self) -> int | None:
        """Youngest cluster still short of its target with at least one live member."""
        while self._open:
            cid = self._open[-1]
            c = self._clusters[cid]
            if c.alive > 0 and c.assigned < c.target:
                return cid
            self._open.pop()
        return None

    def _new_cluster(self) -> int:
        target = dist.sample_pmf(self.rng, self.params.cluster_pmf, cdf=self._cluster_cdf)
        cid = self._next_cluster
        self._next_cluster += 1
        self._clusters[cid] = _Cluster(target=target, created=self.index)
        self.cluster_targets.append(target)
        self._open.append(cid)
        return cid

    def spawn(self, cause: str = "birth") -> int:
        """Create one S-MPC at the current snapshot; returns its id."""
        p, cfg, rng = self.params, self.config, self.rng
        life_s = dist.sample_lognormal(rng, self._life_mu, self._life_sigma)
        lifetime = max(1, int(round(life_s / cfg.snapshot_interval)))

        cid = self._open_cluster_for_spawn()
        opened = cid is None
        if opened:
            delay = float(dist.sample_gamma(rng, p.delay_shape, p.delay_scale))
            cid = self._new_cluster()
        else:
            members = self._cluster == cid
            centroid = float(self._delay[members].mean())
            delay = centroid + rng.uniform(-CLUSTER_HALF_WIDTH_NS, CLUSTER_HALF_WIDTH_NS)
        delay = min(max(delay, 0.0), cfg.delay_max)

        base = dist.dual_slope_eval(delay, p.initial_power)
        power = base + dist.sample_gev(rng, p.residual_for(delay))
        power = min(max(power, cfg.power_floor), cfg.power_ceiling)
        residual = power - base
        phase = float(dist.sample_phase(rng))

        c = self._clusters[cid]
        c.assigned += 1
        c.alive += 1
        pid = self._next_id
        self._next_id += 1
        k = self.index
        self._ids = np.append(self._ids, pid)
        self._birth = np.append(self._birth, k)
        self._death = np.append(self._death, k + lifetime)
        self._delay = np.append(self._delay, delay)
        self._power = np.append(self._power, power)
        self._phase = np.append(self._phase, phase)
        self._cluster = np.append(self._cluster, cid)
        self.spawns.append(SpawnRecord(pid, k, lifetime, delay, power, residual, opened, cid, cause))
        return pid

    def _reap(self, k: int) -> list[int]:
        if self._death.size == 0 or self._death.min() > k:
            return []
        dead = self._death <= k
        dead_ids = self._ids[dead].tolist()
        for cid in self._cluster[dead].tolist():
            self._clusters[cid].alive -= 1
        keep = ~dead
        self._ids = self._ids[keep]
        self._birth = self._birth[keep]
        self._death = self._death[keep]
        self._delay = self._delay[keep]
        self._power = self._power[keep]
        self._phase = self._phase[keep]
        self._cluster = self._cluster[keep]
        return dead_ids

    def _evolve(self) -> None:
        p, cfg, rng = self.params, self.config, self.rng
        n = self._ids.size
        self._power = self._power + dist.sample_normal(rng, p.power_evo_mean, p.power_evo_std, n)
        np.clip(self._power, cfg.power_floor, cfg.power_ceiling, out=self._power)
        gate = rng.random(n) < p.delay_gate
        m = int(gate.sum())
        if m:
            self._delay[gate] += dist.sample_normal(rng, p.delay_evo_mean, p.delay_evo_std, m)
            np.clip(self._delay, 0.0, cfg.delay_max, out=self._delay)

    # -- clutter and assembly -------------------------------------------------------

    def _clutter_row(self, k: int) -> np.ndarray:
        buf = self._clutter_buf
        if buf is None or not (self._clutter_base <= k < self._clutter_base + CLUTTER_BLOCK):
            base = (k // CLUTTER_BLOCK) * CLUTTER_BLOCK
            if buf is not None and base != self._clutter_base + CLUTTER_BLOCK:
                raise RuntimeError("clutter blocks must be consumed in order")
            shape = (CLUTTER_BLOCK, self.config.delay_bins)
            fading = self.clutter_rng.standard_normal(shape)
            phase = dist.sample_phase(self.clutter_rng, shape)
            power_db = self._clutter_mean_db + self.params.fading_std * fading
            amp = 10.0 ** (power_db / 20.0)
            self._clutter_buf = buf = amp * np.exp(1j * phase)
            self._clutter_base = base
        return buf[k - self._clutter_base]

    def _assemble(self, k: int) -> np.ndarray:
        taps = self._clutter_row(k).copy()
        if self._ids.size:
            cfg = self.config
            bins = np.rint(self._delay / cfg.delay_resolution).astype(np.int64)
            np.clip(bins, 0, cfg.delay_bins - 1, out=bins)
            amp = 10.0 ** (self._power / 20.0)
            taps.real += np.bincount(bins, amp * np.cos(self._phase), cfg.delay_bins)
            taps.imag += np.bincount(bins, amp * np.sin(self._phase), cfg.delay_bins)
        return taps

    # -- public stepping ------------------------------------------------------------

    def step(self) -> tuple[CirSnapshot, StepEvents]:
        k = self.index
        if k >= self.num_snapshots:
            raise SequenceExhausted(f"all {self.num_snapshots} snapshots already generated")
        events = StepEvents(snapshot=k)
        if k == 0:
            events.births = [s.id for s in self.spawns]
        else:
            events.deaths = self._reap(k)
            if self._ids.size == 0:
                events.reinitialized = True
                events.births = self._populate(cause="reinit")
            else:
                self._evolve()
                n = dist.sample_pmf(self.rng, self.params.birth_pmf, cdf=self._birth_cdf)
                events.births = [self.spawn("birth") for _ in range(n)]
                self._birth_counts[k] = n
                self._birth_flags[k] = True
        self._alive_counts[k] = self._ids.size
        if self.record_truth:
            self._log.append((k, self._ids.copy(), self._delay.copy(), self._power.copy()))
        snap = CirSnapshot(k, self._assemble(k))
        self.index = k + 1
        return snap, events

    def ground_truth(self) -> GroundTruthLog:
        """Trajectories of every path seen so far (censored paths are truncated)."""
        if self._log:
            ks = np.concatenate([np.full(ids.size, k, dtype=np.int64) for k, ids, _, _ in self._log])
            ids = np.concatenate([e[1] for e in self._log])
            delays = np.concatenate([e[2] for e in self._log])
            powers = np.concatenate([e[3] for e in self._log])
        else:
            ks = ids = np.zeros(0, dtype=np.int64)
            delays = powers = np.zeros(0)
        order = np.lexsort((ks, ids))
        ids_s = ids[order]
        cuts = np.flatnonzero(np.diff(ids_s)) + 1
        groups = np.split(order, cuts) if order.size else []
        spawn = {s.id: s for s in self.spawns}
        paths = []
        for g in groups:
            pid = int(ids[g[0]])
            s = spawn[pid]
            paths.append(PathTrajectory(pid, s.birth_snapshot, s.lifetime_snapshots, delays[g], powers[g]))
        samples = np.column_stack([ks, ids, delays, powers]) if ks.size else np.zeros((0, 4))
        n = self.index
        return GroundTruthLog(
            num_snapshots=n,
            snapshot_interval=self.config.snapshot_interval,
            delay_resolution=self.config.delay_resolution,
            spawns=list(self.spawns),
            paths=paths,
            birth_counts=self._birth_counts[:n].copy(),
            birth_snapshots=self._birth_flags[:n].copy(),
            alive_counts=self._alive_counts[:n].copy(),
            cluster_targets=list(self.cluster_targets),
            samples=samples,
        )


def init_state(params: DirectionParams, config: SimConfig, record_truth: bool = True) -> Engine:
    return Engine(params, config, record_truth=record_truth)


def run(params: DirectionParams, config: SimConfig, record_truth: bool = True) -> tuple[PdpMatrix, GroundTruthLog]:
    """Generate every snapshot and stack the per-snapshot PDPs (dB)."""
    eng = Engine(params, config, record_truth=record_truth)
    rows = np.empty((eng.num_snapshots, config.delay_bins), dtype=np.float32)
    for k in range(eng.num_snapshots):
        snap, _ = eng.step()
        rows[k] = pdp_from_cir(snap.taps, config.power_floor)
    pdp = PdpMatrix(
        values=rows,
        snapshot_interval=config.snapshot_interval,
        delay_resolution=config.delay_resolution,
        direction=config.direction,
        seed=config.seed,
    )
    return pdp, eng.ground_truth()
