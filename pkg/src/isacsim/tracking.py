"""MCD-based S-MPC tracking over a PDP matrix.

Pipeline: threshold + peak-pick each row, match detections of consecutive
snapshots by mutual-nearest multipath component distance (MCD), chain matched
detections into tracks, drop short tracks, then hand over track fragments
that are close in both time and delay.
"""

from __future__ import annotations

import heapq
import json
from dataclasses import dataclass, field

import numpy as np

from .metrics import PdpMatrix


class TrackingInputError(ValueError):
    pass


@dataclass(frozen=True)
class TrackingConfig:
    match_threshold: float = 0.3
    filter_threshold: int = 4
    handover_time: int = 5
    handover_delay: float = 10.0
    threshold_offset: float = 6.0

    def __post_init__(self):
        for name in ("match_threshold", "filter_threshold", "handover_time", "handover_delay", "threshold_offset"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")


@dataclass(frozen=True)
class Detection:
    snapshot: int
    delay: float
    amplitude: float
    power: float


@dataclass
class Track:
    id: int
    detections: list[Detection] = field(default_factory=list)

    @property
    def birth_snapshot(self) -> int:
        return self.detections[0].snapshot

    @property
    def last_snapshot(self) -> int:
        return self.detections[-1].snapshot

    @property
    def span(self) -> int:
        return self.last_snapshot - self.birth_snapshot + 1

    def to_json(self) -> str:
        dets = [[d.snapshot, float(d.delay), round(float(d.power), 6)] for d in self.detections]
        return json.dumps({"id": self.id, "birth_snapshot": self.birth_snapshot, "detections": dets})

    @classmethod
    def from_json(cls, line: str) -> "Track":
        rec = json.loads(line)
        dets = [Detection(int(k), float(d), float(10.0 ** (p / 20.0)), float(p)) for k, d, p in rec["detections"]]
        return cls(int(rec["id"]), dets)


def tracks_to_jsonl(tracks: list[Track]) -> str:
    return "".join(t.to_json() + "\n" for t in tracks)


def tracks_from_jsonl(text: str) -> list[Track]:
    return [Track.from_json(line) for line in text.splitlines() if line.strip()]


def estimate_noise_floor(pdp) -> float:
    """Median of every power entry (dB)."""
    values = pdp.values if isinstance(pdp, PdpMatrix) else np.asarray(pdp)
    if values.size == 0:
        raise TrackingInputError("empty PDP matrix")
    return float(np.median(values))


def peak_indices(row: np.ndarray, threshold: float) -> np.ndarray:
    """Strict local maxima above ``threshold``; a flat top reports its leftmost bin."""
    p = np.asarray(row)
    starts = np.concatenate(([0], np.flatnonzero(np.diff(p) != 0) + 1))
    vals = p[starts]
    left = np.concatenate(([-np.inf], vals[:-1]))
    right = np.concatenate((vals[1:], [-np.inf]))
    return starts[(vals > left) & (vals > right) & (vals > threshold)]


def detect(pdp_row, noise_floor: float, cfg: TrackingConfig = TrackingConfig(), snapshot: int = 0,
           delay_resolution: float = 1.0) -> list[Detection]:
    row = np.asarray(pdp_row, dtype=float)
    if row.size < 3:
        raise TrackingInputError("PDP row needs at least 3 bins")
    idx = peak_indices(row, noise_floor + cfg.threshold_offset)
    return [Detection(snapshot, float(i * delay_resolution), float(10.0 ** (row[i] / 20.0)), float(row[i]))
            for i in idx]


def mcd_matrix(delays_i, amps_i, delays_j, amps_j) -> np.ndarray:
    """MCD between every detection of snapshot i (rows) and snapshot j (columns)."""
    ti = np.asarray(delays_i, dtype=float)
    tj = np.asarray(delays_j, dtype=float)
    ai = np.asarray(amps_i, dtype=float)
    aj = np.asarray(amps_j, dtype=float)
    tau = np.concatenate((ti, tj))
    amp = np.concatenate((ai, aj))
    if tau.size == 0:
        raise TrackingInputError("MCD context has no detections")
    spread = tau.max() - tau.min()
    amp_ratio = amp.max() / amp.min()
    tau_std = tau.std(ddof=1) if tau.size > 1 else 0.0
    delay_norm = tau_std / spread**2 if spread > 0 else 0.0
    return (1.0 / amp_ratio) * np.abs(ai[:, None] / aj[None, :]) * delay_norm * np.abs(ti[:, None] - tj[None, :])


def mcd(a: Detection, b: Detection, context: list[Detection]) -> float:
    """MCD of ``a`` (snapshot i) against ``b`` (snapshot i+1) given every detection of both snapshots."""
    if not context:
        raise TrackingInputError("MCD context has no detections")
    tau = np.array([d.delay for d in context])
    amp = np.array([d.amplitude for d in context])
    spread = tau.max() - tau.min()
    tau_std = tau.std(ddof=1) if tau.size > 1 else 0.0
    delay_norm = tau_std / spread**2 if spread > 0 else 0.0
    return float(amp.min() / amp.max() * abs(a.amplitude / b.amplitude) * delay_norm * abs(a.delay - b.delay))


def match_matrix(d: np.ndarray, eps: float) -> list[tuple[int, int]]:
    """Repeated mutual-argmin matching on an MCD matrix; rows/cols must be delay-sorted."""
    if d.size == 0:
        return []
    work = np.where(d <= eps, d, np.inf)
    pairs: list[tuple[int, int]] = []
    rows = np.arange(work.shape[0])
    while True:
        col_of_row = np.argmin(work, axis=1)
        row_of_col = np.argmin(work, axis=0)
        best = work[rows, col_of_row]
        mutual = np.isfinite(best) & (row_of_col[col_of_row] == rows)
        if not mutual.any():
            break
        us = rows[mutual]
        vs = col_of_row[mutual]
        pairs.extend(zip(us.tolist(), vs.tolist()))
        work[us, :] = np.inf
        work[:, vs] = np.inf
    pairs.sort()
    return pairs


def match_step(dets_i: list[Detection], dets_j: list[Detection], eps_m: float = 0.3) -> list[tuple[int, int]]:
    if not dets_i or not dets_j:
        return []
    oi = sorted(range(len(dets_i)), key=lambda u: (dets_i[u].delay, u))
    oj = sorted(range(len(dets_j)), key=lambda v: (dets_j[v].delay, v))
    d = mcd_matrix([dets_i[u].delay for u in oi], [dets_i[u].amplitude for u in oi],
                   [dets_j[v].delay for v in oj], [dets_j[v].amplitude for v in oj])
    return sorted((oi[u], oj[v]) for u, v in match_matrix(d, eps_m))


def _handover(tracks: list[Track], cfg: TrackingConfig) -> list[Track]:
    """Merge fragments: the later track joins the earlier one when gap and delay jump are small."""
    by_id = {t.id: t for t in tracks}
    starts: dict[int, list[int]] = {}
    for t in tracks:
        starts.setdefault(t.birth_snapshot, []).append(t.id)
    absorbed: set[int] = set()
    heap = [(t.last_snapshot, t.birth_snapshot, t.id) for t in tracks]
    heapq.heapify(heap)
    while heap:
        last, _, tid = heapq.heappop(heap)
        if tid in absorbed or by_id[tid].last_snapshot != last:
            continue
        a = by_id[tid]
        d_end = a.detections[-1].delay
        best = None
        for first in range(last + 1, last + cfg.handover_time):
            for bid in starts.get(first, ()):
                if bid in absorbed or bid == tid:
                    continue
                gap_d = abs(by_id[bid].detections[0].delay - d_end)
                if gap_d < cfg.handover_delay:
                    key = (first, gap_d, bid)
                    if best is None or key < best:
                        best = key
            if best is not None:
                break
        if best is None:
            continue
        b = by_id[best[2]]
        absorbed.add(b.id)
        a.detections.extend(b.detections)
        heapq.heappush(heap, (a.last_snapshot, a.birth_snapshot, a.id))
    return [t for t in tracks if t.id not in absorbed]


def track(pdp: PdpMatrix, cfg: TrackingConfig = TrackingConfig(), noise_floor: float | None = None) -> list[Track]:
    values = pdp.values if isinstance(pdp, PdpMatrix) else np.asarray(pdp)
    res = pdp.delay_resolution if isinstance(pdp, PdpMatrix) else 1.0
    if values.ndim != 2 or values.shape[0] < 2:
        raise TrackingInputError("tracking needs at least 2 snapshots")
    if values.shape[1] < 3:
        raise TrackingInputError("PDP rows need at least 3 bins")
    floor = estimate_noise_floor(values) if noise_floor is None else noise_floor
    thr = floor + cfg.threshold_offset

    tracks: list[Track] = []
    prev_idx = np.zeros(0, dtype=np.int64)
    prev_amp = np.zeros(0)
    prev_tid: list[int] = []
    for k in range(values.shape[0]):
        row = values[k].astype(float)
        idx = peak_indices(row, thr)
        pw = row[idx]
        amp = 10.0 ** (pw / 20.0)
        tids = [-1] * idx.size
        if prev_idx.size and idx.size:
            d = mcd_matrix(prev_idx * res, prev_amp, idx * res, amp)
            for u, v in match_matrix(d, cfg.match_threshold):
                tids[v] = prev_tid[u]
        for v in range(idx.size):
            if tids[v] < 0:
                tids[v] = len(tracks)
                tracks.append(Track(len(tracks)))
            tracks[tids[v]].detections.append(Detection(k, float(idx[v] * res), float(amp[v]), float(pw[v])))
        prev_idx, prev_amp, prev_tid = idx, amp, tids

    kept = [t for t in tracks if len(t.detections) >= cfg.filter_threshold]
    merged = _handover(kept, cfg)
    merged.sort(key=lambda t: (t.birth_snapshot, t.detections[0].delay, t.id))
    return merged


@dataclass
class RecoveryResult:
    eligible: int
    recovered: int
    overlaps: list[float]

    @property
    def rate(self) -> float:
        return self.recovered / self.eligible if self.eligible else float("nan")


def _longest_run(mask: np.ndarray) -> int:
    if not mask.any():
        return 0
    edges = np.diff(np.concatenate(([0], mask.astype(np.int8), [0])))
    return int((np.flatnonzero(edges == -1) - np.flatnonzero(edges == 1)).max())


def evaluate_recovery(tracks: list[Track], ground_truth, noise_floor: float, cfg: TrackingConfig = TrackingConfig(),
                      max_bin_error: int = 2, min_overlap: float = 0.7,
                      basis: str = "lifetime") -> RecoveryResult:
    """Share of threshold-visible ground-truth paths that some single track follows.

    A path is eligible when its logged power exceeds ``noise_floor +
    threshold_offset`` for at least ``filter_threshold`` consecutive snapshots.
    Overlap is the number of snapshots at which one track holds a detection
    within ``max_bin_error`` bins of the path's delay bin, divided by the
    path's logged lifetime (``basis="lifetime"``) or by its supra-threshold
    snapshot count (``basis="visible"``).
    """
    if basis not in ("lifetime", "visible"):
        raise ValueError(f"unknown overlap basis {basis!r}")
    res = ground_truth.delay_resolution
    thr = noise_floor + cfg.threshold_offset
    # (snapshot, bin) -> track id
    owner: dict[tuple[int, int], int] = {}
    for t in tracks:
        for d in t.detections:
            owner[(d.snapshot, int(round(d.delay / res)))] = t.id
    eligible = recovered = 0
    overlaps = []
    for p in ground_truth.paths:
        vis = p.powers > thr
        if _longest_run(vis) < cfg.filter_threshold:
            continue
        eligible += 1
        ks = p.birth_snapshot + np.flatnonzero(vis)
        bins = np.rint(p.delays[vis] / res).astype(int)
        hits: dict[int, int] = {}
        for k, b in zip(ks.tolist(), bins.tolist()):
            seen = set()
            for off in range(-max_bin_error, max_bin_error + 1):
                tid = owner.get((k, b + off))
                if tid is not None and tid not in seen:
                    seen.add(tid)
                    hits[tid] = hits.get(tid, 0) + 1
        denom = p.delays.size if basis == "lifetime" else ks.size
        frac = max(hits.values()) / denom if hits else 0.0
        overlaps.append(frac)
        if frac >= min_overlap:
            recovered += 1
    return RecoveryResult(eligible, recovered, overlaps)
