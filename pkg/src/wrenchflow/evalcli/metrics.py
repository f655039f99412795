"""The contact-awareness metric suite: whether / where / when / what, Top-k
blocks, and error tables.

Denominator conventions (also printed in every report header):

* detection rate: positive clips with >= 1 detected event / positive clips.
* false alarm rate: negative clips with >= 1 detected event / negative clips
  (clip-level, negatives only).
* where/when percentages: over all detections on positive clips; a detection
  scores only if it was matched to a true event and satisfies the criterion.
  Matching is greedy one-to-one by onset proximity, then region hop distance.
* what errors: over matched detection/true-event pairs.
* Top-k: per positive clip the k regions with the highest peak mask
  probability (no threshold); hit@k requires every true region in the top-k
  set; target link@k requires at least one.

Region distance is hop distance on the body tree. Planar torque direction is
0 deg when signs agree, 180 deg otherwise (degenerate by construction; the
column is marked planar in reports).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .events import DetectedEvent, extract_events, extract_true_events

__all__ = ["Tolerances", "MetricsReport", "score", "match_events"]


@dataclass(frozen=True)
class Tolerances:
    link_hops: int = 1
    time_frames: int = 5       # +-0.1 s at 50 Hz
    delta: float = 0.5
    min_duration: int = 2
    top_ks: tuple[int, ...] = (1, 3)


@dataclass
class MetricsReport:
    detection_rate_pct: float
    false_alarm_pct: float
    target_link_pct: float
    tolerant_link_pct: float
    target_time_pct: float
    tolerant_time_pct: float
    err_distance_links: float
    err_interval_ms: float
    err_force_mag_n: float
    err_force_dir_deg: float
    err_torque_mag_nm: float
    err_torque_dir_deg: float
    topk: dict = field(default_factory=dict)  # k -> dict of the four @k rates
    n_pos: int = 0
    n_neg: int = 0
    n_matched: int = 0
    n_detections_on_pos: int = 0
    runtime_ms_mean: float = 0.0  # wall clock; excluded from deterministic outputs

    def as_rows(self) -> list[tuple[str, float]]:
        rows = [
            ("detection_rate_pct", self.detection_rate_pct),
            ("false_alarm_pct", self.false_alarm_pct),
            ("target_link_pct", self.target_link_pct),
            ("tolerant_link_pct", self.tolerant_link_pct),
            ("target_time_pct", self.target_time_pct),
            ("tolerant_time_pct", self.tolerant_time_pct),
            ("err_distance_links", self.err_distance_links),
            ("err_interval_ms", self.err_interval_ms),
            ("err_force_mag_n", self.err_force_mag_n),
            ("err_force_dir_deg", self.err_force_dir_deg),
            ("err_torque_mag_nm", self.err_torque_mag_nm),
            ("err_torque_dir_deg", self.err_torque_dir_deg),
        ]
        for k in sorted(self.topk):
            for name, value in self.topk[k].items():
                rows.append((f"{name}_at{k}", value))
        rows += [("n_pos", float(self.n_pos)), ("n_neg", float(self.n_neg)),
                 ("n_matched", float(self.n_matched))]
        return rows


def match_events(true_events: list[DetectedEvent], detections: list[DetectedEvent],
                 hop: np.ndarray) -> list[tuple[DetectedEvent, DetectedEvent]]:
    """Greedy one-to-one matching: best onset proximity first, region hop
    distance as the tie-breaker."""
    pairs = []
    for ti, t in enumerate(true_events):
        for di, d in enumerate(detections):
            pairs.append((abs(d.onset - t.onset), hop[t.region_index - 1, d.region_index - 1],
                          ti, di))
    pairs.sort()
    used_t, used_d, out = set(), set(), []
    for _, _, ti, di in pairs:
        if ti in used_t or di in used_d:
            continue
        used_t.add(ti)
        used_d.add(di)
        out.append((true_events[ti], detections[di]))
    return out


def _angle_deg(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return 180.0
    cosv = np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0)
    if cosv >= 1.0 - 1e-12:  # keep the perfect-oracle fixed point exact
        return 0.0
    return float(np.degrees(np.arccos(cosv)))


def score(predictions, gt_chunks, hop: np.ndarray, tol: Tolerances | None = None,
          estimator_id: str = "") -> MetricsReport:
    """predictions: list of PredictionRecord; gt_chunks: list of (H, N, w)
    ground-truth wrench chunks, index-aligned with the predictions."""
    tol = tol or Tolerances()
    if len(predictions) != len(gt_chunks):
        raise ValueError(f"misaligned inputs: {len(predictions)} predictions "
                         f"vs {len(gt_chunks)} ground-truth clips")
    n_pos = n_neg = det_pos = det_neg = 0
    n_dets_on_pos = 0
    hits_link = hits_link_tol = hits_time = hits_time_tol = 0
    dist_links, intervals, fmag, fdir, tmag, tdir = [], [], [], [], [], []
    topk_hits = {k: {"hit_pct": 0, "target_link_pct": 0, "tolerant_link_pct": 0,
                     "tolerant_time_pct": 0} for k in tol.top_ks}
    runtimes = []

    for pred, chunk in zip(predictions, gt_chunks):
        gated = pred.wrench * (pred.mask > tol.delta)[..., None]
        dets = extract_events(pred.mask, gated, tol.delta, tol.min_duration)
        true_events = extract_true_events(np.asarray(chunk))
        runtimes.append(pred.inference_ms)
        if not true_events:
            n_neg += 1
            det_neg += bool(dets)
            continue
        n_pos += 1
        det_pos += bool(dets)
        n_dets_on_pos += len(dets)
        matches = match_events(true_events, dets, hop)
        for t, d in matches:
            h = hop[t.region_index - 1, d.region_index - 1]
            hits_link += h == 0
            hits_link_tol += h <= tol.link_hops
            dt_frames = abs(d.onset - t.onset)
            hits_time += dt_frames == 0
            hits_time_tol += dt_frames <= tol.time_frames
            dist_links.append(h)
            intervals.append(dt_frames * 20.0)  # ms at 50 Hz
            f_hat, f_true = d.wrench[:2], t.wrench[:2]
            fmag.append(abs(np.linalg.norm(f_hat) - np.linalg.norm(f_true)))
            fdir.append(_angle_deg(f_hat, f_true))
            tmag.append(abs(abs(d.wrench[2]) - abs(t.wrench[2])))
            tdir.append(0.0 if d.wrench[2] * t.wrench[2] >= 0 else 180.0)
        # Top-k over peak mask probability per region
        peak_prob = pred.mask.max(axis=0)  # (N,)
        true_regions = {t.region_index for t in true_events}
        true_onsets = {t.region_index: t.onset for t in true_events}
        for k in tol.top_ks:
            top = set(np.argsort(-peak_prob)[:k] + 1)
            if true_regions <= top:
                topk_hits[k]["hit_pct"] += 1
            if true_regions & top:
                topk_hits[k]["target_link_pct"] += 1
            if any(hop[t - 1, p - 1] <= tol.link_hops for t in true_regions for p in top):
                topk_hits[k]["tolerant_link_pct"] += 1
            peak_frames = {p: int(np.argmax(pred.mask[:, p - 1])) for p in top}
            if any(abs(peak_frames[p] - true_onsets[t]) <= tol.time_frames
                   for t in true_regions for p in top):
                topk_hits[k]["tolerant_time_pct"] += 1

    def pct(num, den):
        return 100.0 * num / den if den else 0.0

    def mean(xs):
        return float(np.mean(xs)) if xs else 0.0

    topk = {k: {name: pct(v, n_pos) for name, v in d.items()}
            for k, d in topk_hits.items()}
    return MetricsReport(
        detection_rate_pct=pct(det_pos, n_pos),
        false_alarm_pct=pct(det_neg, n_neg),
        target_link_pct=pct(hits_link, n_dets_on_pos),
        tolerant_link_pct=pct(hits_link_tol, n_dets_on_pos),
        target_time_pct=pct(hits_time, n_dets_on_pos),
        tolerant_time_pct=pct(hits_time_tol, n_dets_on_pos),
        err_distance_links=mean(dist_links),
        err_interval_ms=mean(intervals),
        err_force_mag_n=mean(fmag),
        err_force_dir_deg=mean(fdir),
        err_torque_mag_nm=mean(tmag),
        err_torque_dir_deg=mean(tdir),
        topk=topk,
        n_pos=n_pos,
        n_neg=n_neg,
        n_matched=len(dist_links),
        n_detections_on_pos=n_dets_on_pos,
        runtime_ms_mean=mean(runtimes),
    )
