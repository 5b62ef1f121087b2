"""Marker detection, frame-to-frame tracking and the peripheral/maximum motion ratio."""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from .errors import NoMarkersError, TrackingLossError
from .imgcore import DeltaImage, Frame, local_darkness

MAX_DISPLACEMENT_PX = 15.0
MOTION_FLOOR_PX = 0.5
PERIPHERAL_K = 8
PERIPHERAL_WINDOW = 21


@dataclass(frozen=True)
class MarkerSet:
    positions: np.ndarray   # (N, 2) sub-pixel (x, y)
    ids: np.ndarray         # (N,) unique integers
    frame_index: int = 0

    def __len__(self):
        return len(self.ids)

    def position_of(self, marker_id: int) -> np.ndarray:
        return self.positions[int(np.nonzero(self.ids == marker_id)[0][0])]


@dataclass(frozen=True)
class MotionField:
    ids: np.ndarray          # (M,)
    origins: np.ndarray      # (M, 2) positions in the earlier frame
    vectors: np.ndarray      # (M, 2) displacement in pixels
    matched_fraction: float = 1.0

    def __len__(self):
        return len(self.ids)

    def norms(self) -> np.ndarray:
        vx, vy = self.vectors[:, 0], self.vectors[:, 1]
        return np.sqrt(vx * vx + vy * vy)


@dataclass(frozen=True)
class PeripheralSelection:
    ids: List[int]
    scores: List[float]


def detect_markers(frame: Frame, frame_index: int = 0, *, contrast: float = 0.25, closing_size: int = 15,
                   min_area: int = 4, max_area: int = 400) -> MarkerSet:
    """Dark dots as connected components of the local-darkness map.

    Centroids are weighted by darkness over the component grown by one pixel,
    which keeps the anti-aliased rim in the estimate.
    """
    dark = local_darkness(frame.pixels, closing_size)
    labels, n = ndimage.label(dark > contrast)
    if n == 0:
        raise NoMarkersError("no markers found")
    idx = np.arange(1, n + 1)
    areas = ndimage.sum_labels(np.ones_like(dark), labels, idx)
    keep = idx[(areas >= min_area) & (areas <= max_area)]
    if len(keep) == 0:
        raise NoMarkersError("no marker-sized dark blobs found")
    grown = ndimage.grey_dilation(labels, size=(3, 3))
    grown = np.where(labels > 0, labels, grown)
    mass = ndimage.sum_labels(dark, grown, keep)
    ys, xs = np.mgrid[0:dark.shape[0], 0:dark.shape[1]]
    cx = ndimage.sum_labels(dark * xs, grown, keep) / mass
    cy = ndimage.sum_labels(dark * ys, grown, keep) / mass
    pos = np.stack([cx, cy], axis=1)
    return MarkerSet(pos, np.arange(len(pos)), frame_index)


def _mutual_nearest(prev_pos, cur_pos, radius):
    if len(prev_pos) == 0 or len(cur_pos) == 0:
        return np.zeros((0,), int), np.zeros((0,), int)
    d_pc, j = cKDTree(cur_pos).query(prev_pos)
    _, i = cKDTree(prev_pos).query(cur_pos)
    pi = np.arange(len(prev_pos))
    ok = (i[j] == pi) & (d_pc <= radius)
    return pi[ok], j[ok]


def match_markers(prev: MarkerSet, current: MarkerSet, max_displacement: float = MAX_DISPLACEMENT_PX):
    """Assign ids of ``prev`` to ``current`` by mutual nearest neighbor.

    Returns the relabeled current set and the motion field. Unmatched current
    markers receive fresh ids above every previous id.
    """
    pi, cj = _mutual_nearest(prev.positions, current.positions, max_displacement)
    new_ids = np.full(len(current), -1, dtype=np.int64)
    new_ids[cj] = prev.ids[pi]
    fresh = np.nonzero(new_ids < 0)[0]
    start = int(prev.ids.max()) + 1 if len(prev) else 0
    new_ids[fresh] = start + np.arange(len(fresh))
    relabeled = MarkerSet(current.positions, new_ids, current.frame_index)
    order = np.argsort(prev.ids[pi], kind="stable")
    pi, cj = pi[order], cj[order]
    field = MotionField(prev.ids[pi], prev.positions[pi], current.positions[cj] - prev.positions[pi],
                        len(pi) / len(prev) if len(prev) else 0.0)
    return relabeled, field


def track_markers(prev: MarkerSet, cur_frame: Frame, max_displacement: float = MAX_DISPLACEMENT_PX,
                  min_matched: float = 0.5, **detect_kwargs):
    """Detect markers in ``cur_frame`` and match them to ``prev``."""
    if len(prev) == 0:
        raise NoMarkersError("previous marker set is empty")
    current = detect_markers(cur_frame, prev.frame_index + 1, **detect_kwargs)
    relabeled, field = match_markers(prev, current, max_displacement)
    if field.matched_fraction < min_matched:
        raise TrackingLossError(
            f"only {field.matched_fraction:.0%} of markers matched within {max_displacement} px",
            field.matched_fraction)
    return relabeled, field


def displacement_since(origin: MarkerSet, current: MarkerSet) -> MotionField:
    """Motion of every id present in both sets (ids must already be consistent)."""
    common, oi, ci = np.intersect1d(origin.ids, current.ids, return_indices=True)
    return MotionField(common, origin.positions[oi], current.positions[ci] - origin.positions[oi],
                       len(common) / len(origin) if len(origin) else 0.0)


def select_peripheral(delta: DeltaImage, markers: MarkerSet, k: int = PERIPHERAL_K,
                      window: int = PERIPHERAL_WINDOW, exclude: Optional[np.ndarray] = None) -> PeripheralSelection:
    """Markers whose neighborhoods changed color the most.

    The score of a marker is the mean absolute channel change in a
    ``window`` x ``window`` box around it, maximized over the three channels.
    Pixels in ``exclude`` (typically marker dots) are left out of the mean.
    Ties keep marker order.
    """
    if len(markers) == 0:
        return PeripheralSelection([], [])
    weight = np.ones(delta.shape) if exclude is None else (~np.asarray(exclude, dtype=bool)).astype(np.float64)
    den = ndimage.uniform_filter(weight, size=window, mode="constant")
    scores = np.zeros(len(markers))
    h, w = delta.shape
    xi = np.clip(np.rint(markers.positions[:, 0]).astype(int), 0, w - 1)
    yi = np.clip(np.rint(markers.positions[:, 1]).astype(int), 0, h - 1)
    for c in range(3):
        num = ndimage.uniform_filter(np.abs(delta.deltas[..., c]) * weight, size=window, mode="constant")
        with np.errstate(divide="ignore", invalid="ignore"):
            mean = np.where(den > 1e-9, num / den, 0.0)
        scores = np.maximum(scores, mean[yi, xi])
    # rounding makes equal neighborhoods tie exactly despite filter round-off
    ranked = np.argsort(-np.round(scores, 9), kind="stable")[:k]
    return PeripheralSelection([int(markers.ids[i]) for i in ranked], [float(scores[i]) for i in ranked])


def slip_ratio(field: MotionField, peripheral: PeripheralSelection, motion_floor: float = MOTION_FLOOR_PX):
    """Largest peripheral displacement over the largest displacement overall.

    Returns None (static) when the largest displacement is below ``motion_floor``
    or no selected marker has a motion vector.
    """
    if len(field) == 0:
        return None
    norms = field.norms()
    v_max = float(norms.max())
    if not v_max > motion_floor:
        return None
    sel = np.isin(field.ids, np.unique(np.asarray(peripheral.ids, dtype=np.int64)))
    if not sel.any():
        return None
    return float(norms[sel].max()) / v_max


def track_record(frame_index: int, markers: MarkerSet, field: Optional[MotionField], r) -> dict:
    """One JSON-lines record: {frame, markers: [{id, x, y, vx, vy}], r}."""
    vel = {}
    if field is not None:
        vel = {int(i): v for i, v in zip(field.ids, field.vectors)}
    out = []
    for mid, (x, y) in zip(markers.ids, markers.positions):
        v = vel.get(int(mid), (0.0, 0.0))
        out.append({"id": int(mid), "x": round(float(x), 4), "y": round(float(y), 4),
                    "vx": round(float(v[0]), 4), "vy": round(float(v[1]), 4)})
    return {"frame": int(frame_index), "markers": out, "r": None if r is None else round(float(r), 6)}


def dumps_record(record: dict) -> str:
    return json.dumps(record, separators=(",", ":"))
