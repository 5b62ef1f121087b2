"""Color-to-gradient lookup table calibration from sphere presses, and its evaluation.

A ball of known radius is pressed into the gel; the analytic sphere cap gives the
true surface gradient of every pixel in the contact disk, and the observed color
change of each pixel is filed under its quantized (dR, dG, dB) cell. Tables from
several press positions are averaged cell by cell.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from .errors import InvalidInputError, NoContactError, NoUsablePixelsError, ShapeMismatchError
from .imgcore import DeltaImage, Frame, color_delta, dark_spot_mask

DEFAULT_BINS = 64
CONTACT_FLOOR = 0.05
MAX_CALIB_PITCH_DEG = 70.0
FLAT_RING = (4.0, 1.5)


# --------------------------------------------------------------------------- angles

def gradient_to_angles(gradient: np.ndarray):
    """Pitch (deg, from the sensor normal) and yaw (deg in [0, 360)) of surface normals.

    The yaw is the azimuth of the normal's in-plane projection, i.e. of (-gx, -gy).
    A zero gradient has yaw 0 by convention.
    """
    g = np.asarray(gradient, dtype=np.float64)
    gx, gy = g[..., 0], g[..., 1]
    mag = np.hypot(gx, gy)
    pitch = np.degrees(np.arctan(mag))
    yaw = np.mod(np.degrees(np.arctan2(-gy, -gx)), 360.0)
    yaw = np.where(mag > 0, yaw, 0.0)
    # mod can return exactly 360.0 for tiny negative angles
    yaw = np.where(yaw >= 360.0, 0.0, yaw)
    return pitch, yaw


def wrap_degrees(a):
    """Wrap angles to (-180, 180]."""
    w = np.mod(np.asarray(a, dtype=np.float64) + 180.0, 360.0) - 180.0
    return np.where(w == -180.0, 180.0, w)


def r_squared(predicted, truth, residuals=None) -> float:
    """Coefficient of determination 1 - SS_res / SS_tot; NaN when the truth has no variance."""
    truth = np.asarray(truth, dtype=np.float64)
    if residuals is None:
        residuals = np.asarray(predicted, dtype=np.float64) - truth
    if truth.size == 0 or np.all(truth == truth.flat[0]):
        return float("nan")
    ss_tot = float(np.sum((truth - truth.mean()) ** 2))
    if ss_tot == 0.0:
        return float("nan")
    return 1.0 - float(np.sum(np.square(residuals))) / ss_tot


# --------------------------------------------------------------------------- contact circle

@dataclass(frozen=True)
class ContactCircle:
    center: Tuple[float, float]
    radius: float


def _disk(r):
    y, x = np.ogrid[-r:r + 1, -r:r + 1]
    return x * x + y * y <= r * r


def detect_contact_circle(delta: DeltaImage, min_radius: float = 5.0, floor: float = CONTACT_FLOOR) -> ContactCircle:
    """Locate a press as the filled region of strong color change.

    When several presses are visible the one containing the largest color change wins.
    """
    inten = delta.intensity
    if inten.max() < floor:
        raise NoContactError("no press found: color change never exceeds the contact floor")
    strong = inten[inten > floor]
    thr = max(floor, 0.5 * float(np.percentile(strong, 95)))
    mask = ndimage.binary_closing(inten > thr, structure=_disk(4))
    labels, n = ndimage.label(mask)
    peak = np.unravel_index(np.argmax(np.where(mask, inten, -1.0)), inten.shape)
    region = ndimage.binary_fill_holes(labels == labels[peak])
    area = int(region.sum())
    radius = math.sqrt(area / math.pi)
    if radius < min_radius:
        raise NoContactError(f"largest press region too small (radius {radius:.1f} px)")
    ys, xs = np.nonzero(region)
    cx, cy = float(xs.mean()), float(ys.mean())
    h, w = inten.shape
    if cx - radius < -0.5 or cy - radius < -0.5 or cx + radius > w - 0.5 or cy + radius > h - 0.5:
        raise InvalidInputError("detected contact circle crosses the image border")
    return ContactCircle((cx, cy), radius)


# --------------------------------------------------------------------------- sphere truth

@dataclass(frozen=True)
class SphereTruth:
    gradient: np.ndarray      # (H, W, 2), NaN outside the disk
    height_map: np.ndarray    # mm, NaN outside the disk
    pitch: np.ndarray         # degrees
    yaw: np.ndarray           # degrees
    contact_mask: np.ndarray


def sphere_truth_gradients(circle: ContactCircle, ball_radius_mm: float, pixel_scale: float, shape) -> SphereTruth:
    h, w = shape[:2]
    rc_mm = circle.radius * pixel_scale
    if rc_mm > ball_radius_mm:
        raise InvalidInputError(
            f"contact radius {rc_mm:.3f} mm exceeds ball radius {ball_radius_mm:.3f} mm")
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    dx = (xs - circle.center[0]) * pixel_scale
    dy = (ys - circle.center[1]) * pixel_scale
    rho2 = dx * dx + dy * dy
    r2 = ball_radius_mm ** 2
    mask = (rho2 <= rc_mm ** 2) & (rho2 < r2)
    root = np.sqrt(np.where(mask, r2 - rho2, np.nan))
    grad = np.stack([-dx / root, -dy / root], axis=2)
    height = root - math.sqrt(r2 - rc_mm ** 2)
    pitch, yaw = gradient_to_angles(np.where(mask[..., None], grad, 0.0))
    nan = np.where(mask, 0.0, np.nan)
    return SphereTruth(grad, height, pitch + nan, yaw + nan, mask)


# --------------------------------------------------------------------------- lookup table

def quantize(deltas: np.ndarray, bins: int) -> np.ndarray:
    """Integer cell coordinates (..., 3) of color deltas over [-1, 1]^3."""
    q = np.floor((np.asarray(deltas, dtype=np.float64) + 1.0) * (bins / 2.0)).astype(np.int64)
    return np.clip(q, 0, bins - 1)


def cell_keys(cells: np.ndarray, bins: int) -> np.ndarray:
    return (cells[..., 0] * bins + cells[..., 1]) * bins + cells[..., 2]


@dataclass
class LookupTable:
    bins: int
    keys: np.ndarray          # sorted populated cell indices
    grad: np.ndarray          # (K, 2) mean (gx, gy)
    counts: np.ndarray        # samples behind each cell
    n_sources: np.ndarray     # presses contributing to each cell
    n_presses: int = 1
    _tree: Optional[cKDTree] = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.bins < 2:
            raise InvalidInputError("bins_per_channel must be >= 2")
        order = np.argsort(self.keys, kind="stable")
        self.keys = np.asarray(self.keys, dtype=np.int64)[order]
        self.grad = np.asarray(self.grad, dtype=np.float64).reshape(-1, 2)[order]
        self.counts = np.asarray(self.counts, dtype=np.int64)[order]
        self.n_sources = np.asarray(self.n_sources, dtype=np.int64)[order]
        if np.any(self.counts < 1) or not np.all(np.isfinite(self.grad)):
            raise InvalidInputError("populated cells need count >= 1 and finite gradients")
        if len(np.unique(self.keys)) != len(self.keys):
            raise InvalidInputError("duplicate lookup cells")

    def __len__(self):
        return len(self.keys)

    def cell_coords(self) -> np.ndarray:
        b = self.bins
        return np.stack([self.keys // (b * b), (self.keys // b) % b, self.keys % b], axis=1)

    def _nearest(self, cells: np.ndarray) -> np.ndarray:
        if self._tree is None:
            self._tree = cKDTree(self.cell_coords().astype(np.float64))
        _, idx = self._tree.query(cells.astype(np.float64))
        return idx

    def lookup(self, deltas: np.ndarray):
        """Vectorized lookup: returns (gradients (..., 2), extrapolated (...))."""
        if len(self.keys) == 0:
            raise InvalidInputError("lookup table is empty")
        deltas = np.asarray(deltas, dtype=np.float64)
        shape = deltas.shape[:-1]
        cells = quantize(deltas.reshape(-1, 3), self.bins)
        keys = cell_keys(cells, self.bins)
        pos = np.minimum(np.searchsorted(self.keys, keys), len(self.keys) - 1)
        hit = self.keys[pos] == keys
        idx = pos.copy()
        if not hit.all():
            idx[~hit] = self._nearest(cells[~hit])
        return self.grad[idx].reshape(shape + (2,)), (~hit).reshape(shape)


def lookup_gradient(table: LookupTable, delta) -> Tuple[float, float, bool]:
    """Gradient for one (dR, dG, dB); the flag marks a nearest-cell fallback."""
    g, ext = table.lookup(np.asarray(delta, dtype=np.float64).reshape(1, 3))
    return float(g[0, 0]), float(g[0, 1]), bool(ext[0])


def table_from_samples(deltas: np.ndarray, gradients: np.ndarray, bins: int) -> LookupTable:
    """Single-source table: per-cell mean of the gradient samples."""
    keys = cell_keys(quantize(deltas, bins), bins)
    uniq, inv = np.unique(keys, return_inverse=True)
    counts = np.bincount(inv)
    gx = np.bincount(inv, weights=gradients[:, 0]) / counts
    gy = np.bincount(inv, weights=gradients[:, 1]) / counts
    return LookupTable(bins, uniq, np.stack([gx, gy], axis=1), counts, np.ones_like(counts), 1)


def merge_tables(tables: Sequence[LookupTable]) -> LookupTable:
    """Average tables cell by cell: each table contributes its cell mean once.

    The running-mean update leaves a cell unchanged when an identical table is
    merged again, so duplicated presses do not perturb the result.
    """
    if not tables:
        raise InvalidInputError("nothing to merge")
    bins = tables[0].bins
    if any(t.bins != bins for t in tables):
        raise InvalidInputError("cannot merge tables with different bin counts")
    uniq = np.unique(np.concatenate([t.keys for t in tables]))
    mean = np.zeros((len(uniq), 2))
    n_src = np.zeros(len(uniq), dtype=np.int64)
    counts = np.zeros(len(uniq), dtype=np.int64)
    for t in tables:
        idx = np.searchsorted(uniq, t.keys)
        total = n_src[idx] + t.n_sources
        mean[idx] += (t.grad - mean[idx]) * (t.n_sources / total)[:, None]
        n_src[idx] = total
        counts[idx] += t.counts
    return LookupTable(bins, uniq, mean, counts, n_src, sum(t.n_presses for t in tables))


def marker_exclusion(frame: Frame, reference: Frame) -> np.ndarray:
    return dark_spot_mask(frame.pixels) | dark_spot_mask(reference.pixels)


def press_samples(frame: Frame, reference: Frame, ball_radius_mm: float, *,
                  max_pitch_deg=MAX_CALIB_PITCH_DEG, rim_margin_px=1.0, exclude_markers=True,
                  flat_ring=FLAT_RING):
    """(deltas (N, 3), truth gradients (N, 2)) for the usable pixels of one press.

    Besides the contact disk, a ring of undeformed membrane around it
    (``flat_ring`` = (gap px, outer radius / contact radius)) is filed with zero
    gradient, so that small color changes map to a flat surface.
    """
    delta = color_delta(frame, reference)
    circle = detect_contact_circle(delta)
    truth = sphere_truth_gradients(circle, ball_radius_mm, frame.pixel_scale, delta.shape)
    h, w = delta.shape
    ys, xs = np.mgrid[0:h, 0:w]
    rho = np.hypot(xs - circle.center[0], ys - circle.center[1])
    use = truth.contact_mask & (rho <= circle.radius - rim_margin_px) & (truth.pitch <= max_pitch_deg)
    flat = np.zeros_like(use)
    if flat_ring is not None:
        flat = (rho > circle.radius + flat_ring[0]) & (rho <= circle.radius * flat_ring[1])
    if exclude_markers:
        spots = marker_exclusion(frame, reference)
        use &= ~spots
        flat &= ~spots
    deltas = np.concatenate([delta.deltas[use], delta.deltas[flat]])
    grads = np.concatenate([truth.gradient[use], np.zeros((int(flat.sum()), 2))])
    return deltas, grads


def build_lookup(presses: Iterable[Tuple[Frame, Frame, float]], bins_per_channel: int = DEFAULT_BINS,
                 **sample_kwargs) -> LookupTable:
    """Calibrate from (frame, reference, ball_radius_mm) presses; per-press tables are averaged."""
    tables = []
    shape = None
    for frame, reference, ball_radius_mm in presses:
        if shape is None:
            shape = frame.pixels.shape
        elif frame.pixels.shape != shape:
            raise ShapeMismatchError(f"press frames differ in size: {shape[:2]} vs {frame.pixels.shape[:2]}")
        deltas, grads = press_samples(frame, reference, ball_radius_mm, **sample_kwargs)
        if len(deltas):
            tables.append(table_from_samples(deltas, grads, bins_per_channel))
    if shape is None:
        raise InvalidInputError("no presses")
    if not tables:
        raise NoUsablePixelsError("no usable calibration pixels in any press")
    return merge_tables(tables)


# --------------------------------------------------------------------------- evaluation

@dataclass(frozen=True)
class PressEval:
    position: Tuple[float, float]
    r2_pitch: float
    r2_yaw: float
    n_pixels: int


def _eval_pixels(table, frame, reference, truth, exclude_markers=True, max_pitch_deg=None):
    delta = color_delta(frame, reference)
    mask = np.asarray(truth.contact_mask, dtype=bool).copy()
    if exclude_markers:
        mask &= ~marker_exclusion(frame, reference)
    t_pitch, t_yaw = gradient_to_angles(np.nan_to_num(np.asarray(truth.gradient)[mask]))
    if max_pitch_deg is not None:
        keep = t_pitch <= max_pitch_deg
        mask[mask] = keep
        t_pitch, t_yaw = t_pitch[keep], t_yaw[keep]
    pred, _ = table.lookup(delta.deltas[mask])
    p_pitch, p_yaw = gradient_to_angles(pred)
    return mask, (p_pitch, p_yaw), (t_pitch, t_yaw)


def eval_press(table: LookupTable, frame: Frame, reference: Frame, truth, *, exclude_markers=True) -> PressEval:
    """R^2 of looked-up pitch and yaw against truth over the contact pixels.

    ``truth`` needs ``gradient`` and ``contact_mask`` (a synthgel TruthSlice or a SphereTruth).
    Yaw residuals are wrapped to (-180, 180].
    """
    mask, (pp, py), (tp, ty) = _eval_pixels(table, frame, reference, truth, exclude_markers)
    if not mask.any():
        raise NoContactError("truth has no contact pixels")
    ys, xs = np.nonzero(mask)
    return PressEval((float(xs.mean()), float(ys.mean())), r_squared(pp, tp),
                     r_squared(None, ty, residuals=wrap_degrees(py - ty)), int(mask.sum()))


def sphere_truth_for_press(frame: Frame, reference: Frame, ball_radius_mm: float) -> SphereTruth:
    delta = color_delta(frame, reference)
    circle = detect_contact_circle(delta)
    return sphere_truth_gradients(circle, ball_radius_mm, frame.pixel_scale, delta.shape)


@dataclass(frozen=True)
class ColorChangeCurve:
    pitch_deg: np.ndarray
    mean_change: np.ndarray
    counts: np.ndarray
    monotone_until_deg: Optional[float]  # largest P with the curve strictly increasing on [start, P]


def color_change_curve(frame: Frame, reference: Frame, truth_pitch_deg: np.ndarray, mask: np.ndarray,
                       bin_width: float = 5.0, start_deg: float = 5.0, exclude_markers=True) -> ColorChangeCurve:
    """Mean |dRGB| of contact pixels binned by true pitch (bins centered on multiples of bin_width)."""
    delta = color_delta(frame, reference)
    use = np.asarray(mask, dtype=bool) & np.isfinite(truth_pitch_deg)
    if exclude_markers:
        use &= ~marker_exclusion(frame, reference)
    if not use.any():
        raise NoContactError("no contact pixels to build a color-change curve")
    idx = np.rint(np.asarray(truth_pitch_deg)[use] / bin_width).astype(np.int64)
    vals = delta.intensity[use]
    counts = np.bincount(idx)
    sums = np.bincount(idx, weights=vals)
    present = np.nonzero(counts)[0]
    pitch = present * bin_width
    mean = sums[present] / counts[present]
    p_star = None
    sel = np.nonzero(pitch >= start_deg - 1e-9)[0]
    if len(sel):
        p_star = float(pitch[sel[0]])
        for a, b in zip(sel, sel[1:]):
            if mean[b] > mean[a]:
                p_star = float(pitch[b])
            else:
                break
    return ColorChangeCurve(pitch.astype(np.float64), mean, counts[present], p_star)


DEFAULT_R2_EDGES = np.round(np.linspace(0.0, 1.0, 41), 10)


@dataclass(frozen=True)
class R2Distribution:
    entries: List[PressEval]
    edges: np.ndarray
    hist_pitch: np.ndarray
    hist_yaw: np.ndarray

    def summary(self, which="pitch"):
        vals = np.array([getattr(e, f"r2_{which}") for e in self.entries])
        return {"min": float(np.nanmin(vals)), "median": float(np.nanmedian(vals)), "max": float(np.nanmax(vals))}


def r2_histogram(values, edges=DEFAULT_R2_EDGES) -> np.ndarray:
    """Counts per bin; values below the first edge land in the first bin."""
    v = np.clip(np.asarray(values, dtype=np.float64), edges[0], edges[-1])
    v = v[np.isfinite(v)]
    return np.histogram(v, bins=edges)[0]


def r2_distribution(table: LookupTable, presses, edges=DEFAULT_R2_EDGES, **kwargs) -> R2Distribution:
    """Per-press R^2 over many presses; ``presses`` holds (frame, reference, truth) triples."""
    presses = list(presses)
    if len(presses) < 2:
        raise InvalidInputError("an R^2 distribution needs at least 2 presses")
    entries = [eval_press(table, f, r, t, **kwargs) for f, r, t in presses]
    edges = np.asarray(edges, dtype=np.float64)
    return R2Distribution(entries, edges,
                          r2_histogram([e.r2_pitch for e in entries], edges),
                          r2_histogram([e.r2_yaw for e in entries], edges))


@dataclass(frozen=True)
class CalibEvalReport:
    r2_pitch: float
    r2_yaw: float
    entries: List[PressEval]
    curve: Optional[ColorChangeCurve] = None


def evaluate_presses(table: LookupTable, presses, curve_bin_width=5.0, **kwargs) -> CalibEvalReport:
    """Pooled and per-press R^2 plus the color-change curve of the first press."""
    presses = list(presses)
    if not presses:
        raise InvalidInputError("no presses")
    entries, pitch_p, pitch_t, yaw_res, yaw_t = [], [], [], [], []
    for frame, reference, truth in presses:
        entries.append(eval_press(table, frame, reference, truth, **kwargs))
        _, (pp, py), (tp, ty) = _eval_pixels(table, frame, reference, truth, **kwargs)
        pitch_p.append(pp)
        pitch_t.append(tp)
        yaw_res.append(wrap_degrees(py - ty))
        yaw_t.append(ty)
    frame, reference, truth = presses[0]
    t_pitch, _ = gradient_to_angles(np.nan_to_num(np.asarray(truth.gradient)))
    curve = color_change_curve(frame, reference, t_pitch, truth.contact_mask, curve_bin_width, **kwargs)
    return CalibEvalReport(
        r_squared(np.concatenate(pitch_p), np.concatenate(pitch_t)),
        r_squared(None, np.concatenate(yaw_t), residuals=np.concatenate(yaw_res)),
        entries, curve)
