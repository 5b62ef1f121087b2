"""Slip detection from three cues: texture-vs-marker motion, the marker ratio and contact-area loss.

Rigid transforms use one convention throughout: a point ``p`` of the earlier
frame moves to ``R(rotation) (p - c) + c + translation`` where ``c`` is the
center of the analysis window, coordinates are (x, y) = (column, row) and a
positive rotation turns +x toward +y.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import fft, ndimage

from .errors import (InsufficientMarkersError, InvalidInputError, NoMarkersError, SchemaError, TexturelessError,
                     TrackingLossError)
from .imgcore import DeltaImage, Frame, color_delta, dark_spot_mask, max_intensity_pixel, window_origin
from .markers import (MarkerSet, MotionField, detect_markers, displacement_since, select_peripheral, slip_ratio,
                      track_markers)

log = logging.getLogger(__name__)

NO_CONTACT = "no-contact"
STABLE = "contact-stable"
SLIP_TRANSLATIONAL = "incipient-or-slip-translational"
SLIP_ROTATIONAL = "incipient-or-slip-rotational"
SEVERE = "severe-slip"
STATES = (NO_CONTACT, STABLE, SLIP_TRANSLATIONAL, SLIP_ROTATIONAL, SEVERE)
SLIP_STATES = frozenset({SLIP_TRANSLATIONAL, SLIP_ROTATIONAL, SEVERE})


def wrap_angle(deg: float) -> float:
    """Wrap to (-180, 180]."""
    w = math.fmod(deg, 360.0)
    if w <= -180.0:
        w += 360.0
    elif w > 180.0:
        w -= 360.0
    return w


@dataclass(frozen=True)
class RigidTransform2D:
    translation: Tuple[float, float] = (0.0, 0.0)
    rotation: float = 0.0  # degrees

    def __post_init__(self):
        object.__setattr__(self, "translation", (float(self.translation[0]), float(self.translation[1])))
        object.__setattr__(self, "rotation", wrap_angle(float(self.rotation)))

    def apply(self, points: np.ndarray, center) -> np.ndarray:
        t = math.radians(self.rotation)
        rot = np.array([[math.cos(t), -math.sin(t)], [math.sin(t), math.cos(t)]])
        c = np.asarray(center, dtype=np.float64)
        return (np.asarray(points, dtype=np.float64) - c) @ rot.T + c + np.asarray(self.translation)


# --------------------------------------------------------------------------- texture motion

def _corr(f_hat, g_hat, shape):
    """Cross-correlation sum_q f(q) g(q + t) from precomputed spectra."""
    return fft.irfft2(np.conj(f_hat) * g_hat, s=shape)


def _spectra(values: Sequence[np.ndarray], shape):
    return [fft.rfft2(v, s=shape) for v in values]


def _masked_ncc(a_hat, b_hat, shape, max_shift, min_overlap):
    """NCC over shifts |tx|, |ty| <= max_shift, returned as a (2S+1, 2S+1) array indexed [ty, tx]."""
    ma, maa, maa2 = a_hat
    mb, mbb, mbb2 = b_hat
    n = _corr(ma, mb, shape)
    sa = _corr(maa, mb, shape)
    sb = _corr(ma, mbb, shape)
    saa = _corr(maa2, mb, shape)
    sbb = _corr(ma, mbb2, shape)
    sab = _corr(maa, mbb, shape)
    idx = np.r_[0:max_shift + 1, -max_shift:0]
    sel = np.ix_(idx, idx)
    n, sa, sb, saa, sbb, sab = (x[sel] for x in (n, sa, sb, saa, sbb, sab))
    n = np.rint(n)
    with np.errstate(divide="ignore", invalid="ignore"):
        cov = sab - sa * sb / n
        va = saa - sa * sa / n
        vb = sbb - sb * sb / n
        ncc = cov / np.sqrt(np.maximum(va, 0.0) * np.maximum(vb, 0.0))
    ncc = np.where((n >= min_overlap) & (va > 1e-12) & (vb > 1e-12), ncc, -np.inf)
    # reorder from FFT layout to increasing shift
    return np.fft.fftshift(ncc)


def _warp(img: np.ndarray, mask: np.ndarray, deg: float, shift=(0.0, 0.0)):
    """Image whose content is turned by ``deg`` about the patch center, then moved by ``shift`` (x, y)."""
    if deg == 0.0 and shift[0] == 0.0 and shift[1] == 0.0:
        return img, mask
    h, w = img.shape
    c = np.array([(h - 1) / 2.0, (w - 1) / 2.0])
    s_rc = np.array([shift[1], shift[0]], dtype=np.float64)
    t = math.radians(deg)
    # output (row, col) samples the input at R(-deg) about the center, written in (row, col) order
    inv = np.array([[math.cos(t), -math.sin(t)], [math.sin(t), math.cos(t)]])
    offset = c - inv @ (c + s_rc)
    out = ndimage.affine_transform(img, inv, offset=offset, order=3, mode="constant", cval=0.0, prefilter=True)
    m = ndimage.affine_transform(mask.astype(np.float64), inv, offset=offset, order=1, mode="constant", cval=0.0)
    return out, m > 0.999


def _parabola_peak(ym, y0, yp) -> float:
    den = ym - 2.0 * y0 + yp
    if not np.isfinite(den) or den >= 0:
        return 0.0
    return float(np.clip(0.5 * (ym - yp) / den, -0.5, 0.5))


def _best_shift(ncc: np.ndarray, max_shift: int):
    iy, ix = np.unravel_index(int(np.argmax(ncc)), ncc.shape)
    return float(ncc[iy, ix]), ix - max_shift, iy - max_shift, iy, ix


def texture_transform(prev_patch: np.ndarray, cur_patch: np.ndarray, prev_exclude: Optional[np.ndarray] = None,
                      cur_exclude: Optional[np.ndarray] = None, *, max_shift: int = 12, max_rotation: float = 15.0,
                      rotation_step: float = 0.5, coarse_step: float = 2.5, min_std: float = 0.005,
                      min_overlap: float = 0.3, refine_iters: int = 3,
                      min_peak_contrast: float = 0.005) -> RigidTransform2D:
    """Rigid motion of a gray-scale patch between two frames by masked normalized cross-correlation.

    Rotations are searched coarse-to-fine (``coarse_step`` over the full range, then
    ``rotation_step`` around the best coarse angle); translations are exhaustive
    integer shifts up to ``max_shift``. The angle is refined with a three-point
    parabola; the translation by re-warping and fitting the residual peak.
    Pixels flagged in the exclude masks take no part in the score.
    """
    a = np.asarray(prev_patch, dtype=np.float64)
    b = np.asarray(cur_patch, dtype=np.float64)
    if a.ndim != 2 or a.shape != b.shape:
        raise InvalidInputError(f"patches must be equal-size 2-D arrays, got {a.shape} and {b.shape}")
    ma = np.ones(a.shape, bool) if prev_exclude is None else ~np.asarray(prev_exclude, bool)
    mb = np.ones(b.shape, bool) if cur_exclude is None else ~np.asarray(cur_exclude, bool)
    for name, img, m in (("previous", a, ma), ("current", b, mb)):
        if m.sum() < 2 or img[m].std() < min_std:
            raise TexturelessError(f"{name} patch has too little texture for correlation")
    h, w = a.shape
    shape = (fft.next_fast_len(h + max_shift + 1), fft.next_fast_len(w + max_shift + 1))
    bf = mb.astype(np.float64)
    b_hat = _spectra([bf, bf * b, bf * b * b], shape)
    overlap = min_overlap * min(ma.sum(), mb.sum())

    cache = {}

    def score(deg):
        key = round(deg, 6)
        if key not in cache:
            ra, rm = _warp(a, ma, deg)
            af = rm.astype(np.float64)
            ncc = _masked_ncc(_spectra([af, af * ra, af * ra * ra], shape), b_hat, shape, max_shift, overlap)
            cache[key] = (ncc, _best_shift(ncc, max_shift))
        return cache[key]

    n_coarse = int(round(max_rotation / coarse_step))
    coarse = [coarse_step * k for k in range(-n_coarse, n_coarse + 1)]
    coarse_scores = [score(d)[1][0] for d in coarse]
    i = int(np.argmax(coarse_scores))
    best = coarse[i]
    # Skip the adjacent samples: a true angle midway between two of them scores both alike.
    far = [s for j, s in enumerate(coarse_scores) if abs(j - i) >= 2]
    if far and coarse_scores[i] - max(far) < min_peak_contrast:
        # A featureless or rotationally symmetric patch fits many rigid motions equally well.
        raise TexturelessError("correlation peak is not distinct in rotation")
    n_fine = int(round(coarse_step / rotation_step))
    fine = [best + rotation_step * k for k in range(-n_fine, n_fine + 1) if abs(best + rotation_step * k) <= max_rotation + 1e-9]
    best = max(fine, key=lambda d: score(d)[1][0])
    if not np.isfinite(score(best)[1][0]):
        raise TexturelessError("no overlap with usable texture in the search range")

    rot = best
    if abs(best) + rotation_step <= max_rotation + 1e-9:
        rot = best + rotation_step * _parabola_peak(score(best - rotation_step)[1][0], score(best)[1][0],
                                                    score(best + rotation_step)[1][0])
    _, (_, tx, ty, _, _) = score(rot)
    # Parabola fits are biased away from integer offsets, so re-center on the
    # current estimate and fit the small residual until it settles.
    est = np.array([float(tx), float(ty)])
    for _ in range(refine_iters):
        ra, rm = _warp(a, ma, rot, (est[0] - round(est[0]), est[1] - round(est[1])))
        af = rm.astype(np.float64)
        ncc = _masked_ncc(_spectra([af, af * ra, af * ra * ra], shape), b_hat, shape, max_shift, overlap)
        ix, iy = int(round(est[0])) + max_shift, int(round(est[1])) + max_shift
        ix = min(max(ix, 1), ncc.shape[1] - 2)
        iy = min(max(iy, 1), ncc.shape[0] - 2)
        if not np.isfinite(ncc[iy, ix]):
            break
        fx = _parabola_peak(ncc[iy, ix - 1], ncc[iy, ix], ncc[iy, ix + 1])
        fy = _parabola_peak(ncc[iy - 1, ix], ncc[iy, ix], ncc[iy + 1, ix])
        new = np.array([ix - max_shift + fx, iy - max_shift + fy]) + (est - np.round(est))
        done = np.max(np.abs(new - est)) < 1e-3
        est = new
        if done:
            break
    return RigidTransform2D((est[0], est[1]), rot)


# --------------------------------------------------------------------------- marker motion

def fit_rigid(src: np.ndarray, dst: np.ndarray, center) -> RigidTransform2D:
    """Least-squares rotation and translation taking ``src`` onto ``dst``."""
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    if len(src) < 3:
        raise InsufficientMarkersError(f"rigid fit needs at least 3 markers, got {len(src)}")
    ps, qs = src.mean(axis=0), dst.mean(axis=0)
    p, q = src - ps, dst - qs
    theta = math.atan2(np.sum(p[:, 0] * q[:, 1] - p[:, 1] * q[:, 0]), np.sum(p[:, 0] * q[:, 0] + p[:, 1] * q[:, 1]))
    rot = np.array([[math.cos(theta), -math.sin(theta)], [math.sin(theta), math.cos(theta)]])
    c = np.asarray(center, dtype=np.float64)
    t = qs - c - rot @ (ps - c)
    return RigidTransform2D((t[0], t[1]), math.degrees(theta))


@dataclass(frozen=True)
class Window:
    x0: int
    y0: int
    side: int

    @property
    def center(self):
        return (self.x0 + (self.side - 1) / 2.0, self.y0 + (self.side - 1) / 2.0)

    def contains(self, points: np.ndarray) -> np.ndarray:
        p = np.asarray(points, dtype=np.float64).reshape(-1, 2)
        return ((p[:, 0] >= self.x0) & (p[:, 0] <= self.x0 + self.side - 1)
                & (p[:, 1] >= self.y0) & (p[:, 1] <= self.y0 + self.side - 1))

    def crop(self, arr: np.ndarray) -> np.ndarray:
        return arr[self.y0:self.y0 + self.side, self.x0:self.x0 + self.side]


def marker_transform(motion: MotionField, window: Window) -> RigidTransform2D:
    """Rigid fit to the motion of markers that started inside ``window``."""
    inside = window.contains(motion.origins) if len(motion) else np.zeros(0, bool)
    if inside.sum() < 3:
        raise InsufficientMarkersError(f"{int(inside.sum())} tracked markers in the window, need 3")
    p = motion.origins[inside]
    return fit_rigid(p, p + motion.vectors[inside], window.center)


def relative_motion(texture: RigidTransform2D, marker: RigidTransform2D) -> Tuple[float, float]:
    dx = texture.translation[0] - marker.translation[0]
    dy = texture.translation[1] - marker.translation[1]
    return math.hypot(dx, dy), abs(wrap_angle(texture.rotation - marker.rotation))


# --------------------------------------------------------------------------- contact

@dataclass(frozen=True)
class ContactStatus:
    in_contact: bool
    area: int
    mean_intensity: float


def detect_contact(delta: DeltaImage, intensity_threshold: float = 0.05, min_area: int = 200) -> ContactStatus:
    mask = delta.intensity > intensity_threshold
    area = int(mask.sum())
    mean = float(delta.intensity[mask].mean()) if area else 0.0
    return ContactStatus(area >= min_area, area, mean)


# --------------------------------------------------------------------------- configuration

@dataclass(frozen=True)
class SlipConfig:
    contact_intensity: float = 0.05
    min_area: int = 200
    area_drop_fraction: float = 0.6
    r_threshold: float = 0.8
    ratio_direction: str = "lower"  # fire when r < threshold ("higher": r > threshold)
    motion_floor_px: float = 0.5
    dt_frame_px: float = 1.0
    dtheta_frame_deg: float = 1.0
    dt_accum_px: float = 4.0
    dtheta_accum_deg: float = 5.0
    window_side: int = 120
    peripheral_k: int = 8
    peripheral_window: int = 21
    max_displacement_px: float = 15.0
    regrasp_factor: float = 1.2
    max_attempts: int = 6

    def __post_init__(self):
        if self.ratio_direction not in ("lower", "higher"):
            raise InvalidInputError(f"ratio_direction must be 'lower' or 'higher', got {self.ratio_direction!r}")
        for name in ("contact_intensity", "motion_floor_px", "dt_frame_px", "dtheta_frame_deg", "dt_accum_px",
                     "dtheta_accum_deg", "max_displacement_px"):
            if not getattr(self, name) > 0:
                raise InvalidInputError(f"{name} must be positive")
        if not 0 < self.area_drop_fraction < 1:
            raise InvalidInputError("area_drop_fraction must lie in (0, 1)")
        if self.window_side < 8 or self.peripheral_k < 1 or self.max_attempts < 1 or self.min_area < 1:
            raise InvalidInputError("window_side, peripheral_k, max_attempts and min_area are too small")
        if not self.regrasp_factor > 1:
            raise InvalidInputError("regrasp_factor must exceed 1")

    @classmethod
    def from_dict(cls, data: dict) -> "SlipConfig":
        if not isinstance(data, dict):
            raise SchemaError("slip config must be a JSON object")
        known = {f.name: f for f in fields(cls)}
        unknown = sorted(set(data) - set(known))
        if unknown:
            raise SchemaError(f"unknown config keys: {', '.join(unknown)}")
        kw = {}
        for k, v in data.items():
            default = known[k].default
            if isinstance(default, str):
                ok = isinstance(v, str)
            elif isinstance(default, int):
                ok = isinstance(v, int) and not isinstance(v, bool)
            else:
                ok = isinstance(v, (int, float)) and not isinstance(v, bool)
            if not ok:
                raise SchemaError(f"config key {k!r} has the wrong type")
            kw[k] = v
        return cls(**kw)

    @classmethod
    def load(cls, path) -> "SlipConfig":
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise SchemaError(f"config {path} is not valid JSON: {exc}") from None
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return asdict(self)


# --------------------------------------------------------------------------- per-frame detector

@dataclass(frozen=True)
class Cues:
    """Measurements that feed the verdict; None marks a cue that could not be measured."""

    area: int = 0
    baseline_area: int = 0
    in_contact: bool = False
    dt: Optional[float] = None
    dtheta: Optional[float] = None
    acc_dt: float = 0.0
    acc_dtheta: float = 0.0
    r: Optional[float] = None
    v_max: float = 0.0


@dataclass(frozen=True)
class SlipVerdict:
    frame: int
    state: str
    dt: Optional[float]
    dtheta: Optional[float]
    acc_dt: float
    acc_dtheta: float
    r: Optional[float]
    area_fraction: Optional[float]
    fired: dict
    degraded: bool = False
    textureless: bool = False

    @property
    def slipping(self) -> bool:
        return self.state in SLIP_STATES

    def to_record(self) -> dict:
        def rnd(x, n=6):
            return None if x is None else round(float(x), n)

        return {"frame": self.frame, "state": self.state, "dt_px": rnd(self.dt), "dtheta_deg": rnd(self.dtheta),
                "acc_dt_px": rnd(self.acc_dt), "acc_dtheta_deg": rnd(self.acc_dtheta), "r": rnd(self.r),
                "area_fraction": rnd(self.area_fraction), "fired": dict(sorted(self.fired.items())),
                "degraded": self.degraded, "textureless": self.textureless}


def classify(cues: Cues, config: SlipConfig) -> Tuple[str, dict]:
    """Verdict label and per-cue fired flags. Any cue means slip; area loss outranks rotation outranks translation."""
    fired = {"area": False, "translation": False, "rotation": False, "ratio": False}
    if cues.baseline_area > 0 and cues.area < config.area_drop_fraction * cues.baseline_area:
        fired["area"] = True
    if cues.in_contact:
        fired["translation"] = ((cues.dt is not None and cues.dt > config.dt_frame_px)
                                or cues.acc_dt > config.dt_accum_px)
        fired["rotation"] = ((cues.dtheta is not None and cues.dtheta > config.dtheta_frame_deg)
                             or cues.acc_dtheta > config.dtheta_accum_deg)
        if cues.r is not None and cues.v_max > config.motion_floor_px:
            if config.ratio_direction == "lower":
                fired["ratio"] = cues.r < config.r_threshold
            else:
                fired["ratio"] = cues.r > config.r_threshold
    if fired["area"]:
        state = SEVERE
    elif not cues.in_contact:
        state = NO_CONTACT
    elif fired["rotation"]:
        state = SLIP_ROTATIONAL
    elif fired["translation"] or fired["ratio"]:
        state = SLIP_TRANSLATIONAL
    else:
        state = STABLE
    return state, fired


@dataclass(frozen=True)
class DetectorState:
    reference: Frame
    config: SlipConfig = field(default_factory=SlipConfig)
    frame_index: int = 0
    previous: Optional[Frame] = None
    previous_intensity: Optional[np.ndarray] = None
    previous_markers: Optional[MarkerSet] = None
    origin_markers: Optional[MarkerSet] = None
    acc_translation: float = 0.0
    acc_rotation: float = 0.0
    baseline_area: int = 0
    reference_spots: Optional[np.ndarray] = None

    @classmethod
    def start(cls, reference: Frame, config: Optional[SlipConfig] = None) -> "DetectorState":
        return cls(reference, config or SlipConfig(), reference_spots=dark_spot_mask(reference.pixels))

    def new_grasp(self) -> "DetectorState":
        return DetectorState(self.reference, self.config, self.frame_index, reference_spots=self.reference_spots)

    def spots(self, frame: Frame) -> np.ndarray:
        """Marker pixels of ``frame`` plus the rest positions seen in the reference."""
        cur = dark_spot_mask(frame.pixels)
        return cur if self.reference_spots is None else cur | self.reference_spots


def _texture_motion(state: DetectorState, frame: Frame, intensity: np.ndarray, delta: DeltaImage, spots):
    # Both the moving dots and their rest-position ghosts in the difference image are masked.
    cfg = state.config
    center = max_intensity_pixel(delta)
    x0, y0 = window_origin(intensity.shape, center, cfg.window_side)
    win = Window(x0, y0, cfg.window_side)
    prev_mask = win.crop(state.spots(state.previous))
    cur_mask = win.crop(spots)
    tex = texture_transform(win.crop(state.previous_intensity), win.crop(intensity), prev_mask, cur_mask)
    return win, tex


def step(state: DetectorState, frame: Frame) -> Tuple[DetectorState, SlipVerdict]:
    """Process one frame; returns the next state and this frame's verdict."""
    cfg = state.config
    delta = color_delta(frame, state.reference)
    contact = detect_contact(delta, cfg.contact_intensity, cfg.min_area)
    intensity = np.asarray(delta.intensity)
    index = state.frame_index
    degraded = textureless = False
    dt = dtheta = r = None
    v_max = 0.0
    acc_t, acc_r = state.acc_translation, state.acc_rotation
    prev_markers, origin = state.previous_markers, state.origin_markers
    baseline = state.baseline_area

    if contact.in_contact:
        spots = state.spots(frame)
        try:
            if prev_markers is None:
                prev_markers = origin = detect_markers(frame, index)
                motion = None
            else:
                prev_markers, motion = track_markers(prev_markers, frame, cfg.max_displacement_px)
        except (TrackingLossError, NoMarkersError) as exc:
            log.info("frame %d: %s", index, exc)
            degraded = True
            motion = None
            try:
                prev_markers = origin = detect_markers(frame, index)
            except NoMarkersError:
                prev_markers = origin = None

        if state.previous is not None and state.previous_intensity is not None:
            try:
                win, tex = _texture_motion(state, frame, intensity, delta, spots)
                if motion is not None:
                    mk = marker_transform(motion, win)
                    dt, dtheta = relative_motion(tex, mk)
                    acc_t += dt
                    acc_r += dtheta
            except TexturelessError:
                textureless = True
            except InsufficientMarkersError as exc:
                log.info("frame %d: %s", index, exc)
                degraded = True

        if prev_markers is not None and origin is not None:
            cumulative = displacement_since(origin, prev_markers)
            if len(cumulative):
                v_max = float(cumulative.norms().max())
                sel = select_peripheral(delta, prev_markers, cfg.peripheral_k, cfg.peripheral_window, spots)
                r = slip_ratio(cumulative, sel, cfg.motion_floor_px)

    cues = Cues(contact.area, baseline, contact.in_contact, dt, dtheta, acc_t, acc_r, r, v_max)
    label, fired = classify(cues, cfg)
    frac = contact.area / baseline if baseline > 0 else None
    verdict = SlipVerdict(index, label, dt, dtheta, acc_t, acc_r, r, frac, fired, degraded, textureless)

    if contact.in_contact:
        nxt = replace(state, frame_index=index + 1, previous=frame, previous_intensity=intensity,
                      previous_markers=prev_markers, origin_markers=origin, acc_translation=acc_t,
                      acc_rotation=acc_r, baseline_area=max(baseline, contact.area))
    else:
        nxt = replace(state, frame_index=index + 1, previous=None, previous_intensity=None,
                      previous_markers=None, origin_markers=None)
    return nxt, verdict


def run_detector(reference: Frame, frames: Sequence[Frame], config: Optional[SlipConfig] = None) -> List[SlipVerdict]:
    state = DetectorState.start(reference, config)
    out = []
    for f in frames:
        state, v = step(state, f)
        out.append(v)
    return out


def first_slip_frame(verdicts: Sequence[SlipVerdict]) -> Optional[int]:
    for v in verdicts:
        if v.slipping:
            return v.frame
    return None


# --------------------------------------------------------------------------- re-grasp policy

@dataclass(frozen=True)
class SimulatedObject:
    """An object that holds when the grasp threshold reaches ``required_threshold``."""

    required_threshold: float
    initial_threshold: float = 1.0
    name: str = "object"

    def __post_init__(self):
        if not (self.required_threshold > 0 and self.initial_threshold > 0):
            raise InvalidInputError("thresholds must be positive")

    def holds(self, threshold: float) -> bool:
        return threshold >= self.required_threshold


@dataclass(frozen=True)
class GraspAttempt:
    attempt: int
    threshold: float
    slipped: bool
    first_slip_frame: Optional[int]


@dataclass(frozen=True)
class GraspLog:
    object_name: str
    success: bool
    attempts: Tuple[GraspAttempt, ...]

    @property
    def n_attempts(self) -> int:
        return len(self.attempts)

    def to_dict(self) -> dict:
        return {"object": self.object_name, "success": self.success, "n_attempts": self.n_attempts,
                "attempts": [{"attempt": a.attempt, "threshold": round(a.threshold, 9), "slipped": a.slipped,
                              "first_slip_frame": a.first_slip_frame} for a in self.attempts]}


LiftFn = Callable[[SimulatedObject, float, int], Sequence[SlipVerdict]]


def grasp_policy_run(obj: SimulatedObject, config: Optional[SlipConfig] = None,
                     lift: Optional[LiftFn] = None) -> GraspLog:
    """Grasp, lift, and on slip release and retry with a higher threshold.

    Every attempt raises the threshold by ``regrasp_factor`` before closing the
    gripper, so attempt k grasps at ``initial * factor**k``. ``lift`` returns
    detector verdicts for a lift at a given threshold; without it the slip
    outcome is taken directly from the object's requirement.
    """
    cfg = config or SlipConfig()
    threshold = obj.initial_threshold
    attempts = []
    for k in range(1, cfg.max_attempts + 1):
        threshold *= cfg.regrasp_factor
        if lift is None:
            slip_at = None if obj.holds(threshold) else 0
        else:
            slip_at = first_slip_frame(lift(obj, threshold, k))
        attempts.append(GraspAttempt(k, threshold, slip_at is not None, slip_at))
        log.info("attempt %d at threshold %.4f: %s", k, threshold, "slip" if slip_at is not None else "stable")
        if slip_at is None:
            return GraspLog(obj.name, True, tuple(attempts))
    return GraspLog(obj.name, False, tuple(attempts))


def rendered_lift(width: int = 320, height: int = 240, n_frames: int = 10, seed: int = 0,
                  config: Optional[SlipConfig] = None) -> LiftFn:
    """Lift simulator backed by the synthetic sensor: a stick sequence when the
    threshold suffices, a full translational slip otherwise."""
    from .synthgel import MarkerLayout, SensorModel, render_reference, render_sequence, scripted_slip_scene

    model = SensorModel.default(width, height)
    layout = MarkerLayout()
    reference = render_reference(model, layout, seed)

    def lift(obj: SimulatedObject, threshold: float, attempt: int):
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), 2, int(attempt)]))
        kind = "stick" if obj.holds(threshold) else "slip-translation"
        scene, _ = scripted_slip_scene(kind, model, rng, n_frames=n_frames)
        frames, _ = render_sequence(model, scene, layout, seed=seed + attempt)
        return run_detector(reference, frames, config)

    return lift
