"""Synthetic camera-based elastomer tactile sensor.

Renders tactile frames of a Lambertian membrane lit by three colored
directional lights, with dark marker dots and optional Gaussian noise, and
returns the exact ground truth (height map, gradients, contact mask, marker
positions) for every frame. This stands in for the physical sensor in tests.

Geometry conventions: x is the image column, y the image row, z points from
the membrane toward the camera. Heights are object heights pressed into the
membrane, so a sphere press produces a positive cap.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from .errors import SceneError
from .imgcore import DEFAULT_HEIGHT, DEFAULT_PIXEL_SCALE, DEFAULT_WIDTH, Frame

# Complement of the 71 degree LED mount tilt.
DEFAULT_LIGHT_ELEVATION_DEG = 19.0
DEFAULT_LIGHT_INTENSITY = 0.9
CALIBRATION_BALL_DIAMETER_MM = 3.96


@dataclass(frozen=True)
class Light:
    color: Tuple[float, float, float]
    direction: Tuple[float, float, float]  # unit propagation direction, z < 0

    def toward(self) -> np.ndarray:
        return -np.asarray(self.direction, dtype=np.float64)


def default_lights(elevation_deg=DEFAULT_LIGHT_ELEVATION_DEG, intensity=DEFAULT_LIGHT_INTENSITY,
                   azimuths_deg=(0.0, 120.0, 240.0)):
    el = math.radians(elevation_deg)
    lights = []
    for i, az_deg in enumerate(azimuths_deg):
        az = math.radians(az_deg)
        toward = (math.cos(el) * math.cos(az), math.cos(el) * math.sin(az), math.sin(el))
        color = [0.0, 0.0, 0.0]
        color[i] = intensity
        lights.append(Light(tuple(color), tuple(-c for c in toward)))
    return tuple(lights)


@dataclass(frozen=True)
class SensorModel:
    width: int = DEFAULT_WIDTH
    height: int = DEFAULT_HEIGHT
    pixel_scale: float = DEFAULT_PIXEL_SCALE
    lights: Tuple[Light, ...] = field(default_factory=default_lights)
    ambient: float = 0.1
    base_albedo: float = 0.9
    noise_sigma: float = 0.0
    # Illumination gain at the left image edge, ramping linearly to 1 at mid-width.
    falloff: float = 1.0

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise SceneError("sensor dimensions must be positive")
        if not self.pixel_scale > 0:
            raise SceneError("pixel_scale must be positive")
        if len(self.lights) != 3:
            raise SceneError(f"exactly 3 lights required, got {len(self.lights)}")
        for light in self.lights:
            d = np.asarray(light.direction, dtype=np.float64)
            if abs(np.linalg.norm(d) - 1.0) > 1e-9 or d[2] >= 0:
                raise SceneError("light directions must be unit vectors pointing toward the membrane (z < 0)")
        if self.ambient < 0:
            raise SceneError("ambient must be >= 0")
        if not 0 < self.base_albedo <= 1:
            raise SceneError("base_albedo must lie in (0, 1]")
        if not 0 <= self.noise_sigma <= 0.1:
            raise SceneError("noise_sigma must lie in [0, 0.1]")
        if not 0 < self.falloff <= 1:
            raise SceneError("falloff must lie in (0, 1]")

    @classmethod
    def default(cls, width=DEFAULT_WIDTH, height=DEFAULT_HEIGHT, *,
                elevation_deg=DEFAULT_LIGHT_ELEVATION_DEG, intensity=DEFAULT_LIGHT_INTENSITY, **kwargs):
        return cls(width=width, height=height,
                   lights=default_lights(elevation_deg, intensity), **kwargs)

    def illumination_gain(self) -> np.ndarray:
        x = np.arange(self.width, dtype=np.float64)
        ramp = np.clip(x / (self.width / 2.0), 0.0, 1.0)
        return self.falloff + (1.0 - self.falloff) * ramp

    def flat_color(self) -> np.ndarray:
        """Color of an undeformed, marker-free membrane pixel at full illumination."""
        n0 = np.array([0.0, 0.0, 1.0])
        rgb = np.full(3, self.ambient)
        for light in self.lights:
            rgb += np.asarray(light.color) * self.base_albedo * max(0.0, float(n0 @ light.toward()))
        return np.clip(rgb, 0.0, 1.0)


# --------------------------------------------------------------------------- indenters

@dataclass(frozen=True)
class Sphere:
    radius_mm: float

    @property
    def top(self) -> float:
        return self.radius_mm

    def surface(self, u, v):
        r2 = self.radius_mm ** 2 - (u * u + v * v)
        return np.where(r2 >= 0, np.sqrt(np.maximum(r2, 0.0)), -np.inf)


@dataclass(frozen=True)
class TexturedDome:
    """Large sphere with a superposed band-limited surface texture.

    The texture is a sum of plane waves, so it can be evaluated exactly at any
    rotated or translated position.
    """

    radius_mm: float = 8.0
    slope_rms: float = 0.12
    wavelength_mm: Tuple[float, float] = (0.25, 0.7)
    n_waves: int = 24
    seed: int = 0

    def _waves(self):
        rng = np.random.default_rng(self.seed)
        lam = rng.uniform(*self.wavelength_mm, size=self.n_waves)
        k = 2 * np.pi / lam
        ang = rng.uniform(0, 2 * np.pi, size=self.n_waves)
        phase = rng.uniform(0, 2 * np.pi, size=self.n_waves)
        amp = self.slope_rms * math.sqrt(2.0) / (k * math.sqrt(self.n_waves))
        return amp, k * np.cos(ang), k * np.sin(ang), phase

    @property
    def top(self) -> float:
        return self.radius_mm

    def surface(self, u, v):
        amp, kx, ky, phase = self._waves()
        r2 = self.radius_mm ** 2 - (u * u + v * v)
        h = np.where(r2 >= 0, np.sqrt(np.maximum(r2, 0.0)), -np.inf)
        if self.slope_rms > 0:
            tex = np.zeros(np.broadcast(u, v).shape)
            for a, wx, wy, ph in zip(amp, kx, ky, phase):
                tex += a * np.cos(wx * u + wy * v + ph)
            h = h + tex
        return h


@dataclass(frozen=True)
class HeightField:
    """Arbitrary indenter surface sampled on a grid (mm values, centered on the object origin)."""

    heights_mm: np.ndarray
    grid_scale_mm: float = DEFAULT_PIXEL_SCALE

    @property
    def top(self) -> float:
        return float(np.nanmax(self.heights_mm))

    def surface(self, u, v):
        from scipy import ndimage

        h = np.asarray(self.heights_mm, dtype=np.float64)
        rows = v / self.grid_scale_mm + (h.shape[0] - 1) / 2.0
        cols = u / self.grid_scale_mm + (h.shape[1] - 1) / 2.0
        out = ndimage.map_coordinates(h, [rows.ravel(), cols.ravel()], order=3,
                                      mode="constant", cval=-np.inf).reshape(np.shape(u))
        inside = (rows >= 0) & (rows <= h.shape[0] - 1) & (cols >= 0) & (cols <= h.shape[1] - 1)
        return np.where(inside, out, -np.inf)


Indenter = Union[Sphere, TexturedDome, HeightField]


# --------------------------------------------------------------------------- scenes

@dataclass(frozen=True)
class Pose:
    """Cumulative in-plane placement of the indenter at one frame.

    Points move as ``q = R(rotation) (p - pivot) + pivot + translation``.
    ``pivot`` is in pixels; ``None`` means the scene center.
    """

    translation_mm: Tuple[float, float] = (0.0, 0.0)
    rotation_deg: float = 0.0
    pivot: Optional[Tuple[float, float]] = None
    depth_mm: Optional[float] = None

    @classmethod
    def from_pixels(cls, tx=0.0, ty=0.0, rotation_deg=0.0, pivot=None, pixel_scale=DEFAULT_PIXEL_SCALE,
                    depth_mm=None):
        return cls((tx * pixel_scale, ty * pixel_scale), rotation_deg, pivot, depth_mm)


@dataclass(frozen=True)
class Stick:
    """Markers inside the contact move rigidly with the indenter."""


@dataclass(frozen=True)
class PeripheralSlip:
    """Marker motion attenuated with radius; knots are (radius / contact radius, factor).

    The default keeps a sticking core out to half the contact radius and lets
    the rim follow the indenter at half speed.
    """

    knots: Tuple[Tuple[float, float], ...] = ((0.0, 1.0), (0.5, 1.0), (0.7, 0.5), (1.0, 0.5))

    def __post_init__(self):
        r = [k[0] for k in self.knots]
        f = [k[1] for k in self.knots]
        if len(self.knots) < 1 or any(b <= a for a, b in zip(r, r[1:])):
            raise SceneError("attenuation knots need strictly increasing radii")
        if any(not 0 <= x <= 1 for x in f) or any(b > a for a, b in zip(f, f[1:])):
            raise SceneError("attenuation factors must lie in [0, 1] and be non-increasing")

    def factor(self, rho):
        r = [k[0] for k in self.knots]
        f = [k[1] for k in self.knots]
        return np.interp(rho, r, f)


@dataclass(frozen=True)
class FullSlip:
    """Markers stay put while the indenter texture moves."""


SlipProfile = Union[Stick, PeripheralSlip, FullSlip]


@dataclass(frozen=True)
class IndenterScene:
    indenter: Indenter
    press_depth_mm: float
    center: Tuple[float, float]
    motion: Tuple[Pose, ...] = (Pose(),)
    slip_profile: SlipProfile = Stick()

    def __post_init__(self):
        object.__setattr__(self, "motion", tuple(self.motion))
        if self.press_depth_mm < 0:
            raise SceneError("press depth must be >= 0")
        if isinstance(self.indenter, (Sphere, TexturedDome)):
            depths = [self.press_depth_mm] + [p.depth_mm for p in self.motion if p.depth_mm is not None]
            if max(depths) >= self.indenter.radius_mm:
                raise SceneError("press depth must be smaller than the sphere radius")
        if not self.motion:
            raise SceneError("motion script must contain at least one pose")

    def pose(self, frame_index: int) -> Pose:
        if not 0 <= frame_index < len(self.motion):
            raise SceneError(f"frame {frame_index} outside motion script of length {len(self.motion)}")
        return self.motion[frame_index]


@dataclass(frozen=True)
class MarkerLayout:
    spacing: float = 25.0
    radius: float = 3.0
    darkness: float = 0.15  # multiplicative albedo factor inside a dot
    jitter: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not self.spacing > 2 * self.radius:
            raise SceneError("marker spacing must exceed twice the dot radius")
        if not 0 <= self.darkness < 1:
            raise SceneError("marker darkness must lie in [0, 1)")
        if self.jitter < 0 or 2 * self.jitter >= self.spacing - 2 * self.radius:
            raise SceneError("marker jitter too large for the spacing")

    def rest_positions(self, width: int, height: int) -> np.ndarray:
        nx = int(width // self.spacing)
        ny = int(height // self.spacing)
        xs = (width - (nx - 1) * self.spacing) / 2.0 + self.spacing * np.arange(nx)
        ys = (height - (ny - 1) * self.spacing) / 2.0 + self.spacing * np.arange(ny)
        gx, gy = np.meshgrid(xs, ys)
        pos = np.stack([gx.ravel(), gy.ravel()], axis=1) - 0.5  # pixel centers sit at integers
        if self.jitter > 0:
            rng = np.random.default_rng(self.seed)
            pos = pos + rng.uniform(-self.jitter, self.jitter, size=pos.shape)
        return pos


# --------------------------------------------------------------------------- truth containers

@dataclass(frozen=True)
class TruthSlice:
    height_map: np.ndarray       # mm
    gradient: np.ndarray         # (H, W, 2) dimensionless (dz/dx, dz/dy)
    contact_mask: np.ndarray
    markers: np.ndarray          # (N, 2) sub-pixel (x, y); empty without a layout
    pose: Pose
    contact_center: Tuple[float, float]
    contact_radius_px: float

    def pitch_deg(self) -> np.ndarray:
        return np.degrees(np.arctan(np.hypot(self.gradient[..., 0], self.gradient[..., 1])))


@dataclass(frozen=True)
class GroundTruth:
    slices: Tuple[TruthSlice, ...]
    marker_tracks: np.ndarray    # (frames, N, 2)

    @property
    def transforms(self):
        return [s.pose for s in self.slices]


# --------------------------------------------------------------------------- rendering

def _rotation(deg):
    t = math.radians(deg)
    c, s = math.cos(t), math.sin(t)
    return np.array([[c, -s], [s, c]])


def _apply_pose(points: np.ndarray, pose: Pose, scene_center, pixel_scale) -> np.ndarray:
    pivot = np.asarray(pose.pivot if pose.pivot is not None else scene_center, dtype=np.float64)
    t = np.asarray(pose.translation_mm, dtype=np.float64) / pixel_scale
    return (points - pivot) @ _rotation(pose.rotation_deg).T + pivot + t


def membrane_height(model: SensorModel, scene: IndenterScene, pose: Pose) -> np.ndarray:
    """Indentation height (mm) of the membrane for one pose."""
    depth = scene.press_depth_mm if pose.depth_mm is None else pose.depth_mm
    if depth <= 0:
        return np.zeros((model.height, model.width))
    ys, xs = np.mgrid[0:model.height, 0:model.width].astype(np.float64)
    q = np.stack([xs.ravel(), ys.ravel()], axis=1)
    # invert the pose to find where each sensor pixel sits on the object
    pivot = np.asarray(pose.pivot if pose.pivot is not None else scene.center, dtype=np.float64)
    t = np.asarray(pose.translation_mm, dtype=np.float64) / model.pixel_scale
    p = (q - pivot - t) @ _rotation(pose.rotation_deg) + pivot
    u = (p[:, 0] - scene.center[0]) * model.pixel_scale
    v = (p[:, 1] - scene.center[1]) * model.pixel_scale
    h = scene.indenter.surface(u, v).reshape(model.height, model.width)
    with np.errstate(invalid="ignore"):
        z = np.maximum(h - (scene.indenter.top - depth), 0.0)
    z[~np.isfinite(z)] = 0.0
    if np.any(z[0] > 0) or np.any(z[-1] > 0) or np.any(z[:, 0] > 0) or np.any(z[:, -1] > 0):
        raise SceneError("indenter contact leaves the image bounds")
    return z


def height_gradient(z_mm: np.ndarray, pixel_scale: float) -> np.ndarray:
    gy, gx = np.gradient(z_mm)
    return np.stack([gx, gy], axis=2) / pixel_scale


def shade(model: SensorModel, gradient: np.ndarray, albedo: np.ndarray) -> np.ndarray:
    """Lambertian color for a gradient field and per-pixel albedo (no noise)."""
    gx, gy = gradient[..., 0], gradient[..., 1]
    norm = np.sqrt(gx * gx + gy * gy + 1.0)
    n = np.stack([-gx / norm, -gy / norm, 1.0 / norm], axis=2)
    gain = model.illumination_gain()[None, :]
    rgb = np.full(gradient.shape[:2] + (3,), model.ambient)
    for light in model.lights:
        lam = np.maximum(n @ light.toward(), 0.0) * albedo * gain
        rgb += lam[..., None] * np.asarray(light.color)[None, None, :]
    return np.clip(rgb, 0.0, 1.0)


def marker_coverage(shape, positions: np.ndarray, radius: float) -> np.ndarray:
    """Anti-aliased dot coverage in [0, 1] (linear ramp one pixel wide)."""
    h, w = shape
    cov = np.zeros((h, w))
    reach = int(math.ceil(radius + 1))
    for x, y in positions:
        cx, cy = int(round(x)), int(round(y))
        x0, x1 = max(cx - reach, 0), min(cx + reach + 1, w)
        y0, y1 = max(cy - reach, 0), min(cy + reach + 1, h)
        if x0 >= x1 or y0 >= y1:
            continue
        yy, xx = np.mgrid[y0:y1, x0:x1]
        d = np.hypot(xx - x, yy - y)
        np.maximum(cov[y0:y1, x0:x1], np.clip(radius + 0.5 - d, 0.0, 1.0), out=cov[y0:y1, x0:x1])
    return cov


def draw_frame(model: SensorModel, gradient: np.ndarray, marker_positions, layout: Optional[MarkerLayout],
               rng: Optional[np.random.Generator] = None) -> Frame:
    albedo = np.full((model.height, model.width), model.base_albedo)
    if layout is not None and marker_positions is not None and len(marker_positions):
        cov = marker_coverage((model.height, model.width), marker_positions, layout.radius)
        albedo = albedo * (1.0 - (1.0 - layout.darkness) * cov)
    rgb = shade(model, gradient, albedo)
    if model.noise_sigma > 0:
        if rng is None:
            raise SceneError("a random generator is required when noise_sigma > 0")
        rgb = np.clip(rgb + rng.normal(0.0, model.noise_sigma, size=rgb.shape), 0.0, 1.0)
    return Frame(rgb, model.pixel_scale)


def _frame_rng(seed, frame_index):
    return np.random.default_rng(np.random.SeedSequence([int(seed), 1, int(frame_index)]))


def render_reference(model: SensorModel, layout: Optional[MarkerLayout] = None, seed: int = 0) -> Frame:
    """No-contact frame: flat membrane with markers at rest."""
    grad = np.zeros((model.height, model.width, 2))
    pos = layout.rest_positions(model.width, model.height) if layout is not None else None
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0]))
    return draw_frame(model, grad, pos, layout, rng)


def _contact_geometry(mask: np.ndarray):
    area = int(mask.sum())
    if area == 0:
        return (float("nan"), float("nan")), 0.0
    ys, xs = np.nonzero(mask)
    return (float(xs.mean()), float(ys.mean())), math.sqrt(area / math.pi)


def marker_motion_factor(profile: SlipProfile, rho_fraction: np.ndarray) -> np.ndarray:
    """Fraction of the indenter displacement followed by a marker at relative radius rho.

    Outside the contact the factor keeps decaying as a Gaussian of width one
    contact radius, which keeps the marker field continuous across the rim.
    """
    rho = np.asarray(rho_fraction, dtype=np.float64)
    if isinstance(profile, FullSlip):
        return np.zeros_like(rho)
    if isinstance(profile, PeripheralSlip):
        inside = profile.factor(np.minimum(rho, 1.0))
    else:
        inside = np.ones_like(rho)
    outside = np.exp(-np.square(np.maximum(rho - 1.0, 0.0)))
    return inside * outside


class _SceneRenderer:
    def __init__(self, model, scene, layout):
        self.model, self.scene, self.layout = model, scene, layout
        z0 = membrane_height(model, scene, scene.motion[0])
        self.center0, self.radius0 = _contact_geometry(z0 > 0)
        self.rest = layout.rest_positions(model.width, model.height) if layout is not None else np.zeros((0, 2))
        if len(self.rest) and self.radius0 > 0:
            rho = np.hypot(*(self.rest - np.asarray(self.center0)).T) / self.radius0
            self.factors = marker_motion_factor(scene.slip_profile, rho)
        else:
            self.factors = np.zeros(len(self.rest))

    def markers(self, pose):
        if not len(self.rest):
            return self.rest
        moved = _apply_pose(self.rest, pose, self.scene.center, self.model.pixel_scale)
        return self.rest + self.factors[:, None] * (moved - self.rest)

    def render(self, frame_index, seed):
        pose = self.scene.pose(frame_index)
        z = membrane_height(self.model, self.scene, pose)
        grad = height_gradient(z, self.model.pixel_scale)
        mask = z > 0
        markers = self.markers(pose)
        frame = draw_frame(self.model, grad, markers, self.layout, _frame_rng(seed, frame_index))
        center, radius = _contact_geometry(mask)
        for arr in (z, grad, mask, markers):
            arr.setflags(write=False)
        return frame, TruthSlice(z, grad, mask, markers, pose, center, radius)


def render_press(model: SensorModel, scene: IndenterScene, layout: Optional[MarkerLayout] = None,
                 frame_index: int = 0, seed: int = 0):
    """Render one frame of a scene; returns (Frame, TruthSlice)."""
    return _SceneRenderer(model, scene, layout).render(frame_index, seed)


def render_sequence(model: SensorModel, scene: IndenterScene, layout: Optional[MarkerLayout] = None,
                    seed: int = 0):
    """Render every pose of the motion script; returns (frames, GroundTruth)."""
    r = _SceneRenderer(model, scene, layout)
    frames, slices = [], []
    for i in range(len(scene.motion)):
        f, s = r.render(i, seed)
        frames.append(f)
        slices.append(s)
    tracks = np.stack([s.markers for s in slices]) if len(r.rest) else np.zeros((len(slices), 0, 2))
    return frames, GroundTruth(tuple(slices), tracks)


# --------------------------------------------------------------------------- scene helpers

def sphere_press(center, depth_mm=0.5, diameter_mm=CALIBRATION_BALL_DIAMETER_MM) -> IndenterScene:
    return IndenterScene(Sphere(diameter_mm / 2.0), depth_mm, tuple(map(float, center)))


def cap_contact_radius_mm(radius_mm, depth_mm):
    return math.sqrt(radius_mm ** 2 - (radius_mm - depth_mm) ** 2)


def random_press_centers(model: SensorModel, n: int, depth_mm=0.5, diameter_mm=CALIBRATION_BALL_DIAMETER_MM,
                         seed=0, margin_px=4.0, region=None):
    """Sub-pixel press centers whose contact disks stay inside the image (or ``region`` x-range)."""
    rc = cap_contact_radius_mm(diameter_mm / 2.0, depth_mm) / model.pixel_scale + margin_px
    lo_x, hi_x = (rc, model.width - 1 - rc) if region is None else (max(region[0], rc), min(region[1], model.width - 1 - rc))
    if lo_x >= hi_x or rc >= model.height - 1 - rc:
        raise SceneError("press does not fit in the sensor")
    rng = np.random.default_rng(seed)
    xs = rng.uniform(lo_x, hi_x, n)
    ys = rng.uniform(rc, model.height - 1 - rc, n)
    return [(float(x), float(y)) for x, y in zip(xs, ys)]


def ramp_motion(n_frames, onset, velocity_px=(0.0, 0.0), omega_deg=0.0, pivot=None,
                pixel_scale=DEFAULT_PIXEL_SCALE, depths_mm: Optional[Sequence[float]] = None):
    """Poses at rest until ``onset``, then moving at constant per-frame velocity."""
    poses = []
    for i in range(n_frames):
        k = max(0, i - onset + 1) if onset is not None else 0
        poses.append(Pose.from_pixels(velocity_px[0] * k, velocity_px[1] * k, omega_deg * k, pivot, pixel_scale,
                                      None if depths_mm is None else depths_mm[i]))
    return tuple(poses)


SLIP_KINDS = ("stick", "slip-translation", "slip-rotation", "peripheral-slip")


def scripted_slip_scene(kind: str, model: SensorModel, rng: np.random.Generator, n_frames: int = 10,
                        onset: int = 3, depth_mm: float = 0.3):
    """Scene for one labeled slip scenario. Returns (scene, onset or None).

    Stick scenes shear the membrane slowly from the first frame; slip scenes
    are static until ``onset`` and then move.
    """
    cx = model.width / 2.0 + rng.uniform(-8, 8)
    cy = model.height / 2.0 + rng.uniform(-8, 8)
    textured = TexturedDome(8.0, seed=int(rng.integers(1 << 30)))
    ang = rng.uniform(0, 2 * np.pi)
    direction = np.array([math.cos(ang), math.sin(ang)])
    if kind == "stick":
        speed = rng.uniform(0.3, 0.8)
        omega = rng.uniform(-0.3, 0.3)
        motion = ramp_motion(n_frames, 1, tuple(speed * direction), omega, None, model.pixel_scale)
        return IndenterScene(textured, depth_mm, (cx, cy), motion, Stick()), None
    if kind == "slip-translation":
        speed = rng.uniform(1.5, 2.5)
        motion = ramp_motion(n_frames, onset, tuple(speed * direction), 0.0, None, model.pixel_scale)
        return IndenterScene(textured, depth_mm, (cx, cy), motion, FullSlip()), onset
    if kind == "slip-rotation":
        omega = rng.choice([-1.0, 1.0]) * rng.uniform(2.0, 3.0)
        motion = ramp_motion(n_frames, onset, (0.0, 0.0), omega, None, model.pixel_scale)
        return IndenterScene(textured, depth_mm, (cx, cy), motion, FullSlip()), onset
    if kind == "peripheral-slip":
        speed = rng.uniform(0.8, 1.2)
        motion = ramp_motion(n_frames, onset, tuple(speed * direction), 0.0, None, model.pixel_scale)
        smooth = TexturedDome(8.0, slope_rms=0.0)
        return IndenterScene(smooth, depth_mm, (cx, cy), motion, PeripheralSlip()), onset
    raise SceneError(f"unknown slip scenario {kind!r}")


def with_falloff(model: SensorModel, falloff: float) -> SensorModel:
    return replace(model, falloff=falloff)
