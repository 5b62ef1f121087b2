"""Command-line entry point: ``tactile <command> [options]``.

Every command writes its outputs plus ``run_manifest.json`` into ``--out``.
Failures exit nonzero with one line of JSON on stderr:
``{"error": <kind>, "message": <text>}``.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import __version__
from . import calib, formats, markers, recon, slipdet, synthgel
from .errors import InvalidInputError, SchemaError, TactileError
from .imgcore import DEFAULT_PIXEL_SCALE, Frame, color_delta, dark_spot_mask, read_png, write_png

log = logging.getLogger("tactile")

MANIFEST_NAME = "run_manifest.json"
MAX_SEED = 2 ** 64 - 1


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# --------------------------------------------------------------------------- JSON schema helpers

def _expect_keys(doc, where: str, allowed: Sequence[str], required: Sequence[str] = ()):
    if not isinstance(doc, dict):
        raise SchemaError(f"{where} must be a JSON object")
    unknown = sorted(set(doc) - set(allowed))
    if unknown:
        raise SchemaError(f"{where}: unknown keys {unknown}")
    missing = [k for k in required if k not in doc]
    if missing:
        raise SchemaError(f"{where}: missing keys {missing}")


def _num(doc, key, where, default=None, integer=False):
    v = doc.get(key, default)
    if v is None:
        return None
    if isinstance(v, bool) or not isinstance(v, (int, float)) or (integer and not isinstance(v, int)):
        raise SchemaError(f"{where}.{key} must be {'an integer' if integer else 'a number'}")
    return v


def _pair(doc, key, where, default=None):
    v = doc.get(key, default)
    if v is None:
        return None
    if (not isinstance(v, (list, tuple)) or len(v) != 2
            or any(isinstance(x, bool) or not isinstance(x, (int, float)) for x in v)):
        raise SchemaError(f"{where}.{key} must be a list of two numbers")
    return (float(v[0]), float(v[1]))


def _load_json(path: Path, what: str):
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{what} {path} is not valid JSON: {exc}") from None


# --------------------------------------------------------------------------- scene documents

def sensor_from_dict(doc: dict, pixel_scale: Optional[float]) -> synthgel.SensorModel:
    where = "sensor"
    _expect_keys(doc, where, ["width", "height", "pixel_scale", "noise_sigma", "falloff", "light_elevation_deg",
                              "light_intensity", "ambient", "albedo"])
    scale = pixel_scale if pixel_scale is not None else _num(doc, "pixel_scale", where, DEFAULT_PIXEL_SCALE)
    return synthgel.SensorModel.default(
        _num(doc, "width", where, 640, integer=True), _num(doc, "height", where, 480, integer=True),
        elevation_deg=_num(doc, "light_elevation_deg", where, synthgel.DEFAULT_LIGHT_ELEVATION_DEG),
        intensity=_num(doc, "light_intensity", where, synthgel.DEFAULT_LIGHT_INTENSITY),
        pixel_scale=float(scale), noise_sigma=float(_num(doc, "noise_sigma", where, 0.0)),
        falloff=float(_num(doc, "falloff", where, 1.0)), ambient=float(_num(doc, "ambient", where, 0.1)),
        base_albedo=float(_num(doc, "albedo", where, 0.9)))


def layout_from_dict(doc) -> Optional[synthgel.MarkerLayout]:
    if doc is None:
        return None
    where = "markers"
    _expect_keys(doc, where, ["spacing", "radius", "darkness", "jitter", "seed"])
    return synthgel.MarkerLayout(float(_num(doc, "spacing", where, 25.0)), float(_num(doc, "radius", where, 3.0)),
                                 float(_num(doc, "darkness", where, 0.15)), float(_num(doc, "jitter", where, 0.0)),
                                 int(_num(doc, "seed", where, 0, integer=True)))


def indenter_from_dict(doc: dict, ball_diameter_mm: float):
    where = "scene.indenter"
    if not isinstance(doc, dict) or "type" not in doc:
        raise SchemaError(f"{where} needs a 'type'")
    kind = doc["type"]
    if kind == "sphere":
        _expect_keys(doc, where, ["type", "diameter_mm"])
        return synthgel.Sphere(float(_num(doc, "diameter_mm", where, ball_diameter_mm)) / 2.0)
    if kind == "textured-dome":
        _expect_keys(doc, where, ["type", "radius_mm", "slope_rms", "wavelength_mm", "n_waves", "seed"])
        return synthgel.TexturedDome(float(_num(doc, "radius_mm", where, 8.0)),
                                     float(_num(doc, "slope_rms", where, 0.12)),
                                     _pair(doc, "wavelength_mm", where, (0.25, 0.7)),
                                     int(_num(doc, "n_waves", where, 24, integer=True)),
                                     int(_num(doc, "seed", where, 0, integer=True)))
    if kind == "height-field":
        _expect_keys(doc, where, ["type", "heights_mm", "grid_scale_mm"], ["heights_mm"])
        try:
            grid = np.asarray(doc["heights_mm"], dtype=np.float64)
        except (TypeError, ValueError):
            raise SchemaError(f"{where}.heights_mm must be a rectangular list of numbers") from None
        if grid.ndim != 2 or grid.shape[0] < 2 or grid.shape[1] < 2:
            raise SchemaError(f"{where}.heights_mm must be a 2-D grid of at least 2x2")
        return synthgel.HeightField(grid, float(_num(doc, "grid_scale_mm", where, DEFAULT_PIXEL_SCALE)))
    raise SchemaError(f"{where}.type must be one of sphere, textured-dome, height-field")


def profile_from_dict(doc) -> synthgel.SlipProfile:
    where = "scene.slip_profile"
    if doc is None:
        return synthgel.Stick()
    if not isinstance(doc, dict) or "type" not in doc:
        raise SchemaError(f"{where} needs a 'type'")
    kind = doc["type"]
    if kind == "stick":
        _expect_keys(doc, where, ["type"])
        return synthgel.Stick()
    if kind == "full-slip":
        _expect_keys(doc, where, ["type"])
        return synthgel.FullSlip()
    if kind == "peripheral-slip":
        _expect_keys(doc, where, ["type", "knots"])
        if "knots" not in doc:
            return synthgel.PeripheralSlip()
        knots = doc["knots"]
        if not isinstance(knots, list) or not knots:
            raise SchemaError(f"{where}.knots must be a non-empty list of [radius_fraction, factor] pairs")
        return synthgel.PeripheralSlip(tuple(_pair({"k": k}, "k", f"{where}.knots") for k in knots))
    raise SchemaError(f"{where}.type must be one of stick, peripheral-slip, full-slip")


def scene_from_dict(doc: dict, model: synthgel.SensorModel, ball_diameter_mm: float) -> synthgel.IndenterScene:
    where = "scene"
    _expect_keys(doc, where, ["indenter", "press_depth_mm", "center", "motion", "slip_profile"],
                 ["indenter", "press_depth_mm"])
    indenter = indenter_from_dict(doc["indenter"], ball_diameter_mm)
    center = _pair(doc, "center", where, (model.width / 2.0, model.height / 2.0))
    motion_doc = doc.get("motion", [{}])
    if not isinstance(motion_doc, list) or not motion_doc:
        raise SchemaError(f"{where}.motion must be a non-empty list")
    poses = []
    for i, p in enumerate(motion_doc):
        w = f"{where}.motion[{i}]"
        _expect_keys(p, w, ["translation_px", "rotation_deg", "pivot", "depth_mm"])
        t = _pair(p, "translation_px", w, (0.0, 0.0))
        poses.append(synthgel.Pose.from_pixels(t[0], t[1], float(_num(p, "rotation_deg", w, 0.0)),
                                               _pair(p, "pivot", w), model.pixel_scale,
                                               _num(p, "depth_mm", w)))
    return synthgel.IndenterScene(indenter, float(_num(doc, "press_depth_mm", where)), center, tuple(poses),
                                  profile_from_dict(doc.get("slip_profile")))


def _derived_seed(seed: int, *path: int) -> int:
    return int(np.random.SeedSequence([seed, *path]).generate_state(1)[0])


def _round(x, n=6):
    return None if x is None or not np.isfinite(x) else round(float(x), n)


def _pose_record(pose: synthgel.Pose, pixel_scale: float) -> dict:
    return {"translation_px": [_round(pose.translation_mm[0] / pixel_scale), _round(pose.translation_mm[1] / pixel_scale)],
            "rotation_deg": _round(pose.rotation_deg),
            "pivot": None if pose.pivot is None else [_round(pose.pivot[0]), _round(pose.pivot[1])],
            "depth_mm": _round(pose.depth_mm) if pose.depth_mm is not None else None}


def _truth_record(index: int, t: synthgel.TruthSlice, pixel_scale: float) -> dict:
    return {"index": index, "contact_center": [_round(t.contact_center[0]), _round(t.contact_center[1])],
            "contact_radius_px": _round(t.contact_radius_px), "pose": _pose_record(t.pose, pixel_scale),
            "markers": [[_round(x, 4), _round(y, 4)] for x, y in t.markers]}


# --------------------------------------------------------------------------- dataset layout

def frame_name(i: int) -> str:
    return f"frame_{i:04d}"


def _frame_files(directory: Path) -> List[Path]:
    if not directory.is_dir():
        raise FileNotFoundError(f"frame directory not found: {directory}")
    return sorted(p for p in directory.iterdir() if p.suffix.lower() == ".png")


def _resolve(args, need_reference=True):
    """(frame paths, reference path or None, dataset dir or None) from --data or --frames/--reference."""
    data = Path(args.data) if getattr(args, "data", None) else None
    frames_dir = Path(args.frames) if getattr(args, "frames", None) else (data / "frames" if data else None)
    ref = Path(args.reference) if getattr(args, "reference", None) else (data / "reference.png" if data else None)
    if frames_dir is None:
        raise UsageError("give --data or --frames")
    if need_reference and ref is None:
        raise UsageError("give --data or --reference")
    if ref is not None and not ref.is_file():
        raise FileNotFoundError(f"reference frame not found: {ref}")
    return _frame_files(frames_dir), ref, data


def _pixel_scale(args, data: Optional[Path]) -> float:
    if args.pixel_scale is not None:
        return args.pixel_scale
    if data is not None and (data / "truth.json").is_file():
        doc = _load_json(data / "truth.json", "truth file")
        if isinstance(doc, dict) and isinstance(doc.get("pixel_scale"), (int, float)):
            return float(doc["pixel_scale"])
    return DEFAULT_PIXEL_SCALE


class Run:
    """Collects inputs and outputs of one command and writes the manifest."""

    def __init__(self, command: str, out: Path, seed: Optional[int], config: Optional[str]):
        self.command, self.out, self.seed, self.config = command, out, seed, config
        self.inputs: List[Path] = []
        self.outputs: List[Path] = []
        self.parameters: Dict[str, object] = {}
        out.mkdir(parents=True, exist_ok=True)

    def input(self, path) -> Path:
        self.inputs.append(Path(path))
        return Path(path)

    def path(self, rel: str) -> Path:
        p = self.out / rel
        p.parent.mkdir(parents=True, exist_ok=True)
        self.outputs.append(p)
        return p

    def finish(self) -> None:
        manifest = {
            "command": self.command,
            "tool_version": __version__,
            "seed": self.seed,
            "config": self.config,
            "config_sha256": formats.sha256_file(self.config) if self.config else None,
            "parameters": self.parameters,
            "inputs": [{"path": str(p), "sha256": formats.sha256_file(p)} for p in self.inputs],
            "outputs": [{"path": p.relative_to(self.out).as_posix(), "sha256": formats.sha256_file(p)}
                        for p in sorted(set(self.outputs))],
        }
        formats.write_json(manifest, self.out / MANIFEST_NAME)


def _read_frames(paths: Sequence[Path], pixel_scale: float, run: Run) -> List[Frame]:
    return [read_png(run.input(p), pixel_scale) for p in paths]


# --------------------------------------------------------------------------- commands

def cmd_synth(args) -> int:
    doc = _load_json(Path(args.scene), "scene file")
    _expect_keys(doc, "scene file", ["sensor", "markers", "scene", "presses", "scenario"])
    modes = [k for k in ("scene", "presses", "scenario") if k in doc]
    if len(modes) != 1:
        raise SchemaError("scene file needs exactly one of 'scene', 'presses' or 'scenario'")
    model = sensor_from_dict(doc.get("sensor", {}), args.pixel_scale)
    layout = layout_from_dict(doc.get("markers", {}))
    run = Run("synth", Path(args.out), args.seed, None)
    run.input(args.scene)
    seed = args.seed
    truth = {"pixel_scale": model.pixel_scale, "width": model.width, "height": model.height, "mode": modes[0]}

    reference = synthgel.render_reference(model, layout, _derived_seed(seed, 0))
    write_png(reference, run.path("reference.png"))
    (run.out / "frames").mkdir(exist_ok=True)
    records = []
    if modes[0] == "presses":
        p = doc["presses"]
        _expect_keys(p, "presses", ["count", "depth_mm", "diameter_mm", "margin_px"], ["count"])
        count = _num(p, "count", "presses", integer=True)
        if count < 0:
            raise SchemaError("presses.count must be >= 0")
        depth = float(_num(p, "depth_mm", "presses", 0.5))
        diameter = float(_num(p, "diameter_mm", "presses", args.ball_diameter_mm))
        centers = synthgel.random_press_centers(model, count, depth, diameter, _derived_seed(seed, 1),
                                                float(_num(p, "margin_px", "presses", 4.0)))
        truth.update({"ball_diameter_mm": diameter, "depth_mm": depth})
        for i, c in enumerate(centers):
            frame, t = synthgel.render_press(model, synthgel.sphere_press(c, depth, diameter), layout, 0,
                                             _derived_seed(seed, 2, i))
            write_png(frame, run.path(f"frames/{frame_name(i)}.png"))
            formats.write_height_map(recon.HeightMap(t.height_map, model.pixel_scale, t.contact_mask),
                                     run.path(f"truth/{frame_name(i)}.thm"))
            records.append(_truth_record(i, t, model.pixel_scale))
    else:
        if modes[0] == "scenario":
            s = doc["scenario"]
            _expect_keys(s, "scenario", ["kind", "n_frames", "onset", "depth_mm"], ["kind"])
            kind = s["kind"]
            if kind not in synthgel.SLIP_KINDS:
                raise SchemaError(f"scenario.kind must be one of {list(synthgel.SLIP_KINDS)}")
            rng = np.random.default_rng(_derived_seed(seed, 3))
            scene, onset = synthgel.scripted_slip_scene(kind, model, rng, int(_num(s, "n_frames", "scenario", 10, True)),
                                                        int(_num(s, "onset", "scenario", 3, True)),
                                                        float(_num(s, "depth_mm", "scenario", 0.3)))
            truth.update({"scenario": kind, "slip_onset": onset})
        else:
            scene = scene_from_dict(doc["scene"], model, args.ball_diameter_mm)
        frames, gt = synthgel.render_sequence(model, scene, layout, _derived_seed(seed, 4))
        for i, (frame, t) in enumerate(zip(frames, gt.slices)):
            write_png(frame, run.path(f"frames/{frame_name(i)}.png"))
            formats.write_height_map(recon.HeightMap(t.height_map, model.pixel_scale, t.contact_mask),
                                     run.path(f"truth/{frame_name(i)}.thm"))
            records.append(_truth_record(i, t, model.pixel_scale))
    truth["frames"] = records
    formats.write_json(truth, run.path("truth.json"))
    run.parameters = {"mode": modes[0], "n_frames": len(records)}
    run.finish()
    print(f"synth: wrote {len(records)} frames to {args.out}")
    return 0


def cmd_calibrate(args) -> int:
    paths, ref_path, data = _resolve(args)
    scale = _pixel_scale(args, data)
    run = Run("calibrate", Path(args.out), None, None)
    reference = read_png(run.input(ref_path), scale)
    frames = _read_frames(paths, scale, run)
    radius = args.ball_diameter_mm / 2.0
    table = calib.build_lookup(((f, reference, radius) for f in frames), args.bins)
    formats.write_lookup(table, run.path("lookup.tlut"))
    run.path("lookup.json").write_text(formats.lookup_json(table))
    run.parameters = {"ball_diameter_mm": args.ball_diameter_mm, "pixel_scale": scale, "bins_per_channel": args.bins,
                      "n_presses": len(frames), "n_cells": len(table)}
    run.finish()
    print(f"calibrate: {len(table)} cells from {len(frames)} presses")
    return 0


def _truth_for(frame: Frame, reference: Frame, path: Path, data: Optional[Path], radius_mm: float):
    """Rendered ground truth when the dataset ships it, else the fitted sphere cap."""
    if data is not None:
        thm = data / "truth" / (path.stem + ".thm")
        if thm.is_file():
            hm = formats.read_height_map(thm)
            if hm.z.shape == frame.shape:
                grad = synthgel.height_gradient(hm.z, frame.pixel_scale)
                return calib.SphereTruth(grad, hm.z, *calib.gradient_to_angles(grad), hm.z > 0), thm
    return calib.sphere_truth_for_press(frame, reference, radius_mm), None


def cmd_evaluate(args) -> int:
    paths, ref_path, data = _resolve(args)
    scale = _pixel_scale(args, data)
    run = Run("evaluate", Path(args.out), None, None)
    table = formats.read_lookup(run.input(args.lookup))
    reference = read_png(run.input(ref_path), scale)
    presses, sources = [], []
    for p in paths:
        frame = read_png(run.input(p), scale)
        truth, thm = _truth_for(frame, reference, p, data, args.ball_diameter_mm / 2.0)
        if thm is not None:
            run.input(thm)
        sources.append("rendered" if thm is not None else "sphere-fit")
        presses.append((frame, reference, truth))
    if not presses:
        raise InvalidInputError("no presses")
    report = calib.evaluate_presses(table, presses)
    formats.write_csv(["press", "x", "y", "r2_pitch", "r2_yaw", "n_pixels", "truth"],
                      [[p.stem, e.position[0], e.position[1], e.r2_pitch, e.r2_yaw, e.n_pixels, src]
                       for p, e, src in zip(paths, report.entries, sources)], run.path("per_press.csv"))
    c = report.curve
    formats.write_csv(["pitch_deg", "mean_color_change", "n_pixels"],
                      [[float(a), float(b), int(n)] for a, b, n in zip(c.pitch_deg, c.mean_change, c.counts)],
                      run.path("color_curve.csv"))
    edges = calib.DEFAULT_R2_EDGES
    hp = calib.r2_histogram([e.r2_pitch for e in report.entries], edges)
    hy = calib.r2_histogram([e.r2_yaw for e in report.entries], edges)
    formats.write_csv(["bin_low", "bin_high", "pitch_count", "yaw_count"],
                      [[float(edges[i]), float(edges[i + 1]), int(hp[i]), int(hy[i])] for i in range(len(hp))],
                      run.path("r2_histogram.csv"))
    r2p = [e.r2_pitch for e in report.entries]
    r2y = [e.r2_yaw for e in report.entries]
    summary = {"n_presses": len(presses), "pooled_r2_pitch": _round(report.r2_pitch),
               "pooled_r2_yaw": _round(report.r2_yaw), "min_r2_pitch": _round(float(np.nanmin(r2p))),
               "min_r2_yaw": _round(float(np.nanmin(r2y))), "color_curve_increasing_until_deg": c.monotone_until_deg}
    formats.write_json(summary, run.path("summary.json"))
    run.parameters = {"ball_diameter_mm": args.ball_diameter_mm, "pixel_scale": scale}
    run.finish()
    print(f"evaluate: min r2_pitch {summary['min_r2_pitch']}, min r2_yaw {summary['min_r2_yaw']}")
    return 0


def cmd_reconstruct(args) -> int:
    scale = args.pixel_scale if args.pixel_scale is not None else DEFAULT_PIXEL_SCALE
    run = Run("reconstruct", Path(args.out), None, None)
    table = formats.read_lookup(run.input(args.lookup))
    frame = read_png(run.input(args.frame), scale)
    reference = read_png(run.input(args.reference), scale)
    hm = recon.reconstruct(frame, reference, table)
    formats.write_height_map(hm, run.path("height.thm"))
    formats.write_height_preview(hm, run.path("height_preview.png"))
    summary = {"max_height_mm": _round(float(hm.z.max())), "valid_pixels": int(hm.valid.sum()),
               "extrapolated_fraction": _round(hm.extrapolated_fraction)}
    formats.write_json(summary, run.path("summary.json"))
    run.parameters = {"pixel_scale": scale}
    run.finish()
    print(f"reconstruct: max height {summary['max_height_mm']} mm")
    return 0


def cmd_track(args) -> int:
    paths, ref_path, data = _resolve(args, need_reference=False)
    scale = _pixel_scale(args, data)
    run = Run("track", Path(args.out), None, None)
    if not paths:
        raise InvalidInputError("no frames to track")
    reference = read_png(run.input(ref_path), scale) if ref_path is not None else None
    ref_spots = dark_spot_mask(reference.pixels) if reference is not None else None
    records, matched = [], []
    origin = prev = None
    for i, p in enumerate(paths):
        frame = read_png(run.input(p), scale)
        if prev is None:
            origin = prev = markers.detect_markers(frame, i)
            field = None
        else:
            prev, field = markers.track_markers(prev, frame)
            matched.append(field.matched_fraction)
        r = None
        if reference is not None and i > 0:
            spots = dark_spot_mask(frame.pixels) | ref_spots
            sel = markers.select_peripheral(color_delta(frame, reference), prev, exclude=spots)
            r = markers.slip_ratio(markers.displacement_since(origin, prev), sel)
        records.append(markers.track_record(i, prev, field, r))
    formats.write_jsonl(records, run.path("tracks.jsonl"))
    summary = {"n_frames": len(paths), "n_markers_first_frame": len(origin),
               "min_matched_fraction": _round(min(matched)) if matched else None}
    formats.write_json(summary, run.path("summary.json"))
    run.parameters = {"pixel_scale": scale}
    run.finish()
    print(f"track: {len(paths)} frames, {len(origin)} markers")
    return 0


def _slip_config(args, run_config: Optional[str]) -> slipdet.SlipConfig:
    return slipdet.SlipConfig.load(run_config) if run_config else slipdet.SlipConfig()


def cmd_detect_slip(args) -> int:
    paths, ref_path, data = _resolve(args)
    scale = _pixel_scale(args, data)
    run = Run("detect-slip", Path(args.out), None, args.config)
    cfg = _slip_config(args, args.config)
    reference = read_png(run.input(ref_path), scale)
    state = slipdet.DetectorState.start(reference, cfg)
    verdicts = []
    for p in paths:
        state, v = slipdet.step(state, read_png(run.input(p), scale))
        verdicts.append(v)
    formats.write_jsonl([v.to_record() for v in verdicts], run.path("verdicts.jsonl"))
    first = slipdet.first_slip_frame(verdicts)
    counts = {s: sum(v.state == s for v in verdicts) for s in slipdet.STATES}
    summary = {"slip": first is not None, "first_slip_frame": first, "n_frames": len(verdicts),
               "state_counts": counts, "degraded_frames": sum(v.degraded for v in verdicts)}
    formats.write_json(summary, run.path("summary.json"))
    run.parameters = {"pixel_scale": scale, "thresholds": cfg.to_dict()}
    run.finish()
    print(f"slip: {'true' if first is not None else 'false'}")
    return 0


def cmd_grasp_sim(args) -> int:
    run = Run("grasp-sim", Path(args.out), args.seed if args.render else None, args.config)
    cfg = _slip_config(args, args.config)
    if args.object:
        doc = _load_json(run.input(args.object), "object file")
        _expect_keys(doc, "object", ["name", "required_threshold", "initial_threshold"], ["required_threshold"])
        obj = slipdet.SimulatedObject(float(_num(doc, "required_threshold", "object")),
                                      float(_num(doc, "initial_threshold", "object", 1.0)),
                                      str(doc.get("name", "object")))
    elif args.required is not None:
        obj = slipdet.SimulatedObject(args.required, args.initial)
    else:
        raise UsageError("give --object or --required")
    lift = slipdet.rendered_lift(seed=args.seed, config=cfg) if args.render else None
    glog = slipdet.grasp_policy_run(obj, cfg, lift)
    formats.write_json(glog.to_dict(), run.path("grasp_log.json"))
    run.parameters = {"render": bool(args.render), "thresholds": cfg.to_dict()}
    run.finish()
    print(f"grasp-sim: {'success' if glog.success else 'failure'} after {glog.n_attempts} attempts")
    return 0


# --------------------------------------------------------------------------- parser

def _seed(text: str) -> int:
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid seed {text!r}") from None
    if not 0 <= v <= MAX_SEED:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _positive(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid number {text!r}") from None
    if not v > 0 or not np.isfinite(v):
        raise argparse.ArgumentTypeError("value must be positive")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--out", required=True, help="output directory")
    common.add_argument("--seed", type=_seed, default=0, help="random seed (unsigned 64-bit)")
    common.add_argument("--pixel-scale", type=_positive, default=None, help="mm per pixel")
    common.add_argument("--ball-diameter-mm", type=_positive, default=synthgel.CALIBRATION_BALL_DIAMETER_MM,
                        help="calibration ball diameter")

    slip_common = _Parser(add_help=False)
    slip_common.add_argument("--config", default=None, help="threshold bundle (JSON)")

    data_args = _Parser(add_help=False)
    data_args.add_argument("--data", help="dataset directory with frames/ and reference.png (synth layout)")
    data_args.add_argument("--frames", help="directory of PNG frames (overrides --data)")
    data_args.add_argument("--reference", help="no-contact reference PNG (overrides --data)")

    parser = _Parser(prog="tactile", description="Tactile sensor image toolkit.")
    parser.add_argument("--version", action="version", version=f"tactile {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", parents=[common], help="render a synthetic scene")
    p.add_argument("--scene", required=True, help="scene JSON")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("calibrate", parents=[common, data_args], help="build a lookup table from sphere presses")
    p.add_argument("--bins", type=int, default=calib.DEFAULT_BINS, help="quantization bins per channel")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("evaluate", parents=[common, data_args], help="score a lookup table on presses")
    p.add_argument("--lookup", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("reconstruct", parents=[common], help="height map of one frame")
    p.add_argument("--frame", required=True)
    p.add_argument("--reference", required=True)
    p.add_argument("--lookup", required=True)
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("track", parents=[common, data_args], help="marker tracks as JSON lines")
    p.set_defaults(func=cmd_track)

    p = sub.add_parser("detect-slip", parents=[common, data_args, slip_common], help="per-frame slip verdicts")
    p.set_defaults(func=cmd_detect_slip)

    p = sub.add_parser("grasp-sim", parents=[common, slip_common], help="simulated re-grasp loop")
    p.add_argument("--object", help="object JSON {name, required_threshold, initial_threshold}")
    p.add_argument("--required", type=_positive, help="required threshold (instead of --object)")
    p.add_argument("--initial", type=_positive, default=1.0, help="initial threshold")
    p.add_argument("--render", action="store_true", help="run the detector on rendered lift sequences")
    p.set_defaults(func=cmd_grasp_sim)
    return parser


def _configure_logging() -> None:
    level_name = os.environ.get("TACTILE_LOG", "WARNING").strip().upper()
    level = logging.getLevelName(level_name)
    if not isinstance(level, int):
        level = logging.WARNING
    logging.basicConfig(level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")


def _fail(kind: str, message: str, code: int = 1) -> int:
    sys.stderr.write(json.dumps({"error": kind, "message": message}) + "\n")
    return code


def main(argv: Optional[Sequence[str]] = None) -> int:
    _configure_logging()
    try:
        args = build_parser().parse_args(argv)
        if getattr(args, "bins", 2) < 2:
            raise UsageError("--bins must be at least 2")
        return args.func(args)
    except UsageError as exc:
        return _fail("usage", str(exc), 2)
    except TactileError as exc:
        return _fail(exc.kind, str(exc))
    except FileNotFoundError as exc:
        return _fail("missing-file", str(exc))
    except OSError as exc:
        return _fail("io", str(exc))
