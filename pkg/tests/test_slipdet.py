import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tactile import markers as mk
from tactile import slipdet, synthgel
from tactile.errors import InsufficientMarkersError, InvalidInputError, SchemaError, TexturelessError
from tactile.imgcore import color_delta

from .conftest import BALL_RADIUS_MM


# --------------------------------------------------------------------------- transforms

def test_rotation_wraps_to_half_open_interval():
    assert slipdet.RigidTransform2D((0, 0), 190.0).rotation == -170.0
    assert slipdet.RigidTransform2D((0, 0), 180.0).rotation == 180.0
    assert slipdet.RigidTransform2D((0, 0), -180.0).rotation == 180.0
    assert slipdet.RigidTransform2D((0, 0), -540.0).rotation == 180.0
    assert slipdet.RigidTransform2D((0, 0), 725.0).rotation == pytest.approx(5.0)


def test_apply_rotates_about_center():
    t = slipdet.RigidTransform2D((1.0, 2.0), 90.0)
    np.testing.assert_allclose(t.apply(np.array([[11.0, 10.0]]), (10.0, 10.0)), [[11.0, 13.0]], atol=1e-12)


def _textured_pair(model, pose, window):
    """Delta-intensity windows of a textured dome before and after a rigid indenter move (no markers)."""
    reference = synthgel.render_reference(model)
    scene = synthgel.IndenterScene(synthgel.TexturedDome(8.0, seed=7), 0.3, (160.0, 120.0),
                                   (synthgel.Pose(), pose), synthgel.FullSlip())
    frames, _ = synthgel.render_sequence(model, scene)
    a = color_delta(frames[0], reference).intensity
    b = color_delta(frames[1], reference).intensity
    return window.crop(a), window.crop(b)


def test_texture_translation(small_model):
    win = slipdet.Window(100, 60, 120)
    a, b = _textured_pair(small_model, synthgel.Pose.from_pixels(3.0, -2.0), win)
    t = slipdet.texture_transform(a, b)
    assert t.translation[0] == pytest.approx(3.0, abs=0.25)
    assert t.translation[1] == pytest.approx(-2.0, abs=0.25)
    assert t.rotation == pytest.approx(0.0, abs=0.25)


def test_texture_rotation_about_patch_center(small_model):
    win = slipdet.Window(100, 60, 120)
    a, b = _textured_pair(small_model, synthgel.Pose.from_pixels(0.0, 0.0, 4.0, win.center), win)
    t = slipdet.texture_transform(a, b)
    assert t.rotation == pytest.approx(4.0, abs=0.5)
    assert math.hypot(*t.translation) < 0.25


def test_rotation_between_coarse_angles(small_model):
    win = slipdet.Window(100, 60, 120)
    a, b = _textured_pair(small_model, synthgel.Pose.from_pixels(0.0, 0.0, 8.75, win.center), win)
    assert slipdet.texture_transform(a, b).rotation == pytest.approx(8.75, abs=0.5)


def test_textureless_patches():
    with pytest.raises(TexturelessError):
        slipdet.texture_transform(np.full((60, 60), 0.2), np.full((60, 60), 0.2))
    ys, xs = np.mgrid[0:80, 0:80]
    dome = np.exp(-((xs - 39.5) ** 2 + (ys - 39.5) ** 2) / 800.0)
    with pytest.raises(TexturelessError):
        slipdet.texture_transform(dome, dome)
    with pytest.raises(InvalidInputError):
        slipdet.texture_transform(np.zeros((10, 10)), np.zeros((10, 12)))


def test_masked_pixels_do_not_bias_texture_motion(small_model):
    win = slipdet.Window(100, 60, 120)
    a, b = _textured_pair(small_model, synthgel.Pose.from_pixels(2.0, 1.0), win)
    # paint static dark blobs on both patches; they would pull the estimate toward zero
    mask = np.zeros(a.shape, bool)
    for cy in range(10, 120, 25):
        for cx in range(10, 120, 25):
            mask[cy - 3:cy + 4, cx - 3:cx + 4] = True
    a2, b2 = np.where(mask, 1.0, a), np.where(mask, 1.0, b)
    t = slipdet.texture_transform(a2, b2, mask, mask)
    assert t.translation[0] == pytest.approx(2.0, abs=0.25)
    assert t.translation[1] == pytest.approx(1.0, abs=0.25)


# --------------------------------------------------------------------------- marker motion

def _grid(window, n=5, spacing=25.0):
    c = np.asarray(window.center)
    k = (np.arange(n) - (n - 1) / 2.0) * spacing
    gx, gy = np.meshgrid(k, k)
    return np.stack([gx.ravel(), gy.ravel()], axis=1) + c


def _motion(origins, moved):
    return mk.MotionField(np.arange(len(origins)), origins, moved - origins)


def test_marker_transform_exact_translation_and_rotation():
    win = slipdet.Window(100, 60, 120)
    p = _grid(win)
    t = slipdet.marker_transform(_motion(p, p + (5.0, 0.0)), win)
    assert t.translation == pytest.approx((5.0, 0.0), abs=1e-12)
    assert t.rotation == pytest.approx(0.0, abs=1e-12)
    rot = slipdet.RigidTransform2D((0.0, 0.0), 3.0)
    t = slipdet.marker_transform(_motion(p, rot.apply(p, win.center)), win)
    assert t.rotation == pytest.approx(3.0, abs=1e-6)
    assert t.translation == pytest.approx((0.0, 0.0), abs=1e-6)


def test_marker_transform_ignores_markers_outside_window():
    win = slipdet.Window(100, 60, 120)
    p = _grid(win)
    outside = np.array([[10.0, 10.0], [300.0, 200.0]])
    origins = np.vstack([p, outside])
    moved = np.vstack([p + (1.0, -1.0), outside + (30.0, 30.0)])
    t = slipdet.marker_transform(_motion(origins, moved), win)
    assert t.translation == pytest.approx((1.0, -1.0), abs=1e-12)


def test_marker_transform_needs_three_markers():
    win = slipdet.Window(0, 0, 50)
    p = np.array([[10.0, 10.0], [20.0, 20.0]])
    with pytest.raises(InsufficientMarkersError):
        slipdet.marker_transform(_motion(p, p), win)


def test_rigid_fit_monte_carlo():
    win = slipdet.Window(100, 60, 120)
    p = _grid(win)
    errors = []
    for seed in range(100):
        rng = np.random.default_rng(seed)
        truth = slipdet.RigidTransform2D(rng.uniform(-5, 5, 2), rng.uniform(-10, 10))
        moved = truth.apply(p, win.center) + rng.normal(0.0, 0.3, p.shape)
        est = slipdet.marker_transform(_motion(p, moved), win)
        errors.append(abs(slipdet.wrap_angle(est.rotation - truth.rotation)))
    assert max(errors) <= 0.3


@settings(max_examples=100, deadline=None)
@given(st.floats(-50, 50), st.floats(-50, 50), st.floats(-179, 179), st.floats(0, 200), st.floats(0, 200))
def test_rigid_fit_recovers_exact_motion(tx, ty, deg, cx, cy):
    rng = np.random.default_rng(0)
    src = rng.uniform(0, 200, (12, 2))
    truth = slipdet.RigidTransform2D((tx, ty), deg)
    est = slipdet.fit_rigid(src, truth.apply(src, (cx, cy)), (cx, cy))
    assert abs(slipdet.wrap_angle(est.rotation - truth.rotation)) < 1e-6
    np.testing.assert_allclose(est.translation, truth.translation, atol=1e-6)


def test_relative_motion_examples():
    a = slipdet.RigidTransform2D((5.0, 0.0), 0.0)
    b = slipdet.RigidTransform2D((0.0, 0.0), 0.0)
    assert slipdet.relative_motion(a, b) == (5.0, 0.0)
    c = slipdet.RigidTransform2D((0.0, 0.0), 179.0)
    d = slipdet.RigidTransform2D((0.0, 0.0), -179.0)
    assert slipdet.relative_motion(c, d)[1] == pytest.approx(2.0)


@settings(max_examples=100, deadline=None)
@given(st.floats(-100, 100), st.floats(-100, 100), st.floats(-720, 720))
def test_relative_motion_of_identical_transforms_is_zero(tx, ty, deg):
    t = slipdet.RigidTransform2D((tx, ty), deg)
    assert slipdet.relative_motion(t, t) == (0.0, 0.0)


# --------------------------------------------------------------------------- contact

def test_contact_detection(small_model, small_reference):
    status = slipdet.detect_contact(color_delta(small_reference, small_reference))
    assert not status.in_contact and status.area == 0
    f5, t5 = synthgel.render_press(small_model, synthgel.sphere_press((160, 120), depth_mm=0.5))
    f8, _ = synthgel.render_press(small_model, synthgel.sphere_press((160, 120), depth_mm=0.8))
    s5 = slipdet.detect_contact(color_delta(f5, small_reference), 0.05)
    s8 = slipdet.detect_contact(color_delta(f8, small_reference), 0.05)
    assert s5.in_contact
    assert s5.area == pytest.approx(t5.contact_mask.sum(), rel=0.10)
    assert s8.area > s5.area
    assert s5.area <= 320 * 240


# --------------------------------------------------------------------------- configuration

def test_config_round_trip(tmp_path):
    cfg = slipdet.SlipConfig(r_threshold=0.7, dt_accum_px=3.5, max_attempts=4)
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg.to_dict()))
    assert slipdet.SlipConfig.load(path) == cfg
    assert set(cfg.to_dict()) >= {"contact_intensity", "min_area", "area_drop_fraction", "r_threshold",
                                  "motion_floor_px", "dt_frame_px", "dtheta_frame_deg", "dt_accum_px",
                                  "dtheta_accum_deg", "window_side", "peripheral_k", "regrasp_factor",
                                  "max_attempts"}


def test_config_schema_errors(tmp_path):
    with pytest.raises(SchemaError):
        slipdet.SlipConfig.from_dict({"r_treshold": 0.8})
    with pytest.raises(SchemaError):
        slipdet.SlipConfig.from_dict({"min_area": 2.5})
    with pytest.raises(SchemaError):
        slipdet.SlipConfig.from_dict({"r_threshold": "high"})
    with pytest.raises(SchemaError):
        slipdet.SlipConfig.from_dict([1, 2])
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(SchemaError):
        slipdet.SlipConfig.load(bad)
    with pytest.raises(InvalidInputError):
        slipdet.SlipConfig(area_drop_fraction=1.5)
    with pytest.raises(InvalidInputError):
        slipdet.SlipConfig(ratio_direction="sideways")
    assert slipdet.SlipConfig.from_dict({"dt_frame_px": 2}).dt_frame_px == 2


# --------------------------------------------------------------------------- verdict fusion

CFG = slipdet.SlipConfig()


def test_classify_precedence():
    base = dict(area=1000, baseline_area=1000, in_contact=True, v_max=3.0)
    assert slipdet.classify(slipdet.Cues(**base), CFG)[0] == slipdet.STABLE
    assert slipdet.classify(slipdet.Cues(**base, dt=1.5), CFG)[0] == slipdet.SLIP_TRANSLATIONAL
    assert slipdet.classify(slipdet.Cues(**base, r=0.5), CFG)[0] == slipdet.SLIP_TRANSLATIONAL
    assert slipdet.classify(slipdet.Cues(**base, dt=1.5, dtheta=2.0), CFG)[0] == slipdet.SLIP_ROTATIONAL
    assert slipdet.classify(slipdet.Cues(**base, acc_dtheta=5.5), CFG)[0] == slipdet.SLIP_ROTATIONAL
    severe = dict(base, area=500)
    state, fired = slipdet.classify(slipdet.Cues(**severe, dt=2.0), CFG)
    assert state == slipdet.SEVERE and fired["area"] and fired["translation"]
    lost = dict(base, area=0, in_contact=False)
    assert slipdet.classify(slipdet.Cues(**lost), CFG)[0] == slipdet.SEVERE
    assert slipdet.classify(slipdet.Cues(), CFG)[0] == slipdet.NO_CONTACT


def test_ratio_direction_switch():
    cues = slipdet.Cues(area=1000, baseline_area=1000, in_contact=True, r=0.9, v_max=3.0)
    assert slipdet.classify(cues, CFG)[0] == slipdet.STABLE
    higher = slipdet.SlipConfig(ratio_direction="higher")
    assert slipdet.classify(cues, higher)[1]["ratio"]


optional = st.one_of(st.none(), st.floats(0, 20))
cue_values = st.builds(slipdet.Cues, area=st.integers(0, 5000), baseline_area=st.integers(0, 5000),
                       in_contact=st.booleans(), dt=optional, dtheta=optional, acc_dt=st.floats(0, 20),
                       acc_dtheta=st.floats(0, 20), r=st.one_of(st.none(), st.floats(0, 1)),
                       v_max=st.floats(0, 20))


@settings(max_examples=300, deadline=None)
@given(cue_values, st.floats(1.0, 10.0))
def test_more_motion_never_clears_a_slip(cues, k):
    from dataclasses import replace

    state, _ = slipdet.classify(cues, CFG)
    scaled = replace(cues, dt=None if cues.dt is None else cues.dt * k,
                     dtheta=None if cues.dtheta is None else cues.dtheta * k,
                     acc_dt=cues.acc_dt * k, acc_dtheta=cues.acc_dtheta * k, v_max=cues.v_max * k)
    state2, _ = slipdet.classify(scaled, CFG)
    if state in slipdet.SLIP_STATES:
        assert state2 in slipdet.SLIP_STATES


@settings(max_examples=300, deadline=None)
@given(cue_values, st.floats(0, 0.5))
def test_ratio_cue_gated_by_motion_floor(cues, v):
    from dataclasses import replace

    _, fired = slipdet.classify(replace(cues, v_max=v), CFG)
    assert not fired["ratio"]


@settings(max_examples=300, deadline=None)
@given(cue_values)
def test_severe_implies_area_drop(cues):
    state, _ = slipdet.classify(cues, CFG)
    if state == slipdet.SEVERE:
        assert cues.area < CFG.area_drop_fraction * cues.baseline_area


# --------------------------------------------------------------------------- detector on rendered sequences

def _sequence(kind, s=0):
    model = synthgel.SensorModel.default(320, 240)
    layout = synthgel.MarkerLayout()
    rng = np.random.default_rng([2024, synthgel.SLIP_KINDS.index(kind), s])
    scene, onset = synthgel.scripted_slip_scene(kind, model, rng)
    frames, _ = synthgel.render_sequence(model, scene, layout, seed=s)
    return synthgel.render_reference(model, layout, s), frames, onset


def test_stick_sequence_is_stable():
    reference, frames, _ = _sequence("stick")
    verdicts = slipdet.run_detector(reference, frames)
    assert all(v.state == slipdet.STABLE for v in verdicts)


def test_translational_slip_flagged_near_onset():
    reference, frames, onset = _sequence("slip-translation")
    verdicts = slipdet.run_detector(reference, frames)
    first = slipdet.first_slip_frame(verdicts)
    assert first is not None and onset <= first <= onset + 3
    assert verdicts[first].state == slipdet.SLIP_TRANSLATIONAL


def test_peripheral_slip_fires_ratio_first():
    reference, frames, onset = _sequence("peripheral-slip")
    verdicts = slipdet.run_detector(reference, frames)
    first = slipdet.first_slip_frame(verdicts)
    assert first is not None and first <= onset + 3
    assert verdicts[first].fired["ratio"]
    assert not verdicts[first].fired["translation"] and not verdicts[first].fired["rotation"]
    assert verdicts[first].r < 0.8


def test_full_slip_rotation_accumulates(small_model, small_layout, small_reference_markers):
    motion = synthgel.ramp_motion(5, 1, (0.0, 0.0), 3.0, None, small_model.pixel_scale)
    scene = synthgel.IndenterScene(synthgel.TexturedDome(8.0, seed=3), 0.3, (160.0, 120.0), motion,
                                   synthgel.FullSlip())
    frames, _ = synthgel.render_sequence(small_model, scene, small_layout)
    verdicts = slipdet.run_detector(small_reference_markers, frames)
    for v in verdicts[1:]:
        assert v.dtheta == pytest.approx(3.0, abs=0.5)
    acc = [v.acc_dtheta for v in verdicts]
    assert acc[-1] == pytest.approx(12.0, abs=2.0)
    assert verdicts[1].state == slipdet.SLIP_ROTATIONAL


def test_accumulators_are_running_sums():
    reference, frames, _ = _sequence("slip-translation", 1)
    verdicts = slipdet.run_detector(reference, frames)
    dt = np.cumsum([v.dt or 0.0 for v in verdicts])
    dth = np.cumsum([v.dtheta or 0.0 for v in verdicts])
    np.testing.assert_allclose([v.acc_dt for v in verdicts], dt, rtol=0, atol=1e-12)
    np.testing.assert_allclose([v.acc_dtheta for v in verdicts], dth, rtol=0, atol=1e-12)


def test_detector_is_deterministic():
    reference, frames, _ = _sequence("slip-rotation", 2)
    a = [v.to_record() for v in slipdet.run_detector(reference, frames)]
    b = [v.to_record() for v in slipdet.run_detector(reference, frames)]
    assert a == b


def test_no_contact_frames(small_reference_markers):
    verdicts = slipdet.run_detector(small_reference_markers, [small_reference_markers] * 3)
    assert all(v.state == slipdet.NO_CONTACT for v in verdicts)
    assert all(v.area_fraction is None for v in verdicts)


def test_contact_loss_is_severe(small_model, small_layout, small_reference_markers):
    motion = (synthgel.Pose(), synthgel.Pose(depth_mm=0.5), synthgel.Pose(depth_mm=0.15))
    scene = synthgel.IndenterScene(synthgel.Sphere(BALL_RADIUS_MM), 0.5, (160.0, 120.0), motion)
    frames, _ = synthgel.render_sequence(small_model, scene, small_layout)
    verdicts = slipdet.run_detector(small_reference_markers, frames)
    assert verdicts[-1].state == slipdet.SEVERE
    assert verdicts[-1].area_fraction < 0.6
    record = verdicts[-1].to_record()
    assert list(record["fired"]) == sorted(record["fired"])


def test_tracking_loss_degrades_instead_of_failing(small_reference_markers):
    model = synthgel.SensorModel.default(320, 240)
    layout = synthgel.MarkerLayout(spacing=40, radius=3)
    reference = synthgel.render_reference(model, layout)
    scene = synthgel.sphere_press((160.0, 120.0), depth_mm=0.5)
    z = synthgel.membrane_height(model, scene, scene.motion[0])
    grad = synthgel.height_gradient(z, model.pixel_scale)
    rest = layout.rest_positions(320, 240)
    a = synthgel.draw_frame(model, grad, rest, layout)
    b = synthgel.draw_frame(model, grad, rest + (20.0, 0.0), layout)
    verdicts = slipdet.run_detector(reference, [a, b])
    assert verdicts[1].degraded
    assert verdicts[1].state in slipdet.STATES


def test_new_grasp_resets_accumulators(small_reference_markers):
    state = slipdet.DetectorState.start(small_reference_markers)
    from dataclasses import replace

    busy = replace(state, acc_translation=3.0, acc_rotation=2.0, baseline_area=900, frame_index=7)
    fresh = busy.new_grasp()
    assert fresh.acc_translation == 0.0 and fresh.acc_rotation == 0.0 and fresh.baseline_area == 0
    assert fresh.frame_index == 7 and fresh.previous is None


# --------------------------------------------------------------------------- re-grasp policy

@pytest.mark.parametrize("ratio,attempts", [(1.0, 1), (1.5, 3), (2.0, 4), (2.4, 5)])
def test_grasp_policy_converges(ratio, attempts):
    log = slipdet.grasp_policy_run(slipdet.SimulatedObject(ratio, 1.0))
    assert log.success and log.n_attempts == attempts
    assert all(a.slipped for a in log.attempts[:-1])
    assert log.attempts[-1].threshold >= ratio


def test_grasp_policy_gives_up():
    log = slipdet.grasp_policy_run(slipdet.SimulatedObject(20.0, 1.0, "heavy"))
    assert not log.success and log.n_attempts == 6
    d = log.to_dict()
    assert d["object"] == "heavy" and d["n_attempts"] == 6
    assert d["attempts"][-1]["threshold"] == pytest.approx(1.2 ** 6)


def test_grasp_policy_with_rendered_lifts():
    cfg = slipdet.SlipConfig()
    log = slipdet.grasp_policy_run(slipdet.SimulatedObject(1.5), cfg, slipdet.rendered_lift(n_frames=6, config=cfg))
    assert log.success and log.n_attempts == 3
    assert [a.slipped for a in log.attempts] == [True, True, False]
