import itertools
import json

import numpy as np
import pytest

from strikesim.utils.geometry_utils import (
    CameraModel,
    PixelObservation,
    default_camera_rig,
    load_camera_rig,
    look_at_camera,
    lowpass_filter,
    observe,
    project,
    project_batch,
    triangulate_batch,
    triangulate_dlt,
)
from strikesim.utils.validation import ConfigError, InsufficientSamplesError, SingularityError

CANONICAL = np.hstack([np.eye(3), np.zeros((3, 1))])


def _observations(cameras, point, noise=0.0, rng=None):
    out = []
    for cam in cameras:
        u, v = project(cam, point)
        if noise:
            u, v = u + rng.normal(0.0, noise), v + rng.normal(0.0, noise)
        out.append(PixelObservation(cam.camera_id, u, v))
    return out


def test_project_canonical_camera():
    camera = CameraModel(CANONICAL, (10, 10))
    assert project(camera, (0.0, 0.0, 1.0)) == (0.0, 0.0)
    assert project(camera, (2.0, 4.0, 2.0)) == pytest.approx((1.0, 2.0))


def test_project_matches_explicit_arithmetic(rng):
    for _ in range(50):
        P = rng.normal(size=(3, 4))
        X = rng.normal(size=3)
        x = P @ np.append(X, 1.0)
        if x[2] <= 0:
            continue
        assert project(CameraModel(P, (100, 100)), X) == pytest.approx((x[0] / x[2], x[1] / x[2]), rel=1e-12)


def test_project_rejects_points_behind_camera():
    camera = CameraModel(CANONICAL, (10, 10))
    with pytest.raises(ValueError):
        project(camera, (0.0, 0.0, -1.0))
    with pytest.raises(ValueError):
        project(camera, (0.0, 0.0, 0.0))


def test_camera_requires_rank_three():
    with pytest.raises(ConfigError):
        CameraModel(np.zeros((3, 4)), (10, 10))


def test_observe_checks_image_bounds():
    camera = CameraModel(CANONICAL, (10, 10))
    assert observe(camera, (1.0, 1.0, 1.0)).u == pytest.approx(1.0)
    with pytest.raises(ValueError):
        observe(camera, (50.0, 1.0, 1.0))


def test_triangulate_two_noiseless_views():
    rig = default_camera_rig()[:2]
    point = np.array([10.0, -50.0, 30.0])
    recovered, residual = triangulate_dlt(_observations(rig, point), rig)
    np.testing.assert_allclose(recovered, point, atol=1e-6)
    assert residual <= 1e-9


def test_triangulate_round_trip_many_points(rng):
    rig = default_camera_rig()
    points = np.column_stack([rng.uniform(-70, 70, 1000), rng.uniform(-50, 250, 1000), rng.uniform(0, 200, 1000)])
    for count in (2, 3, 4):
        cams = rig[:count]
        recovered, residuals = triangulate_batch(cams, project_batch(cams, points))
        np.testing.assert_allclose(recovered, points, atol=1e-6)
        assert residuals.max() <= 1e-9


def test_triangulate_is_invariant_to_projection_scale():
    rig = default_camera_rig()[:3]
    point = np.array([-20.0, 120.0, 60.0])
    observations = _observations(rig, point)
    scaled = [CameraModel(rig[0].projection_matrix * 37.5, rig[0].image_size, rig[0].camera_id)] + rig[1:]
    a, _ = triangulate_dlt(observations, rig)
    b, _ = triangulate_dlt(observations, scaled)
    np.testing.assert_allclose(a, b, atol=1e-9)


def test_more_views_reduce_error(rng):
    rig = default_camera_rig()
    pairs = list(itertools.combinations(range(4), 2))
    four, per_pair = [], {pair: [] for pair in pairs}
    for _ in range(1000):
        point = np.array([rng.uniform(-60, 60), rng.uniform(0, 250), rng.uniform(10, 150)])
        observations = _observations(rig, point, noise=0.5, rng=rng)
        four.append(np.linalg.norm(triangulate_dlt(observations, rig)[0] - point))
        for i, j in pairs:
            per_pair[(i, j)].append(np.linalg.norm(triangulate_dlt([observations[i], observations[j]], rig)[0] - point))
    assert np.mean(four) < min(np.mean(errors) for errors in per_pair.values())


def test_triangulate_needs_two_views():
    rig = default_camera_rig()
    with pytest.raises(InsufficientSamplesError):
        triangulate_dlt(_observations(rig[:1], np.array([0.0, 100.0, 50.0])), rig)


def test_triangulate_identical_cameras_is_singular():
    base = default_camera_rig()[0]
    twin = CameraModel(base.projection_matrix, base.image_size, "twin")
    point = np.array([0.0, 100.0, 50.0])
    with pytest.raises(SingularityError) as info:
        triangulate_dlt(_observations([base, twin], point), [base, twin])
    assert info.value.condition > 0


def test_triangulate_unknown_camera():
    rig = default_camera_rig()
    observations = [PixelObservation("cam0", 1.0, 1.0), PixelObservation("nope", 1.0, 1.0)]
    with pytest.raises(ConfigError):
        triangulate_dlt(observations, rig)


def test_lowpass_constant_signal_unchanged():
    signal = np.full((20, 3), 4.2)
    np.testing.assert_allclose(lowpass_filter(signal, 5), signal)


def test_lowpass_impulse_window_three():
    signal = np.zeros(9)
    signal[4] = 1.0
    out = lowpass_filter(signal, 3)
    np.testing.assert_allclose(out[3:6], [1 / 3, 1 / 3, 1 / 3])
    assert out[:3].sum() == 0 and out[6:].sum() == 0


def test_lowpass_preserves_ramp_in_interior():
    ramp = np.arange(20, dtype=float) * 1.5 - 3.0
    out = lowpass_filter(ramp, 5)
    np.testing.assert_allclose(out[2:-2], ramp[2:-2])
    assert out.shape == ramp.shape


def test_lowpass_shrinks_window_at_edges():
    signal = np.array([0.0, 0.0, 0.0, 0.0, 10.0])
    out = lowpass_filter(signal, 5)
    assert out[0] == 0.0
    assert out[-1] == 10.0


def test_lowpass_is_linear(rng):
    a, b = rng.normal(size=30), rng.normal(size=30)
    np.testing.assert_allclose(lowpass_filter(2 * a + 3 * b, 7), 2 * lowpass_filter(a, 7) + 3 * lowpass_filter(b, 7))


@pytest.mark.parametrize("window", [0, 4, 21])
def test_lowpass_rejects_bad_window(window):
    with pytest.raises(ConfigError):
        lowpass_filter(np.zeros(20), window)


def test_lowpass_rejects_empty_signal():
    with pytest.raises(InsufficientSamplesError):
        lowpass_filter(np.zeros((0, 3)), 1)


def test_look_at_camera_projects_target_to_center():
    camera = look_at_camera((0.0, 400.0, 150.0), (0.0, 150.0, 90.0), "c")
    u, v = project(camera, (0.0, 150.0, 90.0))
    assert u == pytest.approx(960.0)
    assert v == pytest.approx(540.0)


def test_load_camera_rig(tmp_path):
    rig = default_camera_rig()
    path = tmp_path / "rig.json"
    path.write_text(json.dumps({"version": "1.0", "cameras": [c.to_dict() for c in rig]}))
    loaded = load_camera_rig(path)
    assert [c.camera_id for c in loaded] == [c.camera_id for c in rig]
    np.testing.assert_array_equal(loaded[0].projection_matrix, rig[0].projection_matrix)

    path.write_text(json.dumps({"version": "0.1", "cameras": []}))
    with pytest.raises(ConfigError):
        load_camera_rig(path)
    with pytest.raises(ConfigError):
        load_camera_rig(tmp_path / "missing.json")
