import math

import numpy as np
import pandas as pd
import pytest

from strikesim.core.frames import DEFAULT_TABLE, Region, SpatialFrame, TableGeometry, classify_region
from strikesim.core.game_state import STATE_DIM, GameState, flatten_state, states_to_matrix, unflatten_state
from strikesim.core.metrics import ALL_ROW, aggregate_metrics, median_strike_errors
from strikesim.core.results import TrialResult
from strikesim.core.segment import load_segment, save_segment, segment_from_dict, segment_to_dict
from strikesim.models.trajectory import strike_from_params
from strikesim.robot.kinematics import rotation_about
from strikesim.utils.validation import ConfigError, ShapeMismatchError


def _state(ball=(0.0, 0.0, 0.0), rotation=None, timestep=0):
    return GameState(
        pose_joints=np.zeros((8, 3)),
        paddle_rotation=np.eye(3) if rotation is None else rotation,
        paddle_translation=np.zeros(3),
        ball_position=np.asarray(ball, dtype=float),
        timestep=timestep,
    )


@pytest.mark.parametrize("x, region", [
    (-30.0, Region.LEFT),
    (0.0, Region.CENTER),
    (25.0, Region.CENTER),
    (-25.0, Region.CENTER),
    (25.0001, Region.RIGHT),
    (-1e6, Region.LEFT),
])
def test_classify_region(x, region):
    assert classify_region(x) == region


@pytest.mark.parametrize("x", [math.nan, math.inf, -math.inf])
def test_classify_region_rejects_non_finite(x):
    with pytest.raises(ValueError):
        classify_region(x)


def test_table_geometry_invariants():
    assert DEFAULT_TABLE.strike_plane_y == -140.0
    assert DEFAULT_TABLE.on_table(0.0, -137.0)
    assert not DEFAULT_TABLE.on_table(80.0, 0.0)
    with pytest.raises(ValueError):
        TableGeometry(strike_plane_y=-100.0)
    with pytest.raises(ValueError):
        SpatialFrame(z_axis=(0.0, 0.0, -1.0))


def test_flatten_identity_state():
    vector = flatten_state(_state())
    assert vector.shape == (STATE_DIM,) == (39,)
    np.testing.assert_array_equal(vector[24:33], np.eye(3).reshape(-1))
    assert np.count_nonzero(vector) == 3
    assert np.count_nonzero(np.delete(vector, np.arange(24, 33))) == 0


def test_flatten_puts_ball_last():
    vector = flatten_state(_state(ball=(1.0, 2.0, 3.0)))
    np.testing.assert_array_equal(vector[-3:], [1.0, 2.0, 3.0])


def test_flatten_round_trip(rng):
    for _ in range(20):
        axis = rng.normal(size=3)
        axis /= np.linalg.norm(axis)
        state = GameState(
            pose_joints=rng.normal(scale=50.0, size=(8, 3)),
            paddle_rotation=rotation_about(axis, rng.uniform(-math.pi, math.pi)),
            paddle_translation=rng.normal(size=3),
            ball_position=rng.normal(size=3),
            timestep=int(rng.integers(-39, 1)),
        )
        assert unflatten_state(flatten_state(state), state.timestep) == state


def test_game_state_rejects_bad_rotation():
    with pytest.raises(ValueError):
        _state(rotation=np.diag([1.0, 1.0, 1.01]))
    with pytest.raises(ValueError):
        _state(rotation=np.diag([1.0, 1.0, -1.0]))


def test_unflatten_checks_width():
    with pytest.raises(ShapeMismatchError):
        unflatten_state(np.zeros(38))


def test_states_to_matrix_shape():
    states = [_state(timestep=t) for t in (-2, -1, 0)]
    assert states_to_matrix(states).shape == (3, 39)
    assert states_to_matrix([]).shape == (0, 39)


def _result(segment_id, hit, distance, error=None):
    return TrialResult(segment_id=segment_id, controller_id="p", hit=hit,
                       end_distance_to_goal=distance, error=error)


def test_aggregate_metrics_hit_statistics():
    results = [_result("a", True, 4.0), _result("b", True, 6.0), _result("c", True, 8.0)]
    table = aggregate_metrics(results, {"a": Region.LEFT, "b": Region.LEFT, "c": Region.LEFT})
    left = table.row("Left")
    assert left["total"] == 3 and left["hits"] == 3
    assert left["end_dist_mean"] == pytest.approx(6.0)
    # population standard deviation
    assert left["end_dist_half_std"] == pytest.approx(0.5 * math.sqrt(8.0 / 3.0))
    assert table.row(ALL_ROW)["hits"] == 3


def test_aggregate_metrics_excludes_misses_from_distance():
    results = [_result("a", False, 12.0), _result("b", True, 5.0)]
    table = aggregate_metrics(results, [Region.RIGHT, Region.RIGHT])
    right = table.row("Right")
    assert right["hits"] == 1
    assert right["end_dist_mean"] == pytest.approx(5.0)
    assert right["end_dist_half_std"] == pytest.approx(0.0)


def test_aggregate_metrics_flags_empty_buckets():
    table = aggregate_metrics([_result("a", True, 2.0)], {"a": Region.CENTER})
    left = table.row("Left")
    assert left["total"] == 0
    assert not left["distance_defined"]
    assert math.isnan(left["end_dist_mean"])
    assert table.formatted().loc["Left", "End dist. to goal"] == "n/a"
    assert table.to_dict()["regions"]["Left"]["end_dist_mean"] is None


def test_aggregate_metrics_is_permutation_invariant(rng):
    results = [_result(f"s{i}", bool(i % 3), float(i % 7)) for i in range(30)]
    regions = {r.segment_id: [Region.LEFT, Region.CENTER, Region.RIGHT][i % 3] for i, r in enumerate(results)}
    shuffled = [results[i] for i in rng.permutation(len(results))]
    pd.testing.assert_frame_equal(aggregate_metrics(results, regions).table,
                                  aggregate_metrics(shuffled, regions).table)


def test_aggregate_metrics_counts_failed_trials():
    results = [_result("a", False, math.nan, error="LimitViolationError: x"), _result("b", True, 1.0)]
    table = aggregate_metrics(results, {"a": Region.LEFT, "b": Region.LEFT})
    assert table.row("Left")["errors"] == 1
    assert table.row("Left")["hits"] == 1


def test_aggregate_metrics_rejects_empty():
    with pytest.raises(ValueError):
        aggregate_metrics([], {})


def test_median_strike_errors_odd_count():
    errors = pd.DataFrame({
        "segment_id": ["a", "b", "c"],
        "frame": [0, 0, 0],
        "abs_error": [1.0, 2.0, 3.0],
    })
    medians = median_strike_errors(errors, {"a": Region.LEFT, "b": Region.LEFT, "c": Region.RIGHT})
    assert medians.loc[0, ALL_ROW] == pytest.approx(2.0)
    assert medians.loc[0, "Left"] == pytest.approx(1.5)
    assert math.isnan(medians.loc[0, "Center"])


def test_trial_result_invariants():
    with pytest.raises(ValueError):
        _result("a", True, 9.0)
    with pytest.raises(ValueError):
        _result("a", False, -1.0)
    with pytest.raises(ValueError):
        _result("a", True, math.nan, error="boom")


def test_segment_truth_consistent_with_strike_point(clean_dataset):
    for segment in clean_dataset.segments:
        gap = abs(strike_from_params(segment.truth_params) - segment.strike_point[0])
        assert gap <= segment.fit_tolerance
        assert segment.pre_hit_frames[-1].timestep == 0
        assert segment.pre_hit_matrix().shape == (40, 39)


def test_segment_json_round_trip(tmp_path, clean_dataset):
    segment = clean_dataset.segments[0]
    path = save_segment(segment, tmp_path / "seg.json")
    loaded = load_segment(path)
    assert loaded.segment_id == segment.segment_id
    assert loaded.frames == segment.frames
    np.testing.assert_array_equal(loaded.post_hit_ball, segment.post_hit_ball)
    assert loaded.truth_params == segment.truth_params
    assert path.read_text() == save_segment(loaded, tmp_path / "again.json").read_text()


def test_segment_schema_version_is_mandatory(clean_dataset):
    data = segment_to_dict(clean_dataset.segments[0])
    data.pop("version")
    with pytest.raises(ConfigError):
        segment_from_dict(data)
