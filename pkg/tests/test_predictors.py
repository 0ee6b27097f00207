from types import SimpleNamespace

import numpy as np
import pytest
from scipy import stats

from strikesim.config.settings import GeneratorConfig, PredictorSpec
from strikesim.core.metrics import median_strike_errors
from strikesim.models.model_manager import PredictorManager
from strikesim.models.predictors import (
    NUM_ROWS,
    KnnPredictor,
    KnnRegressor,
    NoisyOracle,
    PredictionMatrix,
    combine_member_outputs,
    ensemble_predict,
    fit_knn_ensemble,
    linear_sigma_schedule,
    noisy_oracle_ensemble,
    window_features,
)
from strikesim.models.trajectory import PiecewiseLinearXY
from strikesim.simgen.dataset import generate_dataset
from strikesim.uncertainty.diagnostics import strike_error_table
from strikesim.utils.validation import ConfigError, ShapeMismatchError


def _matrix(a1=0.1, a2=-0.2, b=5.0):
    return PredictionMatrix(np.tile([a1, a2, b], (NUM_ROWS, 1)))


def test_prediction_matrix_rows():
    assert PredictionMatrix.row_index(0) == 0
    assert PredictionMatrix.row_index(-10) == 10
    assert PredictionMatrix.row_index(-39) == NUM_ROWS - 1
    m = _matrix()
    np.testing.assert_allclose(m.strike_points(), 0.2 * 140.0 + 5.0)
    assert m.params(3) == PiecewiseLinearXY(0.1, -0.2, 5.0)
    with pytest.raises(ShapeMismatchError):
        PredictionMatrix(np.zeros((29, 3)))
    with pytest.raises(ValueError):
        PredictionMatrix(np.full((NUM_ROWS, 3), np.nan))


def test_window_features_pads_with_first_frame():
    X = np.arange(5 * 2, dtype=float).reshape(5, 2)
    np.testing.assert_array_equal(window_features(X, 0, 3), X[2:5].reshape(-1))
    np.testing.assert_array_equal(window_features(X, 3, 3), np.concatenate([X[0], X[0], X[1]]))
    np.testing.assert_array_equal(window_features(X, 20, 2), np.concatenate([X[0], X[0]]))


def test_zero_noise_oracle_returns_truth(clean_dataset):
    oracle = NoisyOracle(noise_sigma=0.0)
    for segment in clean_dataset.segments[:10]:
        values = oracle.predict_segment(segment).values
        np.testing.assert_array_equal(values, np.tile(segment.truth_params.to_array(), (NUM_ROWS, 1)))


def test_oracle_is_deterministic(clean_dataset):
    segment = clean_dataset.segments[0]
    assert NoisyOracle(1.5, seed=3).predict_segment(segment) == NoisyOracle(1.5, seed=3).predict_segment(segment)
    assert NoisyOracle(1.5, seed=3).predict_segment(segment) != NoisyOracle(1.5, seed=4).predict_segment(segment)


def test_oracle_strike_error_grows_linearly():
    truth = PiecewiseLinearXY(0.1, -0.1, 3.0)
    segments = [SimpleNamespace(segment_id=f"seg{i:05d}", truth_params=truth) for i in range(1000)]
    oracle = NoisyOracle(noise_sigma=1.0, seed=0)
    errors = np.stack([np.abs(oracle.predict_segment(s).strike_points() - 17.0) for s in segments])
    medians = np.median(errors, axis=0)
    assert medians[0] == pytest.approx(0.0, abs=1e-9)
    fit = stats.linregress(np.arange(1, NUM_ROWS), medians[1:])
    assert fit.slope > 0
    assert fit.rvalue ** 2 > 0.95


def test_oracle_center_pull_and_bias(clean_dataset):
    segment = clean_dataset.segments[0]
    strike = segment.truth_params.to_array() @ [0.0, -140.0, 1.0]
    pulled = NoisyOracle(0.0, center_pull=1.0).predict_segment(segment)
    np.testing.assert_allclose(pulled.strike_points(), 0.0, atol=1e-9)
    biased = NoisyOracle(0.0, strike_bias=12.0).predict_segment(segment)
    np.testing.assert_allclose(biased.strike_points(), strike + 12.0, atol=1e-9)


def test_oracle_rejects_bad_schedule():
    with pytest.raises(ConfigError):
        NoisyOracle(sigma_schedule=[1.0] * 10)
    with pytest.raises(ConfigError):
        NoisyOracle(sigma_schedule=-linear_sigma_schedule(1.0) - 1.0)
    with pytest.raises(ConfigError):
        NoisyOracle().predict(np.zeros((40, 39)))


def test_knn_equidistant_neighbors_use_dataset_order():
    features = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]])
    targets = np.array([1.0, 2.0, 3.0, 100.0])
    model = KnnRegressor(k=3).fit(features, targets)
    assert model.predict([[0.0, 0.0]])[0] == pytest.approx(2.0)


def test_knn_single_point_and_duplicates():
    assert KnnRegressor(k=1).fit([[3.0, 4.0]], [7.0]).predict([[100.0, -5.0]])[0] == 7.0
    model = KnnRegressor(k=2).fit([[0.0], [0.0], [5.0]], [1.0, 3.0, 100.0])
    assert model.predict([[0.0]])[0] == pytest.approx(2.0)


def test_knn_matches_exhaustive_sort(rng):
    features = rng.normal(size=(50, 4)) * [1.0, 10.0, 0.1, 3.0]
    targets = rng.normal(size=(50, 3))
    queries = rng.normal(size=(10, 4)) * [1.0, 10.0, 0.1, 3.0]
    predicted = KnnRegressor(k=5).fit(features, targets).predict(queries)
    mean, std = features.mean(axis=0), features.std(axis=0)
    z_train, z_query = (features - mean) / std, (queries - mean) / std
    for q, row in zip(z_query, predicted):
        order = np.argsort(np.linalg.norm(z_train - q, axis=1), kind="stable")[:5]
        np.testing.assert_allclose(row, targets[order].mean(axis=0), atol=1e-12)


def test_knn_is_scale_invariant(rng):
    features = rng.normal(size=(40, 6))
    targets = rng.normal(size=40)
    queries = rng.normal(size=(15, 6))
    plain = KnnRegressor(k=4).fit(features, targets).predict(queries)
    scaled = KnnRegressor(k=4).fit(features * 10.0, targets).predict(queries * 10.0)
    np.testing.assert_allclose(plain, scaled, atol=1e-9)


def test_knn_rejects_bad_k():
    with pytest.raises(ConfigError):
        KnnRegressor(k=0)
    with pytest.raises(ConfigError):
        KnnRegressor(k=3).fit([[0.0], [1.0]], [0.0, 1.0])
    with pytest.raises(ConfigError):
        KnnRegressor(k=1).predict([[0.0]])


def test_knn_predictor_self_query_returns_targets(clean_dataset):
    train = clean_dataset.segments[:20]
    predictor = KnnPredictor(k=1).fit(train)
    for segment in train[:5]:
        values = predictor.predict_segment(segment).values
        np.testing.assert_allclose(values, np.tile(segment.truth_params.to_array(), (NUM_ROWS, 1)))


def test_knn_predictor_batch_matches_single(clean_dataset):
    train, test = clean_dataset.segments[:25], clean_dataset.segments[25:30]
    predictor = KnnPredictor(k=3).fit(train)
    batch = predictor.predict_segments(test)
    for segment in test:
        np.testing.assert_allclose(batch[segment.segment_id].values, predictor.predict_segment(segment).values)


def test_knn_predictor_checks_series_width(clean_dataset):
    predictor = KnnPredictor(k=1).fit(clean_dataset.segments[:5])
    with pytest.raises(ShapeMismatchError):
        predictor.predict(np.zeros((40, 38)))


def test_ensemble_identical_members_have_zero_spread():
    mean, std = combine_member_outputs([_matrix(), _matrix()])
    assert mean == _matrix()
    assert not std.any()


def test_ensemble_two_point_spread():
    mean, std = combine_member_outputs([_matrix(b=4.0), _matrix(b=6.0)])
    np.testing.assert_allclose(mean.values[:, 2], 5.0)
    np.testing.assert_allclose(std[:, 2], 1.0)
    np.testing.assert_allclose(std[:, :2], 0.0)


def test_ensemble_needs_two_members():
    with pytest.raises(ConfigError):
        combine_member_outputs([_matrix()])
    with pytest.raises(ConfigError):
        noisy_oracle_ensemble(1, 1.0)


def test_ensemble_predict_on_series(clean_dataset):
    train = clean_dataset.segments[:15]
    members = [KnnPredictor(k=2).fit(train), KnnPredictor(k=2).fit(train)]
    series = clean_dataset.segments[20].pre_hit_matrix()
    mean, std = ensemble_predict(members, series)
    assert mean == members[0].predict(series)
    assert not std.any()


def test_ensemble_predict_routes_segments_to_oracle_members(clean_dataset):
    segment = clean_dataset.segments[0]
    members = noisy_oracle_ensemble(3, 1.0, seed=4).members
    mean, std = ensemble_predict(members, segment)
    expected = np.stack([m.predict_segment(segment).values for m in members])
    np.testing.assert_allclose(mean.values, expected.mean(axis=0))
    np.testing.assert_allclose(std, expected.std(axis=0))
    with pytest.raises(ConfigError):
        ensemble_predict(members, segment.pre_hit_matrix())


def test_knn_predict_reuses_fitted_regressors(clean_dataset, monkeypatch):
    predictor = KnnPredictor(k=3).fit(clean_dataset.segments[:20])
    regressor = predictor.model.regressor(5)
    assert predictor.model.regressor(5) is regressor

    def refit(*args, **kwargs):
        raise AssertionError("predict must not refit")

    monkeypatch.setattr(KnnRegressor, "fit", refit)
    predictions = predictor.predict_segments(clean_dataset.segments[20:25])
    assert len(predictions) == 5
    assert predictor.model.regressor(5) is regressor


def test_kfold_ensemble_matches_stacked_members(clean_dataset):
    segments = clean_dataset.segments
    ensemble = fit_knn_ensemble(segments, members=4, k=3, seed=2)
    assert len(ensemble.members) == 4
    per_member = ensemble.member_outputs(segments[:6])
    combined = ensemble.predict_segments(segments[:6])
    for segment in segments[:6]:
        stacked = np.stack([out[segment.segment_id].values for out in per_member])
        np.testing.assert_allclose(combined[segment.segment_id].values, stacked.mean(axis=0))


def test_manager_save_and_load(tmp_path, clean_dataset):
    manager = PredictorManager()
    spec = PredictorSpec(kind="knn", k=3)
    train = clean_dataset.split("train")
    predictor = manager.fit("main", spec, train)
    path = manager.save("main", tmp_path / "predictor.json")

    other = PredictorManager()
    loaded = other.load("main", path)
    assert other.get_loaded_predictors()["main"]["train_size"] == len(train)
    for segment in clean_dataset.split("test"):
        np.testing.assert_allclose(loaded.predict_segment(segment).values,
                                   predictor.predict_segment(segment).values, atol=1e-12)


def test_manager_builds_oracle_ensemble(clean_dataset):
    manager = PredictorManager()
    spec = PredictorSpec(kind="ensemble", member_kind="noisy_oracle", members=3, noise_sigma=0.0)
    ensemble = manager.build(spec)
    segment = clean_dataset.segments[0]
    np.testing.assert_allclose(ensemble.predict_segment(segment).values,
                               np.tile(segment.truth_params.to_array(), (NUM_ROWS, 1)))
    with pytest.raises(ConfigError):
        manager.build(PredictorSpec(kind="knn"))
    with pytest.raises(ConfigError):
        manager.save("missing", "unused.json")


def _median_errors_by_frame(segments, predictions):
    errors = strike_error_table(segments, predictions)
    return median_strike_errors(errors, {s.segment_id: s.region for s in segments})


@pytest.mark.slow
def test_knn_error_shrinks_toward_the_hit():
    wins = 0
    for seed in range(5):
        config = GeneratorConfig(seed=seed, segment_count=400, predictability=1.0, observe_through_cameras=False)
        dataset = generate_dataset(config)
        test = dataset.split("test")
        predictions = KnnPredictor(k=5).fit(dataset.split("train")).predict_segments(test)
        medians = _median_errors_by_frame(test, predictions)
        wins += medians.loc[1, "All"] < medians.loc[10, "All"]
    assert wins >= 3


@pytest.mark.slow
def test_oracle_median_error_tracks_the_horizon():
    segments = generate_dataset(GeneratorConfig(seed=7, segment_count=300, observe_through_cameras=False)).segments
    predictions = NoisyOracle(noise_sigma=1.5).predict_segments(segments)
    medians = _median_errors_by_frame(segments, predictions)
    assert list(medians.index) == list(range(NUM_ROWS))
    assert stats.spearmanr(medians.index, medians["All"]).correlation > 0.9
