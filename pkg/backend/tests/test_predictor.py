from dataclasses import replace

import numpy as np
import pytest

from app.core.exceptions import DimensionMismatchError, EmptySequenceError
from app.schemas.schemas import MobilityProfile, Topology
from app.services.mobility import Area, generate_trajectories
from app.services.predictor import (
    WindowSet,
    batch_loss_and_grads,
    build_windows,
    calibrate,
    evaluate_mse,
    init_predictor,
    load_predictor,
    loss,
    persistence_mse,
    predict_batch,
    predict_next,
    save_predictor,
    train,
    window_features,
)

TOPOLOGY = Topology(bs_positions=[(-100.0, 0.0), (0.0, 0.0), (100.0, 0.0)])


def _windows(rng, samples=50, num_users=2, window_k=3):
    start = rng.uniform(-80.0, 80.0, size=(samples, 1, num_users, 2))
    steps = rng.integers(-1, 2, size=(samples, window_k, num_users, 2)).cumsum(axis=1)
    traj = np.concatenate([start, start + steps], axis=1)
    return build_windows(traj, window_k)


def _drifting_windows(rng, samples=50, window_k=3):
    # usuário 0 anda para a direita, usuário 1 para trás, cada um com prob. 0.7
    start = rng.uniform(-80.0, 80.0, size=(samples, 1, 2, 2))
    moves = rng.random((samples, window_k, 2, 1)) < 0.7
    steps = moves * np.array([[1.0, 0.0], [0.0, -1.0]])
    traj = np.concatenate([start, start + steps.cumsum(axis=1)], axis=1)
    return build_windows(traj, window_k)


def _with_head(model, rng):
    return replace(model, out=rng.normal(0.0, 0.5, size=model.out.shape))


def test_new_model_repeats_last_position(rng):
    model = init_predictor(3, 4, 5, rng)
    history = [rng.uniform(-50, 50, size=6) for _ in range(5)]
    np.testing.assert_array_equal(predict_next(model, history), history[-1])


def test_untrained_model_matches_persistence(rng):
    windows = _windows(rng)
    per_user, mean = evaluate_mse(init_predictor(2, 6, 3, rng), windows)
    base_per_user, base_mean = persistence_mse(windows)
    np.testing.assert_array_equal(per_user, base_per_user)
    assert mean == base_mean


def test_loss_values():
    assert loss([1.0, 0.0], [1.0, 0.0]) == 0.0
    assert loss([0.0, 0.0], [1.0, 0.0]) == loss([1.0, 0.0], [0.0, 0.0])
    assert loss(np.zeros(5), [1.0, 0.0, 0.0, 0.0, 0.0]) == pytest.approx(0.2)


def test_window_counts_and_targets():
    traj = np.arange(2 * 7 * 3 * 2, dtype=float).reshape(2, 7, 3, 2)
    windows = build_windows(traj, 4)
    assert windows.inputs.shape == (2 * 3, 4, 6)
    assert windows.targets.shape == (6, 6)
    np.testing.assert_array_equal(windows.inputs[0], traj[0, :4].reshape(4, 6))
    np.testing.assert_array_equal(windows.targets[0], traj[0, 4].ravel())
    # a primeira janela da segunda trajetória não mistura estados da primeira
    np.testing.assert_array_equal(windows.inputs[3, 0], traj[1, 0].ravel())


def test_short_trajectories_give_no_windows():
    with pytest.raises(EmptySequenceError):
        build_windows(np.zeros((3, 5, 2, 2)), 5)


def test_window_features_hold_scaled_positions_and_steps():
    model = init_predictor(1, 3, 3, zero=True, scale=10.0, motion=2.0)
    inputs = np.array([[[0.0, 10.0], [2.0, 10.0], [2.0, 6.0]]])
    features = window_features(model, inputs)
    assert features.shape == (3, 1, 4)
    np.testing.assert_allclose(features[:, 0, :2], [[0.0, 1.0], [0.2, 1.0], [0.2, 0.6]])
    np.testing.assert_allclose(features[:, 0, 2:], [[0.0, 0.0], [1.0, 0.0], [0.0, -2.0]])
    with pytest.raises(DimensionMismatchError):
        window_features(model, np.zeros((1, 3, 4)))


def test_short_history_is_left_padded(rng):
    model = _with_head(init_predictor(1, 4, 4, rng), rng)
    earliest, latest = np.array([10.0, 20.0]), np.array([11.0, 20.0])
    padded = predict_next(model, [earliest, latest])
    explicit = predict_next(model, [earliest, earliest, earliest, latest])
    np.testing.assert_array_equal(padded, explicit)
    with pytest.raises(EmptySequenceError):
        predict_next(model, [])


def test_predict_batch_matches_predict_next(rng):
    model = _with_head(init_predictor(2, 5, 3, rng), rng)
    windows = _windows(rng, samples=4)
    batch = predict_batch(model, windows)
    for i in range(len(windows)):
        np.testing.assert_allclose(batch[i], predict_next(model, list(windows.inputs[i])), rtol=1e-12, atol=1e-12)


def test_training_reduces_loss(rng):
    windows = _drifting_windows(rng)
    model = init_predictor(2, 8, 3, np.random.default_rng(0))
    _, curve = train(model, windows, lr=0.05, batch_size=10, epochs=20, rng=np.random.default_rng(1))
    assert len(curve) == 20
    assert curve[-1] < curve[0]


def test_training_is_deterministic(rng):
    windows = _windows(rng, samples=20)
    model = init_predictor(2, 4, 3, np.random.default_rng(0))
    first, curve_a = train(model, windows, 0.01, 8, 3, np.random.default_rng(9))
    second, curve_b = train(model, windows, 0.01, 8, 3, np.random.default_rng(9))
    assert curve_a == curve_b
    np.testing.assert_array_equal(first.out, second.out)
    np.testing.assert_array_equal(first.gru.U_h, second.gru.U_h)


def test_small_lr_full_batch_loss_never_increases(rng):
    windows = _drifting_windows(rng, samples=16)
    model = init_predictor(2, 6, 3, np.random.default_rng(2))
    _, curve = train(model, windows, lr=1e-4, batch_size=len(windows), epochs=10, rng=rng)
    assert all(b <= a + 1e-12 for a, b in zip(curve, curve[1:]))


def test_batch_grads_are_finite(rng):
    model = _with_head(init_predictor(2, 4, 3, rng), rng)
    value, grads, d_out = batch_loss_and_grads(model, _windows(rng, samples=5))
    assert np.isfinite(value)
    assert all(np.isfinite(g).all() for g in grads.as_dict().values())
    assert d_out.shape == model.out.shape


def test_empty_training_set_is_rejected(rng):
    empty = WindowSet(inputs=np.zeros((0, 3, 4)), targets=np.zeros((0, 4)))
    with pytest.raises(EmptySequenceError):
        train(init_predictor(2, 4, 3, rng), empty, 0.01, 4, 1, rng)
    with pytest.raises(EmptySequenceError):
        calibrate(init_predictor(2, 4, 3, rng), empty)


def test_calibration_recovers_output_scale(rng):
    model = _with_head(init_predictor(2, 5, 3, rng), rng)
    windows = _windows(rng, samples=30)
    last = windows.inputs[:, -1]
    step = predict_batch(model, windows) - last
    scaled = WindowSet(inputs=windows.inputs, targets=last + 0.5 * step)
    assert calibrate(model, scaled).gain == pytest.approx(0.5)


def test_calibration_falls_back_to_persistence(rng):
    model = _with_head(init_predictor(2, 5, 3, rng), rng)
    windows = _windows(rng, samples=30)
    last = windows.inputs[:, -1]
    opposite = WindowSet(inputs=windows.inputs, targets=last - (predict_batch(model, windows) - last))
    calibrated = calibrate(model, opposite)
    assert calibrated.gain == 0.0
    np.testing.assert_array_equal(evaluate_mse(calibrated, opposite)[0], persistence_mse(opposite)[0])


def test_persistence_is_exact_on_still_users():
    traj = np.tile(np.array([[1.0, 2.0], [3.0, 4.0]]), (4, 8, 1, 1))
    per_user, mean = persistence_mse(build_windows(traj, 3))
    np.testing.assert_array_equal(per_user, [0.0, 0.0])
    assert mean == 0.0


def test_evaluate_mse_sums_both_coordinates():
    model = init_predictor(1, 3, 2, zero=True)
    traj = np.array([[[[0.0, 0.0]], [[0.0, 0.0]], [[3.0, 4.0]]]])
    per_user, mean = evaluate_mse(model, build_windows(traj, 2))
    assert per_user.tolist() == [25.0]
    assert mean == 25.0


def test_checkpoint_round_trip(tmp_path, rng):
    model = replace(_with_head(init_predictor(2, 5, 4, rng, scale=120.0, motion=2.0), rng), gain=0.75)
    save_predictor(tmp_path / "predictor.json", model)
    loaded = load_predictor(tmp_path / "predictor.json")
    assert loaded.window_k == 4 and loaded.scale == 120.0
    assert loaded.motion == 2.0 and loaded.gain == 0.75
    history = [rng.uniform(-50, 50, size=4) for _ in range(4)]
    np.testing.assert_array_equal(predict_next(loaded, history), predict_next(model, history))


@pytest.mark.slow
def test_training_on_random_walks_stays_near_persistence():
    rng = np.random.default_rng(11)
    profiles = [MobilityProfile()] * 3
    data = generate_trajectories(3, 400, 30, profiles, rng, TOPOLOGY, Area(300.0, 100.0))
    train_set = build_windows(data[:320], 5)
    validation, holdout = build_windows(data[320:360], 5), build_windows(data[360:], 5)
    model = init_predictor(3, 32, 5, np.random.default_rng(0))
    trained, curve = train(model, train_set, lr=0.05, batch_size=32, epochs=15, rng=np.random.default_rng(1))
    _, after = evaluate_mse(calibrate(trained, validation), holdout)
    _, baseline = persistence_mse(holdout)
    assert all(np.isfinite(curve))
    assert after <= 1.01 * baseline
