import numpy as np
import pytest

from adkf.model import (ModelError, SensorModel, SystemModel, constant_acceleration, find_observability_horizon,
                        measure, noise_rng, observability_gramian, simulate_measurements, simulate_truth,
                        sqrt_psd, step_truth, transition_eta, validate_model)

T = 0.01


def test_step_truth_identity():
    m = SystemModel(np.eye(3), np.zeros((3, 3)), np.zeros(3), np.eye(3))
    assert np.allclose(step_truth(m, [1, 2, 3]), [1, 2, 3])


def test_step_truth_constant_acceleration():
    m = constant_acceleration(T, process_var=0.0)
    assert np.allclose(step_truth(m, [0, 1, 0]), [0.01, 1, 0])


def test_step_truth_scalar():
    m = SystemModel(2.0, 0.0, 0.0, 1.0)
    assert np.allclose(step_truth(m, 3.0), [6.0])


def test_step_truth_shape_error():
    with pytest.raises(ModelError):
        step_truth(constant_acceleration(T), [1.0, 2.0])


@pytest.mark.parametrize("H,expected", [([[1, 0, 0]], [5]), ([[0, 1, 0]], [1]), (np.eye(3), [5, 1, 2])])
def test_measure_noiseless(H, expected):
    s = SensorModel(1, H, 1e-12 * np.eye(np.atleast_2d(H).shape[0]))
    assert np.allclose(measure(s, [5, 1, 2]), expected)


def test_time_varying_transition():
    m = SystemModel(lambda k: np.array([[1.0 + k]]), np.zeros((1, 1)), [0.0], [[1.0]])
    assert m.transition_at(3)[0, 0] == 4.0
    phi, q = m.stacked(2)
    assert phi[:, 0, 0].tolist() == [1.0, 2.0, 3.0]


def test_sqrt_psd_reconstructs(rng):
    A = rng.standard_normal((4, 2))
    cov = A @ A.T  # rank deficient
    L = sqrt_psd(cov)
    assert np.allclose(L @ L.T, cov)


def test_noise_streams_are_keyed():
    a = noise_rng(1, 0, 1, 3).standard_normal(5)
    b = noise_rng(1, 0, 1, 3).standard_normal(5)
    c = noise_rng(1, 0, 1, 4).standard_normal(5)
    assert np.array_equal(a, b) and not np.array_equal(a, c)


def test_measurements_do_not_depend_on_other_sensors():
    m = constant_acceleration(T)
    truth = simulate_truth(m, 20, seed=3)
    s1 = SensorModel(1, [[1, 0, 0]], [[0.5]])
    s2 = SensorModel(2, [[0, 1, 0]], [[2.0]])
    both = simulate_measurements([s1, s2], truth, seed=3)
    alone = simulate_measurements([s1], truth, seed=3)
    assert np.array_equal(both[0][1:], alone[0][1:])
    assert np.isnan(both[0][0]).all()


def test_vectorised_and_per_step_measurements_agree():
    m = constant_acceleration(T)
    truth = simulate_truth(m, 30, seed=5)
    const = SensorModel(1, [[1, 0, 0]], [[0.8]])
    varying = SensorModel(1, lambda k: np.array([[1.0, 0, 0]]), lambda k: np.array([[0.8]]))
    a = simulate_measurements([const], truth, seed=5)[0]
    b = simulate_measurements([varying], truth, seed=5)[0]
    assert np.allclose(a[1:], b[1:], atol=1e-12)


def test_truth_statistics():
    m = SystemModel(np.eye(2), np.diag([1.0, 4.0]), np.zeros(2), np.zeros((2, 2)))
    x = simulate_truth(m, 20000, seed=11)
    steps = np.diff(x, axis=0)
    assert np.allclose(steps.var(axis=0), [1.0, 4.0], rtol=0.05)


def test_gramian_scalar():
    m = SystemModel(1.0, 1.0, 0.0, 1.0)
    rep = observability_gramian(m, [SensorModel(1, 1.0, 1.0)], 0, 0)
    assert rep.alpha == pytest.approx(1.0) and rep.beta == pytest.approx(1.0)


def test_gramian_unobservable():
    m = SystemModel(np.eye(2), np.eye(2), np.zeros(2), np.eye(2))
    sensor = SensorModel(1, [[1.0, 0.0]], [[1.0]])
    for h in range(4):
        assert observability_gramian(m, [sensor], 0, h).alpha == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(ModelError):
        find_observability_horizon(m, [sensor], max_horizon=5)


def test_gramian_matches_explicit_assembly(tree_scenario):
    sc = tree_scenario
    rep = observability_gramian(sc.system, sc.sensors, 0, 2)
    F = sc.system.transition_at(0)
    M = np.zeros((3, 3))
    for l in range(3):
        O = np.linalg.matrix_power(F, l)
        for s in sc.sensors:
            H, R = s.obs_matrix_at(l), s.meas_cov_at(l)
            M += O.T @ H.T @ np.linalg.inv(R) @ H @ O
    ev = np.linalg.eigvalsh(M)
    assert rep.alpha == pytest.approx(ev[0]) and rep.beta == pytest.approx(ev[-1])


def test_single_position_sensor_needs_horizon():
    m = constant_acceleration(T)
    rep = find_observability_horizon(m, [SensorModel(1, [[1, 0, 0]], [[1.0]])])
    assert rep.horizon == 2 and rep.alpha > 0


def test_eta():
    assert transition_eta(SystemModel(np.eye(3), np.eye(3), np.zeros(3), np.eye(3))) == pytest.approx(1.0)
    F = constant_acceleration(T).transition
    expected = np.linalg.svd(np.linalg.inv(F), compute_uv=False).min()
    assert transition_eta(constant_acceleration(T)) == pytest.approx(expected)


def test_validate_flags_indefinite_q():
    m = SystemModel(np.eye(2), np.diag([1.0, -1.0]), np.zeros(2), np.eye(2))
    rep = validate_model(m, [SensorModel(1, np.eye(2), np.eye(2))])
    assert "process_cov not PSD" in rep.violations
    with pytest.raises(ModelError):
        rep.raise_if_invalid()


def test_validate_flags_singular_transition():
    m = SystemModel(np.zeros((2, 2)), np.eye(2), np.zeros(2), np.eye(2))
    rep = validate_model(m, [SensorModel(1, np.eye(2), np.eye(2))])
    assert not rep.ok


def test_validate_reference_model(tree_scenario):
    rep = validate_model(tree_scenario.system, tree_scenario.sensors)
    assert rep.ok and rep.observable
