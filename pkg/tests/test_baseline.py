import numpy as np
import pytest

from adkf.baseline import BaselineKind, centralized_kf, centralized_track
from adkf.filter import LocalEstimate, covariance_update, predict
from adkf.model import SensorModel, constant_acceleration


def prior():
    return LocalEstimate(0, 0, 0, np.zeros(3), np.eye(3))


def test_one_sensor_is_a_local_kalman_filter():
    m = constant_acceleration(0.01)
    s = SensorModel(1, [[1, 0, 0]], [[0.8]])
    out = centralized_kf(m, [s], [[0.3]], prior())
    ref = covariance_update(predict(prior(), m), s.obs_matrix, s.meas_cov, [0.3])
    assert np.allclose(out.state, ref.state) and np.allclose(out.cov, ref.cov)


def test_no_sensors_is_prediction():
    m = constant_acceleration(0.01)
    out = centralized_kf(m, [], [], prior())
    ref = predict(prior(), m)
    assert np.allclose(out.state, ref.state) and np.allclose(out.cov, ref.cov) and out.s == 1


def test_wrong_instant():
    with pytest.raises(ValueError):
        centralized_kf(constant_acceleration(0.01), [], [], prior(), k=3)


def test_centralized_covariance_dominated_by_single_sensor(tree_scenario):
    sc = tree_scenario
    ys = [np.ones((11, 1)) for _ in sc.sensors]
    full = centralized_track(sc.system, sc.sensors, ys)
    one = centralized_track(sc.system, sc.sensors[:1], ys[:1])
    for a, b in zip(full[1:], one[1:]):
        assert np.linalg.eigvalsh(b.cov - a.cov)[0] >= -1e-12


def test_kinds():
    assert BaselineKind("drop_late") is BaselineKind.DROP_LATE
