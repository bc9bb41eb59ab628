"""Comparison estimators: a centralized information filter and a drop-late distributed filter."""

from __future__ import annotations

import enum
from typing import Sequence

import numpy as np

from .filter import FilterBank, LocalEstimate, predict, update
from .graph import Topology
from .model import SensorModel, SystemModel


class BaselineKind(enum.Enum):
    CENTRALIZED = "centralized"
    DROP_LATE = "drop_late"


def centralized_kf(system: SystemModel, sensors: Sequence[SensorModel], measurements: Sequence, prior: LocalEstimate,
                   k: int | None = None) -> LocalEstimate:
    """One step of the filter that sees every measurement of instant k.

    ``prior`` is the posterior at k-1. With no sensors this is a pure prediction.
    """
    k = prior.s + 1 if k is None else k
    if k != prior.s + 1:
        raise ValueError(f"prior is for stamp {prior.s}, cannot step to {k}")
    pred = predict(prior, system)
    nx = system.state_dim
    theta = np.zeros(nx)
    omega = np.zeros((nx, nx))
    for sensor, y in zip(sensors, measurements):
        theta += sensor.info_vector(y, k)
        omega += sensor.info_matrix(k)
    if not len(sensors):
        return LocalEstimate(prior.sensor_id, k, k, pred.state, pred.cov)
    est = update(pred, theta, omega)
    return LocalEstimate(prior.sensor_id, k, k, est.state, est.cov)


def centralized_track(system: SystemModel, sensors: Sequence[SensorModel], measurements: Sequence[np.ndarray]) -> list[LocalEstimate]:
    """Run ``centralized_kf`` over whole measurement arrays (row k is instant k)."""
    horizon = measurements[0].shape[0] - 1 if len(measurements) else 0
    est = LocalEstimate(-1, 0, 0, system.init_mean.copy(), system.init_cov.copy())
    out = [est]
    for k in range(1, horizon + 1):
        est = centralized_kf(system, sensors, [y[k] for y in measurements], est, k)
        out.append(est)
    return out


def drop_late_dkf(system: SystemModel, sensors: Sequence[SensorModel], topology: Topology, delays,
                  max_delay: int, rounds: int | None = None) -> FilterBank:
    """Distributed filter that uses only packets arriving on time and never reprocesses.

    Returns a ``FilterBank``; call ``step(measurements)`` once per instant.
    """
    return FilterBank(system, sensors, topology, delays, max_delay, drop_late=True, rounds=rounds)
