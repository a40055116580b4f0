import numpy as np
import pytest

from ..errors import ShapeError
from ..optim import (
    LrSchedule, SgdConfig, default_drop_epochs, lr_at, stretched_lr_at,
    sgd_step, schedule_from_dict)


def _one(val):
    return [None, (np.array([val]), np.array([0.0]))]


def test_lr_at_drops():
    sched = LrSchedule(
        initial_lr=0.05, drop_epochs=(150, 180, 210), drop_factor=0.1,
        total_epochs=240)
    assert lr_at(sched, 0) == 0.05
    assert lr_at(sched, 149) == 0.05
    assert np.isclose(lr_at(sched, 150), 0.005)
    assert np.isclose(lr_at(sched, 180), 0.0005)
    assert np.isclose(lr_at(sched, 239), 0.00005)
    with pytest.raises(ValueError):
        lr_at(sched, 240)
    with pytest.raises(ValueError):
        lr_at(sched, -1)


@pytest.mark.parametrize('total,expected', [
    (240, (150, 180, 210)),
    (8, (5, 6, 7)),
    (2, (1,)),
    (1, ()),
])
def test_default_drop_epochs(total, expected):
    assert default_drop_epochs(total) == expected


@pytest.mark.parametrize('kwargs', [
    {'initial_lr': 0.0},
    {'initial_lr': 0.1, 'drop_factor': 1.0},
    {'initial_lr': 0.1, 'drop_epochs': (3, 2), 'total_epochs': 5},
    {'initial_lr': 0.1, 'drop_epochs': (5,), 'total_epochs': 5},
    {'initial_lr': 0.1, 'total_epochs': 0},
])
def test_schedule_validation(kwargs):
    with pytest.raises(ValueError):
        LrSchedule(**kwargs)


def test_stretched_lr():
    sched = LrSchedule(
        initial_lr=1.0, drop_epochs=(2,), drop_factor=0.5, total_epochs=4)
    lrs = [stretched_lr_at(sched, e, 12) for e in range(12)]
    assert lrs == [1.0] * 6 + [0.5] * 6


def test_sgd_step_by_hand():
    cfg = SgdConfig(
        momentum=0.9, weight_decay=0.1, schedule=LrSchedule(0.1))
    params = _one(1.0)
    grads = _one(0.5)
    velocity = _one(0.2)
    new_p, new_v = sgd_step(params, grads, velocity, cfg, 0.1)
    assert np.isclose(new_v[1][0][0], 0.9 * 0.2 + 0.5 + 0.1)
    assert np.isclose(new_p[1][0][0], 1.0 - 0.1 * 0.78)
    assert new_p[0] is None and new_v[0] is None
    # inputs untouched
    assert params[1][0][0] == 1.0
    assert velocity[1][0][0] == 0.2


def test_sgd_zero_lr_keeps_params():
    cfg = SgdConfig()
    params = _one(1.5)
    new_p, _ = sgd_step(params, _one(3.0), _one(0.0), cfg, 0.0)
    assert new_p[1][0][0] == 1.5


def test_sgd_rejects_bad_input():
    cfg = SgdConfig()
    with pytest.raises(ValueError):
        sgd_step(_one(1.0), _one(1.0), _one(0.0), cfg, -0.1)
    bad = [None, (np.zeros(2), np.zeros(1))]
    with pytest.raises(ShapeError):
        sgd_step(_one(1.0), bad, _one(0.0), cfg, 0.1)


def test_sgd_keeps_float32():
    cfg = SgdConfig()
    p = [(np.ones(3, dtype=np.float32), np.zeros(1, dtype=np.float32))]
    new_p, new_v = sgd_step(p, p, p, cfg, 0.1)
    assert new_p[0][0].dtype == np.float32
    assert new_v[0][0].dtype == np.float32


def test_schedule_from_dict_defaults():
    sched = schedule_from_dict({'lr': 0.1, 'drop_epochs': None}, 16)
    assert sched.drop_epochs == (10, 12, 14)
    assert sched.total_epochs == 16
    sched = schedule_from_dict({'lr': 0.1, 'drop_epochs': [4]}, 16)
    assert sched.drop_epochs == (4,)
