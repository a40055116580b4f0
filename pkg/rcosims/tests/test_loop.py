import numpy as np
import pytest

from ..errors import ComputeError
from ..loop import EpochSeeds, TrainConfig, train_epoch
from ..nn import init_params, zeros_like_params
from ..optim import SgdConfig
from .utils import teacher_spec, make_data


def test_epoch_seeds_prefix():
    a = EpochSeeds(3)
    b = EpochSeeds(3)
    first = [a.next() for _ in range(5)]
    assert [b.next() for _ in range(2)] == first[:2]
    assert EpochSeeds(4).next() != first[0]


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(sgd=SgdConfig(), epochs=-1, batch_size=1, seed=0)
    with pytest.raises(ValueError):
        TrainConfig(sgd=SgdConfig(), epochs=1, batch_size=0, seed=0)


def _zero_grad_fn(loss):
    def _fn(step, params, inds, images, labels):
        return loss, zeros_like_params(params)
    return _fn


def test_train_epoch_counts_steps():
    data = make_data()
    params = init_params(teacher_spec(), 0)
    steps = []
    res = train_epoch(
        params, zeros_like_params(params), _zero_grad_fn(2.0), data.train,
        50, 1, SgdConfig(weight_decay=0.0), 0.1, step_offset=10,
        on_step=lambda s, p, loss: steps.append((s, loss)))
    assert res.n_steps == 3
    assert res.train_loss == 2.0
    assert steps == [(11, 2.0), (12, 2.0), (13, 2.0)]


def test_train_epoch_rejects_nan():
    data = make_data()
    params = init_params(teacher_spec(), 0)
    with pytest.raises(ComputeError):
        train_epoch(
            params, zeros_like_params(params), _zero_grad_fn(np.nan),
            data.train, 50, 1, SgdConfig(), 0.1)
