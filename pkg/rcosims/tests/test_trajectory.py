import os
import struct

import numpy as np
import pytest

from ..errors import (
    CheckpointFormatError, CheckpointVersionError, CheckpointDigestError,
    CheckpointTruncatedError, SpecMismatchError, MissingCheckpointError)
from ..nn import init_params, params_equal, spec_digest, spec_from_dict
from ..optim import lr_at
from ..trajectory import (
    Checkpoint, Trajectory, train_teacher, checkpoint_bytes,
    checkpoint_from_bytes, save_checkpoint, load_checkpoint,
    save_trajectory, load_trajectory)
from .utils import (
    teacher_spec, student_spec, make_data, make_train_config,
    random_spec_dict)


def _ckpt(spec, epoch=3, seed=0, dtype=np.float32):
    return Checkpoint(
        epoch=epoch, params=init_params(spec, seed, dtype=dtype),
        lr_at_capture=0.05, train_loss=1.25, spec_hash=spec_digest(spec),
        seed=seed, step=17)


@pytest.mark.parametrize('dtype', [np.float32, np.float64])
def test_checkpoint_round_trip(tmpdir, dtype):
    spec = teacher_spec()
    ckpt = _ckpt(spec, dtype=dtype)
    path = os.path.join(str(tmpdir), 'c.rco')
    save_checkpoint(ckpt, path)
    back = load_checkpoint(path, spec=spec)
    assert params_equal(back.params, ckpt.params)
    assert back.epoch == 3
    assert back.step == 17
    assert back.lr_at_capture == 0.05
    assert back.train_loss == 1.25
    assert back.spec_hash == ckpt.spec_hash


def test_checkpoint_round_trip_random_networks(tmpdir):
    rng = np.random.RandomState(seed=23)
    path = os.path.join(str(tmpdir), 'c.rco')
    for k in range(100):
        spec = spec_from_dict(random_spec_dict(k))
        dtype = [np.float32, np.float64][rng.randint(0, 2)]
        params = init_params(spec, k, dtype=dtype)
        for p in params:
            if p is not None:
                p[1][...] = rng.normal(size=p[1].shape)
        ckpt = Checkpoint(
            epoch=int(rng.randint(1, 500)), params=params,
            lr_at_capture=float(rng.uniform(1e-5, 1)),
            train_loss=float(rng.uniform(0, 5)),
            spec_hash=spec_digest(spec), seed=int(rng.randint(0, 2**31)),
            step=int(rng.randint(0, 10**6)))
        save_checkpoint(ckpt, path)
        back = load_checkpoint(path, spec=spec)
        assert params_equal(back.params, ckpt.params)
        assert back.epoch == ckpt.epoch
        assert back.step == ckpt.step
        assert back.seed == ckpt.seed
        assert back.lr_at_capture == ckpt.lr_at_capture
        assert back.train_loss == ckpt.train_loss
        assert back.spec_hash == ckpt.spec_hash
        with open(path, 'rb') as fp:
            assert fp.read() == checkpoint_bytes(back)


def test_checkpoint_bad_magic():
    buff = bytearray(checkpoint_bytes(_ckpt(teacher_spec())))
    buff[0:1] = b'X'
    with pytest.raises(CheckpointFormatError) as e:
        checkpoint_from_bytes(bytes(buff))
    assert 'bad format' in str(e.value)


def test_checkpoint_bad_version():
    buff = bytearray(checkpoint_bytes(_ckpt(teacher_spec())))
    buff[8:12] = struct.pack('<I', 99)
    with pytest.raises(CheckpointVersionError):
        checkpoint_from_bytes(bytes(buff))


def test_checkpoint_flipped_byte():
    buff = bytearray(checkpoint_bytes(_ckpt(teacher_spec())))
    buff[-40] ^= 0xff
    with pytest.raises(CheckpointDigestError):
        checkpoint_from_bytes(bytes(buff))


@pytest.mark.parametrize('keep', [20, 60, -33, -1])
def test_checkpoint_truncated(keep):
    buff = checkpoint_bytes(_ckpt(teacher_spec()))
    with pytest.raises(CheckpointTruncatedError):
        checkpoint_from_bytes(buff[:keep])


def test_checkpoint_trailing_bytes():
    buff = checkpoint_bytes(_ckpt(teacher_spec()))
    with pytest.raises(CheckpointFormatError):
        checkpoint_from_bytes(buff + b'\0')


def test_checkpoint_spec_mismatch():
    buff = checkpoint_bytes(_ckpt(teacher_spec()))
    with pytest.raises(SpecMismatchError):
        checkpoint_from_bytes(buff, spec=student_spec())


def test_trajectory_rejects_unordered_and_foreign():
    spec = teacher_spec()
    with pytest.raises(ValueError):
        Trajectory([_ckpt(spec, 2), _ckpt(spec, 2)], spec)
    foreign = _ckpt(student_spec())
    with pytest.raises(SpecMismatchError):
        Trajectory([foreign], spec)


def test_trajectory_lookup():
    spec = teacher_spec()
    traj = Trajectory([_ckpt(spec, 1), _ckpt(spec, 4)], spec)
    assert traj.keys == [1, 4]
    assert traj.get(4) is traj.final
    assert traj.index_of(1) == 0
    with pytest.raises(MissingCheckpointError):
        traj.get(2)


@pytest.mark.parametrize('capture_every,expected', [
    (1, [1, 2, 3, 4]),
    (2, [2, 4]),
    (3, [3, 4]),
])
def test_train_teacher_capture_epochs(capture_every, expected):
    data = make_data()
    cfg = make_train_config(4, seed=1, drops=(2,))
    traj = train_teacher(
        teacher_spec(), cfg, data.train, capture_every=capture_every,
        progress=False)
    assert traj.keys == expected
    for c in traj.checkpoints:
        assert c.lr_at_capture == lr_at(cfg.sgd.schedule, c.epoch - 1)
        assert c.seed == 1
        assert np.isfinite(c.train_loss)


def test_train_teacher_capture_iterations():
    data = make_data(n_train=100, n_val=20)
    cfg = make_train_config(2, seed=1, batch_size=25)
    traj = train_teacher(
        teacher_spec(), cfg, data.train, capture_every=3,
        capture_unit='iteration', progress=False)
    assert traj.unit == 'iteration'
    assert traj.keys == [3, 6, 8]
    assert [c.epoch for c in traj.checkpoints] == [1, 2, 2]


def test_train_teacher_is_deterministic():
    data = make_data()
    cfg = make_train_config(3, seed=5)
    a = train_teacher(teacher_spec(), cfg, data.train, progress=False)
    b = train_teacher(teacher_spec(), cfg, data.train, progress=False)
    for ca, cb in zip(a.checkpoints, b.checkpoints):
        assert params_equal(ca.params, cb.params)
    assert checkpoint_bytes(a.final) == checkpoint_bytes(b.final)


def test_train_teacher_learns():
    data = make_data(n_train=300, n_val=30)
    cfg = make_train_config(6, seed=2, lr=0.05)
    traj = train_teacher(teacher_spec(), cfg, data.train, progress=False)
    assert traj.final.train_loss < traj.at(0).train_loss


def test_trajectory_round_trip(tmpdir):
    data = make_data()
    cfg = make_train_config(3, seed=1)
    traj = train_teacher(teacher_spec(), cfg, data.train, progress=False)
    directory = os.path.join(str(tmpdir), 'teacher')
    save_trajectory(traj, directory)
    assert os.path.exists(os.path.join(directory, 'manifest.json'))
    assert os.path.exists(os.path.join(directory, 'ckpt_e00002.rco'))

    back = load_trajectory(directory)
    assert back.keys == traj.keys
    assert back.spec == traj.spec
    assert back.config == traj.config
    for ca, cb in zip(traj.checkpoints, back.checkpoints):
        assert params_equal(ca.params, cb.params)


def test_load_trajectory_missing(tmpdir):
    with pytest.raises(MissingCheckpointError):
        load_trajectory(str(tmpdir))

    data = make_data()
    traj = train_teacher(
        teacher_spec(), make_train_config(2), data.train, progress=False)
    directory = os.path.join(str(tmpdir), 'teacher')
    save_trajectory(traj, directory)
    os.remove(os.path.join(directory, 'ckpt_e00001.rco'))
    with pytest.raises(MissingCheckpointError):
        load_trajectory(directory)


def test_train_teacher_rejects_bad_settings():
    data = make_data()
    with pytest.raises(ValueError):
        train_teacher(
            teacher_spec(), make_train_config(2), data.train,
            capture_every=0, progress=False)
    with pytest.raises(ValueError):
        train_teacher(
            teacher_spec(), make_train_config(0), data.train, progress=False)
