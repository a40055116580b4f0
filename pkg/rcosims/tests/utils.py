import numpy as np

from ..data import ExperimentData, make_synthetic, split_validation
from ..loop import TrainConfig
from ..nn import spec_from_dict
from ..optim import LrSchedule, SgdConfig

TEACHER_SPEC = {
    'input_shape': [1, 4, 4],
    'layers': [
        {'kind': 'flatten'},
        {'kind': 'dense', 'fan_in': 16, 'fan_out': 12},
        {'kind': 'relu'},
        {'kind': 'dense', 'fan_in': 12, 'fan_out': 3},
    ],
    'num_classes': 3,
    'feature_tap': 2,
}

STUDENT_SPEC = {
    'input_shape': [1, 4, 4],
    'layers': [
        {'kind': 'flatten'},
        {'kind': 'dense', 'fan_in': 16, 'fan_out': 6},
        {'kind': 'relu'},
        {'kind': 'dense', 'fan_in': 6, 'fan_out': 3},
    ],
    'num_classes': 3,
    'feature_tap': 2,
}


def teacher_spec():
    return spec_from_dict(TEACHER_SPEC)


def student_spec():
    return spec_from_dict(STUDENT_SPEC)


def make_data(n_train=120, n_val=30, n_test=40, seed=0):
    full = make_synthetic(
        n_train + n_val, input_shape=(1, 4, 4), class_count=3, seed=seed,
        noise=0.2)
    split = split_validation(full, n_val, seed)
    test = make_synthetic(
        n_test, input_shape=(1, 4, 4), class_count=3, seed=seed + 1,
        noise=0.2, prototype_seed=seed)
    return ExperimentData(train=split.train, val=split.val, test=test)


def make_train_config(epochs, seed=0, batch_size=32, lr=0.05, drops=()):
    sched = LrSchedule(
        initial_lr=lr, drop_epochs=tuple(drops), drop_factor=0.1,
        total_epochs=max(epochs, 1))
    return TrainConfig(
        sgd=SgdConfig(momentum=0.9, weight_decay=5e-4, schedule=sched),
        epochs=epochs, batch_size=batch_size, seed=seed)


def numeric_grad(func, arr, inds, eps=1e-6):
    """Central differences of a scalar function w.r.t. entries of `arr`."""
    out = []
    for ind in inds:
        old = arr[ind]
        arr[ind] = old + eps
        fp = func()
        arr[ind] = old - eps
        fm = func()
        arr[ind] = old
        out.append((fp - fm) / (2 * eps))
    return np.array(out)


def random_entries(rng, shape, n):
    return [
        tuple(int(rng.randint(0, s)) for s in shape) for _ in range(n)]


def random_spec_dict(seed):
    """A small random network spec; conv or dense input, random tap."""
    rng = np.random.RandomState(seed=seed)
    layers = []
    if rng.uniform() < 0.5:
        chans = rng.randint(1, 4)
        size = int(rng.choice([2, 4, 8]))
        input_shape = [chans, size, size]
        for _ in range(rng.randint(0, 3)):
            out = rng.randint(1, 4)
            layers.append(
                {'kind': 'conv2d-3x3', 'fan_in': chans, 'fan_out': out})
            chans = out
            if rng.uniform() < 0.7:
                layers.append({'kind': 'relu'})
            if size % 2 == 0 and rng.uniform() < 0.5:
                layers.append({'kind': 'avgpool2x2'})
                size //= 2
        layers.append({'kind': 'flatten'})
        width = chans * size * size
    else:
        width = rng.randint(2, 8)
        input_shape = [width]

    num_classes = rng.randint(2, 6)
    for _ in range(rng.randint(0, 3)):
        out = rng.randint(2, 8)
        layers.append({'kind': 'dense', 'fan_in': width, 'fan_out': out})
        layers.append({'kind': 'relu'})
        width = out
    layers.append(
        {'kind': 'dense', 'fan_in': width, 'fan_out': num_classes})
    return {
        'input_shape': input_shape,
        'layers': layers,
        'num_classes': num_classes,
        'feature_tap': rng.randint(0, len(layers)),
    }
