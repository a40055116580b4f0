"""Dataset ingestion, normalization, splitting and batching.

Images are stored as float32 arrays of shape (N, C, H, W) and labels as
int64 arrays of shape (N,). Datasets are treated as immutable: every
transformation returns a new one.
"""
import gzip
import logging
import os
from dataclasses import dataclass

import numpy as np

from .errors import (
    BadMagicError, TruncatedFileError, CountMismatchError, BadLabelError,
    EmptyDatasetError)

LOGGER = logging.getLogger(__name__)

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
CIFAR10_RECORD_BYTES = 1 + 3 * 32 * 32


@dataclass(frozen=True)
class Dataset:
    """A labelled image set.

    Parameters
    ----------
    images : np.ndarray, shape (N, C, H, W)
        The images.
    labels : np.ndarray, shape (N,)
        Integer class ids, each < `class_count`.
    class_count : int
        Number of classes.
    """
    images: np.ndarray
    labels: np.ndarray
    class_count: int

    def __post_init__(self):
        if self.images.shape[0] != self.labels.shape[0]:
            raise CountMismatchError(
                '%d images but %d labels' % (
                    self.images.shape[0], self.labels.shape[0]))
        if len(self.labels) > 0 and (
                self.labels.min() < 0 or
                self.labels.max() >= self.class_count):
            raise BadLabelError(
                'labels must be in [0, %d), got range [%d, %d]' % (
                    self.class_count, self.labels.min(), self.labels.max()))

    def __len__(self):
        return self.images.shape[0]

    @property
    def input_shape(self):
        return tuple(self.images.shape[1:])

    def take(self, inds):
        """The examples at `inds`, in that order."""
        inds = np.asarray(inds, dtype=np.int64)
        return Dataset(
            images=self.images[inds],
            labels=self.labels[inds],
            class_count=self.class_count)


@dataclass(frozen=True)
class ValidationSplit:
    """A training set with a held-out validation part carved from it."""
    train: Dataset
    val: Dataset
    seed: int


@dataclass(frozen=True)
class ExperimentData:
    """Everything a student run reads: train, validation and test sets.

    `val` and `test` may be None, in which case the corresponding
    per-epoch diagnostics are skipped.
    """
    train: Dataset
    val: Dataset = None
    test: Dataset = None


def _open(path):
    if str(path).endswith('.gz'):
        return gzip.open(path, 'rb')
    return open(path, 'rb')


def _read_bytes(path):
    with _open(path) as fp:
        return fp.read()


def _parse_idx(buff, expected_magic, path):
    if len(buff) < 4:
        raise TruncatedFileError('%s: file too short for an IDX header' % path)
    magic = int(np.frombuffer(buff[:4], dtype='>u4')[0])
    if magic != expected_magic:
        raise BadMagicError(
            '%s: bad magic 0x%08x, expected 0x%08x' % (
                path, magic, expected_magic))

    n_dims = magic & 0xff
    header = 4 + 4 * n_dims
    if len(buff) < header:
        raise TruncatedFileError('%s: truncated IDX header' % path)
    dims = tuple(
        int(d) for d in np.frombuffer(buff[4:header], dtype='>u4'))
    n_bytes = int(np.prod(dims))
    if len(buff) < header + n_bytes:
        raise TruncatedFileError(
            '%s: header promises %d bytes of data, file has %d' % (
                path, n_bytes, len(buff) - header))
    data = np.frombuffer(buff[header:header+n_bytes], dtype=np.uint8)
    return data.reshape(dims)


def load_idx(images_path, labels_path, class_count=10):
    """Read an MNIST-style pair of IDX files.

    Files ending in `.gz` are decompressed on the fly.

    Parameters
    ----------
    images_path : str
        The images file (magic 0x00000803).
    labels_path : str
        The labels file (magic 0x00000801).
    class_count : int, optional
        Number of classes. Default 10.

    Returns
    -------
    data : Dataset
        Images scaled to [0, 1] with shape (N, 1, H, W).
    """
    images = _parse_idx(
        _read_bytes(images_path), IDX_IMAGES_MAGIC, images_path)
    labels = _parse_idx(
        _read_bytes(labels_path), IDX_LABELS_MAGIC, labels_path)

    if images.shape[0] != labels.shape[0]:
        raise CountMismatchError(
            '%s has %d images but %s has %d labels' % (
                images_path, images.shape[0], labels_path, labels.shape[0]))

    n, ny, nx = images.shape
    LOGGER.debug('read %d %dx%d images from %s', n, ny, nx, images_path)
    return Dataset(
        images=(images.reshape(n, 1, ny, nx).astype(np.float32) / 255),
        labels=labels.astype(np.int64),
        class_count=class_count)


def load_cifar10_bin(paths):
    """Read CIFAR-10 binary batch files.

    Parameters
    ----------
    paths : list of str
        The batch files. Each is a sequence of 3073-byte records: a label
        byte followed by 3x1024 channel-planar pixels.

    Returns
    -------
    data : Dataset
        Images scaled to [0, 1] with shape (N, 3, 32, 32).
    """
    if isinstance(paths, (str, bytes, os.PathLike)):
        paths = [paths]

    images = []
    labels = []
    for path in paths:
        buff = _read_bytes(path)
        if len(buff) % CIFAR10_RECORD_BYTES != 0:
            raise TruncatedFileError(
                '%s: length %d is not a multiple of %d' % (
                    path, len(buff), CIFAR10_RECORD_BYTES))
        recs = np.frombuffer(buff, dtype=np.uint8).reshape(
            -1, CIFAR10_RECORD_BYTES)
        lab = recs[:, 0].astype(np.int64)
        if lab.size > 0 and lab.max() > 9:
            raise BadLabelError(
                '%s: label byte %d out of range [0, 9]' % (path, lab.max()))
        labels.append(lab)
        images.append(recs[:, 1:].reshape(-1, 3, 32, 32))

    if len(images) == 0:
        images = [np.zeros((0, 3, 32, 32), dtype=np.uint8)]
        labels = [np.zeros(0, dtype=np.int64)]

    return Dataset(
        images=np.concatenate(images).astype(np.float32) / 255,
        labels=np.concatenate(labels),
        class_count=10)


def write_idx(images_path, labels_path, images, labels):
    """Write uint8 images of shape (N, H, W) and labels as IDX files."""
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    with open(images_path, 'wb') as fp:
        fp.write(np.array(
            [IDX_IMAGES_MAGIC] + list(images.shape), dtype='>u4').tobytes())
        fp.write(images.tobytes())
    with open(labels_path, 'wb') as fp:
        fp.write(np.array(
            [IDX_LABELS_MAGIC] + list(labels.shape), dtype='>u4').tobytes())
        fp.write(labels.tobytes())


def write_cifar10_bin(path, images, labels):
    """Write uint8 images of shape (N, 3, 32, 32) in CIFAR-10 binary form."""
    images = np.asarray(images, dtype=np.uint8).reshape(-1, 3 * 32 * 32)
    labels = np.asarray(labels, dtype=np.uint8).reshape(-1, 1)
    with open(path, 'wb') as fp:
        fp.write(np.hstack([labels, images]).tobytes())


def make_synthetic(
        n, input_shape=(1, 8, 8), class_count=10, seed=0, noise=0.3,
        prototype_seed=None):
    """A seeded synthetic image set: noisy copies of per-class prototypes.

    Parameters
    ----------
    n : int
        Number of examples.
    input_shape : tuple of int, optional
        Per-example shape (C, H, W).
    class_count : int, optional
        Number of classes.
    seed : int, optional
        Seed for the labels and the noise.
    noise : float, optional
        Standard deviation of the per-pixel Gaussian noise.
    prototype_seed : int, optional
        Seed for the class prototypes. Train and test sets built with
        the same prototype seed share a distribution. Defaults to `seed`.

    Returns
    -------
    data : Dataset
        Pixel values clipped to [0, 1].
    """
    if prototype_seed is None:
        prototype_seed = seed
    protos = np.random.RandomState(seed=prototype_seed).uniform(
        size=(class_count,) + tuple(input_shape))

    rng = np.random.RandomState(seed=seed)
    labels = rng.randint(0, class_count, size=n).astype(np.int64)
    images = protos[labels] + rng.normal(
        scale=noise, size=(n,) + tuple(input_shape))
    return Dataset(
        images=np.clip(images, 0, 1).astype(np.float32),
        labels=labels,
        class_count=class_count)


def split_validation(d, n, seed):
    """Carve a random validation set of `n` examples out of `d`.

    Parameters
    ----------
    d : Dataset
        The full training set.
    n : int
        Validation size, 0 < n < len(d).
    seed : int
        Seed for the permutation.

    Returns
    -------
    split : ValidationSplit
        Disjoint train and validation sets; each keeps the original
        example order.
    """
    if not 0 < n < len(d):
        raise ValueError(
            'validation size must be in (0, %d), got %r' % (len(d), n))
    perm = np.random.RandomState(seed=seed).permutation(len(d))
    val_inds = np.sort(perm[:n])
    train_inds = np.sort(perm[n:])
    return ValidationSplit(
        train=d.take(train_inds), val=d.take(val_inds), seed=seed)


def subset(d, n, seed=None):
    """The first `n` examples, or a seeded random `n` if a seed is given."""
    if n is None or n >= len(d):
        return d
    if seed is None:
        inds = np.arange(n)
    else:
        inds = np.sort(
            np.random.RandomState(seed=seed).permutation(len(d))[:n])
    return d.take(inds)


def batch_indices(n, batch_size, epoch_seed):
    """A seeded permutation of range(n), cut into chunks of `batch_size`."""
    if batch_size < 1:
        raise ValueError('batch_size must be >= 1, got %r' % batch_size)
    perm = np.random.RandomState(seed=epoch_seed).permutation(n)
    return [perm[i:i+batch_size] for i in range(0, n, batch_size)]


def batch_iter(d, batch_size, epoch_seed):
    """Iterate over one shuffled epoch.

    Yields
    ------
    inds : np.ndarray
        Indices of the examples in the batch.
    images : np.ndarray
        The images.
    labels : np.ndarray
        The labels.
    """
    for inds in batch_indices(len(d), batch_size, epoch_seed):
        yield inds, d.images[inds], d.labels[inds]


def fit_normalization(d):
    """Per-channel mean and standard deviation of a dataset.

    Returns
    -------
    mean, std : np.ndarray, shape (C,)
        The statistics, computed in float64. Zero stds are replaced by one.
    """
    if len(d) == 0:
        raise EmptyDatasetError('cannot fit normalization on an empty dataset')
    axes = (0,) + tuple(range(2, d.images.ndim))
    x = d.images.astype(np.float64)
    mean = x.mean(axis=axes)
    std = x.std(axis=axes)
    std[std == 0] = 1
    return mean, std


def apply_normalization(d, mean, std):
    """Subtract `mean` and divide by `std` channel by channel."""
    shape = (1, -1) + (1,) * (d.images.ndim - 2)
    images = (
        (d.images - np.reshape(mean, shape)) / np.reshape(std, shape))
    return Dataset(
        images=images.astype(np.float32),
        labels=d.labels,
        class_count=d.class_count)


def load_experiment_data(dcfg):
    """Load train/val/test sets as described by a `dataset` config block.

    Normalization statistics, when enabled, are fit on the training part of
    the split and applied unchanged to validation and test.

    Parameters
    ----------
    dcfg : dict
        The `dataset` block of an experiment config.

    Returns
    -------
    data : ExperimentData
        The train, validation and test sets.
    """
    name = dcfg['name']
    if name in ('mnist', 'fashion-mnist'):
        train = load_idx(dcfg['train_images'], dcfg['train_labels'])
        test = load_idx(dcfg['test_images'], dcfg['test_labels'])
    elif name == 'cifar10':
        train = load_cifar10_bin(dcfg['train_files'])
        test = load_cifar10_bin(dcfg['test_files'])
    elif name == 'synthetic':
        scfg = dcfg['synthetic']
        shape = tuple(scfg['input_shape'])
        train = make_synthetic(
            scfg['n_train'], input_shape=shape,
            class_count=scfg['class_count'], seed=scfg['seed'],
            noise=scfg['noise'], prototype_seed=scfg['seed'])
        test = make_synthetic(
            scfg['n_test'], input_shape=shape,
            class_count=scfg['class_count'], seed=scfg['seed'] + 1,
            noise=scfg['noise'], prototype_seed=scfg['seed'])
    else:
        raise ValueError('unknown dataset %r' % name)

    train = subset(train, dcfg.get('train_size'))
    test = subset(test, dcfg.get('test_size'))

    val_size = dcfg.get('val_size') or 0
    if val_size > 0:
        split = split_validation(train, val_size, dcfg.get('split_seed', 0))
        train, val = split.train, split.val
    else:
        val = None

    if dcfg.get('normalize', False):
        mean, std = fit_normalization(train)
        train = apply_normalization(train, mean, std)
        test = apply_normalization(test, mean, std)
        if val is not None:
            val = apply_normalization(val, mean, std)

    LOGGER.info(
        'dataset %s: %d train, %d val, %d test', name, len(train),
        0 if val is None else len(val), len(test))
    return ExperimentData(train=train, val=val, test=test)
