"""Exceptions raised by rcosims and the exit codes the CLI maps them to."""

# exit code categories
OK = 0
CONFIG_FAILURE = 2
DATA_FAILURE = 3
COMPUTE_FAILURE = 4
CHECKPOINT_FAILURE = 5

EXIT_CODE_MAP = {
    'ok': OK,
    OK: 'ok',

    'config': CONFIG_FAILURE,
    CONFIG_FAILURE: 'config',

    'data': DATA_FAILURE,
    DATA_FAILURE: 'data',

    'compute': COMPUTE_FAILURE,
    COMPUTE_FAILURE: 'compute',

    'checkpoint': CHECKPOINT_FAILURE,
    CHECKPOINT_FAILURE: 'checkpoint',
}


class RcoError(Exception):
    """
    base class for all rcosims errors
    """
    exit_code = COMPUTE_FAILURE

    def __init__(self, value):
        super(RcoError, self).__init__(value)
        self.value = value

    def __str__(self):
        return str(self.value)


class ConfigError(RcoError, ValueError):
    """
    an experiment config failed validation

    Parameters
    ----------
    field : str
        Dotted path of the offending field, e.g. `strategy.gap`.
    msg : str
        What is wrong with it.
    """
    exit_code = CONFIG_FAILURE

    def __init__(self, field, msg):
        self.field = field
        super(ConfigError, self).__init__('%s: %s' % (field, msg))


class DataError(RcoError, ValueError):
    """
    a dataset file could not be read
    """
    exit_code = DATA_FAILURE


class BadMagicError(DataError):
    """
    the file does not start with the expected magic number
    """


class TruncatedFileError(DataError):
    """
    the file ended before the header said it would
    """


class CountMismatchError(DataError):
    """
    images and labels disagree on the number of examples
    """


class BadLabelError(DataError):
    """
    a label is outside of [0, class_count)
    """


class EmptyDatasetError(DataError):
    """
    an operation needed at least one example
    """


class ShapeError(RcoError, ValueError):
    """
    an array did not have the shape the network or loss expected
    """


class CheckpointError(RcoError):
    """
    base class for checkpoint store failures
    """
    exit_code = CHECKPOINT_FAILURE


class CheckpointFormatError(CheckpointError):
    """
    bad format: the magic header is wrong
    """


class CheckpointVersionError(CheckpointError):
    """
    the file was written by an unsupported format version
    """


class CheckpointDigestError(CheckpointError):
    """
    the payload digest does not match the stored one
    """


class CheckpointTruncatedError(CheckpointError):
    """
    the file is shorter than its header promises
    """


class SpecMismatchError(CheckpointError):
    """
    a checkpoint was loaded against a network spec it was not made for
    """


class MissingCheckpointError(CheckpointError):
    """
    a schedule references an anchor that is not in the trajectory
    """


class ComputeError(RcoError):
    """
    training produced non-finite values
    """
    exit_code = COMPUTE_FAILURE


def get_exit_code(val):
    """
    get the numerical exit code for a category name or an exception

    Parameters
    ----------
    val : str, int or Exception
        A category name, an exit code, or an exception instance.
    """
    if isinstance(val, BaseException):
        return getattr(val, 'exit_code', COMPUTE_FAILURE)

    assert val in EXIT_CODE_MAP, 'invalid exit code: %s' % val
    if isinstance(val, int):
        return val
    return EXIT_CODE_MAP[val]
