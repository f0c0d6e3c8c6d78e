"""Exception hierarchy. Each class maps to one CLI exit code."""


class NetcovError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(NetcovError):
    """A run configuration or function argument is out of its allowed domain."""


class FormatError(NetcovError):
    """An on-disk artifact (model bundle, profile, dataset) is malformed."""


class ValidationError(NetcovError):
    """A structural invariant of a model, tensor or dataset does not hold."""


class CapabilityError(NetcovError):
    """The artifact asks for something this engine does not implement."""


class InputError(NetcovError):
    """Runtime inputs (test data, labels, traces) do not fit the model."""


class NumericError(NetcovError):
    """Evaluation produced non-finite values."""
