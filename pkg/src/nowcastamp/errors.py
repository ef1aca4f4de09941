"""Exception taxonomy shared across the package.

Two families matter for the CLI exit codes: ContractViolation (and its
subclasses) map to exit 1, file/parse errors map to exit 2.
"""


class ContractViolation(Exception):
    """A documented precondition or invariant was violated by the caller."""


class NonFiniteGradientError(ContractViolation):
    """Optimizer received NaN/inf gradients; skip logic should have caught this."""


class LossScaleUnderflowError(ContractViolation):
    """Dynamic loss scale collapsed below its floor; training diverged."""


class ModelNameError(ValueError):
    """A model name did not match the U{depth}-{filters} pattern."""


class SeqzFormatError(ValueError):
    """Base class for SEQZ container parse failures."""


class SeqzBadMagic(SeqzFormatError):
    pass


class SeqzBadVersion(SeqzFormatError):
    pass


class SeqzBadDtype(SeqzFormatError):
    pass


class SeqzTruncated(SeqzFormatError):
    pass


class PowerLogError(ValueError):
    """Malformed power-telemetry CSV; message carries the offending line number."""


class RunRecordError(ValueError):
    """Malformed run-record CSV."""
