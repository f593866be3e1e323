"""Exception hierarchy.

Every error carries a short ``category`` string; the CLI prints it as the
machine-parsable first token of its one-line failure message.
"""


class MirrorabilityError(Exception):
    category = "Error"


class NotAPermutation(MirrorabilityError):
    category = "NotAPermutation"


class NotInvolutive(MirrorabilityError):
    category = "NotInvolutive"


class LengthMismatch(MirrorabilityError, ValueError):
    category = "LengthMismatch"


class EmptyShape(MirrorabilityError, ValueError):
    category = "EmptyShape"


class NonFiniteShape(MirrorabilityError, ValueError):
    category = "NonFiniteShape"


class ZeroSize(MirrorabilityError, ValueError):
    category = "ZeroSize"


class InsufficientData(MirrorabilityError, ValueError):
    category = "InsufficientData"


class ConstantInput(MirrorabilityError, ValueError):
    category = "ConstantInput"


class MissingError(MirrorabilityError, KeyError):
    category = "MissingError"

    def __str__(self):
        return Exception.__str__(self)


class MTooLarge(MirrorabilityError, ValueError):
    category = "MTooLarge"


class MMismatch(MirrorabilityError, ValueError):
    category = "MMismatch"


class UniverseMismatch(MirrorabilityError, ValueError):
    category = "UniverseMismatch"


class DegenerateShapes(MirrorabilityError, ValueError):
    category = "DegenerateShapes"


class SingularSystem(MirrorabilityError, ArithmeticError):
    category = "SingularSystem"


class OutlierUnsupported(MirrorabilityError, ValueError):
    category = "OutlierUnsupported"


class NoPositives(MirrorabilityError, ValueError):
    category = "NoPositives"


class NoBadLabels(MirrorabilityError, ValueError):
    category = "NoBadLabels"


class Unachievable(MirrorabilityError, ValueError):
    category = "Unachievable"


class MalformedRow(MirrorabilityError, ValueError):
    category = "MalformedRow"

    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class InconsistentK(MalformedRow):
    category = "InconsistentK"


class DuplicateId(MalformedRow):
    category = "DuplicateId"


class ConfigError(MirrorabilityError, ValueError):
    category = "ConfigError"


class ModelFormatError(MirrorabilityError, ValueError):
    category = "ModelFormatError"
