"""Error types raised across the pipeline.

Every error derives from :class:`CommReidError` so the CLI can turn any of
them into a one-line diagnostic. Errors describing bad input values also
derive from :class:`ValueError`, in keeping with scikit-learn conventions.
"""


class CommReidError(Exception):
    """Base class for all package errors."""


class MalformedLine(CommReidError, ValueError):
    def __init__(self, lineno, reason, path=None):
        self.lineno = lineno
        self.reason = reason
        where = f"{path}:" if path else "line "
        super().__init__(f"{where}{lineno}: {reason}")


class DuplicateUser(CommReidError, ValueError):
    def __init__(self, user_id):
        self.user_id = user_id
        super().__init__(f"duplicate user_id {user_id!r}")


class EmptyCorpus(CommReidError, ValueError):
    pass


class ZeroEmbedding(CommReidError, ValueError):
    """Projection of a bag of words has (near) zero norm."""


class InsufficientCorpus(CommReidError, ValueError):
    pass


class InitMismatch(CommReidError, ValueError):
    pass


class TrainingDiverged(CommReidError, FloatingPointError):
    pass


class DegenerateLabels(CommReidError, ValueError):
    pass


class DimensionMismatch(CommReidError, ValueError):
    pass


class EmptyIndex(CommReidError, ValueError):
    pass


class CorruptIndex(CommReidError, ValueError):
    pass


class CorruptFile(CommReidError, ValueError):
    """A binary artifact (embedding matrix) failed to parse."""


class EmptyInput(CommReidError, ValueError):
    pass


class MemberMissing(CommReidError, KeyError):
    def __init__(self, user_id):
        self.user_id = user_id
        super().__init__(f"community member {user_id!r} has no embedding")

    def __str__(self):
        return self.args[0]


class MatrixMismatch(CommReidError, ValueError):
    pass


class InvalidClusterCount(CommReidError, ValueError):
    pass


class ConfigInvalid(CommReidError, ValueError):
    pass
