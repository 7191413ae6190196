"""Exception types shared across the package.

The CLI maps these onto exit codes: validation problems exit 2, I/O
problems exit 3, training divergence exits 4.
"""


class MalclassError(Exception):
    """Base class for all package errors."""


# --- taxonomy ---

class UnknownLabelError(MalclassError):
    """Label id/name does not exist in the taxonomy."""


class WrongLevelError(MalclassError):
    """Label exists, but not at the requested level."""


class LevelAboveError(MalclassError):
    """Projection target level is deeper than the label's own level."""


# --- corpus ---

class ParseError(MalclassError):
    """Malformed input file; carries a line number when known."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class LabelError(MalclassError):
    """A dialogue turn carries an invalid category id."""


class TurnCountError(MalclassError):
    """Dialogue has fewer than 3 or more than 10 turns (override with lenient mode)."""


# --- text / mining ---

class DimensionMismatchError(MalclassError):
    """Embedding file vector width differs from the expected dimension."""


class FileError(MalclassError):
    """A required input file is missing or unreadable."""


class UnknownDocError(MalclassError):
    """Document id is not present in the lexicon index."""


class ProbabilityRangeError(MalclassError):
    """A probability fell outside [0, 1]."""


# --- nn / models / graph ---

class ShapeMismatchError(MalclassError):
    """Tensor shapes do not conform for the requested operation."""


class ConfigError(MalclassError):
    """Invalid configuration value or unknown configuration key."""


class DivergenceError(MalclassError):
    """Training loss became NaN or infinite."""


class EmptyCorpusError(MalclassError):
    """Graph construction got no documents."""


# --- eval ---

class LengthMismatchError(MalclassError):
    """Paired sequences have different lengths."""


class InsufficientRatersError(MalclassError):
    """An item has fewer than two ratings."""


# --- cli / checkpoints ---

class LevelMismatchError(MalclassError):
    """Checkpoint was trained at a different taxonomy level than requested."""


class CheckpointError(MalclassError):
    """Checkpoint file is corrupt or has an unsupported format version."""
