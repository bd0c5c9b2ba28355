"""Exception types shared across the package."""


class MolegraphError(Exception):
    """Base class for all package errors."""


# --- SMILES parsing ---

class EmptyInput(MolegraphError):
    """Blank or whitespace-only SMILES input."""


class SmilesSyntaxError(MolegraphError):
    """Malformed SMILES; `offset` is the byte position of the problem."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at offset {offset})"
        super().__init__(message)
        self.offset = offset


class UnsupportedElement(SmilesSyntaxError):
    """Atom symbol outside the supported element set."""


class UnbalancedParentheses(SmilesSyntaxError):
    """Branch open/close mismatch."""


class UnmatchedRingClosure(SmilesSyntaxError):
    """Ring-closure digit opened but never closed (or closed twice)."""


# --- batching / shapes ---

class SizeMismatch(MolegraphError):
    """Aligned lists or arrays disagree in length."""


class DegreeOverflow(MolegraphError):
    """A node has more neighbours than the supported maximum degree."""


class EmptyBatch(MolegraphError):
    """Batch statistics requested over zero rows."""


# --- differentiation ---

class NonScalarLoss(MolegraphError):
    """backward() requires a scalar output node."""


class NonFiniteValue(MolegraphError):
    """NaN or infinity encountered on the tape (divergence signal)."""


class NonFiniteGradient(MolegraphError):
    """NaN or infinity in a gradient; names the offending parameter."""


# --- losses / metrics ---

class AllMasked(MolegraphError):
    """Loss requested but every label entry is masked out."""


class NegativeGamma(MolegraphError):
    """Focal-loss focusing parameter must be >= 0."""


class DegenerateLabels(MolegraphError):
    """Metric needs both classes (or non-constant truth) present."""


class ConstantTruth(DegenerateLabels):
    """Pearson correlation undefined for constant ground truth."""


class TooFewPoints(MolegraphError):
    """Metric needs more data points than were supplied."""


# --- datasets ---

class MissingColumn(MolegraphError):
    """Named CSV column absent from the header."""


class EmptyDataset(MolegraphError):
    """No rows survived loading."""


class TooFewRows(MolegraphError):
    """Dataset too small to split."""


class ZeroVariance(MolegraphError):
    """Regression targets have zero variance on the training split."""


# --- model / checkpoints ---

class InvalidConfig(MolegraphError):
    """Model configuration violates its invariants."""


class VersionMismatch(MolegraphError):
    """Checkpoint written by an incompatible format version."""


class CorruptPayload(MolegraphError):
    """Checkpoint failed magic, length, or shape validation."""
