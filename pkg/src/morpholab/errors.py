"""Exception types shared across the package."""


class MorpholabError(Exception):
    """Base class for all package errors."""


class UnknownSymbol(MorpholabError):
    """Raised when text cannot be segmented into inventory phonemes.

    Carries the offending substring and its character offset so parse
    errors in data files can be reported precisely.
    """

    def __init__(self, substring, offset, context=None):
        self.substring = substring
        self.offset = offset
        self.context = context
        where = f" in {context!r}" if context else ""
        super().__init__(
            f"unknown phoneme {substring!r} at offset {offset}{where}"
        )


class ShapeMismatch(MorpholabError):
    """Incompatible tensor shapes; reports both operands."""

    def __init__(self, op, *shapes):
        self.op = op
        self.shapes = shapes
        rendered = " vs ".join(str(tuple(s)) for s in shapes)
        super().__init__(f"{op}: incompatible shapes {rendered}")


class NotScalar(MorpholabError):
    """Backward pass requested from a non-scalar tensor."""


class DimensionMismatch(MorpholabError):
    """Encoded feature vector length does not match the model."""


class EmptyCandidates(MorpholabError):
    """Decoding requested with an empty candidate set."""


class EmptyContext(MorpholabError):
    """Attention requested over zero encoder states."""


class EmptyDataset(MorpholabError):
    """Training requested on an empty dataset."""


class ParseError(MorpholabError):
    """Malformed row in a data file."""

    def __init__(self, row, reason):
        self.row = row
        self.reason = reason
        super().__init__(f"row {row}: {reason}")


class LengthMismatch(MorpholabError):
    """Paired sequences of unequal length."""


class DegenerateTable(MorpholabError):
    """Contingency table with a zero marginal."""


class CheckpointError(MorpholabError):
    """Unreadable, corrupt, or incompatible checkpoint file."""
