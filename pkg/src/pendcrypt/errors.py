"""Exception hierarchy shared across the package.

The CLI maps these onto process exit codes: usage errors -> 1,
DataError -> 2, NumericError -> 3.
"""


class PendcryptError(Exception):
    """Base class for package errors."""


class DataError(PendcryptError):
    """Malformed input data: bad files, dimension mismatches, invalid specs."""


class NumericError(PendcryptError):
    """Numerical failure: domain exits, singular matrices, detection failures."""


class ChaosDomainError(NumericError):
    """Chaotic map iterate left its domain (y - b <= 0).

    Carries the index of the offending iterate so bad keys are debuggable.
    """

    def __init__(self, index, value):
        self.index = index
        self.value = value
        super().__init__(
            f"chaotic map left its domain at iterate {index} (y={value!r})"
        )


class NoLineFound(NumericError):
    """Line detector found no peak above threshold; carries the best score."""

    def __init__(self, score):
        self.score = score
        super().__init__(f"no line found (best accumulator score {score})")
