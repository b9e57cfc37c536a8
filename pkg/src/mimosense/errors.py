"""Error taxonomy shared across the pipeline.

Plain ``ValueError`` marks contract / configuration violations; the two
classes below distinguish broken input data from numerical breakdown so
the CLI can map them to distinct exit codes.
"""


class DataError(RuntimeError):
    """Input files or datasets are missing, corrupt, or degenerate."""


class NumericError(RuntimeError):
    """A numerical procedure diverged (NaN loss, non-finite weights)."""
