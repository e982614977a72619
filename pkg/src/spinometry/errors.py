"""Exception types shared across the package.

Every error raised by the measurement engine, the dataset store, the
aggregator, and the statistics kernels derives from SpinometryError, so
callers (CLI batch loops, HTTP handlers) can catch one base class and
report the concrete error name to the user.
"""

from __future__ import annotations

from typing import List, Optional, Sequence, Tuple


class SpinometryError(Exception):
    """Base class for all package errors."""

    @property
    def name(self) -> str:
        return type(self).__name__


# geometry

class MissingLandmark(SpinometryError):
    """A computation needs a landmark that is absent or not visible."""

    def __init__(self, landmarks: Sequence[str]):
        self.landmarks: Tuple[str, ...] = tuple(str(n) for n in landmarks)
        super().__init__("missing landmark(s): " + ", ".join(self.landmarks))


class DegenerateFrame(SpinometryError):
    """S1 endplate is exactly vertical; anterior direction undecidable."""


class DegenerateEndplate(SpinometryError):
    """Endplate endpoints coincide; no direction defined."""


class CoincidentPoints(SpinometryError):
    """Two construction points coincide (e.g. hip axis on S1 midpoint)."""


class ViewMismatch(SpinometryError):
    """Operands were computed under different views."""


# evaluation metrics

class EmptyCohort(SpinometryError):
    """No aligned prediction/ground-truth pairs to evaluate."""


class SpacingMismatch(SpinometryError):
    """Aligned images disagree on pixel spacing."""


class EmptyStratum(SpinometryError):
    """A requested stratum contains no records (reported, not fatal)."""


# statistics

class DegenerateVariance(SpinometryError):
    """Zero between-subject variance; agreement coefficient undefined."""


class EmptySample(SpinometryError):
    """A statistical kernel received an empty sample."""


# dataset io

class ParseError(SpinometryError):
    """A file could not be parsed; carries line/field context."""

    def __init__(self, message: str, path: Optional[str] = None,
                 line: Optional[int] = None, field: Optional[str] = None):
        self.path = path
        self.line = line
        self.field = field
        ctx = []
        if path is not None:
            ctx.append(str(path))
        if line is not None:
            ctx.append(f"line {line}")
        if field is not None:
            ctx.append(f"field {field!r}")
        prefix = " (".join([message] + ctx)
        super().__init__(prefix + (")" * (len(ctx) > 0)) if ctx else message)


class SchemaVersionError(SpinometryError):
    """File declares an unsupported schema version."""


class InvariantViolation(SpinometryError):
    """A record failed validation; lists every failed check."""

    def __init__(self, failures: Sequence[Tuple[str, str]]):
        # failures: (field, message) pairs
        self.failures: List[Tuple[str, str]] = [(str(f), str(m)) for f, m in failures]
        super().__init__("; ".join(f"{f}: {m}" for f, m in self.failures))


class DuplicateIds(SpinometryError):
    """An id list contains duplicates where unique ids are required."""


class EmptyWindow(SpinometryError):
    """A crop window collapsed to zero width or height."""


class UnknownLandmark(SpinometryError):
    """A table row names a landmark outside the supported set."""


class MissingColumn(SpinometryError):
    """A mapped column is absent from the table header."""


# aggregator

class NoDetection(SpinometryError):
    """A region detector produced no candidate."""

    def __init__(self, region: str):
        self.region = str(region)
        super().__init__(f"no detection for region {self.region}")


class RegionMismatch(SpinometryError):
    """A detector file's region tag disagrees with its contents."""


class DuplicateLandmark(SpinometryError):
    """Two detector regions claim the same landmark (malformed input)."""


# cohort alignment (cli / report)

class AlignmentError(SpinometryError):
    """Prediction and ground-truth cohorts could not be aligned."""

    def __init__(self, message: str, unmatched: Sequence[str] = ()):
        self.unmatched: Tuple[str, ...] = tuple(str(u) for u in unmatched)
        if self.unmatched:
            message = f"{message}: {', '.join(self.unmatched)}"
        super().__init__(message)
