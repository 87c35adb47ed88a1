"""Exception types raised across the package."""

from __future__ import annotations


class GestureMatchError(Exception):
    """Base class for all package errors."""


class BVHError(GestureMatchError, ValueError):
    """A BVH document could not be parsed or serialized.

    ``kind`` is one of ``malformed-header``, ``channel-count-mismatch``,
    ``non-finite-value``, ``unsupported-channel-name`` or ``channel-mismatch``.
    """

    def __init__(self, kind: str, message: str, line: int | None = None):
        self.kind = kind
        self.line = line
        where = f" (line {line})" if line is not None else ""
        super().__init__(f"{kind}: {message}{where}")


class KinematicsError(GestureMatchError, ValueError):
    pass


class ClipRangeError(GestureMatchError, ValueError):
    pass


class StrokeTooShortError(GestureMatchError, ValueError):
    pass


class UnresolvedJointError(GestureMatchError, KeyError):
    def __str__(self) -> str:
        return str(self.args[0]) if self.args else "unresolved joint"


class DegenerateAxisError(GestureMatchError, ValueError):
    pass


class DegenerateElbowError(GestureMatchError, ValueError):
    pass


class DatabaseError(GestureMatchError, ValueError):
    """Building, saving or loading a gesture database failed.

    ``kind`` is one of ``unknown-clip``, ``skeleton-mismatch``,
    ``version-mismatch``, ``checksum-failure``, ``truncated-input`` or
    ``malformed-document``.
    """

    def __init__(self, kind: str, message: str):
        self.kind = kind
        super().__init__(f"{kind}: {message}")


class EmptyDatabaseError(GestureMatchError, ValueError):
    pass


class EmptyFeasibleSetError(GestureMatchError, ValueError):
    pass


class AssemblyError(GestureMatchError, ValueError):
    pass
