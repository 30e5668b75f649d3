# SPDX-FileCopyrightText: 2022 VMware Inc
#
# SPDX-License-Identifier: MIT

from dataclasses import dataclass
from typing import List


class CtbnError(Exception):
    """Base error. ``exit_code`` is the command line status for it."""

    exit_code: int = 1


@dataclass(frozen=True)
class Violation:
    """One broken model invariant and where it was found."""

    kind: str
    location: str
    message: str

    def __str__(self) -> str:
        return f"[{self.kind}] {self.location}: {self.message}"


class ModelValidationError(CtbnError):
    def __init__(self, violations: List[Violation]):
        self.violations = violations
        super().__init__(
            f"{len(violations)} model violation(s): "
            + "; ".join(str(v) for v in violations)
        )


class EvidenceError(CtbnError):
    pass


class ScopeError(CtbnError):
    pass


class ProjectionError(CtbnError):
    pass


class IncompatibleEvidenceError(CtbnError):
    exit_code = 2


class ImpossibleEvidenceError(CtbnError):
    exit_code = 2


class JointSizeError(CtbnError):
    exit_code = 3


class SmoothingNotSupportedError(CtbnError):
    pass
