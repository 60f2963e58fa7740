"""Diagnostics and the exception hierarchy shared across the toolchain."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class Diagnostic:
    line: int
    col: int
    severity: str  # 'error' or 'warning'
    message: str
    filename: str = "<input>"

    def render(self) -> str:
        return f"{self.filename}:{self.line}:{self.col}: {self.severity}: {self.message}"


class PmlError(Exception):
    """Base error; carries an optional source position."""

    def __init__(self, message: str, pos: tuple[int, int] = (0, 0)):
        super().__init__(message)
        self.message = message
        self.pos = pos

    def diagnostic(self, filename: str = "<input>") -> Diagnostic:
        return Diagnostic(self.pos[0], self.pos[1], "error", self.message, filename)


class PmlSyntaxError(PmlError):
    """Malformed source; message lists the expected tokens."""


class ResolutionError(PmlError):
    """A referenced name does not resolve to exactly one declaration."""


class SubsetError(PmlError):
    """Construct outside the supported subset (rendezvous, unless, ...)."""


class ParseFailure(PmlError):
    """Raised by parse(); aggregates all diagnostics collected so far."""

    def __init__(self, diagnostics: list[Diagnostic]):
        first = diagnostics[0] if diagnostics else Diagnostic(0, 0, "error", "parse failed")
        super().__init__(first.message, (first.line, first.col))
        self.diagnostics = diagnostics

    def render(self) -> str:
        return "\n".join(d.render() for d in self.diagnostics)


class EvalError(PmlError):
    """Runtime expression error, e.g. division by zero or index overflow."""


class ConfigError(PmlError):
    """Invalid pacemaker configuration."""


class StateLimitExceeded(PmlError):
    def __init__(self, limit: int, explored: int):
        super().__init__(f"state limit {limit} exceeded after {explored} states")
        self.limit = limit
        self.explored = explored
