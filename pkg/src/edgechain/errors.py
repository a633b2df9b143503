"""Exception hierarchy shared by every edgechain module."""

from __future__ import annotations


class EdgeChainError(Exception):
    """Base class for all edgechain errors."""


class ValidationError(EdgeChainError, ValueError):
    """A scenario or world definition is malformed."""


class DuplicateId(ValidationError):
    pass


class DanglingReference(ValidationError):
    pass


class UnknownEntity(EdgeChainError, KeyError):
    def __str__(self) -> str:  # KeyError quotes its argument otherwise
        return str(self.args[0]) if self.args else ""


class CapacityExceeded(EdgeChainError):
    """A mutation would overrun a host or link bound."""

    def __init__(self, resource: str, subject: str, margin: float):
        super().__init__(f"{resource} capacity exceeded on {subject} by {margin:g}")
        self.resource = resource
        self.subject = subject
        self.margin = margin


class NoRoute(EdgeChainError):
    def __init__(self, host_a: str, host_b: str):
        super().__init__(f"no HostLink between {host_a} and {host_b}")
        self.hosts = (host_a, host_b)


class AlreadyPlaced(EdgeChainError):
    pass


class NotPlaced(EdgeChainError):
    pass


class Unplaced(EdgeChainError):
    """An operation needs every app of a chain to be placed."""


class TooLarge(EdgeChainError):
    pass


class InvalidChain(EdgeChainError):
    def __init__(self, index: int, message: str = "ledger failed verification"):
        super().__init__(f"{message} at block {index}")
        self.index = index


class ReplayError(EdgeChainError):
    def __init__(self, index: int, cause: str):
        super().__init__(f"replay failed at block {index}: {cause}")
        self.index = index
        self.cause = cause


class LedgerFormatError(EdgeChainError):
    def __init__(self, index: int, message: str):
        super().__init__(f"line {index + 1}: {message}")
        self.index = index


class ScenarioError(ValidationError):
    pass
