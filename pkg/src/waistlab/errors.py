"""Exception hierarchy: one named failure per solver condition."""

from __future__ import annotations


class WaistLabError(Exception):
    """Root of every failure raised by waistlab."""


# --- surface / geodesics ---
class DomainExit(WaistLabError):
    """A geodesic reached |z| = z_max; the truncated path is attached."""

    def __init__(self, message: str, path=None):
        super().__init__(message)
        self.path = path


class StepTooLarge(WaistLabError):
    pass


class NoConvergence(WaistLabError):
    pass


# --- busemann ---
class DegenerateFit(WaistLabError):
    pass


# --- weakkam ---
class NoBracket(WaistLabError):
    pass


class NonConvergence(WaistLabError):
    pass


class EmptyAubrySet(WaistLabError):
    pass


# --- diffusion ---
class NotConverged(WaistLabError):
    pass


class NonPositiveEigenvector(WaistLabError):
    pass


class EigenvalueMismatch(WaistLabError):
    pass


# --- ldp ---
class InsufficientDecay(WaistLabError):
    pass


class SweepError(WaistLabError):
    """A solver failure during a lambda sweep, tagged with the offending lambda."""

    def __init__(self, lam: float, cause: Exception):
        super().__init__(f'lambda={lam!r}: {cause}')
        self.lam = lam


# --- comparison ---
class ComparisonViolation(WaistLabError):
    def __init__(self, message: str, triple=None):
        super().__init__(message)
        self.triple = triple


class MeshFailure(WaistLabError):
    pass


# --- config ---
class ParseError(WaistLabError):
    pass


class ValidationError(WaistLabError):
    pass
