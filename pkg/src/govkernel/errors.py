"""Exception hierarchy. Each class name matches the error named in its contract."""

from __future__ import annotations


class KernelError(Exception):
    """Base class for every error raised by the kernel."""


# envelope
class EmptyIdentifier(KernelError, ValueError):
    pass


class NoCosignConstraint(KernelError):
    pass


class BadApprovalSignature(KernelError):
    pass


class DuplicateApproval(KernelError):
    pass


# identity
class DuplicateIdentity(KernelError):
    pass


class UnknownSubject(KernelError):
    pass


class RevokedSubject(KernelError):
    pass


class UnknownIdentity(KernelError, LookupError):
    pass


class UnknownKey(KernelError, LookupError):
    pass


# contracts
class DuplicateSchema(KernelError):
    pass


class MalformedSchema(KernelError, ValueError):
    pass


class UnknownSchema(KernelError, LookupError):
    pass


class MissingRecipeField(KernelError, KeyError):
    pass


class SchemaViolation(KernelError):
    def __init__(self, report, message: str = "payload failed schema validation"):
        super().__init__(f"{message}: {[f.code + '@' + f.path for f in report.findings]}")
        self.report = report


class ParseError(KernelError, ValueError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


# evidence graph
class DuplicateNode(KernelError):
    pass


class UnknownNode(KernelError, LookupError):
    pass


# runtime
class SchemaMismatch(KernelError):
    pass


class LifecycleBlocked(KernelError):
    pass


class ReadOnlyViolation(KernelError):
    pass


class TimeboxExceeded(KernelError):
    pass


class UndeclaredOutput(KernelError):
    pass


class UnboundedRequest(KernelError, ValueError):
    pass


class PostCheckFailure(KernelError):
    def __init__(self, trace, failed: list[str]):
        super().__init__(f"judgment post-checks failed: {failed}")
        self.trace = trace
        self.failed = failed


class EmptyWindow(KernelError):
    pass


# invariants
class NotAnAction(KernelError):
    pass


class UnknownAsset(KernelError, LookupError):
    pass


# orchestrator
class VerificationFailed(KernelError):
    def __init__(self, verdict):
        super().__init__(f"event failed verification: {list(verdict.reason_codes)}")
        self.verdict = verdict


class NoRoute(KernelError):
    pass


class UnknownPending(KernelError, LookupError):
    pass


class WrongRole(KernelError):
    pass


# jml
class InvalidEvent(KernelError, ValueError):
    pass


class NoMatchingRole(KernelError):
    pass


class IllegalTransition(KernelError):
    pass


# harness
class ConfigError(KernelError, ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


class UnknownTarget(KernelError, LookupError):
    pass
