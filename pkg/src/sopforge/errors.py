"""Domain exceptions, one flat namespace so the API layer can map each to a stable code."""


class SopforgeError(Exception):
    """Base class for every domain error raised by this package."""


# ── value / tensor shape errors ──────────────────────────────────────────────

class EmptyVideo(SopforgeError):
    pass


class DimensionMismatch(SopforgeError):
    pass


class EmptyPrompt(SopforgeError):
    pass


class InvalidLength(SopforgeError):
    pass


class InvalidCount(SopforgeError):
    pass


class LengthMismatch(SopforgeError):
    pass


class ZeroVector(SopforgeError):
    pass


class ShapeMismatch(SopforgeError):
    pass


# ── agent errors ─────────────────────────────────────────────────────────────

class NoParams(SopforgeError):
    pass


class RoleMismatch(SopforgeError):
    pass


class AgentFailure(SopforgeError):
    pass


# ── pipeline errors ──────────────────────────────────────────────────────────

class InputMismatch(SopforgeError):
    pass


class WrongStage(SopforgeError):
    pass


class NotAwaitingDecision(SopforgeError):
    pass


class RetryExhausted(SopforgeError):
    pass


# ── training errors ──────────────────────────────────────────────────────────

class CacheIncomplete(SopforgeError):
    pass


class InvalidN(SopforgeError):
    pass


class EmptyDataset(SopforgeError):
    pass


# ── judge / review errors ────────────────────────────────────────────────────

class TooFewCandidates(SopforgeError):
    pass


class JudgeUnavailable(SopforgeError):
    pass


class MalformedRanking(SopforgeError):
    pass


class CountMismatch(SopforgeError):
    pass


class AlreadyResolved(SopforgeError):
    pass


class BadIndex(SopforgeError):
    pass


class PendingHumanReviews(SopforgeError):
    pass


# ── persistence errors ───────────────────────────────────────────────────────

class BadMagic(SopforgeError):
    pass


class BadVersion(SopforgeError):
    pass


class TruncatedPayload(SopforgeError):
    pass


class ManifestMismatch(SopforgeError):
    pass


class CorruptRecord(SopforgeError):
    pass
