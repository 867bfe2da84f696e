"""Exception types shared across the package.

Every error raised by viruspkt code derives from VirusPktError so callers
(CLI, HTTP service) can catch one base class and map subclasses to exit
codes / status codes.
"""


class VirusPktError(Exception):
    """Base class for all viruspkt errors."""


# --- source config / URLs ---------------------------------------------------

class InvalidUrl(VirusPktError):
    pass


class MalformedConfig(VirusPktError):
    pass


class DuplicateSourceName(VirusPktError):
    pass


# --- fetching ----------------------------------------------------------------

class FetchError(VirusPktError):
    """Base for per-source fetch failures."""


class HttpError(FetchError):
    def __init__(self, status: int, url: str = ""):
        super().__init__(f"HTTP {status}" + (f" from {url}" if url else ""))
        self.status = status


class Timeout(FetchError):
    pass


class TooLarge(FetchError):
    pass


class TooManyRedirects(FetchError):
    pass


class NetworkError(FetchError):
    pass


class StoreUnavailable(VirusPktError):
    pass


# --- conversion ---------------------------------------------------------------

class MalformedCsv(VirusPktError):
    def __init__(self, message: str, record: int):
        super().__init__(f"{message} (record {record})")
        self.record = record


class MalformedJson(VirusPktError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class UnsupportedFormat(VirusPktError):
    pass


class AdapterFailed(VirusPktError):
    pass


class ConversionFailed(VirusPktError):
    pass


# --- indexing ------------------------------------------------------------------

class InvariantViolation(VirusPktError):
    pass


# --- search ---------------------------------------------------------------------

class EmptyQuery(VirusPktError):
    pass


class UnknownCategory(VirusPktError):
    pass


class UnknownDocument(VirusPktError):
    pass


# --- store -----------------------------------------------------------------------

class Locked(VirusPktError):
    pass


class Corrupt(VirusPktError):
    pass


class MissingIndex(VirusPktError):
    pass


class NotFound(VirusPktError):
    pass


class StorageFull(VirusPktError):
    pass


class IoError(VirusPktError):
    pass


# --- users / sessions ---------------------------------------------------------------

class EmptyPassword(VirusPktError):
    pass


class InvalidCredentials(VirusPktError):
    pass


class NotAuthenticated(VirusPktError):
    pass


class SessionExpired(VirusPktError):
    pass


class InvalidUsername(VirusPktError):
    pass


class DuplicateUser(VirusPktError):
    pass


class UnknownUser(VirusPktError):
    pass


# --- protkut ---------------------------------------------------------------------------

class DuplicateName(VirusPktError):
    pass


class InvalidName(VirusPktError):
    pass


class DescriptionTooLong(VirusPktError):
    pass


class TargetNotFound(VirusPktError):
    pass


class NotAMember(VirusPktError):
    pass


class EmptyBody(VirusPktError):
    pass


class BodyTooLong(VirusPktError):
    pass
