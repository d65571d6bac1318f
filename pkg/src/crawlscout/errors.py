"""Exception hierarchy shared across the pipeline."""


class CrawlScoutError(Exception):
    """Base class for runtime failures (CLI exit code 2)."""


# snapshot storage
class SnapshotError(CrawlScoutError):
    pass


class CorruptSnapshot(SnapshotError):
    pass


class IntegrityViolation(SnapshotError):
    pass


class UnsupportedVersion(SnapshotError):
    pass


# crawling
class CrawlError(CrawlScoutError):
    pass


class SeedFetchFailed(CrawlError):
    pass


class EmptyCrawl(CrawlError):
    pass


class OfflineViolation(CrawlScoutError):
    """A network request left the loopback interface while offline mode was on."""


# classification
class ClassificationError(CrawlScoutError):
    pass


class AuthConfigError(ClassificationError):
    pass


class CacheWriteError(ClassificationError):
    pass


class TransportError(ClassificationError):
    def __init__(self, message: str, transient: bool = True):
        super().__init__(message)
        self.transient = transient


class MissingLabels(ClassificationError):
    pass


# annotation
class EmptyListing(CrawlScoutError):
    pass


# evaluation
class EvaluationError(CrawlScoutError):
    pass


class NoDatedPages(EvaluationError):
    pass


class NoNewPages(EvaluationError):
    pass
