"""Exception hierarchy shared across the package.

Every error carries a short machine-readable ``code`` used by the HTTP
layer and the CLI to report failures uniformly.
"""

from __future__ import annotations


class DendritagError(Exception):
    code = "error"

    def __init__(self, message: str = ""):
        super().__init__(message or self.__class__.code)


class InvalidParams(DendritagError):
    code = "invalid-params"


class DecodeFailure(DendritagError):
    code = "decode-failure"


class EmptyForeground(DendritagError):
    code = "empty-foreground"


class DegeneratePattern(DendritagError):
    """Pattern yields fewer than 2 key points; the tag is unusable."""

    code = "degenerate-pattern"


class DegenerateGraph(DendritagError):
    code = "degenerate-graph"


class InsufficientSamples(DendritagError):
    code = "insufficient-samples"


class DegenerateCovariance(DendritagError):
    code = "degenerate-covariance"

    def __init__(self, rank: int, needed: int):
        self.rank = rank
        super().__init__(f"covariance rank {rank} is below the {needed} components requested")


class DimensionMismatch(DendritagError):
    code = "dimension-mismatch"


class ModelMissing(DendritagError):
    code = "model-version-missing"


class ModelVersionMismatch(DendritagError):
    code = "model-version-mismatch"


class EmptyIndex(DendritagError):
    code = "empty-index"


class EmptyRegistry(DendritagError):
    code = "empty-registry"


class DuplicateTag(DendritagError):
    code = "duplicate-tag"

    def __init__(self, record_id: str, score: float):
        self.record_id = record_id
        self.score = score
        super().__init__(f"near-duplicate of record {record_id} (score {score:.3f})")


class UnknownRecord(DendritagError):
    code = "unknown-record"

    def __init__(self, record_id: str):
        self.record_id = record_id
        super().__init__(f"no record {record_id}")


class InvalidTransition(DendritagError):
    code = "invalid-transition"

    def __init__(self, record_id: str, current: str, requested: str):
        self.record_id = record_id
        super().__init__(f"record {record_id}: {current} -> {requested} is not allowed")


class StoreCorruption(DendritagError):
    code = "store-corruption"
