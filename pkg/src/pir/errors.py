"""Exception hierarchy shared by every pir subsystem.

Input and validation problems derive from :class:`InputError` (CLI exit
code 1); provider and IO problems derive from :class:`ProviderError`
(exit code 2).
"""


class PIRError(Exception):
    """Base class for all pir errors."""


class InputError(PIRError):
    """Malformed or inconsistent input data."""


class ProviderError(PIRError):
    """Embedding provider or storage failure."""


# data model


class ParseError(InputError):
    def __init__(self, path, line_no, message):
        self.path = str(path)
        self.line_no = line_no
        super().__init__(f"{path}:{line_no}: {message}")


class IntegrityError(InputError):
    """Dangling or duplicated identifier across bundle parts."""


class ExclusivityError(InputError):
    """Queries sharing a root have overlapping gold sets."""

    def __init__(self, root_id, query_ids, doc_ids):
        self.root_id = root_id
        self.query_ids = tuple(query_ids)
        self.doc_ids = tuple(sorted(doc_ids))
        super().__init__(
            f"root {root_id!r}: queries {', '.join(self.query_ids)} share gold "
            f"docs {', '.join(self.doc_ids)}"
        )


class UnknownField(InputError):
    def __init__(self, field):
        self.field = field
        super().__init__(f"no corpus document carries label field {field!r}")


# embedding


class EmptyText(InputError):
    def __init__(self, item_id):
        self.item_id = item_id
        super().__init__(f"empty text for id {item_id!r}")


class DimensionMismatch(PIRError):
    pass


class NonFiniteVector(InputError):
    pass


class MissingEmbedding(InputError):
    def __init__(self, item_id):
        self.item_id = item_id
        super().__init__(f"no embedding for id {item_id!r}")


class ProviderUnreachable(ProviderError):
    pass


class StoreFormatError(ProviderError):
    """Base class for binary store decoding failures."""


class BadMagic(StoreFormatError):
    pass


class VersionUnsupported(StoreFormatError):
    pass


class TruncatedFile(StoreFormatError):
    pass


# scoring / retrieval


class ZeroPerspective(PIRError):
    """Perspective vector is (numerically) zero, so rejection is undefined."""


class CacheMismatch(PIRError):
    pass


# evaluation


class UnknownQuery(InputError):
    def __init__(self, query_id):
        self.query_id = query_id
        super().__init__(f"query {query_id!r} has no qrels entry")


class MissingResult(InputError):
    def __init__(self, query_id):
        self.query_id = query_id
        super().__init__(f"no retrieval result for query {query_id!r}")


class DimTooSmall(InputError):
    pass
