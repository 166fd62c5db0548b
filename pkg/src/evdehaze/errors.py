"""Exception types shared across the toolkit.

The CLI maps :class:`DataError` subclasses to exit code 2.
"""


class DataError(ValueError):
    """Bad input data: malformed file, invariant violation, bad parameter domain."""


class FormatError(DataError):
    """A file does not match its declared binary/text format."""

    def __init__(self, message, offset=None, path=None):
        self.offset = offset
        self.path = path
        where = []
        if path is not None:
            where.append(str(path))
        if offset is not None:
            where.append(f"offset {offset}")
        prefix = f"{': '.join(where)}: " if where else ""
        super().__init__(prefix + message)


class ParseError(FormatError):
    """Text parse failure; ``line`` is 1-based."""

    def __init__(self, message, line=None, path=None):
        self.line = line
        loc = f"line {line}: " if line is not None else ""
        super().__init__(loc + message, offset=None, path=path)


class ValidationError(DataError):
    """An invariant violation tied to a specific record (1-based index)."""

    def __init__(self, message, record=None, path=None):
        self.record = record
        self.path = path
        parts = []
        if path is not None:
            parts.append(str(path))
        if record is not None:
            parts.append(f"record {record}")
        prefix = f"{': '.join(parts)}: " if parts else ""
        super().__init__(prefix + message)
