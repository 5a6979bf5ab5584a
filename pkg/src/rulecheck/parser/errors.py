from __future__ import annotations


class ParseError(ValueError):
    """Malformed rule text.

    ``line`` is filled in by the ruleset reader; ``column`` is 1-based within
    the logical rule line.
    """

    def __init__(
        self,
        message: str,
        *,
        line: int | None = None,
        column: int | None = None,
        token: str | None = None,
    ):
        self.message = message
        self.line = line
        self.column = column
        self.token = token
        super().__init__(str(self))

    def __str__(self) -> str:
        where = []
        if self.line is not None:
            where.append(f"line {self.line}")
        if self.column is not None:
            where.append(f"column {self.column}")
        text = self.message
        if self.token is not None:
            text += f" near {self.token!r}"
        if where:
            text = f"{', '.join(where)}: {text}"
        return text


class ThresholdError(ValueError):
    """Malformed threshold or detection_filter specification."""
