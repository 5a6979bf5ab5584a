"""Reading whole ``.rules`` files while collecting per-line diagnostics."""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Iterable

from .errors import ParseError
from .rule import Rule, looks_like_rule, parse_rule


@dataclass(frozen=True)
class Diagnostic:
    line: int
    message: str
    severity: str = "error"


@dataclass
class Ruleset:
    rules: list[Rule] = field(default_factory=list)
    source_path: str = "<stream>"
    parse_diagnostics: list[Diagnostic] = field(default_factory=list)

    @property
    def errors(self) -> list[Diagnostic]:
        return [d for d in self.parse_diagnostics if d.severity == "error"]

    def __iter__(self):
        return iter(self.rules)

    def __len__(self) -> int:
        return len(self.rules)


def logical_lines(lines: Iterable[str]) -> Iterable[tuple[int, str]]:
    """Join backslash-continued lines; yields (first physical line number, text)."""
    buf: list[str] = []
    start = 0
    for number, line in enumerate(lines, start=1):
        line = line.rstrip("\r\n")
        if not buf:
            start = number
        if line.endswith("\\"):
            buf.append(line[:-1])
            continue
        buf.append(line)
        yield start, "".join(buf)
        buf = []
    if buf:
        yield start, "".join(buf)


def parse_ruleset(lines: Iterable[str], source_path: str = "<stream>") -> Ruleset:
    """Parse every rule line, recording a diagnostic for each one that fails.

    Plain ``#`` comments and blank lines are skipped. Commented-out rules are
    parsed and flagged disabled.
    """
    ruleset = Ruleset(source_path=source_path)
    for number, text in logical_lines(lines):
        stripped = text.strip()
        if not stripped:
            continue
        if stripped.startswith("#") and not looks_like_rule(stripped):
            continue
        try:
            rule = parse_rule(text)
        except ParseError as exc:
            exc.line = number
            ruleset.parse_diagnostics.append(Diagnostic(number, str(exc), "error"))
            continue
        object.__setattr__(rule, "line", number)
        ruleset.rules.append(rule)
    return ruleset


def parse_file(path: str | os.PathLike) -> Ruleset:
    with open(path, encoding="utf-8") as handle:
        return parse_ruleset(handle, source_path=os.fspath(path))
