"""Rule header model: action, protocol, address and port specifications."""

from __future__ import annotations

import ipaddress
from dataclasses import dataclass
from typing import Iterator, Union

from .errors import ParseError

ACTIONS = ("alert", "drop", "pass", "reject")
DIRECTIONS = ("->", "<>")


@dataclass(frozen=True)
class AnyValue:
    def __str__(self) -> str:
        return "any"


@dataclass(frozen=True)
class Variable:
    """A ``$NAME`` reference; ``name`` excludes the dollar sign."""

    name: str

    def __str__(self) -> str:
        return f"${self.name}"


@dataclass(frozen=True)
class Address:
    """A literal IP address or CIDR block, kept in its source spelling."""

    value: str

    def __str__(self) -> str:
        return self.value

    @property
    def network(self) -> ipaddress.IPv4Network | ipaddress.IPv6Network:
        return ipaddress.ip_network(self.value, strict=False)


@dataclass(frozen=True)
class Port:
    number: int

    def __str__(self) -> str:
        return str(self.number)


@dataclass(frozen=True)
class PortRange:
    low: int
    high: int

    def __str__(self) -> str:
        return f"{self.low}:{self.high}"


@dataclass(frozen=True)
class Negated:
    inner: "Spec"

    def __str__(self) -> str:
        return f"!{self.inner}"


@dataclass(frozen=True)
class Group:
    items: tuple["Spec", ...]

    def __str__(self) -> str:
        return "[" + ",".join(str(item) for item in self.items) + "]"


Spec = Union[AnyValue, Variable, Address, Port, PortRange, Negated, Group]
AddressSpec = Spec
PortSpec = Spec


def walk(spec: Spec, negated: bool = False) -> Iterator[tuple[Spec, bool]]:
    """Yield every leaf of ``spec`` together with its effective polarity."""
    if isinstance(spec, Negated):
        yield from walk(spec.inner, not negated)
    elif isinstance(spec, Group):
        for item in spec.items:
            yield from walk(item, negated)
    else:
        yield spec, negated


def contains_negation(spec: Spec) -> bool:
    if isinstance(spec, Negated):
        return True
    if isinstance(spec, Group):
        return any(contains_negation(item) for item in spec.items)
    return False


@dataclass(frozen=True)
class RuleHeader:
    action: str
    protocol: str
    src_addr: AddressSpec
    src_port: PortSpec
    direction: str
    dst_addr: AddressSpec
    dst_port: PortSpec

    def __str__(self) -> str:
        return " ".join(
            str(part)
            for part in (
                self.action,
                self.protocol,
                self.src_addr,
                self.src_port,
                self.direction,
                self.dst_addr,
                self.dst_port,
            )
        )


def _split_top_level(text: str, sep: str | None, column: int) -> list[tuple[str, int]]:
    """Split on ``sep`` (whitespace when None) outside of brackets.

    Returns (piece, column) pairs; columns are 1-based offsets into the line.
    """
    pieces: list[tuple[str, int]] = []
    depth = 0
    start = 0
    for i, ch in enumerate(text):
        if ch == "[":
            depth += 1
        elif ch == "]":
            depth -= 1
            if depth < 0:
                raise ParseError("unbalanced ']'", column=column + i, token=text)
        is_sep = ch.isspace() if sep is None else ch == sep
        if is_sep and depth == 0:
            if sep is not None or i > start:
                pieces.append((text[start:i], column + start))
            start = i + 1
    if depth != 0:
        raise ParseError("unbalanced '['", column=column, token=text)
    if sep is not None or start < len(text):
        pieces.append((text[start:], column + start))
    return pieces


def _parse_list(text: str, column: int, leaf) -> Spec:
    raw = text.strip()
    if not raw:
        raise ParseError("empty specification", column=column, token=text)
    if raw.startswith("!"):
        return Negated(_parse_list(raw[1:], column + 1, leaf))
    if raw.startswith("["):
        if not raw.endswith("]"):
            raise ParseError("unterminated list", column=column, token=raw)
        items = _split_top_level(raw[1:-1], ",", column + 1)
        if not any(piece.strip() for piece, _ in items):
            raise ParseError("empty list", column=column, token=raw)
        return Group(tuple(_parse_list(piece, col, leaf) for piece, col in items))
    if raw == "any":
        return AnyValue()
    if raw.startswith("$"):
        name = raw[1:]
        if not name or not all(c.isalnum() or c == "_" for c in name):
            raise ParseError("invalid variable name", column=column, token=raw)
        return Variable(name)
    return leaf(raw, column)


def _address_leaf(raw: str, column: int) -> Address:
    try:
        ipaddress.ip_network(raw, strict=False)
    except ValueError:
        raise ParseError("invalid address", column=column, token=raw) from None
    return Address(raw)


def _port_number(raw: str, column: int) -> int:
    if not raw.isdigit():
        raise ParseError("invalid port", column=column, token=raw)
    number = int(raw)
    if number > 65535:
        raise ParseError("port out of range", column=column, token=raw)
    return number


def _port_leaf(raw: str, column: int) -> Port | PortRange:
    if ":" in raw:
        low_text, _, high_text = raw.partition(":")
        low = _port_number(low_text, column) if low_text else 0
        high = _port_number(high_text, column) if high_text else 65535
        if low > high:
            raise ParseError("port range low exceeds high", column=column, token=raw)
        return PortRange(low, high)
    return Port(_port_number(raw, column))


def parse_address(text: str, column: int = 1) -> AddressSpec:
    return _parse_list(text, column, _address_leaf)


def parse_port(text: str, column: int = 1) -> PortSpec:
    return _parse_list(text, column, _port_leaf)


def parse_header(text: str, column: int = 1) -> RuleHeader:
    parts = _split_top_level(text, None, column)
    if len(parts) != 7:
        raise ParseError(
            f"header needs 7 fields, found {len(parts)}", column=column, token=text.strip()
        )
    (action, c_act), (proto, c_proto), (src, c_src), (sport, c_sport), (
        direction,
        c_dir,
    ), (dst, c_dst), (dport, c_dport) = parts
    if action not in ACTIONS:
        raise ParseError("unknown action", column=c_act, token=action)
    if not proto or proto != proto.lower() or not all(c.isalnum() or c in "-_" for c in proto):
        raise ParseError("invalid protocol", column=c_proto, token=proto)
    if direction not in DIRECTIONS:
        raise ParseError("invalid direction", column=c_dir, token=direction)
    return RuleHeader(
        action=action,
        protocol=proto,
        src_addr=parse_address(src, c_src),
        src_port=parse_port(sport, c_sport),
        direction=direction,
        dst_addr=parse_address(dst, c_dst),
        dst_port=parse_port(dport, c_dport),
    )
