"""Rule body model, rule parsing and canonical serialization."""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Iterator

from .errors import ParseError
from .header import ACTIONS, RuleHeader, parse_header

MATCH_KEYWORDS = frozenset({"content", "pcre"})

MODIFIER_KEYWORDS = frozenset(
    {"nocase", "depth", "offset", "distance", "within", "startswith", "endswith", "fast_pattern"}
)

# Modifier-style buffer selectors from older rule dialects, rewritten to the
# sticky buffer they correspond to.
LEGACY_BUFFER_MODIFIERS = {
    "http_uri": "http.uri",
    "http_raw_uri": "http.uri.raw",
    "http_header": "http.header",
    "http_raw_header": "http.header.raw",
    "http_cookie": "http.cookie",
    "http_user_agent": "http.user_agent",
    "http_host": "http.host",
    "http_raw_host": "http.host.raw",
    "http_method": "http.method",
    "http_stat_code": "http.stat_code",
    "http_stat_msg": "http.stat_msg",
    "http_client_body": "http.request_body",
    "http_server_body": "http.response_body",
}

# Sticky buffers spelled with underscores in older dialects.
LEGACY_STICKY_ALIASES = {
    "dns_query": "dns.query",
    "file_data": "file.data",
    "tls_sni": "tls.sni",
    "tls_cert_subject": "tls.cert_subject",
    "tls_cert_issuer": "tls.cert_issuer",
    "ja3_hash": "ja3.hash",
    "ja3_string": "ja3.string",
    "ja3s_hash": "ja3s.hash",
    "ja3s_string": "ja3s.string",
    "http_header_names": "http.header_names",
    "http_request_line": "http.request_line",
    "http_response_line": "http.response_line",
}

STICKY_BUFFERS = frozenset(
    {
        "pkt_data",
        "http.uri",
        "http.uri.raw",
        "http.user_agent",
        "http.header",
        "http.header.raw",
        "http.header_names",
        "http.host",
        "http.host.raw",
        "http.stat_code",
        "http.stat_msg",
        "http.method",
        "http.request_header",
        "http.response_header",
        "http.request_body",
        "http.response_body",
        "http.request_line",
        "http.response_line",
        "http.cookie",
        "http.protocol",
        "http.start",
        "http.accept",
        "http.accept_enc",
        "http.accept_lang",
        "http.referer",
        "http.connection",
        "http.content_type",
        "http.content_len",
        "http.server",
        "http.location",
        "file.data",
        "dns.query",
        "tls.sni",
        "tls.cert_subject",
        "tls.cert_issuer",
        "tls.cert_serial",
        "tls.cert_fingerprint",
        "tls.certs",
        "ja3.hash",
        "ja3.string",
        "ja3s.hash",
        "ja3s.string",
    }
)

_KEYWORD_RE = re.compile(r"^[A-Za-z0-9_.\-]+$")
_HEX_BLOCK_RE = re.compile(r"\|([0-9A-Fa-f\s]*)\|")


@dataclass(frozen=True)
class RuleOption:
    keyword: str
    value: str | None = None
    negated: bool = False
    modifiers: tuple["RuleOption", ...] = ()

    def __str__(self) -> str:
        if self.value is None:
            return f"{self.keyword};"
        bang = "!" if self.negated else ""
        return f"{self.keyword}:{bang}{self.value};"

    @property
    def unquoted(self) -> str | None:
        return None if self.value is None else unquote(self.value)

    def modifier(self, keyword: str) -> "RuleOption | None":
        for mod in self.modifiers:
            if mod.keyword == keyword:
                return mod
        return None


@dataclass(frozen=True)
class Match:
    """A content or pcre option together with the buffer it inspects.

    ``buffer`` is None for the raw packet/stream payload.
    """

    option: RuleOption
    buffer: str | None

    @property
    def keyword(self) -> str:
        return self.option.keyword

    @property
    def negated(self) -> bool:
        return self.option.negated


@dataclass(frozen=True)
class Rule:
    header: RuleHeader
    options: tuple[RuleOption, ...]
    disabled: bool = False
    raw_text: str = field(default="", compare=False, repr=False)
    line: int | None = field(default=None, compare=False, repr=False)

    def option(self, keyword: str) -> RuleOption | None:
        for opt in self.options:
            if opt.keyword == keyword:
                return opt
        return None

    def options_named(self, keyword: str) -> list[RuleOption]:
        return [opt for opt in self.options if opt.keyword == keyword]

    @property
    def sid(self) -> int:
        return int(self.option("sid").value)

    @property
    def rev(self) -> int:
        opt = self.option("rev")
        return 1 if opt is None else int(opt.value)

    @property
    def msg(self) -> str:
        return unquote(self.option("msg").value)

    def keywords(self) -> list[str]:
        """Option keywords in source order, modifiers included."""
        out = []
        for opt in self.options:
            out.append(opt.keyword)
            out.extend(mod.keyword for mod in opt.modifiers)
        return out

    def iter_all_options(self) -> Iterator[RuleOption]:
        for opt in self.options:
            yield opt
            yield from opt.modifiers

    @cached_property
    def matches(self) -> tuple[Match, ...]:
        scope = None
        found = []
        for opt in self.options:
            if opt.keyword in STICKY_BUFFERS:
                scope = None if opt.keyword == "pkt_data" else opt.keyword
            elif opt.keyword in MATCH_KEYWORDS:
                found.append(Match(opt, scope))
        return tuple(found)

    @property
    def negated_match_count(self) -> int:
        return sum(1 for m in self.matches if m.negated)

    def __str__(self) -> str:
        return serialize_rule(self)


def unquote(value: str) -> str:
    """Strip surrounding double quotes and undo ``\\"``, ``\\\\`` and ``\\;`` escapes."""
    text = value.strip()
    if len(text) >= 2 and text[0] == '"' and text[-1] == '"':
        text = text[1:-1]
    return re.sub(r'\\([\\";:])', r"\1", text)


def decode_content(value: str) -> bytes:
    """Decode a content value, expanding ``|xx xx|`` hex blocks to bytes."""
    text = unquote(value)
    out = bytearray()
    pos = 0
    for block in _HEX_BLOCK_RE.finditer(text):
        out += text[pos : block.start()].encode("latin-1", errors="replace")
        digits = "".join(block.group(1).split())
        if len(digits) % 2:
            raise ValueError(f"odd number of hex digits in {block.group(0)!r}")
        out += bytes.fromhex(digits)
        pos = block.end()
    out += text[pos:].encode("latin-1", errors="replace")
    return bytes(out)


def split_pcre(value: str) -> tuple[str, str]:
    """Return (pattern, flags) for a pcre option value such as ``"/ab+c/Ri"``."""
    text = value.strip()
    if len(text) >= 2 and text[0] == '"' and text[-1] == '"':
        text = text[1:-1]
    if not text.startswith("/"):
        raise ValueError(f"pcre value must start with '/': {value!r}")
    end = text.rfind("/")
    if end == 0:
        raise ValueError(f"unterminated pcre: {value!r}")
    return text[1:end], text[end + 1 :]


def _split_options(body: str, column: int) -> list[tuple[str, int]]:
    pieces = []
    start = 0
    in_quote = False
    i = 0
    while i < len(body):
        ch = body[i]
        if ch == "\\":
            i += 2
            continue
        if ch == '"':
            in_quote = not in_quote
        elif ch == ";" and not in_quote:
            pieces.append((body[start:i], column + start))
            start = i + 1
        i += 1
    if in_quote:
        quote_at = body.rfind('"', 0, len(body))
        raise ParseError(
            "unterminated quote", column=column + max(quote_at, 0), token=body[start:].strip()
        )
    if body[start:].strip():
        pieces.append((body[start:], column + start))
    return pieces


def _parse_option(text: str, column: int) -> RuleOption:
    stripped = text.strip()
    column += len(text) - len(text.lstrip())
    keyword, sep, value = stripped.partition(":")
    keyword = keyword.strip()
    if not keyword or not _KEYWORD_RE.match(keyword):
        raise ParseError("invalid option keyword", column=column, token=stripped)
    keyword = keyword.lower()
    if not sep:
        return RuleOption(keyword)
    value = value.strip()
    negated = False
    if keyword in MATCH_KEYWORDS and value.startswith("!"):
        negated = True
        value = value[1:].strip()
    if keyword in MATCH_KEYWORDS and not value:
        raise ParseError(f"{keyword} without a value", column=column, token=stripped)
    return RuleOption(keyword, value, negated)


def _bind_modifiers(flat: list[tuple[RuleOption, int]]) -> tuple[list[RuleOption], bool]:
    """Attach modifiers to the match option they directly follow."""
    options: list[RuleOption] = []
    legacy = False
    for opt, column in flat:
        is_modifier = opt.keyword in MODIFIER_KEYWORDS or opt.keyword in LEGACY_BUFFER_MODIFIERS
        if not is_modifier:
            options.append(opt)
            continue
        if not options or options[-1].keyword not in MATCH_KEYWORDS:
            raise ParseError("dangling modifier", column=column, token=opt.keyword)
        legacy = legacy or opt.keyword in LEGACY_BUFFER_MODIFIERS
        anchor = options[-1]
        options[-1] = replace(anchor, modifiers=anchor.modifiers + (opt,))
    return options, legacy


def _normalize_buffers(options: list[RuleOption]) -> list[RuleOption]:
    """Rewrite modifier-style buffer selectors into sticky buffer options."""
    out: list[RuleOption] = []
    source_scope = None
    emitted_scope = None
    for opt in options:
        if opt.keyword in STICKY_BUFFERS:
            source_scope = None if opt.keyword == "pkt_data" else opt.keyword
            emitted_scope = source_scope
            out.append(opt)
            continue
        if opt.keyword not in MATCH_KEYWORDS:
            out.append(opt)
            continue
        wanted = source_scope
        kept = []
        for mod in opt.modifiers:
            if mod.keyword in LEGACY_BUFFER_MODIFIERS:
                wanted = LEGACY_BUFFER_MODIFIERS[mod.keyword]
            else:
                kept.append(mod)
        if wanted != emitted_scope:
            out.append(RuleOption(wanted or "pkt_data"))
            emitted_scope = wanted
        out.append(replace(opt, modifiers=tuple(kept)))
    return out


def parse_rule(text: str) -> Rule:
    """Parse one logical rule line.

    A leading ``#`` marks the rule as disabled; it is parsed all the same.
    Unknown option keywords are kept as generic keyword/value pairs.
    """
    raw_text = text.rstrip("\r\n")
    stripped = raw_text.lstrip()
    column = len(raw_text) - len(stripped) + 1
    disabled = False
    if stripped.startswith("#"):
        disabled = True
        body = stripped.lstrip("#")
        column += len(stripped) - len(body)
        stripped = body.lstrip()
        column += len(body) - len(stripped)
    if not stripped:
        raise ParseError("empty rule", column=column)
    open_at = stripped.find("(")
    if open_at < 0:
        raise ParseError("missing option list", column=column, token=stripped[:40])
    header = parse_header(stripped[:open_at], column)
    rest = stripped[open_at + 1 :].rstrip()
    if not rest.endswith(")"):
        raise ParseError(
            "option list not closed with ')'", column=column + len(stripped) - 1, token=rest[-20:]
        )
    body_column = column + open_at + 1
    flat = [
        (_parse_option(piece, col), col)
        for piece, col in _split_options(rest[:-1], body_column)
        if piece.strip()
    ]
    options, legacy = _bind_modifiers(flat)
    options = [
        replace(opt, keyword=LEGACY_STICKY_ALIASES[opt.keyword])
        if opt.keyword in LEGACY_STICKY_ALIASES
        else opt
        for opt in options
    ]
    if legacy:
        options = _normalize_buffers(options)

    keywords = [opt.keyword for opt in options]
    if "msg" not in keywords:
        raise ParseError("rule has no msg", column=column, token=stripped[:40])
    if "sid" not in keywords:
        raise ParseError("rule has no sid", column=column, token=stripped[:40])
    for name in ("sid", "rev"):
        opt = next((o for o in options if o.keyword == name), None)
        if opt is None:
            continue
        if opt.value is None or not opt.value.isdigit() or int(opt.value) <= 0:
            raise ParseError(f"{name} must be a positive integer", column=column, token=str(opt))
    return Rule(header=header, options=tuple(options), disabled=disabled, raw_text=raw_text)


def serialize_rule(rule: Rule) -> str:
    """Canonical single-line form; reparses to an equal Rule."""
    parts = []
    for opt in rule.options:
        parts.append(str(opt))
        parts.extend(str(mod) for mod in opt.modifiers)
    prefix = "#" if rule.disabled else ""
    return f"{prefix}{rule.header} ({' '.join(parts)})"


def looks_like_rule(line: str) -> bool:
    """True for lines that start (after optional ``#``) with a rule action."""
    text = line.lstrip().lstrip("#").lstrip()
    word = text.split(None, 1)[0] if text else ""
    return word in ACTIONS and "(" in text


def to_dict(rule: Rule) -> dict:
    """JSON-ready parse tree with stable field names."""

    def option_dict(opt: RuleOption) -> dict:
        return {
            "keyword": opt.keyword,
            "value": opt.value,
            "negated": opt.negated,
            "modifiers": [option_dict(mod) for mod in opt.modifiers],
        }

    h = rule.header
    return {
        "action": h.action,
        "protocol": h.protocol,
        "src_addr": str(h.src_addr),
        "src_port": str(h.src_port),
        "direction": h.direction,
        "dst_addr": str(h.dst_addr),
        "dst_port": str(h.dst_port),
        "options": [option_dict(opt) for opt in rule.options],
        "sid": rule.sid,
        "rev": rule.rev,
        "disabled": rule.disabled,
    }
