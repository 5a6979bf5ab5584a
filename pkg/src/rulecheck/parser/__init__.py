"""Parsing and serialization of Suricata-dialect rules."""

from .errors import ParseError, ThresholdError
from .header import (
    Address,
    AnyValue,
    Group,
    Negated,
    Port,
    PortRange,
    RuleHeader,
    Variable,
    contains_negation,
    parse_address,
    parse_header,
    parse_port,
    walk,
)
from .rule import (
    MATCH_KEYWORDS,
    MODIFIER_KEYWORDS,
    STICKY_BUFFERS,
    Match,
    Rule,
    RuleOption,
    decode_content,
    parse_rule,
    serialize_rule,
    split_pcre,
    to_dict,
    unquote,
)
from .ruleset import Diagnostic, Ruleset, parse_file, parse_ruleset
from .threshold import ThresholdSpec, parse_threshold

__all__ = [
    "Address",
    "AnyValue",
    "Diagnostic",
    "Group",
    "MATCH_KEYWORDS",
    "MODIFIER_KEYWORDS",
    "Match",
    "Negated",
    "ParseError",
    "Port",
    "PortRange",
    "Rule",
    "RuleHeader",
    "RuleOption",
    "Ruleset",
    "STICKY_BUFFERS",
    "ThresholdError",
    "ThresholdSpec",
    "Variable",
    "contains_negation",
    "decode_content",
    "parse_address",
    "parse_file",
    "parse_header",
    "parse_port",
    "parse_rule",
    "parse_ruleset",
    "parse_threshold",
    "serialize_rule",
    "split_pcre",
    "to_dict",
    "unquote",
    "walk",
]
