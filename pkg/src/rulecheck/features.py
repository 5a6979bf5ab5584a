"""Implementation-level feature vectors for rules.

The numeric layout is fixed by :data:`FEATURE_NAMES`; :func:`vectorize`
emits values in exactly that order so vectors from different runs compare
column by column.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from typing import IO, Iterable, Mapping

import numpy as np

from .parser import AnyValue, Rule, ThresholdError, Variable, parse_threshold, walk

COUNTED_OPTIONS = (
    "content",
    "depth",
    "http.uri",
    "http.method",
    "urilen",
    "startswith",
    "pcre",
    "bsize",
)
ADDRESS_GROUPS = ("HOME_NET", "HTTP_SERVERS", "EXTERNAL_NET", "any")
# "none" is encoded as all three indicator columns being zero.
THRESHOLD_ONE_HOT = ("limit", "threshold", "both")

FEATURE_NAMES: tuple[str, ...] = (
    *(f"count.{name}" for name in COUNTED_OPTIONS),
    "negated_match_count",
    *(f"src.{group}" for group in ADDRESS_GROUPS),
    *(f"dst.{group}" for group in ADDRESS_GROUPS),
    *(f"threshold.type.{kind}" for kind in THRESHOLD_ONE_HOT),
    "threshold.count",
    "flow.to_server",
    "flow.to_client",
)

SCHEMA_HASH = hashlib.sha256("\n".join(FEATURE_NAMES).encode()).hexdigest()[:16]

_TO_SERVER = {"to_server", "from_client"}
_TO_CLIENT = {"to_client", "from_server"}


@dataclass(frozen=True)
class FeatureVector:
    counts: Mapping[str, int]
    negated_match_count: int
    src_group_flags: Mapping[str, bool]
    dst_group_flags: Mapping[str, bool]
    threshold_type: str
    threshold_count: int
    flow_to_server: bool
    flow_to_client: bool


def _group_flags(spec) -> dict[str, bool]:
    flags = dict.fromkeys(ADDRESS_GROUPS, False)
    # Polarity is ignored: a negated group still sets its flag.
    for leaf, _negated in walk(spec):
        if isinstance(leaf, AnyValue):
            flags["any"] = True
        elif isinstance(leaf, Variable) and leaf.name in flags:
            flags[leaf.name] = True
    return flags


def rule_threshold(rule: Rule):
    """ThresholdSpec of the rule's first threshold/detection_filter, or None."""
    for opt in rule.iter_all_options():
        if opt.keyword in ("threshold", "detection_filter") and opt.value is not None:
            try:
                return parse_threshold(opt.value, opt.keyword)
            except ThresholdError:
                continue
    return None


def flow_directions(rule: Rule) -> tuple[bool, bool]:
    to_server = to_client = False
    for opt in rule.options_named("flow"):
        tokens = {t.strip() for t in (opt.value or "").split(",")}
        to_server = to_server or bool(tokens & _TO_SERVER)
        to_client = to_client or bool(tokens & _TO_CLIENT)
    return to_server, to_client


def extract_features(rule: Rule) -> FeatureVector:
    counts = dict.fromkeys(COUNTED_OPTIONS, 0)
    for opt in rule.iter_all_options():
        if opt.keyword in counts:
            counts[opt.keyword] += 1
    threshold = rule_threshold(rule)
    to_server, to_client = flow_directions(rule)
    return FeatureVector(
        counts=counts,
        negated_match_count=rule.negated_match_count,
        src_group_flags=_group_flags(rule.header.src_addr),
        dst_group_flags=_group_flags(rule.header.dst_addr),
        threshold_type="none" if threshold is None else threshold.type,
        threshold_count=0 if threshold is None else threshold.count,
        flow_to_server=to_server,
        flow_to_client=to_client,
    )


def vectorize(fv: FeatureVector) -> np.ndarray:
    values = [fv.counts[name] for name in COUNTED_OPTIONS]
    values.append(fv.negated_match_count)
    values += [int(fv.src_group_flags[g]) for g in ADDRESS_GROUPS]
    values += [int(fv.dst_group_flags[g]) for g in ADDRESS_GROUPS]
    values += [int(fv.threshold_type == kind) for kind in THRESHOLD_ONE_HOT]
    values.append(fv.threshold_count)
    values += [int(fv.flow_to_server), int(fv.flow_to_client)]
    return np.asarray(values, dtype=np.float64)


def feature_matrix(fvs: Iterable[FeatureVector]) -> np.ndarray:
    rows = [vectorize(fv) for fv in fvs]
    if not rows:
        return np.zeros((0, len(FEATURE_NAMES)))
    return np.vstack(rows)


def feature_record(rule: Rule, fv: FeatureVector | None = None) -> dict:
    """One JSON Lines record: sid, rev, then every feature in layout order."""
    fv = extract_features(rule) if fv is None else fv
    record: dict = {"sid": rule.sid, "rev": rule.rev}
    for name, value in zip(FEATURE_NAMES, vectorize(fv)):
        record[name] = int(value)
    return record


def write_jsonl(rules: Iterable[Rule], handle: IO[str]) -> int:
    n = 0
    for rule in rules:
        handle.write(json.dumps(feature_record(rule)) + "\n")
        n += 1
    return n


def schema() -> dict:
    """JSON schema documenting the vector layout."""
    return {
        "$schema": "https://json-schema.org/draft/2020-12/schema",
        "title": "rulecheck feature record",
        "type": "object",
        "schema_hash": SCHEMA_HASH,
        "properties": {
            "sid": {"type": "integer"},
            "rev": {"type": "integer"},
            **{name: {"type": "integer", "minimum": 0} for name in FEATURE_NAMES},
        },
        "required": ["sid", "rev", *FEATURE_NAMES],
        "x-order": ["sid", "rev", *FEATURE_NAMES],
    }
