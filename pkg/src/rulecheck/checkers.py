"""Heuristic detectors for the six rule design principles.

Each ``check_*`` function takes a parsed :class:`~rulecheck.parser.Rule` and
returns a :class:`Verdict`. Verdicts carry evidence strings naming the
options or header elements that decided them.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping

from .features import flow_directions, rule_threshold
from .parser import (
    AnyValue,
    Port,
    PortRange,
    Rule,
    Variable,
    contains_negation,
    decode_content,
    split_pcre,
    unquote,
)

PRINCIPLES = (
    "limited_proxy",
    "successful_action",
    "exceptions",
    "alert_throttling",
    "generalized_characteristic",
    "generalized_position",
)
DETERMINISTIC = frozenset({"successful_action", "exceptions", "alert_throttling"})

PROXY_BUFFERS = frozenset(
    {
        "http.user_agent",
        "http.header",
        "http.header.raw",
        "http.header_names",
        "http.request_header",
        "http.host",
        "http.host.raw",
        "http.referer",
        "http.accept",
        "http.accept_enc",
        "http.accept_lang",
        "http.connection",
        "ja3.hash",
        "ja3.string",
        "ja3s.hash",
        "ja3s.string",
        "tls.sni",
        "tls.cert_subject",
        "tls.cert_issuer",
        "tls.cert_serial",
        "tls.cert_fingerprint",
        "tls.certs",
    }
)
# Buffers that say nothing on their own about the malicious characteristic.
NEUTRAL_BUFFERS = frozenset({"http.method", "http.protocol"})
RESPONSE_BUFFERS = frozenset(
    {
        "http.stat_code",
        "http.stat_msg",
        "http.response_body",
        "http.response_line",
        "http.response_header",
        "http.server",
        "http.location",
    }
)
POSITION_SEPARATORS = b"?&= "
ABSOLUTE_ANCHORS = ("offset", "depth", "startswith")


@dataclass(frozen=True)
class Verdict:
    adheres: bool
    evidence: tuple[str, ...] = ()
    confidence: str = "deterministic"

    def to_dict(self) -> dict:
        return {
            "adheres": self.adheres,
            "evidence": list(self.evidence),
            "confidence": self.confidence,
        }


@dataclass(frozen=True)
class PrincipleAssessment:
    sid: int
    rev: int
    verdicts: Mapping[str, Verdict]
    disabled: bool = False
    sources: Mapping[str, str] = field(default_factory=dict)

    def violations(self, deterministic_only: bool = False) -> list[str]:
        return [
            p
            for p in PRINCIPLES
            if not self.verdicts[p].adheres
            and (not deterministic_only or self.verdicts[p].confidence == "deterministic")
        ]

    def as_labels(self) -> dict[str, bool]:
        return {p: self.verdicts[p].adheres for p in PRINCIPLES}

    def to_dict(self) -> dict:
        return {
            "sid": self.sid,
            "rev": self.rev,
            "disabled": self.disabled,
            "verdicts": {p: self.verdicts[p].to_dict() for p in PRINCIPLES},
        }


def _describe(match) -> str:
    where = match.buffer or "payload"
    bang = "!" if match.negated else ""
    return f"{match.keyword}:{bang}{match.option.value} [{where}]"


def check_alert_throttling(rule: Rule) -> Verdict:
    spec = rule_threshold(rule)
    if spec is None:
        return Verdict(False, ("no threshold or detection_filter option",))
    return Verdict(
        True,
        (f"throttled: type {spec.type}, track {spec.track}, count {spec.count}, "
         f"seconds {spec.seconds}",),
    )


def _serves_response(rule: Rule) -> bool:
    """Header reads as server-to-client: fixed source port, open destination port."""
    h = rule.header
    if h.direction != "->" or not isinstance(h.dst_port, AnyValue):
        return False
    return isinstance(h.src_port, (Port, PortRange, Variable))


def check_successful_action(rule: Rule) -> Verdict:
    evidence = []
    _to_server, to_client = flow_directions(rule)
    if to_client:
        flow = ",".join(o.value or "" for o in rule.options_named("flow"))
        evidence.append(f"flow:{flow} inspects the response side")
    for opt in rule.options:
        if opt.keyword in ("flowbits", "xbits") and opt.value:
            if opt.value.split(",")[0].strip() == "isset":
                evidence.append(f"{opt.keyword}:{opt.value} checks state from an earlier event")
    response_matches = [m for m in rule.matches if m.buffer in RESPONSE_BUFFERS and not m.negated]
    evidence += [f"{_describe(m)} matches a response field" for m in response_matches]
    payload_checks = [o for o in rule.options if o.keyword in ("byte_test", "content", "pcre")]
    if payload_checks and _serves_response(rule):
        h = rule.header
        evidence.append(
            f"header {h.src_addr} {h.src_port} {h.direction} {h.dst_addr} {h.dst_port} "
            f"with {payload_checks[0].keyword} inspects server-to-client traffic"
        )
    if evidence:
        return Verdict(True, tuple(evidence))
    return Verdict(
        False,
        ("no response-side flow, status-code match, flowbits isset, or server-to-client header",),
    )


def check_exceptions(rule: Rule) -> Verdict:
    evidence = [f"negated {_describe(m)}" for m in rule.matches if m.negated]
    h = rule.header
    for label, spec in (("source", h.src_addr), ("destination", h.dst_addr)):
        if contains_negation(spec):
            evidence.append(f"{label} address {spec} excludes addresses")
    if evidence:
        return Verdict(True, tuple(evidence))
    return Verdict(False, ("no negated content/pcre and no negated address",))


def check_limited_proxy(rule: Rule) -> Verdict:
    positive = [m for m in rule.matches if not m.negated]
    direct = [
        m for m in positive if m.buffer not in PROXY_BUFFERS and m.buffer not in NEUTRAL_BUFFERS
    ]
    if direct:
        return Verdict(
            True,
            tuple(f"{_describe(m)} targets the characteristic directly" for m in direct),
            "heuristic",
        )
    proxies = [m for m in positive if m.buffer in PROXY_BUFFERS]
    if proxies:
        evidence = tuple(f"{_describe(m)} matches a proxy field only" for m in proxies)
    else:
        evidence = ("no positive payload match outside proxy/neutral buffers",)
    return Verdict(False, evidence, "heuristic")


def pcre_variability(pattern: str) -> list[str]:
    """Variability constructs found in a PCRE pattern, in order of appearance."""
    found = []
    i = 0
    n = len(pattern)
    while i < n:
        ch = pattern[i]
        if ch == "\\":
            if i + 1 < n and pattern[i + 1] in "dDwWsShHvV":
                found.append(f"class \\{pattern[i + 1]}")
            i += 2
            continue
        if ch == "[":
            j = i + 1
            if j < n and pattern[j] == "^":
                j += 1
            if j < n and pattern[j] == "]":
                j += 1
            while j < n and pattern[j] != "]":
                j += 2 if pattern[j] == "\\" else 1
            found.append(f"class {pattern[i:j + 1]}")
            i = j + 1
            continue
        if ch == ".":
            found.append("wildcard .")
        elif ch in "*+":
            found.append(f"quantifier {ch}")
        elif ch == "?" and not (i > 0 and pattern[i - 1] == "("):
            found.append("quantifier ?")
        elif ch == "{":
            m = re.match(r"\{\d*(,\d*)?\}", pattern[i:])
            if m and m.group(0) != "{}":
                found.append(f"quantifier {m.group(0)}")
                i += len(m.group(0))
                continue
        elif ch == "|":
            found.append("alternation |")
        i += 1
    return found


def check_generalized_characteristic(rule: Rule) -> Verdict:
    evidence = []
    positive = [m for m in rule.matches if not m.negated]
    for m in positive:
        if m.keyword != "pcre":
            continue
        try:
            pattern, _flags = split_pcre(m.option.value)
        except ValueError:
            continue
        constructs = pcre_variability(pattern)
        if constructs:
            evidence.append(f"pcre {m.option.value} abstracts via {', '.join(constructs[:3])}")
    content_buffers = {m.buffer for m in positive if m.keyword == "content"}
    for m in positive:
        if m.keyword == "pcre" and m.buffer in content_buffers:
            where = m.buffer or "payload"
            evidence.append(f"content complemented by pcre on {where}")
            break
    if evidence:
        return Verdict(True, tuple(evidence), "heuristic")
    literals = [_describe(m) for m in positive] or ["no positive content/pcre"]
    return Verdict(False, tuple(f"literal match {d}" for d in literals), "heuristic")


def _content_bytes(value: str) -> bytes:
    try:
        return decode_content(value)
    except ValueError:
        return unquote(value).encode("latin-1", errors="replace")


def _tokens(data: bytes) -> list[bytes]:
    return [t for t in re.split(rb"[?&= ]", data) if t]


def check_generalized_position(rule: Rule) -> Verdict:
    violations = []
    positive = [m for m in rule.matches if not m.negated]
    for m in positive:
        if m.keyword != "content":
            continue
        data = _content_bytes(m.option.value)
        if len(_tokens(data)) >= 2:
            violations.append(f"content {m.option.value} joins several tokens in one literal")
            continue
        anchors = [a for a in ABSOLUTE_ANCHORS if m.option.modifier(a) is not None]
        if anchors and any(b in data for b in POSITION_SEPARATORS):
            violations.append(
                f"content {m.option.value} pinned by {', '.join(anchors)} around a separator"
            )
    if violations:
        return Verdict(False, tuple(violations), "heuristic")
    evidence = []
    contents = [m for m in positive if m.keyword == "content"]
    if len(contents) > 1:
        evidence.append(f"tokens split across {len(contents)} content matches")
    for m in positive:
        if m.keyword == "pcre":
            try:
                _pattern, flags = split_pcre(m.option.value)
            except ValueError:
                continue
            if "R" in flags:
                evidence.append(f"pcre {m.option.value} matched at a relative offset")
    if not evidence:
        evidence.append("no composite literal to generalize")
    return Verdict(True, tuple(evidence), "heuristic")


CHECKS = {
    "limited_proxy": check_limited_proxy,
    "successful_action": check_successful_action,
    "exceptions": check_exceptions,
    "alert_throttling": check_alert_throttling,
    "generalized_characteristic": check_generalized_characteristic,
    "generalized_position": check_generalized_position,
}


def assess(rule: Rule, models: Mapping | None = None) -> PrincipleAssessment:
    """Run all six checks.

    When ``models`` maps a principle to a trained classifier, that model's
    prediction replaces the heuristic verdict for the principle. Deterministic
    verdicts are never overridden.
    """
    verdicts = {name: check(rule) for name, check in CHECKS.items()}
    sources = dict.fromkeys(PRINCIPLES, "checker")
    if models:
        from .classifier import predict
        from .features import extract_features

        fv = extract_features(rule)
        for name, model in models.items():
            if name in DETERMINISTIC or name not in verdicts:
                continue
            prob = predict(model, fv)
            adheres = prob >= 0.5
            old = verdicts[name]
            note = f"classifier probability {prob:.3f}"
            evidence = old.evidence if adheres == old.adheres else (note,) + old.evidence
            verdicts[name] = replace(old, adheres=adheres, evidence=evidence, confidence="heuristic")
            sources[name] = "classifier"
    return PrincipleAssessment(rule.sid, rule.rev, verdicts, rule.disabled, sources)


def prevalence(assessments: Iterable[PrincipleAssessment]) -> dict[str, dict]:
    """Violation count and proportion per principle."""
    items = list(assessments)
    total = len(items)
    summary = {}
    for p in PRINCIPLES:
        count = sum(1 for a in items if not a.verdicts[p].adheres)
        summary[p] = {"violations": count, "proportion": count / total if total else 0.0}
    return {"rules": total, "principles": summary}


def lint_report(assessments: Iterable[PrincipleAssessment]) -> dict:
    items = list(assessments)
    return {"assessments": [a.to_dict() for a in items], "summary": prevalence(items)}
