import re

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rulecheck.corpus import figure_rules_text
from rulecheck.parser import (
    Address,
    AnyValue,
    Group,
    Negated,
    ParseError,
    Port,
    PortRange,
    ThresholdError,
    Variable,
    decode_content,
    parse_address,
    parse_port,
    parse_rule,
    parse_ruleset,
    parse_threshold,
    serialize_rule,
    split_pcre,
    to_dict,
)

from conftest import MINIMAL

OPENVAS = (
    'alert http $EXTERNAL_NET any -> $HOME_NET any (msg:"ET SCAN OpenVAS User-Agent Inbound"; '
    'flow:established,to_server; http.user_agent; content:"OpenVAS"; sid:2012726;)'
)


def reparse(rule):
    return parse_rule(serialize_rule(rule))


class TestParseRule:
    def test_openvas_header_and_options(self):
        rule = parse_rule(OPENVAS)
        h = rule.header
        assert (h.action, h.protocol, h.direction) == ("alert", "http", "->")
        assert h.src_addr == Variable("EXTERNAL_NET") and h.src_port == AnyValue()
        assert h.dst_addr == Variable("HOME_NET") and h.dst_port == AnyValue()
        assert rule.option("flow").value == "established,to_server"
        assert [o.keyword for o in rule.options] == [
            "msg", "flow", "http.user_agent", "content", "sid"
        ]
        assert rule.option("http.user_agent").value is None
        assert rule.option("content").value == '"OpenVAS"'
        assert rule.matches[0].buffer == "http.user_agent"
        assert rule.sid == 2012726 and rule.msg == "ET SCAN OpenVAS User-Agent Inbound"

    def test_minimal_rule(self):
        rule = parse_rule(MINIMAL)
        assert rule.rev == 1
        assert all(o.modifiers == () for o in rule.options)
        assert serialize_rule(rule) == MINIMAL

    def test_zeus_threshold_raw_value(self, figures):
        opt = figures["zeus_dga_nxdomain"].option("threshold")
        assert opt.value == "type both, track by_dst, count 12, seconds 120"

    def test_modifiers_bind_to_preceding_match(self, figures):
        rule = figures["exe_download_exceptions"]
        exe = [o for o in rule.options if o.keyword == "content" and o.value == '".exe"'][0]
        assert [m.keyword for m in exe.modifiers] == ["distance", "within", "endswith"]
        assert exe.modifier("within").value == "8"

    def test_disabled_rule(self):
        rule = parse_rule("# " + MINIMAL)
        assert rule.disabled
        assert serialize_rule(rule).startswith("#alert")
        assert reparse(rule) == rule

    def test_unknown_keywords_kept(self):
        rule = parse_rule(
            'alert tcp any any -> any any (msg:"x"; lua:check.lua; foo_bar; sid:5; rev:3;)'
        )
        assert rule.option("lua").value == "check.lua"
        assert rule.option("foo_bar").value is None
        assert rule.rev == 3

    def test_legacy_buffer_modifier_normalized(self):
        rule = parse_rule(
            'alert http any any -> any any (msg:"x"; content:"/a"; http_uri; '
            'content:"b"; nocase; http_header; content:"c"; sid:1;)'
        )
        assert [o.keyword for o in rule.options] == [
            "msg", "http.uri", "content", "http.header", "content", "pkt_data", "content", "sid"
        ]
        assert [m.buffer for m in rule.matches] == ["http.uri", "http.header", None]
        assert reparse(rule) == rule

    def test_negated_content(self):
        rule = parse_rule('alert http any any -> any any (msg:"x"; content:!"a"; pcre:!"/b/"; sid:1;)')
        assert [o.negated for o in rule.options if o.keyword in ("content", "pcre")] == [True, True]
        assert rule.negated_match_count == 2

    def test_negation_only_on_matches(self):
        rule = parse_rule('alert http any any -> any any (msg:"x"; foo:!bar; sid:1;)')
        opt = rule.option("foo")
        assert not opt.negated and opt.value == "!bar"

    def test_escaped_quote_and_semicolon(self):
        rule = parse_rule(r'alert http any any -> any any (msg:"a \"q\" \; b"; content:"x\;y"; sid:1;)')
        assert rule.msg == 'a "q" ; b'
        assert decode_content(rule.option("content").value) == b"x;y"
        assert reparse(rule) == rule

    @pytest.mark.parametrize(
        "text, message",
        [
            ('alert http any any -> any any (msg:"x; sid:1;)', "unterminated quote"),
            ('alert http any any -> any any (msg:"x"; nocase; sid:1;)', "dangling modifier"),
            ('alert http any any => any any (msg:"x"; sid:1;)', "direction"),
            ('alert http any any -> any 70000 (msg:"x"; sid:1;)', "port"),
            ('bogus http any any -> any any (msg:"x"; sid:1;)', "action"),
            ('alert http any any -> any any (msg:"x";)', "sid"),
            ('alert http any any -> any any (sid:1;)', "msg"),
            ('alert http any any -> any any (msg:"x"; sid:0;)', "sid"),
            ('alert http any any -> any any msg:"x"; sid:1;', "option list"),
        ],
    )
    def test_errors(self, text, message):
        with pytest.raises(ParseError) as info:
            parse_rule(text)
        assert message in str(info.value)
        assert info.value.column is not None

    def test_dangling_modifier_after_non_match(self):
        with pytest.raises(ParseError) as info:
            parse_rule('alert http any any -> any any (msg:"x"; flow:to_server; depth:3; sid:1;)')
        assert info.value.token == "depth"


class TestHeaderSpecs:
    def test_address_forms(self):
        assert parse_address("any") == AnyValue()
        assert parse_address("$HOME_NET") == Variable("HOME_NET")
        assert parse_address("!$HOME_NET") == Negated(Variable("HOME_NET"))
        spec = parse_address("[10.0.0.0/8,!10.1.0.0/16,$DNS_SERVERS]")
        assert isinstance(spec, Group) and len(spec.items) == 3
        assert spec.items[1] == Negated(Address("10.1.0.0/16"))
        assert str(spec) == "[10.0.0.0/8,!10.1.0.0/16,$DNS_SERVERS]"

    def test_port_forms(self):
        assert parse_port("53") == Port(53)
        assert parse_port("1024:2048") == PortRange(1024, 2048)
        assert isinstance(parse_port("![80,443]"), Negated)

    @pytest.mark.parametrize("bad", ["[]", "!", "300.1.1.1", "[1.2.3.4"])
    def test_bad_addresses(self, bad):
        with pytest.raises(ParseError):
            parse_address(bad)

    @pytest.mark.parametrize("bad", ["65536", "90:80", "-1", "abc"])
    def test_bad_ports(self, bad):
        with pytest.raises(ParseError):
            parse_port(bad)


class TestRuleset:
    def test_figure_corpus(self, figure_set):
        assert len(figure_set.rules) == 10
        assert figure_set.parse_diagnostics == []
        for rule in figure_set.rules:
            assert reparse(rule) == rule
            assert rule.line is not None

    def test_empty(self):
        rs = parse_ruleset([])
        assert rs.rules == [] and rs.parse_diagnostics == []

    def test_malformed_between_valid(self):
        rs = parse_ruleset([MINIMAL, "alert http any any (broken", MINIMAL.replace("sid:1", "sid:2")])
        assert len(rs.rules) == 2
        assert len(rs.parse_diagnostics) == 1 and rs.parse_diagnostics[0].line == 2
        assert [r.line for r in rs.rules] == [1, 3]

    def test_count_identity(self):
        lines = [
            "# a comment",
            "",
            MINIMAL,
            "#" + MINIMAL,
            "alert x",
            "   ",
            'alert http any any -> any any (msg:"x"; sid:2; \\',
            " rev:2;)",
        ]
        rs = parse_ruleset(lines)
        # non-blank logical lines other than plain comments: MINIMAL, #MINIMAL,
        # "alert x" and the continued rule
        assert len(rs.rules) + len(rs.errors) == 4
        assert rs.rules[-1].rev == 2 and rs.rules[-1].line == 7
        assert rs.rules[1].disabled

    def test_figure_text_order_preserved(self):
        text = figure_rules_text()
        for line, rule in zip(
            [ln for ln in text.splitlines() if ln.startswith("alert")], parse_ruleset(text.splitlines())
        ):
            body = line[line.index("(") + 1 : line.rindex(")")]
            source_keywords = [
                p.strip().split(":")[0].strip() for p in re.split(r';(?=(?:[^"]*"[^"]*")*[^"]*$)', body)
                if p.strip()
            ]
            assert rule.keywords() == source_keywords


class TestThreshold:
    def test_zeus(self):
        spec = parse_threshold("type both, track by_dst, count 12, seconds 120")
        assert (spec.type, spec.track, spec.count, spec.seconds) == ("both", "by_dst", 12, 120)

    def test_limit(self):
        spec = parse_threshold("type limit, track by_src, count 1, seconds 60")
        assert (spec.type, spec.track, spec.count, spec.seconds) == ("limit", "by_src", 1, 60)

    @pytest.mark.parametrize(
        "raw",
        [
            "type limit, track by_src, count 0, seconds 60",
            "type limit, track by_src, count 1",
            "type sometimes, track by_src, count 1, seconds 60",
            "type limit, track by_src, count 1, seconds 60, colour red",
            "type limit, track by_src, count x, seconds 60",
        ],
    )
    def test_malformed(self, raw):
        with pytest.raises(ThresholdError):
            parse_threshold(raw)

    def test_detection_filter_has_no_type(self):
        spec = parse_threshold("track by_src, count 5, seconds 30", "detection_filter")
        assert spec.type == "threshold" and spec.count == 5


def test_decode_content_hex():
    assert decode_content('"|00 01|ab|2F|"') == b"\x00\x01ab/"


def test_split_pcre():
    assert split_pcre('"/^abc$/Ri"') == ("^abc$", "Ri")
    with pytest.raises(ValueError):
        split_pcre('"abc"')


def test_to_dict_field_names(figures):
    d = to_dict(figures["openvas_ua"])
    assert list(d) == [
        "action", "protocol", "src_addr", "src_port", "direction", "dst_addr", "dst_port",
        "options", "sid", "rev", "disabled",
    ]
    assert d["src_addr"] == "$EXTERNAL_NET" and d["sid"] == 2012726


# -- grammar fuzzer ----------------------------------------------------------

_text = st.text(alphabet="abcdefghijklmnopqrstuvwxyzABC0123456789 /.-_=?&", min_size=1, max_size=12)
_escaped = st.sampled_from([r"\"", r"\;", r"\\"])
_value = st.lists(st.one_of(_text, _escaped), min_size=1, max_size=3).map("".join)
_hex = st.binary(min_size=1, max_size=4).map(lambda b: "|" + " ".join(f"{x:02X}" for x in b) + "|")

_variable = st.sampled_from(["$HOME_NET", "$EXTERNAL_NET", "$HTTP_SERVERS", "$DNS_SERVERS"])
_ip = st.tuples(*[st.integers(0, 255)] * 4).map(lambda t: ".".join(map(str, t)))
_cidr = st.tuples(_ip, st.integers(8, 32)).map(lambda t: f"{t[0]}/{t[1]}")


def _addr():
    leaf = st.one_of(_variable, _ip, _cidr)
    return st.recursive(
        leaf,
        lambda inner: st.one_of(
            inner.map(lambda s: "!" + s if not s.startswith("!") else s),
            st.lists(inner, min_size=1, max_size=3).map(lambda xs: "[" + ",".join(xs) + "]"),
        ),
        max_leaves=4,
    )


_port_leaf = st.one_of(
    st.integers(0, 65535).map(str),
    st.tuples(st.integers(0, 65535), st.integers(0, 65535)).map(
        lambda t: f"{min(t)}:{max(t)}"
    ),
)
_port = st.one_of(
    st.just("any"),
    _port_leaf,
    _port_leaf.map(lambda p: "!" + p),
    st.lists(_port_leaf, min_size=1, max_size=3).map(lambda xs: "[" + ",".join(xs) + "]"),
)
_address = st.one_of(st.just("any"), _addr())
_modifier = st.sampled_from(["nocase;", "depth:4;", "offset:2;", "distance:0;", "within:10;",
                             "startswith;", "endswith;", "fast_pattern;"])


@st.composite
def _match(draw):
    kind = draw(st.sampled_from(["content", "pcre"]))
    bang = "!" if draw(st.booleans()) else ""
    if kind == "content":
        body = draw(st.lists(st.one_of(_value, _hex), min_size=1, max_size=3).map("".join))
        value = f'"{body}"'
    else:
        value = f'"/{draw(_text)}/{draw(st.sampled_from(["", "i", "Ri", "s"]))}"'
    mods = draw(st.lists(_modifier, max_size=2))
    return [f"{kind}:{bang}{value};", *mods]


_other = st.one_of(
    st.sampled_from(["flow:established,to_server;", "flow:to_client;", "http.uri;",
                     "http.user_agent;", "dns.query;", "http.stat_code;", "pkt_data;",
                     "threshold:type limit, track by_src, count 1, seconds 60;",
                     "flowbits:isset,x;", "byte_test:1,&,128,2;", "foo_unknown;"]),
    _text.map(lambda t: f'reference:url,{t.replace(" ", "")}x;'),
)


@st.composite
def rule_texts(draw):
    action = draw(st.sampled_from(["alert", "drop", "pass", "reject"]))
    proto = draw(st.sampled_from(["http", "tcp", "udp", "dns", "tls"]))
    src, dst = draw(_address), draw(_address)
    sport, dport = draw(_port), draw(_port)
    arrow = draw(st.sampled_from(["->", "<>"]))
    body = [f'msg:"{draw(_value)}";']
    for piece in draw(st.lists(st.one_of(_match(), _other.map(lambda o: [o])), max_size=6)):
        body.extend(piece)
    body.append(f"sid:{draw(st.integers(1, 10**7))};")
    if draw(st.booleans()):
        body.append(f"rev:{draw(st.integers(1, 50))};")
    prefix = "#" if draw(st.booleans()) else ""
    return f"{prefix}{action} {proto} {src} {sport} {arrow} {dst} {dport} ({' '.join(body)})", body


@settings(max_examples=300, deadline=None)
@given(rule_texts())
def test_fuzzed_round_trip(generated):
    text, body = generated
    rule = parse_rule(text)
    assert reparse(rule) == rule
    # fixpoint of the canonical form
    assert serialize_rule(reparse(rule)) == serialize_rule(rule)
    # order preservation against the generated token sequence
    assert rule.keywords() == [b.split(":")[0].rstrip(";") for b in body]
    # negation bookkeeping
    expected = sum(1 for b in body if b.startswith(("content:!", "pcre:!")))
    assert rule.negated_match_count == expected
