import pytest

from rulecheck.checkers import (
    DETERMINISTIC,
    PRINCIPLES,
    assess,
    check_alert_throttling,
    check_exceptions,
    check_generalized_characteristic,
    check_generalized_position,
    check_limited_proxy,
    check_successful_action,
    lint_report,
    pcre_variability,
    prevalence,
)
from rulecheck.classifier import BoostedModel, Node
from rulecheck.parser import parse_rule

from conftest import MINIMAL

# Verdicts worked out by reading each worked-example rule against the six
# principle definitions; columns follow PRINCIPLES:
# proxy, successful, exceptions, throttling, generalized char., generalized pos.
T, F = True, False
HAND_TABLE = {
    "go_http_client_ua": (F, F, F, F, F, T),
    "zeus_dga_nxdomain": (T, T, F, T, T, T),
    "openvas_ua": (F, F, F, F, F, T),
    "coldfusion_admin": (T, F, F, F, F, T),
    "coldfusion_admin_flowbits": (T, F, F, F, F, T),
    "coldfusion_admin_success": (T, T, F, F, F, T),
    "exe_download_exceptions": (T, F, T, F, T, T),
    "dlink_login_cgi": (T, F, F, F, T, F),
    "openvasvt_test_string": (T, F, F, T, F, T),
    "coldfusion_adminapi": (T, F, F, F, F, T),
}


def rule_with(body, header="alert http any any -> any any"):
    return parse_rule(f'{header} (msg:"t"; {body} sid:1;)')


@pytest.mark.parametrize("name", sorted(HAND_TABLE))
def test_hand_table(figures, name):
    verdicts = assess(figures[name]).as_labels()
    assert tuple(verdicts[p] for p in PRINCIPLES) == HAND_TABLE[name]


def test_openvas_violates_five(figures):
    assert len(assess(figures["openvas_ua"]).violations()) == 5


def test_minimal_rule():
    labels = assess(parse_rule(MINIMAL)).as_labels()
    assert labels == {p: p == "generalized_position" for p in PRINCIPLES}


class TestThrottling:
    def test_threshold_present(self, figures):
        assert check_alert_throttling(figures["zeus_dga_nxdomain"]).adheres
        assert not check_alert_throttling(figures["openvas_ua"]).adheres

    def test_detection_filter(self):
        rule = rule_with("detection_filter:track by_src, count 3, seconds 10;")
        assert check_alert_throttling(rule).adheres

    def test_invalid_threshold_does_not_count(self):
        rule = rule_with("threshold:type limit, track by_src, count 0, seconds 10;")
        assert not check_alert_throttling(rule).adheres


class TestSuccessfulAction:
    def test_response_check(self, figures):
        v = check_successful_action(figures["coldfusion_admin_success"])
        assert v.adheres and v.confidence == "deterministic"
        assert any("to_client" in e for e in v.evidence)

    def test_request_only(self, figures):
        v = check_successful_action(figures["coldfusion_admin"])
        assert not v.adheres and v.evidence

    def test_server_to_client_header(self, figures):
        v = check_successful_action(figures["zeus_dga_nxdomain"])
        assert v.adheres and any("server-to-client" in e for e in v.evidence)

    def test_flowbits_isset(self):
        assert check_successful_action(rule_with("flowbits:isset,seen;")).adheres
        assert not check_successful_action(rule_with("flowbits:set,seen;")).adheres

    def test_stat_code(self):
        assert check_successful_action(rule_with('http.stat_code; content:"200";')).adheres


class TestExceptions:
    def test_negated_matches(self, figures):
        v = check_exceptions(figures["exe_download_exceptions"])
        assert v.adheres and len(v.evidence) == 6

    def test_none(self, figures):
        assert not check_exceptions(figures["go_http_client_ua"]).adheres

    def test_negated_address(self):
        rule = parse_rule('alert http !$HOME_NET any -> any any (msg:"x"; sid:1;)')
        assert check_exceptions(rule).adheres


class TestLimitedProxy:
    def test_user_agent_only(self, figures):
        v = check_limited_proxy(figures["openvas_ua"])
        assert not v.adheres and v.confidence == "heuristic"
        assert any("http.user_agent" in e for e in v.evidence)

    def test_payload_string(self, figures):
        assert check_limited_proxy(figures["openvasvt_test_string"]).adheres

    def test_uri(self, figures):
        assert check_limited_proxy(figures["coldfusion_adminapi"]).adheres

    def test_method_alone_is_not_direct(self):
        assert not check_limited_proxy(rule_with('http.method; content:"GET";')).adheres


class TestGeneralizedCharacteristic:
    def test_dga_pcre(self, figures):
        v = check_generalized_characteristic(figures["zeus_dga_nxdomain"])
        assert v.adheres

    def test_literal_uri(self, figures):
        assert not check_generalized_characteristic(figures["coldfusion_admin"]).adheres

    def test_literal_regex(self):
        assert not check_generalized_characteristic(rule_with('pcre:"/^abc$/";')).adheres

    def test_improved_alternation(self):
        rule = rule_with('http.uri; pcre:"/\\/CFIDE\\/(administrator|adminapi)/";')
        assert check_generalized_characteristic(rule).adheres

    @pytest.mark.parametrize(
        "pattern, expected",
        [
            ("abc", []),
            ("a.c", ["wildcard ."]),
            ("[a-z]{13,32}", ["class [a-z]", "quantifier {13,32}"]),
            ("(?:x|y)+", ["alternation |", "quantifier +"]),
            (r"\d\.exe", ["class \\d"]),
            (r"a\?b", []),
        ],
    )
    def test_variability_scanner(self, pattern, expected):
        assert pcre_variability(pattern) == expected


class TestGeneralizedPosition:
    def test_composite_literal(self, figures):
        v = check_generalized_position(figures["dlink_login_cgi"])
        assert not v.adheres and any("/login.cgi?cli=" in e for e in v.evidence)

    def test_improved_split(self):
        rule = rule_with('http.uri; content:"/login.cgi?"; content:"cli=";')
        assert check_generalized_position(rule).adheres

    def test_single_token(self):
        assert check_generalized_position(rule_with('content:"OpenVAS";')).adheres

    def test_anchor_on_separator(self):
        rule = rule_with('content:"cmd="; depth:4;')
        assert not check_generalized_position(rule).adheres


def test_evidence_for_every_false_verdict(figure_set):
    for rule in figure_set.rules:
        a = assess(rule)
        assert set(a.verdicts) == set(PRINCIPLES)
        for p, v in a.verdicts.items():
            if not v.adheres:
                assert v.evidence and all(isinstance(e, str) and e for e in v.evidence)
            assert v.confidence == ("deterministic" if p in DETERMINISTIC else "heuristic")


def test_deterministic_across_runs(figure_set):
    first = [assess(r).to_dict() for r in figure_set.rules]
    second = [assess(r).to_dict() for r in figure_set.rules]
    assert first == second


def test_disabled_rule_flagged(figures):
    rule = parse_rule("#" + figures["openvas_ua"].raw_text)
    a = assess(rule)
    assert a.disabled and a.as_labels() == assess(figures["openvas_ua"]).as_labels()


def _constant_model(principle, value):
    return BoostedModel(trees=(Node(leaf_value=value),), learning_rate=1.0, principle=principle)


def test_classifier_overrides_heuristic_only(figures):
    rule = figures["openvas_ua"]
    models = {
        "limited_proxy": _constant_model("limited_proxy", 5.0),
        "alert_throttling": _constant_model("alert_throttling", 5.0),
    }
    a = assess(rule, models)
    assert a.verdicts["limited_proxy"].adheres and a.sources["limited_proxy"] == "classifier"
    assert not a.verdicts["alert_throttling"].adheres
    assert a.sources["alert_throttling"] == "checker"


def test_prevalence_summary(figure_set):
    items = [assess(r) for r in figure_set.rules]
    summary = prevalence(items)
    expected = {p: sum(1 for row in HAND_TABLE.values() if not row[i]) for i, p in enumerate(PRINCIPLES)}
    assert summary["rules"] == 10
    assert {p: summary["principles"][p]["violations"] for p in PRINCIPLES} == expected
    assert summary["principles"]["alert_throttling"]["proportion"] == pytest.approx(0.8)
    assert len(lint_report(items)["assessments"]) == 10


# Deterministic checks against labels that are known by construction: each
# variant adds or omits exactly the construct a principle is defined by.
def _variants():
    out = []
    for i in range(40):
        thr = i % 3 == 0
        neg = i % 4 == 1
        resp = i % 5 == 2
        body = 'flow:established,{}; http.uri; content:"/p{}.php";'.format(
            "to_client" if resp else "to_server", i
        )
        if neg:
            body += ' content:!"safe";'
        if thr:
            body += " threshold:type limit, track by_src, count 2, seconds 60;"
        labels = {"alert_throttling": thr, "exceptions": neg, "successful_action": resp}
        out.append((rule_with(body), labels))
    return out


def test_deterministic_checks_precision_on_labeled_variants(figures):
    pairs = _variants()
    for name, row in HAND_TABLE.items():
        labels = dict(zip(PRINCIPLES, row))
        pairs.append((figures[name], {p: labels[p] for p in DETERMINISTIC}))
    for p in DETERMINISTIC:
        predicted_true = [labels[p] for rule, labels in pairs if assess(rule).verdicts[p].adheres]
        assert predicted_true and all(predicted_true)
