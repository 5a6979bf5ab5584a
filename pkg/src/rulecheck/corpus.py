"""The bundled worked-example rules used as test anchors and demo input."""

from __future__ import annotations

from importlib import resources

from .parser import Rule, Ruleset, parse_ruleset

FIGURE_RULES_FILE = "figure_rules.rules"

# Short names for the bundled rules, keyed by (sid, rev).
FIGURE_RULE_NAMES = {
    (2024897, 1): "go_http_client_ua",
    (2018316, 1): "zeus_dga_nxdomain",
    (2012726, 1): "openvas_ua",
    (2016184, 1): "coldfusion_admin",
    (2016184, 2): "coldfusion_admin_flowbits",
    (9000001, 1): "coldfusion_admin_success",
    (2019714, 1): "exe_download_exceptions",
    (2025756, 1): "dlink_login_cgi",
    (2033101, 1): "openvasvt_test_string",
    (2016183, 1): "coldfusion_adminapi",
}


def figure_rules_text() -> str:
    return resources.files("rulecheck.data").joinpath(FIGURE_RULES_FILE).read_text("utf-8")


def figure_ruleset() -> Ruleset:
    return parse_ruleset(figure_rules_text().splitlines(), source_path=FIGURE_RULES_FILE)


def figure_rules() -> dict[str, Rule]:
    """Bundled rules keyed by their short name."""
    return {FIGURE_RULE_NAMES[(r.sid, r.rev)]: r for r in figure_ruleset().rules}
