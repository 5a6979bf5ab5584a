"""Seeded synthetic data for demos, tests and the acceptance suite.

Nothing here reconstructs private data; every generator documents which
published shape it imitates.
"""

from __future__ import annotations

from datetime import date, datetime, time, timedelta, timezone

import numpy as np

from .analytics import AlertRecord, IncidentRecord, RuleRevision, RuleRevisionStats
from .checkers import PRINCIPLES
from .classifier import LabeledRule
from .features import FEATURE_NAMES, extract_features
from .parser import parse_rule

MINIMAL_RULE = 'alert http any any -> any any (msg:"x"; sid:1;)'

# Effects injected into the Log4j-like group (alerts per day).
LOG4J_EFFECTS = {
    "intercept": 7.45,
    "successful_action": -2.71,
    "alert_throttling": -7.39,
    "generalized_characteristic": 0.82,
}
# (successful_action, alert_throttling, generalized_characteristic) per rule:
# 2 of 9 successful, 6 of 9 throttled, 2 of 9 generalized.
LOG4J_DESIGN = (
    (0, 0, 0),
    (1, 0, 0),
    (1, 0, 1),
    (0, 1, 0),
    (0, 1, 0),
    (0, 1, 0),
    (0, 1, 0),
    (0, 1, 0),
    (0, 1, 1),
)
# Constant across the group, hence dropped as degenerate.
LOG4J_CONSTANT = {"limited_proxy": False, "exceptions": False, "generalized_position": False}


def toy_separable(n: int = 200, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Random feature matrix whose label is exactly ``threshold.count > 0``.

    The threshold one-hot columns agree with the count (one type set when the
    count is positive, none otherwise), as they would for parsed rules.
    """
    rng = np.random.default_rng(seed)
    d = len(FEATURE_NAMES)
    X = rng.integers(0, 3, size=(n, d)).astype(np.float64)
    j = FEATURE_NAMES.index("threshold.count")
    onehot = [FEATURE_NAMES.index(f"threshold.type.{k}") for k in ("limit", "threshold", "both")]
    counts = np.where(rng.random(n) < 0.5, 0.0, rng.integers(1, 20, size=n))
    # both classes must be present whatever the seed
    counts[0], counts[1] = 0.0, 5.0
    X[:, j] = counts
    X[:, onehot] = 0.0
    kinds = rng.integers(0, 3, size=n)
    for i in np.flatnonzero(counts > 0):
        X[i, onehot[kinds[i]]] = 1.0
    y = (counts > 0).astype(np.float64)
    return X, y


def _labeled(sid: int, group: str, labels: dict) -> LabeledRule:
    fv = extract_features(parse_rule(MINIMAL_RULE.replace("sid:1", f"sid:{sid}")))
    return LabeledRule(sid=sid, rev=1, group=group, features=fv, labels=labels)


def log4j_like_group(
    seed: int = 0, noise_sd: float = 0.03
) -> tuple[list[LabeledRule], list[RuleRevisionStats]]:
    """Nine rules with the Log4j label mix and injected effect sizes, plus their stats."""
    rng = np.random.default_rng(seed)
    group, stats = [], []
    for i, (s, t, g) in enumerate(LOG4J_DESIGN):
        sid = 3_000_001 + i
        labels = {p: False for p in PRINCIPLES}
        labels.update(LOG4J_CONSTANT)
        labels.update(successful_action=bool(s), alert_throttling=bool(t),
                      generalized_characteristic=bool(g))
        group.append(_labeled(sid, "log4j", labels))
        mean = (
            LOG4J_EFFECTS["intercept"]
            + s * LOG4J_EFFECTS["successful_action"]
            + t * LOG4J_EFFECTS["alert_throttling"]
            + g * LOG4J_EFFECTS["generalized_characteristic"]
        )
        workload = mean + float(rng.normal(0.0, noise_sd))
        stats.append(
            RuleRevisionStats(
                sid=sid,
                rev=1,
                alert_count=0,
                incident_count=0,
                active_days=390,
                unnecessary_workload_per_day=workload,
            )
        )
    return group, stats


def single_positive_group(seed: int = 0, n: int = 12) -> tuple[list[LabeledRule], list[RuleRevisionStats]]:
    """A group where successful_action holds for exactly one rule."""
    rng = np.random.default_rng(seed)
    group, stats = [], []
    for i in range(n):
        sid = 4_000_001 + i
        labels = {p: bool(rng.integers(0, 2)) for p in PRINCIPLES}
        labels["successful_action"] = i == 0
        group.append(_labeled(sid, "active_scanning", labels))
        stats.append(RuleRevisionStats(sid, 1, 0, 0, 390, float(rng.gamma(2.0, 1.0))))
    return group, stats


def heavy_tail_workloads(n: int = 400, seed: int = 0, shape: float = 1.0) -> list[float]:
    """Pareto-like per-rule workloads: most rules well below one alert per day.

    Values sit at jittered Pareto quantiles (scale 0.2), so the share below
    1.0 is close to 1 - 5**-shape for any seed.
    """
    rng = np.random.default_rng(seed)
    u = (np.arange(n) + rng.uniform(0.0, 1.0, size=n)) / n
    return sorted((0.2 * (1.0 - u) ** (-1.0 / shape)).tolist())


def workload_fixture(
    seed: int,
    *,
    n_sids: int = 5,
    max_revs: int = 3,
    max_alerts: int = 2000,
    max_incidents: int = 40,
    window_days: int = 60,
):
    """Random revisions, alerts and incidents over a short window.

    Returns (revisions, window, alerts, incidents). Some alerts fall outside
    the window or reference unknown revisions so the diagnostics paths run.
    """
    rng = np.random.default_rng(seed)
    start = date(2021, 1, 1) + timedelta(days=int(rng.integers(0, 100)))
    end = start + timedelta(days=window_days - 1)
    revisions = []
    for k in range(n_sids):
        sid = 2_000_000 + k
        day = start + timedelta(days=int(rng.integers(-20, 10)))
        for rev in range(1, int(rng.integers(1, max_revs + 1)) + 1):
            revisions.append(RuleRevision(sid, rev, day))
            day += timedelta(days=int(rng.integers(0, window_days // 2)))
    alerts = []
    for _ in range(int(rng.integers(0, max_alerts + 1))):
        r = revisions[int(rng.integers(0, len(revisions)))]
        sid, rev = r.sid, r.rev
        if rng.random() < 0.02:
            rev += 7  # unknown revision
        offset = int(rng.integers(-5, window_days + 5))
        moment = datetime.combine(start + timedelta(days=offset), time(), tzinfo=timezone.utc)
        moment += timedelta(seconds=int(rng.integers(0, 86400)))
        alerts.append(AlertRecord(moment, sid, rev, "10.0.0.1", "192.0.2.1"))
    incidents = []
    sids = sorted({r.sid for r in revisions})
    for i in range(int(rng.integers(0, max_incidents + 1))):
        k = int(rng.integers(1, 3))
        chosen = frozenset(int(s) for s in rng.choice(sids, size=k, replace=False))
        if rng.random() < 0.1:
            chosen = chosen | {9_999_999}
        day = start + timedelta(days=int(rng.integers(-3, window_days + 3)))
        incidents.append(IncidentRecord(f"INC-{i:04d}", day, chosen))
    return revisions, (start, end), alerts, incidents


GROUPS = (
    "active_scanning",
    "log4j",
    "other_exploits",
    "process_injection",
    "drive_by_compromise",
    "command_and_control",
)

_BODIES = (
    'http.user_agent; content:"Scanner/{i}";',
    'http.uri; content:"/admin{i}.php";',
    'http.uri; content:"/login.cgi?cli={i}";',
    'http.uri; content:"/api/"; pcre:"/\\/api\\/[a-z]{{3,8}}\\/{i}/";',
    'content:"MAGIC{i}"; depth:8;',
    'http.host; content:"cdn{i}.example";',
    'dns.query; content:"dom{i}.example"; pcre:"/[a-z0-9]{{12,32}}/";',
)


def synthetic_rule_text(i: int, rng: np.random.Generator, threshold_rate: float = 0.2) -> str:
    """One random but well-formed rule built from common figure idioms."""
    sid = 8_000_000 + i
    flow = ("flow:established,to_server; ", "flow:established,to_client; ", "")[
        int(rng.choice(3, p=(0.6, 0.15, 0.25)))
    ]
    parts = [_BODIES[int(rng.integers(0, len(_BODIES)))].format(i=i)]
    if "to_client" in flow and rng.random() < 0.6:
        parts.append('http.stat_code; content:"200";')
    for k in range(int(rng.choice(4, p=(0.8, 0.1, 0.05, 0.05)))):
        parts.append(f'content:!"benign{k}-{i}";')
    if rng.random() < threshold_rate:
        kind = ("limit", "threshold", "both")[int(rng.integers(0, 3))]
        track = ("by_src", "by_dst")[int(rng.integers(0, 2))]
        count = int(rng.integers(1, 20))
        parts.append(f"threshold:type {kind}, track {track}, count {count}, seconds 60;")
    src = ("$EXTERNAL_NET", "$HOME_NET", "any")[int(rng.integers(0, 3))]
    dst = ("$HOME_NET", "$HTTP_SERVERS", "$EXTERNAL_NET")[int(rng.integers(0, 3))]
    body = " ".join(parts)
    return (
        f'alert http {src} any -> {dst} any (msg:"SYNTH rule {i}"; {flow}{body} '
        f"sid:{sid}; rev:1;)"
    )


def synthetic_corpus(n: int = 170, seed: int = 0) -> tuple[list[str], list[dict]]:
    """Rule lines and label rows; labels are the checker verdicts for each rule."""
    from .checkers import assess

    rng = np.random.default_rng(seed)
    lines, rows = [], []
    for i in range(n):
        text = synthetic_rule_text(i, rng)
        rule = parse_rule(text)
        labels = assess(rule).as_labels()
        lines.append(text)
        rows.append({"sid": rule.sid, "rev": rule.rev,
                     "group": GROUPS[int(rng.integers(0, len(GROUPS)))], **labels})
    return lines, rows


def toy_labeled_rules(n: int = 200, seed: int = 0) -> list[LabeledRule]:
    """Parsed synthetic rules, half of them throttled, labelled by the checkers.

    The alert_throttling label is a function of the threshold features, so a
    classifier for it faces perfectly separable data.
    """
    from .checkers import assess

    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        rule = parse_rule(synthetic_rule_text(i, rng, threshold_rate=0.5))
        out.append(LabeledRule(rule.sid, rule.rev, "toy", extract_features(rule),
                               assess(rule).as_labels()))
    return out


def write_demo_inputs(directory, seed: int = 0, n_rules: int = 60) -> dict[str, str]:
    """Write a small self-consistent input set for the command-line tool.

    Returns a mapping from role (rules, labels, revisions, alerts, incidents)
    to file path. Workload depends on the labels so that the regression has
    something to find.
    """
    import csv
    import json
    from pathlib import Path

    from .classifier import write_labels

    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    lines, rows = synthetic_corpus(n_rules, seed)
    paths = {role: str(out / name) for role, name in (
        ("rules", "rules.rules"), ("labels", "labels.csv"), ("revisions", "revisions.csv"),
        ("alerts", "alerts.jsonl"), ("incidents", "incidents.csv"),
    )}
    Path(paths["rules"]).write_text("\n".join(lines) + "\n", encoding="utf-8")
    write_labels(rows, paths["labels"])

    start = date(2021, 1, 1)
    days = 30
    with open(paths["revisions"], "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(("sid", "rev", "updated_at"))
        for row in rows:
            writer.writerow((row["sid"], row["rev"], (start - timedelta(days=30)).isoformat()))
    with open(paths["alerts"], "w", encoding="utf-8") as handle:
        for row in rows:
            rate = 3.0 - 2.5 * row["alert_throttling"] - 1.0 * row["successful_action"]
            rate += 0.5 * row["generalized_characteristic"]
            for _ in range(int(rng.poisson(max(rate, 0.05) * days))):
                moment = datetime.combine(
                    start + timedelta(days=int(rng.integers(0, days))), time(), tzinfo=timezone.utc
                ) + timedelta(seconds=int(rng.integers(0, 86400)))
                event = {
                    "timestamp": moment.strftime("%Y-%m-%dT%H:%M:%S.000000+0000"),
                    "event_type": "alert",
                    "src_ip": "203.0.113.7",
                    "dest_ip": "10.0.0.5",
                    "alert": {"signature_id": row["sid"], "rev": row["rev"]},
                }
                handle.write(json.dumps(event) + "\n")
    with open(paths["incidents"], "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(("incident_id", "date", "sids"))
        for i in range(5):
            picked = sorted(int(rows[int(k)]["sid"]) for k in rng.choice(len(rows), 2, replace=False))
            day = start + timedelta(days=int(rng.integers(0, days)))
            writer.writerow((f"INC-{i:03d}", day.isoformat(), ";".join(map(str, picked))))
    return paths
