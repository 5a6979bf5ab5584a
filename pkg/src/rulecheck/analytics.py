"""Per-revision workload analytics over alert and incident logs.

A rule revision's unnecessary workload is the number of alerts it raised
minus the incidents it helped detect, divided by the number of days it was
active inside the collection window. Days are UTC calendar days.
"""

from __future__ import annotations

import bisect
import csv
import json
import re
from collections import Counter, defaultdict
from dataclasses import asdict, dataclass
from datetime import date, datetime, timedelta, timezone
from typing import IO, Iterable, Iterator, Sequence

from .features import rule_threshold
from .parser import Address, Port, PortRange, Rule, walk

CATEGORIES = ("DNS", "IP", "Threshold", "Content", "Other")
ONE_DAY = timedelta(days=1)

Window = tuple[date, date]


@dataclass(frozen=True)
class AlertRecord:
    timestamp: datetime
    sid: int
    rev: int
    src_ip: str = ""
    dst_ip: str = ""

    @property
    def day(self) -> date:
        return self.timestamp.astimezone(timezone.utc).date()


@dataclass(frozen=True)
class IncidentRecord:
    incident_id: str
    date: date
    detecting_sids: frozenset[int]

    def __post_init__(self):
        if not self.detecting_sids:
            raise ValueError(f"incident {self.incident_id} has no detecting sids")


@dataclass(frozen=True)
class RuleRevision:
    """One row of the revisions file: when a revision was published."""

    sid: int
    rev: int
    updated_at: date


@dataclass(frozen=True)
class RevisionActivity:
    sid: int
    rev: int
    introduced: date
    terminated: date

    def __post_init__(self):
        if self.introduced > self.terminated:
            raise ValueError(f"sid {self.sid} rev {self.rev}: introduced after terminated")

    @property
    def active_days(self) -> int:
        return (self.terminated - self.introduced).days + 1

    def covers(self, day: date) -> bool:
        return self.introduced <= day <= self.terminated


@dataclass(frozen=True)
class RuleRevisionStats:
    sid: int
    rev: int
    alert_count: int
    incident_count: int
    active_days: int
    unnecessary_workload_per_day: float
    clamped: bool = False

    @property
    def workload(self) -> float:
        return self.unnecessary_workload_per_day

    def to_dict(self) -> dict:
        return asdict(self)


def _check_window(window: Window) -> None:
    if window[0] > window[1]:
        raise ValueError(f"window start {window[0]} is after window end {window[1]}")


def derive_activity(
    revisions: Iterable[RuleRevision],
    window: Window,
    diagnostics: list[str] | None = None,
) -> list[RevisionActivity]:
    """Active span of every revision, clipped to the collection window.

    A revision is active from its publication until the day before the next
    revision of the same sid appears; the newest revision runs to the end of
    the window. Revisions with no active day inside the window are omitted
    and noted in ``diagnostics``.
    """
    _check_window(window)
    start, end = window
    by_sid: dict[int, list[RuleRevision]] = defaultdict(list)
    for r in revisions:
        by_sid[r.sid].append(r)
    out = []
    for sid in sorted(by_sid):
        revs = sorted(by_sid[sid], key=lambda r: r.rev)
        for prev, cur in zip(revs, revs[1:]):
            if cur.rev == prev.rev:
                raise ValueError(f"sid {sid}: duplicate rev {cur.rev}")
            if cur.updated_at < prev.updated_at:
                raise ValueError(
                    f"sid {sid}: rev {cur.rev} updated {cur.updated_at} before "
                    f"rev {prev.rev} ({prev.updated_at})"
                )
        for i, r in enumerate(revs):
            introduced = max(r.updated_at, start)
            terminated = end if i + 1 == len(revs) else min(revs[i + 1].updated_at - ONE_DAY, end)
            if introduced > terminated:
                if diagnostics is not None:
                    diagnostics.append(f"sid {sid} rev {r.rev}: no active day inside the window")
                continue
            out.append(RevisionActivity(sid, r.rev, introduced, terminated))
    return out


def compute_workload(
    activity: Sequence[RevisionActivity],
    alerts: Iterable[AlertRecord],
    incidents: Iterable[IncidentRecord],
    diagnostics: list[str] | None = None,
    *,
    window: Window | None = None,
) -> list[RuleRevisionStats]:
    """Single pass over ``alerts``; one stats row per activity entry, sorted by (sid, rev).

    Alerts are attributed by their (sid, rev) label. Alerts outside the window
    (by default the hull of all activity spans) are skipped; alerts for
    revisions absent from ``activity`` are reported as orphans. An incident
    counts against the revision of each detecting sid whose span contains the
    incident date.
    """
    diagnostics = [] if diagnostics is None else diagnostics
    spans = {(a.sid, a.rev): a for a in activity}
    if len(spans) != len(activity):
        raise ValueError("activity lists a (sid, rev) more than once")
    if window is None and activity:
        window = (min(a.introduced for a in activity), max(a.terminated for a in activity))
    alert_counts: Counter = Counter()
    orphans: Counter = Counter()
    off_span: Counter = Counter()
    outside = 0
    for alert in alerts:
        day = alert.day
        if window is None or not window[0] <= day <= window[1]:
            outside += 1
            continue
        key = (alert.sid, alert.rev)
        span = spans.get(key)
        if span is None:
            orphans[key] += 1
            continue
        alert_counts[key] += 1
        if not span.covers(day):
            off_span[key] += 1

    by_sid: dict[int, list[RevisionActivity]] = defaultdict(list)
    for a in sorted(activity, key=lambda a: (a.sid, a.introduced)):
        by_sid[a.sid].append(a)
    starts = {sid: [a.introduced for a in spans_] for sid, spans_ in by_sid.items()}
    incident_counts: Counter = Counter()
    for incident in incidents:
        for sid in sorted(incident.detecting_sids):
            if sid not in by_sid:
                continue
            i = bisect.bisect_right(starts[sid], incident.date) - 1
            if i >= 0 and by_sid[sid][i].covers(incident.date):
                span = by_sid[sid][i]
                incident_counts[(span.sid, span.rev)] += 1

    if outside:
        diagnostics.append(f"{outside} alerts outside the collection window skipped")
    for (sid, rev), n in sorted(orphans.items()):
        diagnostics.append(f"{n} orphan alerts for sid {sid} rev {rev} (no activity record)")
    for (sid, rev), n in sorted(off_span.items()):
        diagnostics.append(f"{n} alerts for sid {sid} rev {rev} fall outside its active span")

    out = []
    for key in sorted(spans):
        span = spans[key]
        alerts_n, incidents_n = alert_counts[key], incident_counts[key]
        excess = alerts_n - incidents_n
        clamped = excess < 0
        if clamped:
            diagnostics.append(
                f"sid {key[0]} rev {key[1]}: {incidents_n} incidents exceed {alerts_n} alerts; "
                "workload clamped to 0"
            )
            excess = 0
        out.append(
            RuleRevisionStats(
                sid=key[0],
                rev=key[1],
                alert_count=alerts_n,
                incident_count=incidents_n,
                active_days=span.active_days,
                unnecessary_workload_per_day=excess / span.active_days,
                clamped=clamped,
            )
        )
    return out


def _workloads(items) -> list[float]:
    return [x.unnecessary_workload_per_day if isinstance(x, RuleRevisionStats) else float(x)
            for x in items]


def ecdf(stats: Iterable[RuleRevisionStats | float]) -> list[tuple[float, float]]:
    """(value, fraction of observations <= value) at each distinct value."""
    values = sorted(_workloads(stats))
    if not values:
        raise ValueError("ecdf of an empty sample")
    n = len(values)
    out = []
    for i, v in enumerate(values):
        if i + 1 < n and values[i + 1] == v:
            continue
        out.append((v, (i + 1) / n))
    return out


def incident_markers(stats: Iterable[RuleRevisionStats]) -> list[dict]:
    """ECDF position of every revision, flagged when it contributed to an incident."""
    items = list(stats)
    curve = dict(ecdf(items))
    rows = [
        {
            "sid": s.sid,
            "rev": s.rev,
            "workload": s.unnecessary_workload_per_day,
            "fraction": curve[s.unnecessary_workload_per_day],
            "incident": s.incident_count > 0,
        }
        for s in items
    ]
    return sorted(rows, key=lambda r: (r["workload"], r["sid"], r["rev"]))


def fraction_below(stats: Iterable[RuleRevisionStats | float], limit: float) -> float:
    values = _workloads(stats)
    if not values:
        raise ValueError("empty sample")
    return sum(1 for v in values if v < limit) / len(values)


def top_noise(stats: Iterable[RuleRevisionStats], n: int) -> list[RuleRevisionStats]:
    if n < 1:
        raise ValueError("n must be at least 1")
    ranked = sorted(stats, key=lambda s: (-s.unnecessary_workload_per_day, s.sid, s.rev))
    return ranked[:n]


def workload_share(stats: Sequence[RuleRevisionStats], top_fraction: float) -> float:
    """Share of total workload produced by the noisiest ``top_fraction`` of revisions."""
    if not 0 < top_fraction <= 1:
        raise ValueError("top_fraction must be in (0, 1]")
    total = sum(s.unnecessary_workload_per_day for s in stats)
    if not stats or total == 0:
        return 0.0
    k = max(1, int(round(top_fraction * len(stats))))
    return sum(s.unnecessary_workload_per_day for s in top_noise(stats, k)) / total


def _port_has(spec, number: int) -> bool:
    for leaf, negated in walk(spec):
        if negated:
            continue
        if isinstance(leaf, Port) and leaf.number == number:
            return True
        if isinstance(leaf, PortRange):
            low = 0 if leaf.low is None else leaf.low
            high = 65535 if leaf.high is None else leaf.high
            if low <= number <= high:
                return True
    return False


def _has_literal_address(spec) -> bool:
    return any(isinstance(leaf, Address) for leaf, _neg in walk(spec))


def categorize_rule(rule: Rule) -> str:
    """Category by priority DNS > IP > Threshold > Content > Other."""
    h = rule.header
    positive = [m for m in rule.matches if not m.negated]
    uses_dns_buffer = any((m.buffer or "").startswith("dns.") for m in rule.matches) or any(
        o.keyword.startswith("dns.") or o.keyword == "dns_query" for o in rule.options
    )
    if h.protocol == "dns" or _port_has(h.src_port, 53) or _port_has(h.dst_port, 53) or uses_dns_buffer:
        return "DNS"
    if not positive and (_has_literal_address(h.src_addr) or _has_literal_address(h.dst_addr)):
        return "IP"
    if rule_threshold(rule) is not None or rule.option("threshold") or rule.option("detection_filter"):
        return "Threshold"
    if positive:
        return "Content"
    return "Other"


def category_breakdown(rules: Iterable[Rule]) -> dict[str, int]:
    counts = dict.fromkeys(CATEGORIES, 0)
    for rule in rules:
        counts[categorize_rule(rule)] += 1
    return counts


# -- file formats --------------------------------------------------------

_TZ_COMPACT = re.compile(r"([+-]\d{2})(\d{2})$")


def parse_timestamp(text: str) -> datetime:
    """ISO 8601 instant; 'Z' and the compact '+0000' offset are accepted, naive means UTC."""
    text = text.strip()
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    text = _TZ_COMPACT.sub(r"\1:\2", text)
    stamp = datetime.fromisoformat(text)
    if stamp.tzinfo is None:
        stamp = stamp.replace(tzinfo=timezone.utc)
    return stamp.astimezone(timezone.utc)


def parse_day(text: str) -> date:
    text = text.strip()
    if len(text) == 10:
        return date.fromisoformat(text)
    return parse_timestamp(text).date()


def iter_alerts(handle: IO[str], diagnostics: list[str] | None = None) -> Iterator[AlertRecord]:
    """Alerts from EVE-style JSON Lines. Non-alert events are skipped."""
    for lineno, line in enumerate(handle, 1):
        if not line.strip():
            continue
        try:
            event = json.loads(line)
            if event.get("event_type", "alert") != "alert":
                continue
            alert = event["alert"]
            yield AlertRecord(
                timestamp=parse_timestamp(event["timestamp"]),
                sid=int(alert["signature_id"]),
                rev=int(alert.get("rev", 1)),
                src_ip=str(event.get("src_ip", "")),
                dst_ip=str(event.get("dest_ip", "")),
            )
        except (ValueError, KeyError, TypeError, AttributeError) as exc:
            if diagnostics is not None:
                diagnostics.append(f"alerts line {lineno}: skipped ({exc.__class__.__name__}: {exc})")


def read_incidents(path) -> list[IncidentRecord]:
    out = []
    with open(path, newline="", encoding="utf-8") as handle:
        for row in csv.DictReader(handle):
            sids = frozenset(int(s) for s in row["sids"].split(";") if s.strip())
            out.append(IncidentRecord(row["incident_id"].strip(), parse_day(row["date"]), sids))
    return out


def read_revisions(path) -> list[RuleRevision]:
    with open(path, newline="", encoding="utf-8") as handle:
        return [
            RuleRevision(int(row["sid"]), int(row["rev"]), parse_day(row["updated_at"]))
            for row in csv.DictReader(handle)
        ]


STATS_COLUMNS = (
    "sid",
    "rev",
    "alert_count",
    "incident_count",
    "active_days",
    "unnecessary_workload_per_day",
)


def write_stats_csv(stats: Iterable[RuleRevisionStats], handle: IO[str]) -> None:
    writer = csv.writer(handle, lineterminator="\n")
    writer.writerow(STATS_COLUMNS)
    for s in stats:
        writer.writerow([getattr(s, c) if c != STATS_COLUMNS[-1] else repr(s.workload)
                         for c in STATS_COLUMNS])


def read_stats_csv(path) -> list[RuleRevisionStats]:
    with open(path, newline="", encoding="utf-8") as handle:
        return [
            RuleRevisionStats(
                sid=int(row["sid"]),
                rev=int(row["rev"]),
                alert_count=int(row["alert_count"]),
                incident_count=int(row["incident_count"]),
                active_days=int(row["active_days"]),
                unnecessary_workload_per_day=float(row["unnecessary_workload_per_day"]),
            )
            for row in csv.DictReader(handle)
        ]


def write_ecdf_csv(points: Iterable[tuple[float, float]], handle: IO[str]) -> None:
    writer = csv.writer(handle, lineterminator="\n")
    writer.writerow(("workload", "cumulative_fraction"))
    for value, fraction in points:
        writer.writerow((repr(value), repr(fraction)))
