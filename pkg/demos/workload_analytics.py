"""From revisions, alerts and incidents to per-revision unnecessary workload.

Run: python demos/workload_analytics.py
"""

from datetime import date, datetime, timedelta, timezone

from rulecheck.analytics import (
    AlertRecord,
    IncidentRecord,
    RuleRevision,
    RuleRevisionStats,
    compute_workload,
    derive_activity,
    ecdf,
    fraction_below,
    top_noise,
    workload_share,
)
from rulecheck.synthetic import heavy_tail_workloads

# One rule, revised on day 10 of a 390-day window.
start = date(2021, 1, 1)
window = (start, start + timedelta(days=389))
revisions = [RuleRevision(2016184, 1, start), RuleRevision(2016184, 2, start + timedelta(days=10))]
activity = derive_activity(revisions, window)
for a in activity:
    print(f"rev {a.rev}: {a.introduced} .. {a.terminated} ({a.active_days} days)")

# rev 1 fires twice a day; rev 2 rarely, but it caught two incidents.
alerts = []
for d in range(10):
    for h in (3, 15):
        alerts.append(AlertRecord(datetime(2021, 1, 1, h, tzinfo=timezone.utc) + timedelta(days=d), 2016184, 1))
for d in range(10, 390, 19):
    alerts.append(AlertRecord(datetime(2021, 1, 1, 9, tzinfo=timezone.utc) + timedelta(days=d), 2016184, 2))
incidents = [
    IncidentRecord("INC-1", start + timedelta(days=40), frozenset({2016184})),
    IncidentRecord("INC-2", start + timedelta(days=200), frozenset({2016184, 2024897})),
]
diagnostics = []
stats = compute_workload(activity, alerts, incidents, diagnostics, window=window)
for s in stats:
    print(f"rev {s.rev}: {s.alert_count} alerts - {s.incident_count} incidents over "
          f"{s.active_days} days = {s.workload:.3f}/day")
print("diagnostics:", diagnostics or "none")

# A heavy-tailed population, like a production ruleset.
values = heavy_tail_workloads(400, seed=1)
print(f"\n{fraction_below(values, 1.0):.0%} of rules raise under one alert per day")
curve = ecdf(values)
for q in (0.5, 0.8, 0.95, 1.0):
    x = next(v for v, f in curve if f >= q)
    print(f"  ECDF reaches {q:.0%} at {x:.2f} alerts/day")

population = [RuleRevisionStats(i, 1, 0, 0, 390, v) for i, v in enumerate(values)]
print(f"top 5% of rules produce {workload_share(population, 0.05):.0%} of the workload")
print("noisiest:", [f"{s.workload:.1f}" for s in top_noise(population, 3)])
