"""Train a per-principle classifier and estimate violation prevalence.

Run: python demos/train_classifier.py
"""

import time

from rulecheck.checkers import assess, prevalence
from rulecheck.classifier import (
    HyperParams,
    cross_validate,
    grid_search,
    join_labels,
    quick_grid,
    train,
)
from rulecheck.corpus import figure_ruleset
from rulecheck.parser import parse_rule
from rulecheck.synthetic import synthetic_corpus, toy_labeled_rules

# Alert throttling is decided by the threshold features, so it is separable.
data = toy_labeled_rules(200, seed=0)
started = time.perf_counter()
hp, report = grid_search(data, "alert_throttling", quick_grid())
print(f"quick grid ({len(quick_grid())} points) in {time.perf_counter() - started:.1f} s")
print(f"  chosen eta={hp.eta} depth={hp.max_depth} lambda={hp.lambda_l2} "
      f"scaling={hp.sample_weight_scaling}")
print(f"  P={report.precision:.2f} R={report.recall:.2f} wF1={report.weighted_f1:.2f}")

# Heuristic principles are harder; the checker labels stand in for analysts.
lines, rows = synthetic_corpus(120, seed=2)
corpus = join_labels([parse_rule(t) for t in lines], rows)
for p in ("limited_proxy", "generalized_characteristic"):
    r = cross_validate(corpus, p, HyperParams(n_trees=100), repeats=2)
    print(f"{p:<28} P={r.precision:.2f} R={r.recall:.2f} wF1={r.weighted_f1:.2f}")

# Models override only the heuristic verdicts when linting.
models = {"alert_throttling": train(data, "alert_throttling", hp),
          "limited_proxy": train(corpus, "limited_proxy", HyperParams(n_trees=100))}
assessments = [assess(rule, models) for rule in figure_ruleset().rules]
print("\nworked examples with models:")
for p, row in prevalence(assessments)["principles"].items():
    print(f"  {p:<28} {row['violations']:>2} violations")
