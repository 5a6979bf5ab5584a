"""Walk through the bundled worked-example rules and the six design checks.

Run: python demos/lint_worked_examples.py
"""

from rulecheck.checkers import PRINCIPLES, assess, prevalence
from rulecheck.corpus import FIGURE_RULE_NAMES, figure_ruleset
from rulecheck.features import extract_features, rule_threshold

ruleset = figure_ruleset()
print(f"parsed {len(ruleset.rules)} rules, {len(ruleset.parse_diagnostics)} diagnostics\n")

short = {p: "".join(w[0] for w in p.split("_")).upper() for p in PRINCIPLES}
print("rule".ljust(28), " ".join(short[p].rjust(3) for p in PRINCIPLES))
assessments = []
for rule in ruleset.rules:
    a = assess(rule)
    assessments.append(a)
    marks = ["ok" if a.verdicts[p].adheres else "--" for p in PRINCIPLES]
    print(FIGURE_RULE_NAMES[(rule.sid, rule.rev)].ljust(28), " ".join(m.rjust(3) for m in marks))
print("legend:", ", ".join(f"{v}={k}" for k, v in short.items()))

# The OpenVAS user-agent rule is the canonical bad example: a scanner name
# in one header, no throttling, no exceptions, no evidence of success.
openvas = next(r for r in ruleset.rules if r.sid == 2012726)
print("\nwhy openvas_ua fails:")
for p in assess(openvas).violations():
    print(f"  {p}: {'; '.join(assess(openvas).verdicts[p].evidence)}")

# Throttling is visible straight from the features.
zeus = next(r for r in ruleset.rules if r.sid == 2018316)
print("\nzeus threshold:", rule_threshold(zeus))
print("exceptions rule negated matches:",
      extract_features(next(r for r in ruleset.rules if r.sid == 2019714)).negated_match_count)

print("\nviolation prevalence across the corpus:")
for p, row in prevalence(assessments)["principles"].items():
    print(f"  {p:<28} {row['violations']:>2} ({row['proportion']:.0%})")
