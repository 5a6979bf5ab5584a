"""The whole command-line pipeline on generated inputs, run twice.

Writes demo inputs, then parse -> lint -> features -> train -> workload ->
regress, and checks that a second run reproduces every artifact byte for
byte. Equivalent shell:

    rulecheck lint --rules rules.rules --out out
    rulecheck train --rules rules.rules --labels labels.csv --principle alert_throttling --out out
    rulecheck workload --alerts alerts.jsonl --incidents incidents.csv \\
        --revisions revisions.csv --window-start 2021-01-01 --window-end 2021-01-30 --out out
    rulecheck regress --labels labels.csv --stats out/stats.csv --out out

Run: python demos/cli_pipeline.py
"""

import filecmp
import os
import tempfile
from pathlib import Path

from rulecheck.cli import main
from rulecheck.synthetic import write_demo_inputs

WINDOW = ["--window-start", "2021-01-01", "--window-end", "2021-01-30"]


def pipeline(inputs, out):
    os.makedirs(out)
    os.chdir(out)
    rules = ["--rules", inputs["rules"]]
    codes = {
        "parse": main(["parse", *rules, "--out", "."]),
        "lint": main(["lint", *rules, "--out", "."]),
        "features": main(["features", *rules, "--out", "."]),
        "train": main(["train", *rules, "--labels", inputs["labels"], "--repeats", "1",
                       "--principle", "alert_throttling", "--out", "."]),
        "workload": main(["workload", *rules, "--alerts", inputs["alerts"], "--top", "3",
                          "--incidents", inputs["incidents"], "--revisions", inputs["revisions"],
                          *WINDOW, "--out", "."]),
        "regress": main(["regress", "--labels", inputs["labels"], "--stats", "stats.csv", "--out", "."]),
    }
    return codes


with tempfile.TemporaryDirectory() as tmp:
    inputs = write_demo_inputs(Path(tmp) / "inputs", seed=0, n_rules=60)
    first = pipeline(inputs, Path(tmp) / "run1")
    print("\nexit codes:", first, "(lint exits 2 when a deterministic principle is violated)")
    pipeline(inputs, Path(tmp) / "run2")
    names = sorted(p.name for p in (Path(tmp) / "run1").iterdir())
    same, diff, _ = filecmp.cmpfiles(Path(tmp) / "run1", Path(tmp) / "run2", names, shallow=False)
    print(f"{len(same)} of {len(names)} artifacts identical across runs; differing: {diff or 'none'}")
    os.chdir(tmp)
