"""Command-line entry point: ``rulecheck <command> [options]``.

Machine-readable results go to files under ``--out``; a short human summary
goes to standard output. Every command also writes ``manifest-<command>.json``
with the echoed configuration and SHA-256 digests of inputs and outputs.

Exit codes: 0 success, 1 operational error (or parse diagnostics for
``parse``), 2 deterministic lint violations found.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from dataclasses import asdict
from pathlib import Path
from typing import Sequence

from . import __version__
from .analytics import (
    category_breakdown,
    compute_workload,
    derive_activity,
    ecdf,
    incident_markers,
    iter_alerts,
    parse_day,
    read_incidents,
    read_revisions,
    read_stats_csv,
    top_noise,
    write_ecdf_csv,
    write_stats_csv,
)
from .checkers import DETERMINISTIC, PRINCIPLES, assess, lint_report
from .classifier import (
    GRID_PRESETS,
    DegenerateClassError,
    LabeledRule,
    fit_arrays,
    grid_search,
    join_labels,
    labeled_arrays,
    load_model,
    read_labels,
    save_model,
)
from .corpus import FIGURE_RULES_FILE, figure_rules_text
from .features import extract_features, schema, write_jsonl
from .parser import ParseError, parse_file, parse_rule, parse_ruleset, serialize_rule, to_dict
from .stats import VIFScreeningError, render_table, run_group_regression
from .synthetic import MINIMAL_RULE

EXIT_OK, EXIT_ERROR, EXIT_LINT = 0, 1, 2
BUNDLED = "bundled:figures"


class UsageError(Exception):
    pass


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _dump_json(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")


class Run:
    """Tracks inputs and outputs of one command for the manifest."""

    def __init__(self, command: str, args: argparse.Namespace):
        self.command = command
        self.args = args
        self.out = Path(args.out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.inputs: dict[str, str] = {}
        self.outputs: list[str] = []

    def input(self, value: str | None, flag: str) -> Path | None:
        if value is None:
            return None
        path = Path(value)
        if not path.is_file():
            raise UsageError(f"{flag}: no such file {value}")
        self.inputs[value] = _sha256(path)
        return path

    def path(self, name: str) -> Path:
        self.outputs.append(name)
        return self.out / name

    def manifest(self) -> None:
        config = {
            k: v for k, v in sorted(vars(self.args).items()) if k not in ("out", "func")
        }
        manifest = {
            "tool": "rulecheck",
            "version": __version__,
            "command": self.command,
            "config": config,
            "inputs": dict(sorted(self.inputs.items())),
            "outputs": {name: _sha256(self.out / name) for name in sorted(self.outputs)},
        }
        _dump_json(manifest, self.out / f"manifest-{self.command}.json")


def _load_rules(run: Run):
    if run.args.rules is None:
        text = figure_rules_text()
        run.inputs[BUNDLED] = hashlib.sha256(text.encode("utf-8")).hexdigest()
        return parse_ruleset(text.splitlines(), source_path=FIGURE_RULES_FILE)
    return parse_file(run.input(run.args.rules, "--rules"))


def _emit(run: Run, summary: dict, lines: list[str]) -> None:
    if run.args.format == "json":
        print(json.dumps(summary, indent=2))
    else:
        print("\n".join(lines))


def cmd_parse(run: Run) -> int:
    ruleset = _load_rules(run)
    diagnostics = [
        {"line": d.line, "message": d.message, "severity": d.severity}
        for d in ruleset.parse_diagnostics
    ]
    report = {
        "source": ruleset.source_path,
        "rules": len(ruleset.rules),
        "disabled": sum(1 for r in ruleset.rules if r.disabled),
        "diagnostics": diagnostics,
        "parsed": [{"line": r.line, **to_dict(r)} for r in ruleset.rules],
    }
    _dump_json(report, run.path("parse.json"))
    run.path("canonical.rules").write_text(
        "".join(serialize_rule(r) + "\n" for r in ruleset.rules), encoding="utf-8"
    )
    summary = {k: report[k] for k in ("source", "rules", "disabled")}
    summary["diagnostics"] = len(diagnostics)
    lines = [f"{ruleset.source_path}: {len(ruleset.rules)} rules, {len(diagnostics)} diagnostics"]
    lines += [f"  line {d['line']}: {d['severity']}: {d['message']}" for d in diagnostics]
    _emit(run, summary, lines)
    return EXIT_OK if not diagnostics else EXIT_ERROR


def cmd_lint(run: Run) -> int:
    ruleset = _load_rules(run)
    models = {}
    for value in run.args.model or ():
        model = load_model(run.input(value, "--model"))
        if model.principle not in PRINCIPLES:
            raise UsageError(f"--model {value}: unknown principle {model.principle!r}")
        models[model.principle] = model
    assessments = [assess(rule, models) for rule in ruleset.rules]
    report = lint_report(assessments)
    report["source"] = ruleset.source_path
    report["diagnostics"] = [
        {"line": d.line, "message": d.message, "severity": d.severity}
        for d in ruleset.parse_diagnostics
    ]
    _dump_json(report, run.path("lint.json"))
    gating = [a for a in assessments if a.violations(deterministic_only=True)]
    summary = report["summary"]
    lines = [f"{summary['rules']} rules assessed"]
    for p in PRINCIPLES:
        row = summary["principles"][p]
        kind = "deterministic" if p in DETERMINISTIC else "heuristic"
        lines.append(
            f"  {p:<28} {row['violations']:>5} violations ({row['proportion']:.0%}) [{kind}]"
        )
    lines.append(f"{len(gating)} rules violate a deterministic principle")
    _emit(run, {**summary, "gating_rules": len(gating)}, lines)
    return EXIT_LINT if gating else EXIT_OK


def cmd_features(run: Run) -> int:
    ruleset = _load_rules(run)
    with run.path("features.jsonl").open("w", encoding="utf-8") as handle:
        n = write_jsonl(ruleset.rules, handle)
    _dump_json(schema(), run.path("features.schema.json"))
    _emit(run, {"rules": n}, [f"wrote {n} feature records"])
    return EXIT_OK


def cmd_train(run: Run) -> int:
    if run.args.labels is None:
        raise UsageError("train needs --labels")
    ruleset = _load_rules(run)
    rows = read_labels(run.input(run.args.labels, "--labels"))
    data = join_labels(ruleset.rules, rows)
    grid = GRID_PRESETS[run.args.grid]()
    principles = run.args.principle or list(PRINCIPLES)
    summary, lines = {}, []
    for p in principles:
        try:
            hp, report = grid_search(data, p, grid, seed=run.args.seed, repeats=run.args.repeats)
        except DegenerateClassError as exc:
            summary[p] = {"skipped": str(exc)}
            lines.append(f"  {p:<28} skipped: {exc}")
            continue
        X, y = labeled_arrays(data, p)
        model = fit_arrays(X, y, hp, run.args.seed, principle=p)
        save_model(model, run.path(f"model-{p}.json"))
        cv = {"hyperparams": asdict(hp), **report.to_dict()}
        _dump_json(cv, run.path(f"cv-{p}.json"))
        summary[p] = {
            "precision": report.precision,
            "recall": report.recall,
            "weighted_f1": report.weighted_f1,
        }
        lines.append(
            f"  {p:<28} P={report.precision:.2f} R={report.recall:.2f} "
            f"wF1={report.weighted_f1:.2f} (eta={hp.eta}, depth={hp.max_depth}, "
            f"lambda={hp.lambda_l2}, trees={len(model.trees)})"
        )
    _emit(run, summary, [f"grid {run.args.grid} ({len(grid)} points), {len(data)} rules"] + lines)
    return EXIT_OK


def _window(args) -> tuple:
    if args.window_start is None or args.window_end is None:
        raise UsageError("workload needs --window-start and --window-end")
    start, end = parse_day(args.window_start), parse_day(args.window_end)
    if start > end:
        raise UsageError("--window-start is after --window-end")
    return start, end


def cmd_workload(run: Run) -> int:
    for flag in ("alerts", "incidents", "revisions"):
        if getattr(run.args, flag) is None:
            raise UsageError(f"workload needs --{flag}")
    window = _window(run.args)
    diagnostics: list[str] = []
    revisions = read_revisions(run.input(run.args.revisions, "--revisions"))
    incidents = read_incidents(run.input(run.args.incidents, "--incidents"))
    activity = derive_activity(revisions, window, diagnostics)
    with run.input(run.args.alerts, "--alerts").open(encoding="utf-8") as handle:
        stats = compute_workload(
            activity, iter_alerts(handle, diagnostics), incidents, diagnostics, window=window
        )
    with run.path("stats.csv").open("w", encoding="utf-8", newline="") as handle:
        write_stats_csv(stats, handle)
    _dump_json([s.to_dict() for s in stats], run.path("stats.json"))
    report = {"window": [window[0].isoformat(), window[1].isoformat()],
              "revisions": len(stats), "diagnostics": diagnostics}
    if stats:
        with run.path("ecdf.csv").open("w", encoding="utf-8", newline="") as handle:
            write_ecdf_csv(ecdf(stats), handle)
        _dump_json(incident_markers(stats), run.path("ecdf_markers.json"))
    noisy = top_noise(stats, run.args.top) if stats else []
    report["top_noise"] = [s.to_dict() for s in noisy]
    if run.args.rules is not None or run.args.categories:
        detecting = {s.sid for s in stats if s.incident_count > 0}
        rules = [r for r in _load_rules(run).rules if r.sid in detecting]
        report["incident_categories"] = category_breakdown(rules)
    _dump_json(report, run.path("workload.json"))
    lines = [f"{len(stats)} rule revisions, window {report['window'][0]}..{report['window'][1]}"]
    lines += [f"  sid {s.sid} rev {s.rev}: {s.unnecessary_workload_per_day:.3f}/day "
              f"({s.alert_count} alerts, {s.incident_count} incidents, {s.active_days} days)"
              for s in noisy]
    lines += [f"  note: {d}" for d in diagnostics]
    _emit(run, {k: report[k] for k in ("window", "revisions", "top_noise")}, lines)
    return EXIT_OK


def cmd_regress(run: Run) -> int:
    if run.args.labels is None or run.args.stats is None:
        raise UsageError("regress needs --labels and --stats")
    rows = read_labels(run.input(run.args.labels, "--labels"))
    stats = read_stats_csv(run.input(run.args.stats, "--stats"))
    column = run.args.group_column
    placeholder = extract_features(parse_rule(MINIMAL_RULE))
    groups: dict[str, list] = {}
    for row in rows:
        if column not in row:
            raise UsageError(f"labels file has no column {column!r}")
        name = str(row[column]).strip()
        groups.setdefault(name, []).append(
            LabeledRule(row["sid"], row["rev"], name or "-", placeholder,
                        {p: row[p] for p in PRINCIPLES})
        )
    results, report = {}, {}
    for name in sorted(groups):
        try:
            result = run_group_regression(groups[name], stats)
        except VIFScreeningError as exc:
            report[name] = {"error": str(exc), "vif": exc.vifs}
            continue
        results[name] = result
        report[name] = result.to_dict()
    _dump_json(report, run.path("regression.json"))
    table = render_table(results) if results else "no group passed screening\n"
    run.path("regression.txt").write_text(table, encoding="utf-8")
    _emit(run, report, [table.rstrip("\n")])
    return EXIT_OK


COMMANDS = {
    "parse": cmd_parse,
    "lint": cmd_lint,
    "features": cmd_features,
    "train": cmd_train,
    "workload": cmd_workload,
    "regress": cmd_regress,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--rules", help="rules file (default: bundled worked examples)")
    common.add_argument("--alerts", help="EVE-style alert JSON Lines")
    common.add_argument("--incidents", help="incidents CSV: incident_id,date,sids")
    common.add_argument("--revisions", help="revisions CSV: sid,rev,updated_at")
    common.add_argument("--labels", help="labels CSV: sid,rev,group,<six principles>")
    common.add_argument("--stats", help="workload stats CSV from the workload command")
    common.add_argument("--model", action="append", help="trained model JSON (repeatable)")
    common.add_argument("--window-start", help="first day of the collection window (YYYY-MM-DD)")
    common.add_argument("--window-end", help="last day of the collection window (YYYY-MM-DD)")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--grid", choices=sorted(GRID_PRESETS), default="quick")
    common.add_argument("--format", choices=("json", "text"), default="text")
    common.add_argument("--out", default="rulecheck-out", help="output directory")

    parser = argparse.ArgumentParser(
        prog="rulecheck",
        description="Lint IDS rules against detection design principles and measure their alert workload.",
    )
    parser.add_argument("--version", action="version", version=f"rulecheck {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("parse", parents=[common], help="parse a ruleset and report diagnostics")
    sub.add_parser("lint", parents=[common], help="assess the six design principles")
    sub.add_parser("features", parents=[common], help="dump feature vectors as JSON Lines")
    train = sub.add_parser("train", parents=[common], help="grid-search and train classifiers")
    train.add_argument("--principle", action="append", choices=PRINCIPLES)
    train.add_argument("--repeats", type=int, default=10)
    workload = sub.add_parser("workload", parents=[common], help="per-revision workload stats")
    workload.add_argument("--top", type=int, default=10, help="length of the top-noise listing")
    workload.add_argument("--categories", action="store_true",
                          help="category breakdown of incident-detecting rules")
    regress = sub.add_parser("regress", parents=[common], help="robust regression per group")
    regress.add_argument("--group-column", default="group")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        run = Run(args.command, args)
        code = COMMANDS[args.command](run)
        run.manifest()
        return code
    except (UsageError, OSError, ValueError, KeyError, ParseError) as exc:
        print(f"rulecheck {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
