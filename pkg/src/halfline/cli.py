"""Command-line runner: read a TOML experiment file, run it, write reports.

Config schema (TOML)::

    kinds = ["weak-type-constant", "embedding"]   # optional shorthand

    [defaults]                # optional; applied to every experiment
    seed = 0
    T = 8.0

    [[experiment]]            # one table per experiment, run in file order
    kind = "maxreg-first-order"
    n = 256
    levels = 4
    weights = [{family = "power", beta = -1.5}]
    space = {kind = "lorentz", p = 2.0, q = 1.0}
    generator = [[1.0, 1.0], [0.0, 1.0]]

    [experiment.probes]
    families = ["indicators", "spikes"]
    count = 4
    depth = 6

Keys of an experiment table are the fields of ``ExperimentConfig``; any
other key is an error. Unset fields take the kind's defaults (``T = 8``,
``n = 512``, ``seed = 0`` unless the kind overrides them).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import os
import re
import sys
from dataclasses import dataclass, fields, replace
from pathlib import Path

from .errors import ConfigError, HalflineError
from .testbench import KINDS, ExperimentConfig, ExperimentReport, ProbeSpec, sweep

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

__all__ = ["RunManifest", "parse_config", "emit_report", "load_reports", "main", "OUT_ENV", "CSV_HEADER"]

OUT_ENV = "HALFLINE_OUT"
DEFAULT_OUT = "halfline-out"
CSV_HEADER = ("kind", "level", "n", "constant", "verdict", "config_hash")
FORMATS = ("json", "csv", "plotdata")

_CONFIG_KEYS = {f.name for f in fields(ExperimentConfig)}
_PROBE_KEYS = {f.name for f in fields(ProbeSpec)}


@dataclass(frozen=True)
class RunManifest:
    config_path: str
    config_hash: str
    configs: tuple
    out_dir: str
    formats: tuple


def _line_of(text: str, key: str):
    pat = re.compile(rf"^\s*(\[\[?)?\s*\"?{re.escape(key)}\"?\s*[=\].]")
    for i, line in enumerate(text.splitlines(), 1):
        if pat.search(line):
            return i
    return None


def _check_keys(table: dict, allowed: set, where: str, text: str):
    for key in table:
        if key not in allowed:
            raise ConfigError(f"unknown key {key!r} in {where}", field=key, line=_line_of(text, key))


def _build(table: dict, defaults: dict, text: str, where: str) -> ExperimentConfig:
    merged = {**defaults, **table}
    _check_keys(merged, _CONFIG_KEYS, where, text)
    if "kind" not in merged:
        raise ConfigError(f"{where} has no kind", field="kind", line=_line_of(text, "experiment"))
    if merged["kind"] not in KINDS:
        raise ConfigError(f"unknown experiment kind {merged['kind']!r}", field="kind",
                          line=_line_of(text, "kind"))
    probes = merged.get("probes")
    if probes is not None:
        if not isinstance(probes, dict):
            raise ConfigError("probes must be a table", field="probes", line=_line_of(text, "probes"))
        _check_keys(probes, _PROBE_KEYS, f"{where}.probes", text)
    try:
        cfg = ExperimentConfig.from_dict(merged)
        return cfg.resolved()
    except ConfigError as exc:
        if exc.line is None and exc.field is not None:
            raise ConfigError(exc.message, field=exc.field, line=_line_of(text, exc.field.split(".")[0])) from None
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def parse_config(path) -> list:
    """Resolved ``ExperimentConfig`` list, in file order."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror or exc}") from None
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        line = int(m.group(1)) if m else (max(1, len(text.splitlines())) if "end of document" in str(exc) else None)
        raise ConfigError(f"malformed config: {exc}", line=line) from None
    _check_keys(data, {"kinds", "defaults", "experiment"}, "the top level", text)
    defaults = data.get("defaults", {})
    if not isinstance(defaults, dict):
        raise ConfigError("defaults must be a table", field="defaults", line=_line_of(text, "defaults"))
    out = []
    kinds = data.get("kinds", [])
    if not isinstance(kinds, list):
        raise ConfigError("kinds must be a list", field="kinds", line=_line_of(text, "kinds"))
    for k in kinds:
        out.append(_build({"kind": k}, defaults, text, f"kinds entry {k!r}"))
    tables = data.get("experiment", [])
    if isinstance(tables, dict):
        tables = [tables]
    for i, t in enumerate(tables):
        out.append(_build(t, defaults, text, f"experiment {i + 1}"))
    return out


def _file_hash(path) -> str:
    try:
        return hashlib.sha256(Path(path).read_bytes()).hexdigest()[:16]
    except OSError:
        return ""


def _stem(i: int, r: ExperimentReport) -> str:
    return f"{i:03d}_{re.sub(r'[^A-Za-z0-9_.-]+', '_', r.label)}"


def csv_text(r: ExperimentReport) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(CSV_HEADER)
    for row in r.levels:
        wr.writerow([r.kind, row["level"], row["n"], repr(float(row["constant"])), r.verdict, r.config_hash])
    return buf.getvalue()


def plot_text(r: ExperimentReport) -> str:
    lines = [f"# {r.kind} {r.label} verdict={r.verdict} config_hash={r.config_hash}", "# level ratio"]
    lines += [f"{row['level']} {float(row['constant'])!r}" for row in r.levels]
    return "\n".join(lines) + "\n"


def emit_report(reports, out_dir, formats=FORMATS, manifest: RunManifest | None = None) -> list:
    """Write one file per report and format plus ``index.json``; returns paths."""
    out = Path(out_dir)
    formats = tuple(formats)
    bad = [f for f in formats if f not in FORMATS]
    if bad:
        raise ConfigError(f"unknown output format {bad[0]!r}", field="format")
    try:
        out.mkdir(parents=True, exist_ok=True)
        written, index = [], []
        for i, r in enumerate(reports):
            stem = _stem(i, r)
            files = []
            if "json" in formats:
                p = out / f"{stem}.json"
                p.write_text(json.dumps(r.to_dict(), indent=1, sort_keys=True) + "\n")
                files.append(p.name)
            if "csv" in formats:
                p = out / f"{stem}.csv"
                p.write_text(csv_text(r))
                files.append(p.name)
            if "plotdata" in formats:
                p = out / f"{stem}.dat"
                p.write_text(plot_text(r))
                files.append(p.name)
            written += [out / f for f in files]
            index.append({"label": r.label, "kind": r.kind, "verdict": r.verdict,
                          "config_hash": r.config_hash, "files": files})
        head = {"reports": index}
        if manifest is not None:
            head.update(config_path=manifest.config_path, config_hash=manifest.config_hash,
                        formats=list(manifest.formats))
        p = out / "index.json"
        p.write_text(json.dumps(head, indent=1, sort_keys=True) + "\n")
        written.append(p)
    except OSError as exc:
        raise HalflineError(f"cannot write reports to {exc.filename or out}: {exc.strerror or exc}") from None
    return written


def load_reports(out_dir) -> list:
    """Read back the json reports listed in ``index.json``."""
    out = Path(out_dir)
    index = json.loads((out / "index.json").read_text())
    reps = []
    for entry in index["reports"]:
        name = next((f for f in entry["files"] if f.endswith(".json")), None)
        if name is not None:
            reps.append(ExperimentReport.from_dict(json.loads((out / name).read_text())))
    return reps


def exit_code(reports) -> int:
    verdicts = [r.verdict for r in reports]
    if any(v in ("fail", "error") for v in verdicts):
        return 2
    if any(v == "inconclusive" for v in verdicts):
        return 3
    return 0


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="halfline", description="Run weighted-inequality experiments on [0, T].")
    ap.add_argument("--list-kinds", action="store_true", help="print the experiment kinds and exit")
    sub = ap.add_subparsers(dest="command")
    run = sub.add_parser("run", help="run every experiment in a TOML config")
    run.add_argument("config")
    run.add_argument("--out", default=None, help=f"output directory (default ${OUT_ENV} or ./{DEFAULT_OUT})")
    run.add_argument("--format", default="json,csv,plotdata", help="comma-separated subset of json,csv,plotdata")
    run.add_argument("--parallelism", type=int, default=1)
    run.add_argument("--seed-override", type=int, default=None)
    return ap


def main(argv=None) -> int:
    ap = _parser()
    args = ap.parse_args(argv)
    if args.list_kinds:
        print("\n".join(KINDS))
        return 0
    if args.command != "run":
        ap.print_usage(sys.stderr)
        return 1
    try:
        cfgs = parse_config(args.config)
        if args.seed_override is not None:
            cfgs = [replace(c, seed=args.seed_override).resolved() for c in cfgs]
        formats = tuple(f.strip() for f in args.format.split(",") if f.strip())
        out = args.out or os.environ.get(OUT_ENV) or DEFAULT_OUT
        manifest = RunManifest(str(args.config), _file_hash(args.config), tuple(cfgs), str(out), formats)
        reports = sweep(cfgs, args.parallelism)
        emit_report(reports, out, formats, manifest)
    except HalflineError as exc:
        print(f"halfline: {exc}", file=sys.stderr)
        return 1
    for r in reports:
        print(f"{r.verdict:12s} {r.label}: {r.criterion}")
    return exit_code(reports)
