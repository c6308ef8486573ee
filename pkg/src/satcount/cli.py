"""Command-line interface for scene generation, runs, sweeps, and summaries.

Output files are CSVs with a stable column order, written atomically (a
temp file in the target directory, then rename).  All randomness flows from
the configured seeds; two invocations with the same config and seeds emit
byte-identical rows.
"""

from __future__ import annotations

import argparse
import os
import sys
import tempfile
from dataclasses import replace

from .config import default_config, load_config
from .errors import ValidationError
from .pipeline import (
    CSV_COLUMNS,
    METHODS,
    SWEEP_AXES,
    report_csv_row,
    run_method,
    sweep,
)
from .scene import generate_scene, save_manifest

_SUMMARY_FIELDS = ("cmae", "bytes_downlinked", "joules_total", "tiles_processed")


def _atomic_write(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".satcount-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _emit(text: str, out_path: str | None) -> None:
    if out_path is None:
        sys.stdout.write(text)
    else:
        _atomic_write(out_path, text)


def _load(config_path: str | None):
    if config_path is None:
        return default_config()
    return load_config(config_path)


def _parse_seeds(token: str) -> tuple[int, ...]:
    """Accept '7', '1,2,3', '1..30', or '1-30'."""
    token = token.strip()
    for sep in ("..", "-"):
        if sep in token and "," not in token:
            lo_s, _, hi_s = token.partition(sep)
            try:
                lo, hi = int(lo_s), int(hi_s)
            except ValueError:
                break
            if hi < lo:
                raise ValidationError(f"seed range {token!r} is empty")
            return tuple(range(lo, hi + 1))
    try:
        return tuple(int(part) for part in token.split(","))
    except ValueError as exc:
        raise ValidationError(f"cannot parse seeds {token!r}") from exc


def _fmt_float(x: float) -> str:
    return format(x, ".10g")


# --- subcommands -------------------------------------------------------------


def cmd_generate(args) -> int:
    config = _load(args.config)
    if config.scene_spec is None:
        raise ValidationError(
            "config reads a manifest; scene generation needs generator fields"
        )
    spec = config.scene_spec
    if args.seed is not None:
        spec = replace(spec, seed=args.seed)
    scene = generate_scene(spec)
    save_manifest(scene, args.out)
    print(f"wrote {len(scene.tiles)} tiles across {len(scene.frames)} frames to {args.out}")
    return 0


def cmd_run(args) -> int:
    config = _load(args.config)
    method = args.method if args.method is not None else config.method
    methods = list(METHODS) if method == "all" else [method]
    seed = args.seed if args.seed is not None else config.seeds[0]
    lines = [",".join(CSV_COLUMNS)]
    for m in methods:
        lines.append(",".join(report_csv_row(run_method(config, seed, m))))
    _emit("\n".join(lines) + "\n", args.out)
    return 0


def _render_sweep_rows(rows) -> str:
    lines = [",".join(("axis", "value") + CSV_COLUMNS)]
    for row in rows:
        lines.append(",".join([row.axis, row.value] + report_csv_row(row.report)))
    return "\n".join(lines) + "\n"


def summarize_rows(rows_text: str) -> str:
    """Per-(value, method) means recomputed from a sweep row file.

    Operates on the CSV text itself so the sweep command and the report
    command produce identical summaries by construction.
    """
    lines = [ln for ln in rows_text.splitlines() if ln]
    if not lines:
        raise ValidationError("row file is empty")
    header = lines[0].split(",")
    try:
        col = {name: header.index(name) for name in
               ("axis", "value", "method", "seed") + _SUMMARY_FIELDS}
    except ValueError as exc:
        raise ValidationError(f"row file is missing a required column: {exc}") from exc

    groups: dict = {}
    order: list = []
    for ln in lines[1:]:
        parts = ln.split(",")
        key = (parts[col["axis"]], parts[col["value"]], parts[col["method"]])
        if key not in groups:
            groups[key] = []
            order.append(key)
        groups[key].append([float(parts[col[f]]) for f in _SUMMARY_FIELDS])

    out = ["axis,value,method,n_seeds," + ",".join(f"mean_{f}" for f in _SUMMARY_FIELDS)]
    for key in order:
        samples = groups[key]
        n = len(samples)
        means = [_fmt_float(sum(s[i] for s in samples) / n) for i in range(len(_SUMMARY_FIELDS))]
        out.append(",".join([key[0], key[1], key[2], str(n)] + means))
    return "\n".join(out) + "\n"


def cmd_sweep(args) -> int:
    config = _load(args.config)
    if args.seeds is not None:
        config = config.with_updates(seeds=_parse_seeds(args.seeds))
    values = [v for v in (part.strip() for part in args.values.split(",")) if v]
    if not values:
        raise ValidationError("--values must list at least one value")
    rows = sweep(config, args.axis, values, jobs=args.jobs)
    text = _render_sweep_rows(rows)
    _emit(text, args.out)
    if args.summary is not None:
        _atomic_write(args.summary, summarize_rows(text))
    return 0


def cmd_report(args) -> int:
    try:
        with open(args.rows, "r", encoding="utf-8") as fh:
            rows_text = fh.read()
    except FileNotFoundError as exc:
        raise ValidationError(f"row file not found: {args.rows}") from exc
    _emit(summarize_rows(rows_text), args.out)
    return 0


# --- parser ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="satcount",
        description="Satellite-ground collaborative object counting simulator.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_gen = sub.add_parser("generate", help="generate a synthetic scene manifest")
    p_gen.add_argument("--config", help="scenario YAML (defaults apply if omitted)")
    p_gen.add_argument("--out", required=True, help="manifest output path (JSONL)")
    p_gen.add_argument("--seed", type=int, help="override the scene seed")
    p_gen.set_defaults(func=cmd_generate)

    p_run = sub.add_parser("run", help="run one method for one seed")
    p_run.add_argument("--config", help="scenario YAML (defaults apply if omitted)")
    p_run.add_argument(
        "--method",
        choices=METHODS + ("all",),
        help="counting method (default: from config)",
    )
    p_run.add_argument("--seed", type=int, help="run seed (default: first config seed)")
    p_run.add_argument("--out", help="CSV output path (default: stdout)")
    p_run.set_defaults(func=cmd_run)

    p_sweep = sub.add_parser("sweep", help="run all methods across one swept axis")
    p_sweep.add_argument("--config", help="scenario YAML (defaults apply if omitted)")
    p_sweep.add_argument("--axis", required=True, choices=SWEEP_AXES)
    p_sweep.add_argument(
        "--values", required=True, help="comma-separated axis values, e.g. 30,50,100"
    )
    p_sweep.add_argument(
        "--seeds", help="seed list or range: '1,2,3', '1..30' (default: config seeds)"
    )
    p_sweep.add_argument("--jobs", type=int, default=1, help="parallel worker count")
    p_sweep.add_argument("--out", help="row CSV path (default: stdout)")
    p_sweep.add_argument("--summary", help="also write a per-value mean summary CSV")
    p_sweep.set_defaults(func=cmd_sweep)

    p_rep = sub.add_parser("report", help="summarize a sweep row file")
    p_rep.add_argument("--rows", required=True, help="row CSV from a sweep")
    p_rep.add_argument("--out", help="summary CSV path (default: stdout)")
    p_rep.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
