"""Command-line surface: run single pipelines, sweeps, and optimizations.

Exit codes: 0 success, 1 usage/configuration error, 2 protocol abort
(insecure channel, no Bell violation, insufficient rate, noisy CV channel).
Abort reasons and timing go to standard error; payloads are deterministic
(fixed float precision, "\n" newlines, UTF-8 without BOM).
"""

from __future__ import annotations

import argparse
import json
import math
import secrets
import sys
from typing import Any

import numpy as np

from .engine import (
    Report,
    RunConfig,
    canonical_json,
    config_from_dict,
    optimize_intensities,
    run_pipeline,
    sweep,
)
from .exceptions import QkdError

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_ABORT = 2

# Columns shared by every sweep/run row, then per-protocol extras in this
# documented order. Aborted rows leave the rate cells (and final_len) empty.
BASE_COLUMNS = ("value", "rate_per_pulse", "rate_bps", "qber", "aborted")
PROTOCOL_COLUMNS = {
    "bb84": ("sift_fraction", "qber_ci_lower", "qber_ci_upper", "final_len"),
    "bb84-decoy": ("y0", "y1", "q1", "e1", "estimator_sound", "final_len"),
    "e91": ("chsh_s",),
    "mdi": ("s11", "e11"),
    "tf": (),
    "dps": (),
    "cow": (),
    "rrdps": ("adversary_info",),
    "cv": ("i_ab", "chi_be", "estimated_t", "estimated_xi"),
}


def _fmt(value: Any, precision: int) -> str:
    if value is None:
        return ""
    if isinstance(value, bool | np.bool_):
        return "true" if value else "false"
    if isinstance(value, int | np.integer):
        return str(int(value))
    if isinstance(value, float | np.floating):
        if not math.isfinite(value):
            raise QkdError("non-finite value in output")
        return "0" if value == 0.0 else format(float(value), f".{precision}g")
    return str(value)


def _row_cells(report: Report, precision: int) -> list[str]:
    cells = [
        _fmt(report.rate_per_pulse, precision),
        _fmt(report.rate_bits_per_second, precision),
        _fmt(report.qber, precision),
        _fmt(report.aborted, precision),
    ]
    acct = report.accounting or {}
    extras: list[Any] = []
    if report.protocol == "bb84":
        ci = report.qber_ci or {}
        extras = [
            report.sift_fraction,
            ci.get("lower"),
            ci.get("upper"),
            acct.get("final_len"),
        ]
    elif report.protocol == "bb84-decoy":
        decoy = report.sections.get("decoy", {})
        extras = [
            decoy.get("y0"),
            decoy.get("y1"),
            decoy.get("q1"),
            decoy.get("e1"),
            decoy.get("sound"),
            acct.get("final_len"),
        ]
    elif report.protocol == "e91":
        extras = [report.sections.get("chsh", {}).get("s")]
    elif report.protocol == "mdi":
        mdi = report.sections.get("mdi", {})
        extras = [mdi.get("s11"), mdi.get("e11")]
    elif report.protocol == "rrdps":
        extras = [report.sections.get("rrdps", {}).get("adversary_info")]
    elif report.protocol == "cv":
        cv = report.sections.get("cv", {})
        extras = [
            cv.get("i_ab"),
            cv.get("chi_be"),
            cv.get("estimated_t"),
            cv.get("estimated_xi"),
        ]
    return cells + [_fmt(v, precision) for v in extras]


def _sweep_csv(
    protocol: str, curve: list[tuple[float, Report]], precision: int
) -> str:
    header = ",".join(BASE_COLUMNS + PROTOCOL_COLUMNS[protocol])
    lines = [header]
    for value, report in curve:
        lines.append(",".join([_fmt(value, precision), *_row_cells(report, precision)]))
    return "\n".join(lines) + "\n"


def _run_csv(report: Report, precision: int) -> str:
    header = ",".join(BASE_COLUMNS[1:] + PROTOCOL_COLUMNS[report.protocol])
    return header + "\n" + ",".join(_row_cells(report, precision)) + "\n"


def _write_output(text: str, path: str) -> None:
    if path == "-":
        sys.stdout.write(text)
        sys.stdout.flush()
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


def _apply_override(data: dict, spec: str) -> None:
    if "=" not in spec:
        raise QkdError(f"override {spec!r} is not key=value")
    key, _, raw = spec.partition("=")
    parts = key.split(".")
    if parts[0] not in data and parts[0] in ("fiber", "detector", "optics", "mean_photon_number"):
        parts = ["link", *parts]
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    node = data
    for part in parts[:-1]:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise QkdError(f"override path {key!r} crosses a non-object field")
    node[parts[-1]] = value


def _load_config_dict(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise QkdError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise QkdError(f"invalid JSON in {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise QkdError("config root must be a JSON object")
    return data


def _resolve_seed(args: argparse.Namespace, data: dict) -> None:
    if args.seed is not None:
        data["seed"] = args.seed
    elif data.get("seed") is None:
        if not args.ephemeral_seed:
            raise QkdError(
                "no seed: set one in the config, pass --seed, or use --ephemeral-seed"
            )
        data["seed"] = secrets.randbits(63)
        print(f"ephemeral seed: {data['seed']}", file=sys.stderr)


def _build_config(args: argparse.Namespace, overrides: list[str] | None = None) -> RunConfig:
    data = _load_config_dict(args.config)
    for spec in overrides or []:
        _apply_override(data, spec)
    _resolve_seed(args, data)
    return config_from_dict(data)


def _parse_values(args: argparse.Namespace) -> list[float]:
    if (args.values is None) == (args.range is None):
        raise QkdError("pass exactly one of --values or --range")
    if args.values is not None:
        try:
            return [float(v) for v in args.values.split(",") if v != ""]
        except ValueError as exc:
            raise QkdError(f"bad --values list: {exc}") from exc
    try:
        start_s, stop_s, steps_s = args.range.split(":")
        start, stop, steps = float(start_s), float(stop_s), int(steps_s)
    except ValueError as exc:
        raise QkdError(f"bad --range (want start:stop:steps): {exc}") from exc
    if steps < 1:
        raise QkdError("--range needs steps >= 1")
    return [float(v) for v in np.linspace(start, stop, steps)]


def _parse_bounds(spec: str) -> dict[str, tuple[float, float]]:
    bounds: dict[str, tuple[float, float]] = {}
    for part in spec.split(","):
        if not part:
            continue
        if "=" not in part or ":" not in part.partition("=")[2]:
            raise QkdError(f"bad bounds entry {part!r} (want name=low:high)")
        name, _, interval = part.partition("=")
        lo_s, _, hi_s = interval.partition(":")
        try:
            bounds[name.strip()] = (float(lo_s), float(hi_s))
        except ValueError as exc:
            raise QkdError(f"bad bounds entry {part!r}: {exc}") from exc
    if not bounds:
        raise QkdError("empty bounds spec")
    return bounds


def _cmd_run(args: argparse.Namespace) -> int:
    config = _build_config(args, args.override)
    report = run_pipeline(config)
    if args.format == "json":
        _write_output(report.to_json(args.precision) + "\n", args.out)
    else:
        _write_output(_run_csv(report, args.precision), args.out)
    print(f"elapsed: {report.elapsed_seconds:.3f}s", file=sys.stderr)
    if report.aborted:
        print(f"abort: {report.abort_reason}", file=sys.stderr)
        return EXIT_ABORT
    return EXIT_OK


def _cmd_sweep(args: argparse.Namespace) -> int:
    config = _build_config(args)
    values = _parse_values(args)
    curve = sweep(config, args.var, values)
    if args.format == "csv":
        _write_output(_sweep_csv(config.protocol, curve, args.precision), args.out)
    else:
        payload = {
            "variable": args.var,
            "points": [
                {"value": value, "report": report.to_dict()} for value, report in curve
            ],
        }
        _write_output(canonical_json(payload, args.precision) + "\n", args.out)
    return EXIT_OK


def _cmd_optimize(args: argparse.Namespace) -> int:
    config = _build_config(args)
    bounds = _parse_bounds(args.bounds)
    best, best_rate, evaluations = optimize_intensities(config, bounds)
    payload = {
        "best_intensities": {
            "signal_mu": best.signal_mu,
            "decoy_nu": best.decoy_nu,
            "vacuum_omega": best.vacuum_omega,
            "usage_fractions": list(best.usage_fractions),
        },
        "best_rate": best_rate,
        "evaluations": evaluations,
    }
    _write_output(canonical_json(payload, args.precision) + "\n", args.out)
    return EXIT_OK


def _add_common(parser: argparse.ArgumentParser, default_format: str) -> None:
    parser.add_argument("--config", required=True, help="JSON run configuration")
    parser.add_argument(
        "--format", choices=("json", "csv"), default=default_format, help="output format"
    )
    parser.add_argument("--out", default="-", help="output path, '-' for stdout")
    parser.add_argument(
        "--precision", type=int, default=9, help="significant digits for floats (1-17)"
    )
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument(
        "--ephemeral-seed",
        action="store_true",
        help="draw a random seed when none is configured (printed to stderr)",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qkdkit", description="QKD session simulation and key-rate toolkit"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run one pipeline and emit a report")
    _add_common(run_p, "json")
    run_p.add_argument(
        "override", nargs="*", help="dotted-path overrides, e.g. fiber.length_km=75"
    )
    run_p.set_defaults(func=_cmd_run)

    sweep_p = sub.add_parser("sweep", help="run a pipeline per value of one field")
    _add_common(sweep_p, "csv")
    sweep_p.add_argument("--var", required=True, help="dotted numeric field path")
    sweep_p.add_argument("--values", default=None, help="comma-separated values")
    sweep_p.add_argument("--range", default=None, help="start:stop:steps (inclusive)")
    sweep_p.set_defaults(func=_cmd_sweep)

    opt_p = sub.add_parser("optimize", help="optimize decoy intensities")
    _add_common(opt_p, "json")
    opt_p.add_argument(
        "--bounds",
        required=True,
        help="per-parameter intervals, e.g. signal_mu=0.3:0.7,decoy_nu=0.05:0.2",
    )
    opt_p.set_defaults(func=_cmd_optimize)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 0 for --help; normalize everything else to usage=1
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    if not 1 <= args.precision <= 17:
        print("error: --precision must be in [1, 17]", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except QkdError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
