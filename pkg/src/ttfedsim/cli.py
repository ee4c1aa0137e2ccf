"""Command-line front end: single runs, parameter sweeps, bound tables.

Output files are written atomically (temp file + rename) so a killed run
never leaves a half-written CSV. The metrics CSV schema is fixed:
time_s,round,algorithm,accuracy,loss,uplink_msgs,downlink_broadcasts,
downlink_unicasts,success_users,failed_users.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import tempfile
from dataclasses import replace

from . import __version__
from .bound import BoundConstants, bound_table, check_conditions, convergence_bound
from .config import (
    ConfigError,
    ScenarioConfig,
    apply_overrides,
    build_config,
    parse_config_text,
)
from .engine import RunMetrics, count_comm, run, setup_scenario

CSV_HEADER = [
    "time_s",
    "round",
    "algorithm",
    "accuracy",
    "loss",
    "uplink_msgs",
    "downlink_broadcasts",
    "downlink_unicasts",
    "success_users",
    "failed_users",
]

OUT_DIR_ENV = "TTFEDSIM_OUT_DIR"


def _atomic_write(path: str, text: str) -> None:
    directory = os.path.dirname(path) or "."
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp_", text=True)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def metrics_csv_text(metrics: RunMetrics) -> str:
    import io

    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(CSV_HEADER)
    for p in metrics.evals:
        writer.writerow(
            [
                f"{p.time_s:.9g}",
                p.round,
                metrics.algorithm,
                f"{p.accuracy:.6f}",
                f"{p.loss:.9g}",
                p.uplink_msgs,
                p.downlink_broadcasts,
                p.downlink_unicasts,
                p.success_users,
                p.failed_users,
            ]
        )
    return buf.getvalue()


def summary_dict(cfg: ScenarioConfig, metrics: RunMetrics) -> dict:
    crossings = {}
    for target, info in count_comm(metrics, cfg.accuracy_targets).items():
        crossings[f"{target:g}"] = info  # None when never reached
    last = metrics.evals[-1] if metrics.evals else None
    return {
        "tool_version": __version__,
        "algorithm": metrics.algorithm,
        "seed": cfg.seed,
        "config_hash": cfg.content_hash(),
        "num_tiers": metrics.num_tiers,
        "delta_t_s": metrics.delta_t,
        "round_time_s": metrics.round_time,
        "final_accuracy": last.accuracy if last else None,
        "final_loss": last.loss if last else None,
        "uplink_msgs": metrics.uplink_msgs,
        "downlink_broadcasts": metrics.downlink_broadcasts,
        "downlink_unicasts": metrics.downlink_unicasts,
        "success_total": metrics.success_total,
        "failed_total": metrics.failed_total,
        "zero_weight_uploads": metrics.zero_weight_uploads,
        "substituted_samples": metrics.substituted_samples,
        "target_crossings": crossings,
    }


def _load_cfg(args) -> ScenarioConfig:
    with open(args.config, encoding="utf-8") as fh:
        raw = parse_config_text(fh.read(), source=args.config)
    raw = apply_overrides(raw, args.override or [])
    if args.seed is not None:
        raw["sim.seed"] = str(args.seed)
    return build_config(raw)


def _out_dir(args) -> str:
    if args.out_dir:
        return args.out_dir
    return os.environ.get(OUT_DIR_ENV, "ttfedsim_out")


def _run_prefix(cfg: ScenarioConfig) -> str:
    return f"{cfg.algorithm}_seed{cfg.seed}"


def cmd_run(args) -> int:
    cfg = _load_cfg(args)
    metrics = run(cfg)
    out = _out_dir(args)
    prefix = _run_prefix(cfg)
    csv_path = os.path.join(out, f"{prefix}_metrics.csv")
    json_path = os.path.join(out, f"{prefix}_summary.json")
    _atomic_write(csv_path, metrics_csv_text(metrics))
    _atomic_write(json_path, json.dumps(summary_dict(cfg, metrics), indent=2) + "\n")
    print(f"wrote {csv_path}")
    print(f"wrote {json_path}")
    last = metrics.evals[-1]
    print(
        f"{metrics.algorithm}: final accuracy {last.accuracy:.4f}, "
        f"loss {last.loss:.4f} after {last.round} rounds ({last.time_s:.3f}s simulated)"
    )
    return 0


def _parse_axis(spec: str) -> tuple[str, list[str]]:
    if "=" not in spec:
        raise ConfigError(f"axis {spec!r} is not of the form key=v1,v2,...")
    key, _, values = spec.partition("=")
    values = [v.strip() for v in values.split(",") if v.strip()]
    if not values:
        raise ConfigError(f"axis {spec!r} has no values")
    return key.strip(), values


def cmd_sweep(args) -> int:
    with open(args.config, encoding="utf-8") as fh:
        base_raw = parse_config_text(fh.read(), source=args.config)
    base_raw = apply_overrides(base_raw, args.override or [])
    axis_key, axis_values = _parse_axis(args.axis)
    seeds = [int(s) for s in args.seeds.split(",")] if args.seeds else None
    out = _out_dir(args)

    runs = []
    rows = []
    for value in axis_values:
        raw = dict(base_raw)
        raw[axis_key] = value
        cfg0 = build_config(raw)
        for seed in seeds or [cfg0.seed]:
            cfg = replace(cfg0, seed=seed)
            cfg.validate()
            metrics = run(cfg)
            tag = f"{axis_key.split('.')[-1]}_{value}_seed{seed}_{cfg.algorithm}"
            csv_path = os.path.join(out, "runs", f"{tag}_metrics.csv")
            json_path = os.path.join(out, "runs", f"{tag}_summary.json")
            _atomic_write(csv_path, metrics_csv_text(metrics))
            _atomic_write(json_path, json.dumps(summary_dict(cfg, metrics), indent=2) + "\n")
            runs.append(
                {
                    "axis_key": axis_key,
                    "axis_value": value,
                    "seed": seed,
                    "config_hash": cfg.content_hash(),
                    "metrics_csv": csv_path,
                    "summary_json": json_path,
                }
            )
            last = metrics.evals[-1]
            rows.append(
                [
                    value,
                    seed,
                    metrics.algorithm,
                    f"{last.accuracy:.6f}",
                    f"{last.loss:.9g}",
                    metrics.uplink_msgs,
                    metrics.downlink_broadcasts,
                    metrics.downlink_unicasts,
                    metrics.num_tiers,
                    f"{metrics.delta_t:.9g}",
                ]
            )
            print(f"{axis_key}={value} seed={seed}: accuracy {last.accuracy:.4f}")

    import io

    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(
        [
            "axis_value",
            "seed",
            "algorithm",
            "final_accuracy",
            "final_loss",
            "uplink_msgs",
            "downlink_broadcasts",
            "downlink_unicasts",
            "num_tiers",
            "delta_t_s",
        ]
    )
    writer.writerows(rows)
    comparison = os.path.join(out, "comparison.csv")
    manifest = os.path.join(out, "manifest.json")
    _atomic_write(comparison, buf.getvalue())
    _atomic_write(
        manifest,
        json.dumps({"tool_version": __version__, "axis": args.axis, "runs": runs}, indent=2)
        + "\n",
    )
    print(f"wrote {comparison}")
    print(f"wrote {manifest}")
    return 0


_BOUND_KEYS = {
    "bound.smoothness": ("smoothness", float),
    "bound.strong_convexity": ("strong_convexity", float),
    "bound.grad_offset": ("grad_offset", float),
    "bound.grad_slope": ("grad_slope", float),
    "bound.drift_inner": ("drift_inner", float),
    "bound.drift_norm": ("drift_norm", float),
    "bound.local_ratio": ("local_ratio", float),
    "bound.local_gap": ("local_gap", float),
    "bound.initial_gap": ("initial_gap", float),
    "bound.num_tiers": ("num_tiers", int),
    "bound.median_const": ("median_const", lambda s: None if s == "none" else float(s)),
    "bound.failure_fractions": (
        "failure_fractions",
        lambda s: tuple(float(x) for x in s.split(",")) if s.strip() else (),
    ),
}


def load_bound_constants(path: str, overrides: list[str] | None = None) -> tuple[BoundConstants, list[int]]:
    with open(path, encoding="utf-8") as fh:
        raw = parse_config_text(fh.read(), source=path)
    raw = apply_overrides(raw, overrides or [])
    rounds = [0, 1, 10, 100, 1000]
    kwargs = {}
    for key, value in raw.items():
        if key == "bound.round_values":
            rounds = [int(x) for x in value.split(",")]
            continue
        if key not in _BOUND_KEYS:
            raise ConfigError(f"unknown config key {key!r}")
        attr, parser = _BOUND_KEYS[key]
        try:
            kwargs[attr] = parser(value)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"{key}: cannot parse {value!r} ({exc})") from exc
    try:
        constants = BoundConstants(**kwargs)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"bound constants invalid: {exc}") from exc
    return constants, rounds


def cmd_bound(args) -> int:
    constants, rounds = load_bound_constants(args.config, args.override)
    ok, reasons = check_conditions(constants)
    if not ok:
        print("warning: convergence conditions violated:")
        for reason in reasons:
            print(f"  - {reason}")
    try:
        table = bound_table(constants, rounds)
    except ZeroDivisionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"{'K':>8}  {'bound':>14}  conditions_ok")
    for k, value in table:
        print(f"{k:>8}  {value:>14.6g}  {str(ok).lower()}")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="ttfedsim",
        description="Simulate time-triggered federated learning over an unreliable wireless uplink.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="flat key=value config file")
    common.add_argument(
        "--override",
        action="append",
        metavar="KEY=VALUE",
        help="override a config key (repeatable)",
    )

    p_run = sub.add_parser("run", parents=[common], help="execute one scenario")
    p_run.add_argument("--seed", type=int, default=None, help="override sim.seed")
    p_run.add_argument("--out-dir", default=None, help=f"output directory (or ${OUT_DIR_ENV})")
    p_run.set_defaults(func=cmd_run)

    p_sweep = sub.add_parser("sweep", parents=[common], help="run a grid over one config key")
    p_sweep.add_argument(
        "--axis",
        required=True,
        metavar="KEY=V1,V2,...",
        help="config key and comma-separated values, e.g. sim.delta_t_frac=0.3,0.6,1.0",
    )
    p_sweep.add_argument("--seeds", default=None, help="comma-separated seeds, e.g. 1,2,3")
    p_sweep.add_argument("--out-dir", default=None, help=f"output directory (or ${OUT_DIR_ENV})")
    p_sweep.set_defaults(func=cmd_sweep)

    p_bound = sub.add_parser("bound", parents=[common], help="evaluate the convergence bound")
    p_bound.set_defaults(func=cmd_bound)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError, ZeroDivisionError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
