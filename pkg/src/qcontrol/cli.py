"""Command-line experiment runner.

Usage::

    qcontrol list
    qcontrol validate --config exp.yaml
    qcontrol run --config exp.yaml [--set key=value ...] [--seed N] [--out DIR]

A config file is YAML with the top-level keys ``experiment``, ``rng_seed``,
``output_dir`` and ``parameters``. Dotted ``--set`` paths address any key, for
example ``--set parameters.phi=3.14159``; a bare parameter name such as
``--set phi=3.14159`` is shorthand for the same thing.
"""

from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import io
import json
import logging
import math
import os
import sys
import tempfile
import time
from pathlib import Path
from typing import Any, Sequence

import numpy as np
import yaml

from . import __version__
from .errors import ConfigError, QControlError
from .experiments import CHOICES, EXPERIMENTS, NULLABLE, ResultTable

log = logging.getLogger("qcontrol")

TOP_LEVEL = ("experiment", "rng_seed", "output_dir", "parameters")
EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

def _type_name(v) -> str:
    return type(v).__name__


def _check_value(exp: str, key: str, value, default):
    path = f"parameters.{key}"
    if value is None:
        if (exp, key) in NULLABLE or default is None:
            return None
        raise ConfigError(path, "may not be null")
    expected = NULLABLE.get((exp, key), type(default) if default is not None else None)
    if isinstance(default, list):
        if not isinstance(value, list) or not value:
            raise ConfigError(path, "expected a non-empty list")
        elem = type(default[0]) if default else float
        return [_coerce(path, v, elem) for v in value]
    out = _coerce(path, value, expected)
    choices = CHOICES.get((exp, key))
    if choices is not None and out not in choices:
        raise ConfigError(path, f"must be one of {list(choices)}, got {out!r}")
    return out


def _coerce(path: str, value, expected):
    if expected is bool:
        if isinstance(value, bool):
            return value
    elif expected is int:
        if isinstance(value, int) and not isinstance(value, bool):
            return value
    elif expected is float:
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            out = float(value)
            if not math.isfinite(out):
                raise ConfigError(path, "must be finite")
            return out
    elif expected is str:
        if isinstance(value, str):
            return value
    raise ConfigError(path, f"expected {expected.__name__}, got {_type_name(value)} {value!r}")


def resolve_config(raw: dict | None) -> dict:
    """Fill defaults and validate; raises ConfigError naming the first offending key."""
    raw = {} if raw is None else raw
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "config must be a mapping")
    for key in raw:
        if key not in TOP_LEVEL:
            raise ConfigError(str(key), "unknown top-level key")
    exp = raw.get("experiment")
    if exp is None:
        raise ConfigError("experiment", "missing experiment name")
    if exp not in EXPERIMENTS:
        raise ConfigError("experiment", f"unknown experiment {exp!r}")
    seed = raw.get("rng_seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        raise ConfigError("rng_seed", "must be a non-negative integer")
    out_dir = raw.get("output_dir", "results")
    if not isinstance(out_dir, str):
        raise ConfigError("output_dir", "must be a string")
    params_raw = raw.get("parameters") or {}
    if not isinstance(params_raw, dict):
        raise ConfigError("parameters", "must be a mapping")
    defaults = EXPERIMENTS[exp].defaults
    for key in params_raw:
        if key not in defaults:
            raise ConfigError(f"parameters.{key}", f"unknown parameter for {exp}")
    params = {}
    for key, default in defaults.items():
        params[key] = _check_value(exp, key, params_raw.get(key, copy.deepcopy(default)), default)
    return {"experiment": exp, "rng_seed": seed, "output_dir": out_dir, "parameters": params}


def apply_overrides(raw: dict, overrides: Sequence[str]) -> dict:
    """Apply ``key=value`` strings; values are parsed as YAML scalars or lists."""
    raw = copy.deepcopy(raw) if raw else {}
    for item in overrides:
        if "=" not in item:
            raise ConfigError(item, "override must look like key=value")
        path, text = item.split("=", 1)
        parts = path.strip().split(".")
        if parts[0] not in TOP_LEVEL:
            parts = ["parameters"] + parts
        try:
            value = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError(path, f"cannot parse value: {exc}") from None
        node = raw
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigError(path, "path runs through a non-mapping value")
        node[parts[-1]] = value
    return raw


def load_config_file(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            data = yaml.safe_load(fh)
    except FileNotFoundError:
        raise ConfigError("--config", f"no such file {path}") from None
    except yaml.YAMLError as exc:
        raise ConfigError("--config", f"invalid YAML: {exc}") from None
    return data or {}


def config_hash(config: dict) -> str:
    """Hash of everything that determines the numbers (the output directory is excluded)."""
    key = {k: config[k] for k in ("experiment", "rng_seed", "parameters")}
    blob = json.dumps(key, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------

def format_value(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return str(v)


def table_to_csv(table: ResultTable) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    names = list(table.columns)
    writer.writerow(names)
    for row in zip(*(table.columns[n] for n in names)):
        writer.writerow([format_value(v) for v in row])
    return buf.getvalue()


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    if isinstance(v, (np.floating, float)):
        f = float(v)
        return f if math.isfinite(f) else repr(f)
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return v


def atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def run_config(config: dict) -> tuple[Path, Path, ResultTable]:
    exp = EXPERIMENTS[config["experiment"]]
    t0 = time.perf_counter()
    table = exp.run(config["parameters"], config["rng_seed"])
    wall = time.perf_counter() - t0
    h = config_hash(config)
    out = Path(config["output_dir"])
    stem = f"{exp.name}-{h}"
    meta = {
        "config": config,
        "config_hash": h,
        "toolkit_version": __version__,
        "wall_time_s": wall,
        "columns": list(table.columns),
        "n_rows": table.n_rows,
        "results": table.scalars,
    }
    csv_path, json_path = out / f"{stem}.csv", out / f"{stem}.json"
    atomic_write(csv_path, table_to_csv(table))
    atomic_write(json_path, json.dumps(_jsonable(meta), sort_keys=True, indent=2) + "\n")
    return csv_path, json_path, table


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qcontrol", description="Quantum control experiment runner")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("list", help="list experiments")
    val = sub.add_parser("validate", help="check a config and print the resolved version")
    val.add_argument("--config")
    val.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    run = sub.add_parser("run", help="run an experiment")
    run.add_argument("--config")
    run.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    run.add_argument("--seed", type=int)
    run.add_argument("--out")
    return parser


def _resolve_from_args(args) -> dict:
    raw = apply_overrides(load_config_file(args.config), args.set)
    if getattr(args, "seed", None) is not None:
        raw["rng_seed"] = args.seed
    if getattr(args, "out", None) is not None:
        raw["output_dir"] = args.out
    return resolve_config(raw)


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.command == "list":
        for name, exp in EXPERIMENTS.items():
            print(f"{name:20s} {exp.doc}")
        return EXIT_OK
    try:
        config = _resolve_from_args(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.command == "validate":
        print(json.dumps(_jsonable(config), sort_keys=True, indent=2))
        return EXIT_OK
    try:
        csv_path, json_path, _ = run_config(config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (QControlError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    print(csv_path)
    print(json_path)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
