"""``cimnas`` command line.

Exit codes: 0 ok, 2 configuration error, 3 data error, 4 runtime error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import ENV_PREFIX, ConfigError, RunConfig, apply_env_overrides, load_preset, preset_names, read_raw
from .controller import RewardError
from .cost import CostModelError, SynapticArray, TechnologyParams, evaluate_hardware
from .data import DataError
from .devices import DeviceError, default_library
from .nn import ShapeError
from .quant import QuantizationError, QuantizationScheme
from .report import parse_objectives, write_pareto, write_report
from .run import execute, replay_episode
from .space import NACIM_HW_ROWS, NACIM_SW_ROWS, Candidate, SearchSpaceError, candidate_from_table

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_RUNTIME = 0, 2, 3, 4

TABLES = {"nacim_hw": NACIM_HW_ROWS, "nacim_sw": NACIM_SW_ROWS}

log = logging.getLogger("cimnas")


def _config_from_args(args) -> RunConfig:
    raw = {}
    if args.preset:
        raw = load_preset(args.preset)
    if args.config:
        path = Path(args.config)
        if not path.exists():
            raise ConfigError(f"{path}: no such config file")
        raw.update(read_raw(path))
    raw = apply_env_overrides(raw)
    for key in ("seed", "workers", "out"):
        value = getattr(args, key)
        if value is not None:
            raw[key] = value
    return RunConfig.from_dict(raw)


def cmd_search(args) -> int:
    cfg = _config_from_args(args)
    summary = execute(cfg, resume=args.resume)
    print(json.dumps(summary, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_evaluate(args) -> int:
    run_dir = Path(args.run_dir)
    if not (run_dir / "config.json").exists():
        raise DataError(f"{run_dir}: no config.json; not a run directory")
    try:
        result = replay_episode(run_dir, args.candidate_id)
    except KeyError as exc:
        raise DataError(str(exc.args[0])) from exc
    print(json.dumps(result, indent=2, sort_keys=True))
    return EXIT_OK


def _load_arch(args):
    if args.table:
        return candidate_from_table(TABLES[args.table], args.classes)
    path = Path(args.arch)
    if not path.exists():
        raise DataError(f"{path}: no such architecture file")
    try:
        spec = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: {exc}") from exc
    if isinstance(spec, dict) and "rows" in spec:
        rows = [tuple(r) for r in spec["rows"]]
        return candidate_from_table(rows, spec.get("classes", args.classes))
    if isinstance(spec, dict) and "arch" in spec:
        return Candidate.from_dict({"bits": None, "device_index": 0, "classes": args.classes, **spec})
    raise DataError(f"{path}: expected {{'rows': [...]}} or a candidate record")


def cmd_cost(args) -> int:
    if not args.table and not args.arch:
        raise ConfigError("cost needs --arch FILE or --table NAME")
    cand = _load_arch(args)
    n = len(cand.arch.layers) + 1
    if args.quant:
        w, _, a = args.quant.partition("/")
        try:
            quant = QuantizationScheme.uniform(n, w, a or "u1.4")
        except QuantizationError as exc:
            raise ConfigError(f"--quant: {exc}") from exc
    else:
        quant = cand.scheme()
    lib = default_library()
    try:
        device = lib.by_name(args.device)
    except DeviceError as exc:
        raise ConfigError(str(exc)) from exc
    tech = TechnologyParams.load(args.tech) if args.tech else TechnologyParams()
    shape = tuple(int(v) for v in args.input_shape.split(","))
    design, metrics = evaluate_hardware(cand.arch, quant, device, tech, SynapticArray(), shape)
    out = {"design": design.to_dict(), "metrics": metrics.to_dict(),
           "quantization": None if quant is None else quant.to_strings(), "device": device.name}
    print(json.dumps(out, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_pareto(args) -> int:
    try:
        objectives = parse_objectives(args.objective or ["alpha_var:max", "latency_ns:min"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    path = write_pareto(args.run_dir, objectives, args.output, args.phase)
    print(path.read_text(), end="")
    return EXIT_OK


def cmd_report(args) -> int:
    summary = write_report(args.run_dir)
    print(json.dumps(summary, indent=2, sort_keys=True))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cimnas", description="Joint architecture, quantization and device "
                                "search for compute-in-memory accelerators.",
                                epilog=f"Config keys can be overridden with {ENV_PREFIX}<KEY> or "
                                       f"{ENV_PREFIX}<SECTION>__<KEY> environment variables.")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("search", help="run the configured search pipeline")
    s.add_argument("--config", help="JSON or YAML run config")
    s.add_argument("--preset", choices=preset_names(), help="start from a packaged config")
    s.add_argument("--seed", type=int)
    s.add_argument("--workers", type=int)
    s.add_argument("--out")
    s.add_argument("--resume", action="store_true", help="continue from the last controller checkpoint")
    s.set_defaults(func=cmd_search)

    e = sub.add_parser("evaluate", help="replay one logged search episode from its seeds")
    e.add_argument("run_dir")
    e.add_argument("candidate_id", type=int, help="episode id")
    e.set_defaults(func=cmd_evaluate)

    c = sub.add_parser("cost", help="map an architecture and print chip metrics")
    c.add_argument("--arch", help="JSON file with table rows or a candidate record")
    c.add_argument("--table", choices=sorted(TABLES), help="use a built-in reference design")
    c.add_argument("--quant", help="uniform override WEIGHT/ACT, e.g. s1.4/u1.4")
    c.add_argument("--device", default="reram4")
    c.add_argument("--tech", help="technology INI preset")
    c.add_argument("--input-shape", default="3,32,32")
    c.add_argument("--classes", type=int, default=10)
    c.set_defaults(func=cmd_cost)

    pa = sub.add_parser("pareto", help="write the nondominated records of a run as CSV")
    pa.add_argument("run_dir")
    pa.add_argument("--objective", action="append", help="KEY:max|min, repeatable")
    pa.add_argument("--phase", help="restrict to one phase (e.g. ptbnas, rnas)")
    pa.add_argument("--output")
    pa.set_defaults(func=cmd_pareto)

    r = sub.add_parser("report", help="regenerate CSV and plot data from a run's logs")
    r.add_argument("run_dir")
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (CostModelError, ShapeError, QuantizationError, SearchSpaceError, RewardError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (RuntimeError, ValueError, OSError, FloatingPointError) as exc:
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
