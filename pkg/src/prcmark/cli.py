"""prcmark command line: keygen | run | sweep | fit-rho | plot.

Exit codes: 0 success, 2 invalid config, 3 I/O failure. The worker count can
be overridden with PRCMARK_WORKERS.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import InvalidConfig, PrcmarkError
from .experiments import (
    config_from_dict,
    fit_rho,
    run_experiment,
    run_sweep,
    write_run_csv,
    write_sweep_csv,
)
from .keyio import save_key, save_key_json
from .prc import keygen

EXIT_OK, EXIT_CONFIG, EXIT_IO = 0, 2, 3


def _load_config(args):
    path = Path(args.config)
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise _IOFailure(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InvalidConfig(f"config {path} is not valid JSON: {exc}") from exc
    config = config_from_dict(raw)
    if args.seed is not None:
        config.seed = args.seed
    return config


class _IOFailure(Exception):
    pass


def _out_dir(args) -> Path:
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise _IOFailure(f"cannot create output directory {out}: {exc}") from exc
    return out


def cmd_keygen(args) -> int:
    config = _load_config(args)
    out = _out_dir(args)
    key = keygen(config.params, config.seed)
    key.schedule_seed = config.schedule_seed if config.schedule_seed is not None else config.seed
    key.schedule_len = config.schedule_len
    path = out / f"{key.key_id}.prck"
    try:
        save_key(path, key)
        if args.json_sidecar:
            save_key_json(path.with_suffix(".json"), key)
    except OSError as exc:
        raise _IOFailure(f"cannot write key file: {exc}") from exc
    print(key.key_id)
    return EXIT_OK


def cmd_run(args) -> int:
    config = _load_config(args)
    out = _out_dir(args)
    records, aggregate = run_experiment(config)
    path = out / "run.csv"
    try:
        write_run_csv(path, records, config, aggregate)
    except OSError as exc:
        raise _IOFailure(f"cannot write {path}: {exc}") from exc
    print(path)
    return EXIT_OK


def cmd_sweep(args) -> int:
    config = _load_config(args)
    out = _out_dir(args)
    values = [json.loads(v) for v in args.values.split(",")]
    rows = run_sweep(config, args.axis, values)
    path = out / f"sweep_{args.axis}.csv"
    try:
        write_sweep_csv(path, rows, config, args.axis)
    except OSError as exc:
        raise _IOFailure(f"cannot write {path}: {exc}") from exc
    print(path)
    return EXIT_OK


def cmd_fit_rho(args) -> int:
    config = _load_config(args)
    out = _out_dir(args)
    key = keygen(config.params, config.seed)
    result = fit_rho(
        key,
        target_rate=args.target,
        trials=args.trials,
        seed=config.seed,
    )
    path = out / "fit_rho.json"
    try:
        with open(path, "w") as fh:
            json.dump(result, fh, indent=2)
    except OSError as exc:
        raise _IOFailure(f"cannot write {path}: {exc}") from exc
    print(json.dumps(result))
    return EXIT_OK


def cmd_plot(args) -> int:
    from .plots import plot_run, plot_sweep

    out = _out_dir(args)
    made = []
    for csv_path in sorted(out.glob("*.csv")):
        try:
            if csv_path.name.startswith("sweep_"):
                made.append(plot_sweep(csv_path))
            else:
                made.append(plot_run(csv_path))
        except OSError as exc:
            raise _IOFailure(f"cannot render {csv_path}: {exc}") from exc
    for p in made:
        print(p)
    if not made:
        print("no CSV files found", file=sys.stderr)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="prcmark", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="JSON experiment config")
        p.add_argument("--seed", type=int, default=None, help="override config seed")
        p.add_argument("--out", default=".", help="output directory")

    p = sub.add_parser("keygen", help="generate and store a key")
    common(p)
    p.add_argument("--json-sidecar", action="store_true",
                   help="also write the base64 JSON debug container")
    p.set_defaults(func=cmd_keygen)

    p = sub.add_parser("run", help="run the embed/attack/extract/detect pipeline")
    common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="aggregate a run across one axis")
    common(p)
    p.add_argument("--axis", required=True, choices=("rho", "t", "k_msg", "f", "L"))
    p.add_argument("--values", required=True,
                   help="comma-separated axis values, e.g. 2,3,4,5")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("fit-rho", help="fit channel fidelity to a decode rate")
    common(p)
    p.add_argument("--target", type=float, default=0.999)
    p.add_argument("--trials", type=int, default=48)
    p.set_defaults(func=cmd_fit_rho)

    p = sub.add_parser("plot", help="render figures for CSVs in the output dir")
    p.add_argument("--config", required=False, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=".", help="directory holding the CSVs")
    p.set_defaults(func=cmd_plot)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (InvalidConfig, PrcmarkError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except _IOFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
