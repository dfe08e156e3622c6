"""Command-line experiment runner and service launcher.

One JSON config file drives each subcommand; ``--seed`` and ``--out``
override the config.  Artifacts (CSV and JSON) are byte-stable for a
fixed seed.  Exit codes: 0 success, 2 usage or configuration error,
3 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import InvalidInputError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


class _ConfigError(Exception):
    pass


def _load_config(args) -> dict:
    if args.config is None:
        return {}
    try:
        with open(args.config, encoding="utf-8") as fh:
            payload = json.load(fh)
    except (OSError, json.JSONDecodeError) as err:
        raise _ConfigError(f"cannot read config: {err}") from err
    if not isinstance(payload, dict):
        raise _ConfigError("config must be a JSON object")
    return payload


def _resolve(args, payload) -> tuple[int, Path]:
    seed = args.seed if args.seed is not None else int(payload.get("seed", 0))
    out_dir = Path(args.out if args.out is not None else payload.get("out", "out"))
    out_dir.mkdir(parents=True, exist_ok=True)
    return seed, out_dir


def cmd_simulate_continuous(args) -> int:
    from .experiments import (
        continuous_header,
        run_continuous_experiment,
        write_csv,
        write_json,
    )

    payload = _load_config(args)
    try:
        seed, out_dir = _resolve(args, payload)
        rows, summary = run_continuous_experiment(payload, seed)
        header = continuous_header(int(payload["dim"]))
    except (KeyError, TypeError, ValueError, InvalidInputError, _ConfigError) as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    write_csv(out_dir / "stages.csv", header, rows)
    write_json(out_dir / "summary.json", summary)
    print(f"wrote {out_dir}/stages.csv and summary.json")
    return EXIT_OK


def cmd_simulate_discrete(args) -> int:
    from .experiments import run_discrete_experiment, write_csv, write_json

    payload = _load_config(args)
    try:
        seed, out_dir = _resolve(args, payload)
        run_rows, trace_rows, summary = run_discrete_experiment(payload, seed)
    except (KeyError, TypeError, ValueError, InvalidInputError, _ConfigError) as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as err:  # budget exhaustion and similar
        print(f"runtime error: {err}", file=sys.stderr)
        return EXIT_RUNTIME
    write_csv(out_dir / "runs.csv", ["run", "target", "steps", "baseline_steps"], run_rows)
    write_csv(
        out_dir / "trace.csv",
        ["run", "step", "i", "j", "answer", "entropy_of_belief", "top1_prob"],
        trace_rows,
    )
    write_json(out_dir / "summary.json", summary)
    print(f"wrote {out_dir}/runs.csv, trace.csv and summary.json")
    return EXIT_OK


def cmd_calibrate_gamma(args) -> int:
    from .experiments import run_calibration_experiment, write_csv, write_json

    payload = _load_config(args)
    try:
        seed, out_dir = _resolve(args, payload)
        rows, summary = run_calibration_experiment(payload, seed)
    except (KeyError, TypeError, ValueError, InvalidInputError, _ConfigError) as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    write_csv(out_dir / "calibration.csv", ["dim", "matched_gamma", "p_hat"], rows)
    write_json(out_dir / "summary.json", summary)
    print(f"wrote {out_dir}/calibration.csv and summary.json")
    return EXIT_OK


def cmd_verify_walk(args) -> int:
    from .experiments import run_walk_verification, write_csv, write_json

    payload = _load_config(args)
    try:
        seed, out_dir = _resolve(args, payload)
        report = run_walk_verification(payload, seed)
    except (KeyError, TypeError, ValueError, InvalidInputError, _ConfigError) as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    trace_rows = report.pop("_trace_rows", [])
    write_json(out_dir / "report.json", report)
    write_csv(out_dir / "trace.csv", ["stage", "depth", "is_green", "z"], trace_rows)
    print(f"wrote {out_dir}/report.json and trace.csv (all_pass={report['all_pass']})")
    return EXIT_OK


def cmd_fit_embedding(args) -> int:
    import numpy as np

    from .embedding import (
        TrainConfig,
        cross_validate,
        evaluate_accuracy,
        fit,
        read_triplets_csv,
    )
    from .errors import TrainingDivergedError
    from .experiments import write_json

    payload = _load_config(args)
    try:
        seed, out_dir = _resolve(args, payload)
        triplets = read_triplets_csv(payload["triplets_csv"])
        config = TrainConfig(
            dim=int(payload["dim"]),
            gamma=float(payload["gamma"]),
            learning_rate=float(payload.get("learning_rate", 0.05)),
            batch_size=int(payload.get("batch_size", 128)),
            l2_lambda=float(payload.get("l2_lambda", 0.0)),
            epochs=int(payload.get("epochs", 200)),
            folds=int(payload.get("folds", 10)),
            seed=seed,
        )
        holdout_fraction = float(payload.get("holdout_fraction", 0.1))
    except (KeyError, TypeError, ValueError, InvalidInputError, OSError, _ConfigError) as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        rng = np.random.default_rng(np.random.SeedSequence(seed))
        metrics = {"n_triplets": len(triplets)}
        if payload.get("cross_validate", False):
            cv = cross_validate(triplets, config, rng)
            metrics["cv_fold_accuracies"] = list(cv.fold_accuracies)
            metrics["cv_mean_accuracy"] = cv.mean_accuracy
        order = np.arange(len(triplets))
        rng.shuffle(order)
        n_hold = int(len(triplets) * holdout_fraction)
        hold = [triplets[k] for k in order[:n_hold]]
        train = [triplets[k] for k in order[n_hold:]]
        emb = fit(train or triplets, config, rng)
        if hold:
            metrics["holdout_accuracy"] = evaluate_accuracy(emb, hold, config.gamma)
        with open(out_dir / "embedding.json", "w", encoding="utf-8") as fh:
            json.dump(emb.to_manifest(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        write_json(out_dir / "metrics.json", metrics)
    except TrainingDivergedError as err:
        print(f"runtime error: {err}", file=sys.stderr)
        return EXIT_RUNTIME
    except InvalidInputError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    print(f"wrote {out_dir}/embedding.json and metrics.json")
    return EXIT_OK


def cmd_identifiability(args) -> int:
    from .experiments import run_identifiability, write_json

    payload = _load_config(args)
    try:
        seed, out_dir = _resolve(args, payload)
        report = run_identifiability(payload)
    except (KeyError, TypeError, ValueError, InvalidInputError, _ConfigError) as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    write_json(out_dir / "report.json", report)
    print(f"wrote {out_dir}/report.json (rank={report['rank']})")
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    from .service.app import create_app

    app = create_app(snapshot_dir=args.snapshot_dir)
    uvicorn.run(app, host=args.host, port=args.port)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cklsearch",
        description="Comparison-search experiments and interactive service",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_experiment(name, func, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--seed", type=int, default=None, help="seed override")
        p.add_argument("--out", default=None, help="output directory override")
        p.set_defaults(func=func)

    add_experiment(
        "simulate-continuous", cmd_simulate_continuous, "staged search over a hypercube"
    )
    add_experiment("simulate-discrete", cmd_simulate_discrete, "item search vs baseline")
    add_experiment("calibrate-gamma", cmd_calibrate_gamma, "match oracle strength across dims")
    add_experiment("verify-walk", cmd_verify_walk, "check the error-chain closed forms")
    add_experiment("fit-embedding", cmd_fit_embedding, "train an embedding from triplets")
    add_experiment("identifiability", cmd_identifiability, "query-set rank report")

    serve = sub.add_parser("serve", help="run the interactive search service")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8000)
    serve.add_argument("--snapshot-dir", default=None)
    serve.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except KeyboardInterrupt:
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
