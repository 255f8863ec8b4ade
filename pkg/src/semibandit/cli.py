"""Command line entry point: run, sweep, diagnose, lowerbound, olsdemo."""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import diagnostics, harness
from .environments import ContractViolation
from .harness import ConfigError, ExperimentConfig, HarnessError, OutputError

CHECK_FAILED = 5


def _build_config(args) -> ExperimentConfig:
    data = {}
    if args.config:
        try:
            with open(args.config) as fh:
                data = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {args.config} is not valid JSON: {exc}") from exc
    data.setdefault("env", {})
    data.setdefault("algorithm", {})
    if args.env:
        data["env"]["kind"] = args.env
    if args.d is not None:
        data["env"]["d"] = args.d
    if args.K is not None:
        data["env"]["K"] = args.K
    if args.algorithm:
        data["algorithm"]["name"] = args.algorithm
    if args.T is not None:
        data["horizon"] = args.T
    if args.seed is not None:
        data["master_seed"] = args.seed
    if args.out:
        data["output_dir"] = args.out
    if args.jobs is not None:
        data["jobs"] = args.jobs
    if getattr(args, "replicates", None) is not None:
        data["replicates"] = args.replicates
    if getattr(args, "param", None) is not None:
        data["sweep"] = [args.param]
    elif args.command == "run" and not data.get("sweep"):
        data["sweep"] = [1.0]
    elif args.command == "run":
        data["sweep"] = data["sweep"][:1]
    return ExperimentConfig.from_dict(data)


def _write_json(out_dir, name, payload):
    try:
        os.makedirs(out_dir, exist_ok=True)
        path = os.path.join(out_dir, name)
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2)
            fh.write("\n")
    except OSError as exc:
        raise OutputError(f"cannot write {out_dir}/{name}: {exc}") from exc
    return path


def cmd_sweep(args) -> int:
    cfg = _build_config(args)
    summary = harness.run_sweep(cfg)
    paths = harness.emit_outputs(summary)
    best = summary.best
    print(f"{cfg.algorithm.name} on {cfg.env.kind}: best param {best.param_value:.6g} "
          f"mean final regret {best.mean_final:.6g}")
    for p in paths.values():
        print(p)
    if summary.potential_failures:
        print(f"potential audit failed on {summary.potential_failures} runs", file=sys.stderr)
        return CHECK_FAILED
    return 0


def cmd_diagnose(args) -> int:
    rng = np.random.default_rng(args.seed if args.seed is not None else 0)
    reports = diagnostics.run_all(rng, quick=args.quick)
    out = args.out or "diagnostics"
    failed = []
    for name, rep in reports.items():
        _write_json(out, f"{name}.json", rep)
        if "violations" in rep:
            control = "negative_control" in name
            informative = "shifted" in name or "empirical_only" in name
            if control and rep["violations"] == 0:
                failed.append(name)
            elif not control and not informative and rep["empirical_rate"] > rep["delta"]:
                failed.append(name)
        print(f"{name}: " + ", ".join(f"{k}={rep[k]}" for k in ("violations", "trials")
                                      if k in rep))
    if failed:
        print("failed: " + ", ".join(failed), file=sys.stderr)
        return CHECK_FAILED
    return 0


def cmd_lowerbound(args) -> int:
    T = args.T if args.T is not None else 1000
    alg = args.algorithm or "oful"
    param = args.param if args.param is not None else 1.0
    rep = harness.lower_bound_demo(T, alg, param, args.seed or 0)
    path = _write_json(args.out or "lowerbound", "lowerbound.json", rep)
    print(json.dumps(rep))
    print(path)
    return 0 if rep["meets_half_T"] else CHECK_FAILED


def cmd_olsdemo(args) -> int:
    T = args.T if args.T is not None else 10_000
    rep = diagnostics.ols_bias_demo(T, np.random.default_rng(args.seed or 0))
    path = _write_json(args.out or "olsdemo", "olsdemo.json", rep)
    print(json.dumps(rep))
    print(path)
    return 0


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="semibandit",
                                     description="Semiparametric contextual bandit experiments")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON experiment config")
        p.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
        p.add_argument("--out", help="output directory")
        p.add_argument("--jobs", type=int, help="worker processes")
        p.add_argument("--algorithm", choices=harness.ALGORITHMS)
        p.add_argument("--env", help="environment kind")
        p.add_argument("--T", type=int, help="horizon")
        p.add_argument("--d", type=int, help="feature dimension")
        p.add_argument("--K", type=int, help="number of actions")
        return p

    p = common(sub.add_parser("run", help="one sweep cell: a single parameter, all replicates"))
    p.add_argument("--param", type=float, help="exploration parameter (default 1.0)")
    p.add_argument("--replicates", type=int)
    p.set_defaults(func=cmd_sweep)

    p = common(sub.add_parser("sweep", help="full parameter sweep x replicates"))
    p.add_argument("--replicates", type=int)
    p.set_defaults(func=cmd_sweep)

    p = common(sub.add_parser("diagnose", help="concentration and potential checks"))
    p.add_argument("--quick", action="store_true", help="smaller trial counts")
    p.set_defaults(func=cmd_diagnose)

    p = common(sub.add_parser("lowerbound", help="deterministic learner vs. the adversary"))
    p.add_argument("--param", type=float, help="exploration parameter (default 1.0)")
    p.set_defaults(func=cmd_lowerbound)

    p = common(sub.add_parser("olsdemo", help="biased least squares counterexample"))
    p.set_defaults(func=cmd_olsdemo)
    return parser


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except HarnessError as exc:
        print(f"error [{exc.category}]: {exc}", file=sys.stderr)
        return exc.exit_code
    except ContractViolation as exc:
        print(f"error [contract]: {exc}", file=sys.stderr)
        return harness.ReplicateError.exit_code
    except ValueError as exc:
        print(f"error [config]: {exc}", file=sys.stderr)
        return ConfigError.exit_code


if __name__ == "__main__":
    sys.exit(main())
