"""Command-line interface: validate | solve | check-stationary | reduce | simulate.

Reports are JSON on stdout with sorted keys; timing lives under a single
"timing" key so report bodies are byte-identical across runs with the same
inputs and seed.  Exit codes: 0 success / Yes / Stationary, 1 invalid or No
or NotStationary, 2 parse failure, 3 Inconclusive, 4 budget exhausted,
5 trivial instance.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from fractions import Fraction

from .errors import (
    AmbiguousSimultaneityError,
    BudgetExceededError,
    MaxSwitchesExceededError,
    OrderCapExceededError,
    TrivialInstanceError,
)
from .model import ReachSpec, load_model, model_to_json, validate
from .oracles import SimConfig, simulate
from .rationals import parse_rational, rational_to_json
from .skolem import load_instance, reduce as reduce_instance, verify_identity
from .synthesis import (
    decide_reachability,
    decide_stationary,
    policy_from_json,
    stationary_policy,
    synthesize,
)

EXIT_OK = 0
EXIT_NO = 1
EXIT_PARSE = 2
EXIT_INCONCLUSIVE = 3
EXIT_BUDGET = 4
EXIT_TRIVIAL = 5

BUDGET_ERRORS = (
    BudgetExceededError,
    MaxSwitchesExceededError,
    AmbiguousSimultaneityError,
    OrderCapExceededError,
)


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("CTMDP_REACH_THREADS", "1")))
    except ValueError:
        return 1


def _emit(report: dict, started: float) -> None:
    report["timing"] = {"seconds": time.monotonic() - started}
    json.dump(report, sys.stdout, sort_keys=True, indent=2)
    sys.stdout.write("\n")


def _base_report(args, command: str, config: dict) -> dict:
    config = dict(config)
    config["threads"] = _threads()
    return {"command": command, "config": config}


def _parse_thresholds(raw: str):
    if raw.startswith("@"):
        with open(raw[1:], "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        return tuple(parse_rational(x) for x in doc)
    return tuple(parse_rational(part.strip()) for part in raw.split(",") if part.strip())


def cmd_validate(args) -> int:
    started = time.monotonic()
    try:
        model = load_model(args.model)
    except (OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        _emit({"command": "validate", "error": f"parse failure: {exc}"}, started)
        return EXIT_PARSE
    report = _base_report(args, "validate", {"model": args.model})
    result = validate(model)
    report["result"] = result.to_json()
    _emit(report, started)
    return EXIT_OK if result.ok else EXIT_NO


def cmd_solve(args) -> int:
    started = time.monotonic()
    try:
        model = load_model(args.model)
        bound = parse_rational(args.bound)
        thresholds = _parse_thresholds(args.thresholds)
        tol = parse_rational(args.tol)
        spec = ReachSpec(bound=bound, thresholds=thresholds)
    except (OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        _emit({"command": "solve", "error": f"parse failure: {exc}"}, started)
        return EXIT_PARSE
    report = _base_report(args, "solve", {
        "model": args.model,
        "bound": rational_to_json(bound),
        "thresholds": [rational_to_json(r) for r in thresholds],
        "tol": rational_to_json(tol),
        "max_switches": args.max_switches,
    })
    try:
        decision = decide_reachability(model, spec, tol=tol, max_switches=args.max_switches)
    except BUDGET_ERRORS as exc:
        report["error"] = f"{type(exc).__name__}: {exc}"
        _emit(report, started)
        return EXIT_BUDGET
    report["result"] = decision.to_json(model)
    _emit(report, started)
    return {"yes": EXIT_OK, "no": EXIT_NO}.get(decision.verdict, EXIT_INCONCLUSIVE)


def cmd_check_stationary(args) -> int:
    started = time.monotonic()
    try:
        model = load_model(args.model)
        bound = parse_rational(args.bound)
    except (OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        _emit({"command": "check-stationary", "error": f"parse failure: {exc}"}, started)
        return EXIT_PARSE
    report = _base_report(args, "check-stationary", {
        "model": args.model,
        "bound": rational_to_json(bound),
    })
    decision = decide_stationary(model, bound)
    report["result"] = decision.to_json()
    _emit(report, started)
    return {
        "stationary": EXIT_OK,
        "not-stationary": EXIT_NO,
    }.get(decision.verdict, EXIT_INCONCLUSIVE)


def cmd_reduce(args) -> int:
    started = time.monotonic()
    try:
        inst = load_instance(args.instance)
    except (OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        _emit({"command": "reduce", "error": f"parse failure: {exc}"}, started)
        return EXIT_PARSE
    report = _base_report(args, "reduce", {
        "instance": args.instance,
        "out": args.out,
        "verify": args.verify,
    })
    try:
        out = reduce_instance(inst)
    except TrivialInstanceError as exc:
        report["error"] = f"TrivialInstance: {exc}"
        _emit(report, started)
        return EXIT_TRIVIAL
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(model_to_json(out.model), fh, indent=2, sort_keys=True)
            fh.write("\n")
    report["result"] = out.to_json()
    if args.verify:
        report["result"]["identity_max_rel_error"] = verify_identity(inst, out, args.verify)
    _emit(report, started)
    return EXIT_OK


def cmd_simulate(args) -> int:
    started = time.monotonic()
    try:
        model = load_model(args.model)
        if args.policy.startswith("stationary:"):
            if args.bound is None:
                raise ValueError("--bound is required with a stationary policy")
            names = [part.strip() for part in args.policy[len("stationary:"):].split(",")]
            if len(names) != model.num_states:
                raise ValueError(
                    f"need {model.num_states} action names, got {len(names)}"
                )
            choice = tuple(
                model.actions[s].index(names[s]) for s in range(model.num_states)
            )
            from .model import DecisionVector

            policy = stationary_policy(model, DecisionVector(choice), parse_rational(args.bound))
        else:
            with open(args.policy, "r", encoding="utf-8") as fh:
                policy = policy_from_json(json.load(fh), model)
    except (OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        _emit({"command": "simulate", "error": f"parse failure: {exc}"}, started)
        return EXIT_PARSE
    report = _base_report(args, "simulate", {
        "model": args.model,
        "policy": args.policy,
        "paths": args.paths,
        "seed": args.seed,
    })
    starts = (
        list(model.ordinary_states)
        if args.start == "all"
        else [int(args.start)]
    )
    cfg = SimConfig(paths=args.paths, seed=args.seed, bound=policy.bound)
    report["result"] = {
        "estimates": {
            str(s): simulate(model, policy, s, cfg).to_json() for s in starts
        },
        "policy_value": list(policy.value),
        "policy_error_bound": policy.error_bound,
    }
    _emit(report, started)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ctmdp-reach",
        description="Time-bounded reachability for CTMDPs with certified "
                    "switch-point isolation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check model invariants")
    p.add_argument("model")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("solve", help="synthesize the optimal policy and decide thresholds")
    p.add_argument("model")
    p.add_argument("--bound", required=True, help="time bound (exact rational)")
    p.add_argument("--thresholds", required=True,
                   help="comma-separated rationals, or @file with a JSON list")
    p.add_argument("--tol", default="1/1000000000", help="decision guard band")
    p.add_argument("--max-switches", type=int, default=64)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("check-stationary", help="is a stationary policy optimal?")
    p.add_argument("model")
    p.add_argument("--bound", required=True)
    p.set_defaults(func=cmd_check_stationary)

    p = sub.add_parser("reduce", help="embed a linear-ODE zero problem into a CTMDP")
    p.add_argument("instance")
    p.add_argument("--out", help="write the embedded model to this file")
    p.add_argument("--verify", type=int, default=0,
                   help="check the embedding identity at N sample points")
    p.set_defaults(func=cmd_reduce)

    p = sub.add_parser("simulate", help="Monte-Carlo estimate under a policy")
    p.add_argument("model")
    p.add_argument("--policy", required=True,
                   help='policy JSON file, or "stationary:<name,...>"')
    p.add_argument("--bound", help="time bound (required for stationary policies)")
    p.add_argument("--paths", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--start", default="all", help='start state index or "all"')
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
