"""Command line entry point.

Exit codes: 0 success, 1 usage error, 2 model or input error, 3 a limit was
hit before the bound stalled (outputs are still written).
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

from .ambiguity import AmbiguitySpec, WASSERSTEIN
from .errors import AmbiSddpError, ModelError
from .io import load_model, load_policy, save_model, save_policy

EXIT_OK, EXIT_USAGE, EXIT_MODEL, EXIT_LIMIT = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _floats(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ambisddp", description="Ambiguity-aware SDDP for multistage binary programs.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="write a generated instance file")
    g.add_argument("--family", choices=["capacity", "mfip", "flip"], default="capacity")
    g.add_argument("--out", required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--horizon", type=int, default=3)
    g.add_argument("--n-scen", type=int, default=2)
    g.add_argument("--epsilon", type=float, default=None, help="ambiguity radius stored in the file")
    g.add_argument("--dx", type=int, default=3, help="capacity: number of binary units")
    g.add_argument("--emergency", action="store_true", help="capacity: add a binary emergency unit")
    g.add_argument("--rows", type=int, default=3, help="mfip: grid rows")
    g.add_argument("--cols", type=int, default=3, help="mfip: grid columns")
    g.add_argument("--budget", type=float, default=1.0, help="mfip/flip: interdiction budget per stage")
    g.add_argument("--cap-lo", type=float, default=30.0)
    g.add_argument("--cap-hi", type=float, default=60.0)
    g.add_argument("--fraction", type=float, default=0.8, help="mfip: interdictable share of grid arcs")
    g.add_argument("--capacity-law", choices=["uniform", "truncnorm"], default="uniform")
    g.add_argument("--cap-mean", type=float, default=30.0)
    g.add_argument("--cap-sd", type=float, default=5.0)
    g.add_argument("--n-demand", type=int, default=4, help="flip: demand points")
    g.add_argument("--n-facilities", type=int, default=4, help="flip: facilities")

    s = sub.add_parser("solve", help="train a policy")
    s.add_argument("instance")
    s.add_argument("--variant", default="neutral",
                   choices=["drr-c", "drr-r", "dro-c", "dro-r", "neutral", "dp"])
    s.add_argument("--epsilon", type=float, default=None, help="defaults to the file's radius, else 0")
    s.add_argument("--risk", choices=["drr", "neutral", "dro"], default="neutral",
                   help="risk posture for --variant dp")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--max-iters", type=int, default=5000)
    s.add_argument("--time-limit", type=float, default=math.inf)
    s.add_argument("--stall-iters", type=int, default=100)
    s.add_argument("--threads", type=int, default=1)
    s.add_argument("--out", default=None, help="directory for bounds.csv and policy.json")
    s.add_argument("--timing", action="store_true", help="fill the time_s column of bounds.csv")

    e = sub.add_parser("evaluate", help="simulate a trained policy on sampled paths")
    e.add_argument("instance")
    e.add_argument("--policy", required=True)
    e.add_argument("--paths", type=int, default=100)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--percentiles", type=_floats, default=[5.0, 10.0, 50.0, 90.0, 95.0])
    e.add_argument("--out", default=None)

    o = sub.add_parser("oracle", help="exact values by backward recursion over all states")
    o.add_argument("instance")
    o.add_argument("--epsilon", type=float, default=None)

    c = sub.add_parser("corrupt-study", help="train on corrupted samples, evaluate on clean paths")
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--alphas", type=_floats, default=[0.4])
    c.add_argument("--epsilons", type=_floats, default=[0.0, 10.0, 20.0, 40.0])
    c.add_argument("--variants", default="drr-c,dro-c,neutral")
    c.add_argument("--n-scen", type=int, default=30)
    c.add_argument("--paths", type=int, default=1000)
    c.add_argument("--stall-iters", type=int, default=20)
    c.add_argument("--out", default=None)
    return p


def _epsilon(args, amb):
    if args.epsilon is not None:
        return AmbiguitySpec(WASSERSTEIN, args.epsilon)
    return amb if amb is not None else AmbiguitySpec(WASSERSTEIN, 0.0)


def cmd_generate(args) -> int:
    if args.family == "capacity":
        from .instances import random_instance

        model = random_instance(args.seed, args.horizon, args.n_scen, args.dx, args.emergency)
        eps = args.epsilon
    elif args.family == "mfip":
        from .interdiction import MfipParams, gen_mfip_instance

        p = MfipParams(rows=args.rows, cols=args.cols, horizon=args.horizon, n_scen=args.n_scen,
                       budget=args.budget, cap_lo=args.cap_lo, cap_hi=args.cap_hi, fraction=args.fraction,
                       epsilon=30.0 if args.epsilon is None else args.epsilon, seed=args.seed,
                       capacity_law=args.capacity_law, cap_mean=args.cap_mean, cap_sd=args.cap_sd)
        model = gen_mfip_instance(p)
        eps = p.epsilon
    else:
        from .interdiction import FlipParams, gen_flip_instance

        p = FlipParams(n_demand=args.n_demand, n_facilities=args.n_facilities, horizon=args.horizon,
                       n_scen=args.n_scen, budget=int(args.budget),
                       epsilon=10.0 if args.epsilon is None else args.epsilon, seed=args.seed)
        model = gen_flip_instance(p)
        eps = p.epsilon
    amb = AmbiguitySpec(WASSERSTEIN, eps) if eps is not None else None
    save_model(args.out, model, amb)
    print(f"wrote {args.out}: {model.name}, T={model.horizon}")
    return EXIT_OK


def cmd_solve(args) -> int:
    model, amb = load_model(args.instance)
    spec = _epsilon(args, amb)
    if args.variant == "dp":
        from .dp import exact_value_dp

        v = exact_value_dp(model, spec.radius, args.risk)
        print(f"lb {v:.9g}")
        if args.out:
            out = Path(args.out)
            out.mkdir(parents=True, exist_ok=True)
            (out / "bounds.csv").write_text(f"iter,lb,fwd_obj,time_s,cuts_added\n0,{v:.9g},,,0\n",
                                            encoding="utf-8")
        return EXIT_OK
    from .sddp import CONVERGED, SolverConfig, run

    cfg = SolverConfig(variant=args.variant, seed=args.seed, max_iters=args.max_iters,
                       time_limit=args.time_limit, stall_iters=args.stall_iters, threads=args.threads)
    policy, log = run(model, spec, cfg)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "bounds.csv").write_text(log.to_csv(with_time=args.timing), encoding="utf-8")
        save_policy(out / "policy.json", policy)
    print(f"lb {log.lower_bound:.9g} iterations {len(log.records)} status {log.status}")
    return EXIT_OK if log.status == CONVERGED else EXIT_LIMIT


def cmd_evaluate(args) -> int:
    from .harness import OosReport
    from .sddp import evaluate_policy_path, sample_path

    import numpy as np

    model, _ = load_model(args.instance)
    try:
        policy = load_policy(args.policy, model)
    except (KeyError, ValueError, json.JSONDecodeError) as exc:
        raise ModelError(f"bad policy file: {exc}") from None
    if args.paths < 1:
        raise UsageError("--paths must be at least 1")
    rng = np.random.Generator(np.random.PCG64(args.seed))
    paths = [sample_path(rng, model) for _ in range(args.paths)]
    objs = np.array([evaluate_policy_path(policy, p) for p in paths])
    key = (policy.variant, policy.specs[-1].radius)
    report = OosReport(tuple(args.percentiles), {key: objs})
    if args.out:
        report.write(args.out)
    sys.stdout.write(report.summary_csv())
    return EXIT_OK


def cmd_oracle(args) -> int:
    from .dp import exact_value_dp

    model, amb = load_model(args.instance)
    eps = _epsilon(args, amb).radius
    vals = [exact_value_dp(model, eps, r) for r in ("drr", "neutral", "dro")]
    print(f"drr {vals[0]:.9g} neutral {vals[1]:.9g} dro {vals[2]:.9g}")
    return EXIT_OK


def cmd_corrupt_study(args) -> int:
    from .harness import corruption_world, run_corruption_study

    world = corruption_world(args.seed, n_scen=args.n_scen)
    variants = [v for v in args.variants.split(",") if v]
    rep = run_corruption_study(world, args.alphas, args.epsilons, variants, n_eval=args.paths,
                               seed=args.seed, stall_iters=args.stall_iters, out_dir=args.out)
    sys.stdout.write(rep.to_csv())
    return EXIT_OK


COMMANDS = {"generate": cmd_generate, "solve": cmd_solve, "evaluate": cmd_evaluate,
            "oracle": cmd_oracle, "corrupt-study": cmd_corrupt_study}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except (AmbiSddpError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MODEL


if __name__ == "__main__":
    sys.exit(main())
