#!/usr/bin/env python3
"""
LTL-RL - Standalone CLI Interface

Learns control policies that maximize the probability of satisfying an LTL
formula on black-box stochastic systems, and checks them.

Key Features:
    • Translation: PNF and letter-alphabet rewriting of a formula, with a lasso
      agreement check against the configured automaton
    • Training: actor-critic on the ζ-augmented product of the system with an
      LDBA, in upper-bound (formula) or lower-bound (negation) mode
    • Guided training: curriculum of relaxed labellings ending at the exact one
    • Evaluation: Monte-Carlo satisfaction over bounded trajectories with a
      Hoeffding lower bound
    • Oracles: exact value iteration, Büchi values through end components,
      the countable-chain closed form

Usage:
    python ltlrl_cli.py train configs/cartpole.yaml
    For complete usage examples, run: python ltlrl_cli.py --help

Exit codes:
    0 success, 1 runtime failure, 2 configuration or parse error
"""

import argparse
import os
import sys
from typing import List, Optional

import numpy as np
from omegaconf.errors import OmegaConfBaseException

from src.common.config import load_config
from src.core.oracle import (
    augment_and_solve,
    buchi_value,
    chain_reach_closed_form,
    hoeffding_lower,
    squeeze_check,
)
from src.core.run import build_problem, run_evaluation, run_training, translate
from src.envs.finite import chain_mdp, load_mdp_text
from src.logic.ltl import format_ltl
from src.utils.debug import Debug


def parse_arguments(argv: Optional[List[str]] = None) -> argparse.Namespace:
    """
    Parse command-line arguments.

    Every run subcommand takes a YAML configuration and trailing dotlist
    overrides (`train.episodes=500 seed=3`); the oracle subcommands take
    their inputs as flags.
    """
    invocation = os.path.basename(sys.argv[0]) or "ltlrl_cli.py"
    usage_examples = f"""
Examples:

  Check the cart-pole automaton against its formula:
    python {invocation} translate configs/cartpole.yaml

  Train on the finite fixture and compare with the exact value:
    python {invocation} train configs/fixture.yaml --out runs/fixture
    python {invocation} oracle reach --mdp docs/examples/reach_fixture.mdp --zeta 0.99

  Curriculum training for the boat, four rollout workers:
    python {invocation} guided-train configs/boat.yaml --workers 4 --out runs/boat

  Evaluate the last checkpoint of a run:
    python {invocation} evaluate configs/cartpole.yaml --out runs/cartpole eval.trajectories=50000

  Countable chain counterexample and the Hoeffding bound:
    python {invocation} oracle chain --zeta 0.5 0.9 0.99
    python {invocation} oracle hoeffding --n 50000 --h 49485 --eps 0.0147
"""

    parser = argparse.ArgumentParser(
        description="LTL-RL - policy synthesis for LTL objectives with LDBA products and actor-critic",
        epilog=usage_examples,
        formatter_class=argparse.RawDescriptionHelpFormatter,
        allow_abbrev=False,
    )
    parser.add_argument("--debug", action="store_true", help="Enable verbose debug logging")
    commands = parser.add_subparsers(dest="command", metavar="command")

    def add_run_command(name: str, help_text: str) -> argparse.ArgumentParser:
        sub = commands.add_parser(name, help=help_text, allow_abbrev=False)
        io_group = sub.add_argument_group("Input/Output options")
        io_group.add_argument("config", help="Run configuration (YAML, may use __inherit__); trailing key=value "
                              "arguments are dotlist overrides, e.g. train.episodes=500 seed=3")
        io_group.add_argument("--out", type=str, default=None, help="Run directory (overrides out_dir)")
        perf_group = sub.add_argument_group("Performance")
        perf_group.add_argument("--workers", type=int, default=None, help="Rollout worker processes (overrides workers)")
        debug_group = sub.add_argument_group("Debugging")
        debug_group.add_argument("--debug", action="store_true", default=argparse.SUPPRESS, help="Enable verbose debug logging")
        return sub

    translate_cmd = add_run_command("translate", "Print the PNF and letter formula and check the automaton")
    translate_cmd.add_argument("--formula", type=str, default=None, help="Formula text (overrides spec.formula)")
    translate_cmd.add_argument("--lassos", type=int, default=2000, help="Random lassos for the agreement check")
    add_run_command("train", "Actor-critic training on the augmented product")
    add_run_command("guided-train", "Curriculum training over relaxed labellings")
    add_run_command("evaluate", "Monte-Carlo satisfaction check with a Hoeffding bound")

    oracle = commands.add_parser("oracle", help="Exact and statistical solvers", allow_abbrev=False)
    oracle.add_argument("--debug", action="store_true", default=argparse.SUPPRESS, help="Enable verbose debug logging")
    solvers = oracle.add_subparsers(dest="solver", metavar="solver")

    chain = solvers.add_parser("chain", help="Reach value of the countable chain against the closed form")
    chain.add_argument("--zeta", type=float, nargs="+", default=[0.5, 0.9, 0.99])
    chain.add_argument("--n-trunc", type=int, default=10_000, help="Truncation of the chain")
    chain.add_argument("--first-accepting", type=int, default=2,
                       help="First accepting state; 2 matches the closed-form series, 3 the chain as drawn")

    hoeffding = solvers.add_parser("hoeffding", help="Lower bound from N trials with H successes")
    hoeffding.add_argument("--n", type=int, required=True)
    hoeffding.add_argument("--h", type=int, required=True)
    hoeffding.add_argument("--eps", type=float, required=True)

    reach = solvers.add_parser("reach", help="Maximal reach probability of the sink after augmentation")
    reach.add_argument("--mdp", type=str, required=True, help="MDP in the text matrix format")
    reach.add_argument("--zeta", type=float, default=0.99)

    buchi = solvers.add_parser("buchi", help="Maximal probability of visiting the accepting set infinitely often")
    buchi.add_argument("--mdp", type=str, required=True, help="MDP in the text matrix format")

    squeeze = solvers.add_parser("squeeze", help="Büchi values against augmented reach values on random MDPs")
    squeeze.add_argument("--count", type=int, default=50)
    squeeze.add_argument("--states", type=int, default=8)
    squeeze.add_argument("--actions", type=int, default=3)
    squeeze.add_argument("--seed", type=int, default=0)
    squeeze.add_argument("--tolerance", type=float, default=0.02)

    args, extra = parser.parse_known_args(argv)
    invalid = [x for x in extra if x.startswith("-") or "=" not in x]
    if invalid or (extra and args.command == "oracle"):
        parser.error(f"unrecognized arguments: {' '.join(invalid or extra)}")
    args.overrides = extra
    if args.command is None or (args.command == "oracle" and args.solver is None):
        parser.print_help()
        sys.exit(2)
    return args


def _load(args: argparse.Namespace):
    overrides = list(args.overrides or [])
    if args.out:
        overrides.append(f"out_dir={args.out}")
    if args.workers is not None:
        overrides.append(f"workers={args.workers}")
    config = load_config(args.config, overrides)
    if getattr(args, "formula", None):
        config.spec.formula = args.formula
    return config


def cmd_translate(args: argparse.Namespace, debug: Debug) -> int:
    config = _load(args)
    problem = build_problem(config, debug)
    report = translate(problem, n_lassos=args.lassos, seed=config.seed)
    debug.log(f"PNF: {format_ltl(report.pnf)}", category="formula", force=True)
    debug.log(f"Letter formula: {format_ltl(report.letter_formula)}", category="formula", force=True)
    verdict = "PASS" if report.passed else "FAIL"
    debug.log(f"automaton agreement: {verdict} ({report.mismatches}/{report.lassos} mismatches, automaton '{problem.automaton.name}')",
              category="success" if report.passed else "error", force=True)
    return 0 if report.passed else 1


def cmd_train(args: argparse.Namespace, debug: Debug, guided: bool) -> int:
    config = _load(args)
    result = run_training(config, guided=guided, debug=debug)
    for stage in result.stages:
        probes = "".join(f", probe {k}: {v:.4f}" for k, v in enumerate(stage.probe_estimates))
        debug.log(f"Stage {stage.stage} (zeta {stage.zeta}): estimate {stage.estimate:.4f}{probes}", category="stage", force=True)
    debug.log(f"Final {config.spec.mode}-bound estimate: {result.estimate:.4f}", category="success", force=True)
    debug.log(f"Run directory: {config.out_dir}", category="file", force=True)
    return 0


def cmd_evaluate(args: argparse.Namespace, debug: Debug) -> int:
    config = _load(args)
    report, bound = run_evaluation(config, debug)
    debug.log(f"Satisfied: {report.satisfied}/{report.trajectories} (frequency {report.frequency:.4f}, horizon {report.horizon})",
              category="eval", force=True)
    for cause, count in report.failures.items():
        debug.log(f"violations of {cause}: {count}", category="eval", force=True, indent_level=1)
    if bound is not None:
        debug.log(f"Probability in [{bound.lower:.4f}, {bound.upper:.1f}] with confidence 1 - {bound.failure_probability:.3g}",
                  category="success", force=True)
    return 0


def cmd_oracle(args: argparse.Namespace, debug: Debug) -> int:
    if args.solver == "chain":
        mdp = chain_mdp(args.n_trunc, args.first_accepting)
        for zeta in args.zeta:
            value = augment_and_solve(mdp, zeta, debug=debug)[mdp.initial]
            exact = chain_reach_closed_form(zeta, args.first_accepting)
            debug.log(f"zeta {zeta}: value {value:.6f}, closed form {exact:.6f}, difference {abs(value - exact):.2e}",
                      category="oracle", force=True)
        return 0

    if args.solver == "hoeffding":
        bound = hoeffding_lower(args.n, args.h, args.eps)
        debug.log(f"Probability in [{bound.lower:.4f}, {bound.upper:.1f}] with confidence 1 - {bound.failure_probability:.3g}",
                  category="oracle", force=True)
        return 0

    if args.solver in ("reach", "buchi"):
        with open(args.mdp, "r", encoding="utf-8") as f:
            mdp = load_mdp_text(f.read())
        if args.solver == "reach":
            values = augment_and_solve(mdp, args.zeta, debug=debug)
            label = f"reach value (zeta {args.zeta})"
        else:
            values = buchi_value(mdp, debug=debug)
            label = "Büchi value"
        debug.log(f"{label} at initial state {mdp.initial}: {values[mdp.initial]:.6f}", category="oracle", force=True)
        for s in range(mdp.n_states):
            debug.log(f"state {s}: {values[s]:.6f}", category="none", indent_level=1)
        return 0

    if args.solver == "squeeze":
        report = squeeze_check(args.count, args.states, args.actions, np.random.default_rng(args.seed), debug=debug)
        debug.log(f"{report.count} MDPs: max |reach(0.9999) - Büchi| = {report.max_gap:.4f}, "
                  f"order violations {report.order_violations}, monotonicity violations {report.monotonicity_violations}",
                  category="oracle", force=True)
        return 0 if report.holds(args.tolerance) else 1

    raise ValueError(f"unknown oracle '{args.solver}'")


def main(argv: Optional[List[str]] = None) -> int:
    """
    Main entry point.

    Returns the exit code: 0 on success, 1 on runtime failures, 2 on
    configuration, formula, automaton or curriculum errors.
    """
    args = parse_arguments(argv)
    debug = Debug(enabled=args.debug)
    debug.print_header(cli=True)

    debug.log_mapping("Arguments:", vars(args))

    try:
        with debug.timer(args.command):
            if args.command == "translate":
                code = cmd_translate(args, debug)
            elif args.command in ("train", "guided-train"):
                code = cmd_train(args, debug, guided=args.command == "guided-train")
            elif args.command == "evaluate":
                code = cmd_evaluate(args, debug)
            else:
                code = cmd_oracle(args, debug)
        debug.log_timing(args.command, "Completed", force=True, breakdown=args.command == "guided-train")
        return code

    except (ValueError, OmegaConfBaseException) as e:
        debug.log(f"{type(e).__name__}: {e}", level="ERROR", category="error", force=True)
        return 2

    except Exception as e:
        debug.log(f"Error during {args.command}: {e}", level="ERROR", category="error", force=True)
        if args.debug:
            import traceback
            traceback.print_exc()
        return 1

    finally:
        debug.print_footer()


if __name__ == "__main__":
    sys.exit(main())
