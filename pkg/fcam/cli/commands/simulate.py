"""simulate: write a synthetic trace.csv and truth.csv."""
import argparse
import json
from pathlib import Path

from fcam.core.exceptions import ConfigError
from fcam.models.schemas import ScenarioSpec
from fcam.services.simulation_service import builtin_scenario, get_simulation_service


def register(subparsers) -> None:
    parser = subparsers.add_parser("simulate", help="generate a synthetic data set")
    source = parser.add_mutually_exclusive_group(required=True)
    source.add_argument("--scenario", type=int, help="built-in scenario 1, 2 or 3")
    source.add_argument("--spec", type=Path, help="JSON file with a scenario specification")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", type=Path, required=True, help="output directory")
    parser.add_argument("--T-per-condition", dest="T_per_condition", type=int, help="frames per condition")
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace) -> int:
    overrides = {"T_per_condition": args.T_per_condition} if args.T_per_condition else {}
    if args.spec is not None:
        try:
            fields = json.loads(args.spec.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read scenario file {args.spec}: {e}") from e
        spec = ScenarioSpec(**{**fields, **overrides})
    else:
        spec = builtin_scenario(args.scenario, **overrides)

    trace, truth, (trace_path, truth_path) = get_simulation_service().simulate(spec, args.seed, args.out)
    print(
        f"wrote {trace_path} and {truth_path}: T={trace.T}, J={trace.J}, "
        f"{int(truth.spike_true.sum())} spikes ({truth.spike_true.mean():.2%} of frames)"
    )
    return 0
