"""evaluate: compare summary.json against truth.csv."""
import argparse
from pathlib import Path

from fcam.cli.commands.common import write_json
from fcam.core.exceptions import ConfigError
from fcam.models.schemas import SummaryDocument
from fcam.services.summary_service import get_summary_service
from fcam.utils.loaders import load_truth_frame


def register(subparsers) -> None:
    parser = subparsers.add_parser("evaluate", help="score a summary against simulation truth")
    parser.add_argument("--summary", type=Path, required=True)
    parser.add_argument("--truth", type=Path, required=True)
    parser.add_argument("--out", type=Path, help="metrics file (default: metrics.json next to the summary)")
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace) -> int:
    if not args.summary.is_file():
        raise ConfigError(f"summary file not found: {args.summary}")
    summary = SummaryDocument.model_validate_json(args.summary.read_text(encoding="utf-8"))
    truth = load_truth_frame(args.truth)
    metrics = get_summary_service(threshold=summary.threshold).evaluate(summary, truth)
    out = args.out or args.summary.with_name("metrics.json")
    write_json(out, metrics)
    print(
        f"misclassification={metrics.misclassification_rate:.4f} "
        f"observational ARI={metrics.observational_ari:.4f} distributional ARI={metrics.distributional_ari:.4f}"
    )
    return 0
