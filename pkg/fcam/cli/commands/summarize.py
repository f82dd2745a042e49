"""summarize: pool draw files into summary.json and plotdata.csv."""
import argparse
from pathlib import Path

from fcam.cli.commands.common import write_json
from fcam.core.config import get_settings
from fcam.core.exceptions import ConfigError
from fcam.models.schemas import RunMetadata
from fcam.services.ingestion_service import DEFAULT_FRAME_RATE_HZ, get_ingestion_service
from fcam.services.summary_service import get_summary_service
from fcam.utils.draw_io import load_draw_dir
from fcam.utils.loaders import write_frame


def register(subparsers) -> None:
    parser = subparsers.add_parser("summarize", help="summarize posterior draws")
    parser.add_argument("--draws", type=Path, required=True, help="directory written by fit")
    parser.add_argument("--out", type=Path, help="output directory (default: the draws directory)")
    parser.add_argument("--input", type=Path, help="trace CSV (default: the one recorded in run.json)")
    parser.add_argument("--threshold", type=float, help="spike-call threshold (default: the fit's)")
    parser.add_argument("--frame-rate", dest="frame_rate", type=float, help="used when run.json is absent")
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace) -> int:
    meta_path = args.draws / "run.json"
    metadata = RunMetadata.model_validate_json(meta_path.read_text(encoding="utf-8")) if meta_path.is_file() else None

    trace_path = args.input or (metadata.config.input_path if metadata else None)
    if trace_path is None:
        raise ConfigError(f"{meta_path} not found; pass --input with the fitted trace")
    frame_rate = args.frame_rate or (metadata.frame_rate_hz if metadata else DEFAULT_FRAME_RATE_HZ)
    threshold = args.threshold or (metadata.config.threshold if metadata else 0.6)

    trace = get_ingestion_service(frame_rate_hz=frame_rate).load_trace(trace_path)
    draws = load_draw_dir(args.draws, suffix=get_settings().FCAM_DRAW_FILE_SUFFIX, expected_T=trace.T)

    service = get_summary_service(threshold=threshold)
    summary = service.summarize(draws, trace)
    out = args.out or args.draws
    write_json(out / "summary.json", summary)
    write_frame(service.plot_frame(draws, trace, summary), out / "plotdata.csv")
    print(f"{len(summary.spike_times)} spike(s) called from {draws.D} draws; wrote {out / 'summary.json'}")
    return 0
