"""fit: run the sampler and write draw files, diagnostics.csv and run.json."""
import argparse
from pathlib import Path

from fcam.cli.commands.common import add_run_arguments, run_config_from_args, write_json
from fcam.core.config import get_settings
from fcam.models.schemas import RunMetadata
from fcam.services.ingestion_service import DEFAULT_FRAME_RATE_HZ, get_ingestion_service
from fcam.services.sampler_service import get_sampler_service
from fcam.utils.diagnostics_logger import write_diagnostics


def register(subparsers) -> None:
    parser = subparsers.add_parser("fit", help="fit the model to a trace")
    parser.add_argument("--input", type=Path, required=True, help="trace CSV (t,y,condition)")
    parser.add_argument("--out", type=Path, required=True, help="output directory for draws")
    parser.add_argument("--frame-rate", dest="frame_rate", type=float, default=DEFAULT_FRAME_RATE_HZ)
    add_run_arguments(parser)
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace) -> int:
    config = run_config_from_args(args, input_path=args.input.resolve(), output_dir=args.out.resolve())
    trace = get_ingestion_service(frame_rate_hz=args.frame_rate).load_trace(args.input)
    settings = get_settings()

    results, diagnostics = get_sampler_service().fit_to_directory(
        trace, config, args.out, suffix=settings.FCAM_DRAW_FILE_SUFFIX
    )
    write_diagnostics([diagnostics], args.out / "diagnostics.csv")
    metadata = RunMetadata(
        config=config,
        condition_labels=list(trace.labels),
        frame_rate_hz=trace.frame_rate_hz,
        T=trace.T,
        J=trace.J,
        chain_files=[r.path.name for r in results],
    )
    write_json(args.out / "run.json", metadata)
    total = sum(r.draws for r in results)
    print(f"wrote {len(results)} draw file(s) with {total} draws to {args.out}")
    return 0
