"""Arguments and helpers shared by several subcommands."""
import argparse
import json
from pathlib import Path
from typing import Any, Dict, Union

from pydantic import BaseModel

from fcam.core.config import load_run_config
from fcam.models.schemas import RunConfig


def add_run_arguments(parser: argparse.ArgumentParser) -> None:
    """Flags overriding the run configuration file."""
    group = parser.add_argument_group("run configuration")
    group.add_argument("--config", type=Path, help="key = value configuration file")
    group.add_argument("--iters", type=int, help="total iterations (default 10000)")
    group.add_argument("--burnin", type=int, help="burn-in iterations (default 7000)")
    group.add_argument("--thin", type=int, help="keep one draw every THIN iterations (default 2)")
    group.add_argument("--seed", type=int, help="root seed (default 0)")
    group.add_argument("--chains", type=int, help="independent chains (default 1)")
    group.add_argument("--threshold", type=float, help="spike-call threshold (default 0.6)")


def run_config_from_args(args: argparse.Namespace, **extra: Any) -> RunConfig:
    overrides = {name: getattr(args, name, None) for name in ("iters", "burnin", "thin", "seed", "chains", "threshold")}
    overrides.update(extra)
    return load_run_config(args.config, overrides)


def write_json(path: Union[str, Path], payload: Union[BaseModel, Dict[str, Any]]) -> Path:
    """Write a model or dict as indented JSON with a trailing newline."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    text = payload.model_dump_json(indent=2) if isinstance(payload, BaseModel) else json.dumps(payload, indent=2)
    path.write_text(text + "\n", encoding="utf-8")
    return path
