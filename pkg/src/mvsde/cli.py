"""Command line entry point: ``mvsde run <config.toml> [--set key=value]...``."""

from __future__ import annotations

import argparse
import json
import os
import sys
from importlib import resources

from .errors import ConfigError, DomainError, UnsupportedModelError
from .experiments import EXIT_CONFIG, EXIT_IO, ExperimentConfig, run_experiment

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib


def parse_value(text: str):
    """A TOML literal if it parses as one, otherwise the bare string."""
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def apply_override(raw: dict, assignment: str) -> None:
    """Set a dotted ``key=value`` in ``raw`` (``params.sigma=1.2``)."""
    if "=" not in assignment:
        raise ConfigError(f"--set expects key=value, got {assignment!r}")
    key, value = assignment.split("=", 1)
    parts = key.strip().split(".")
    if not all(parts):
        raise ConfigError(f"bad key {key!r}")
    node = raw
    for p in parts[:-1]:
        node = node.setdefault(p, {})
        if not isinstance(node, dict):
            raise ConfigError(f"{key!r} does not name a table entry")
    node[parts[-1]] = parse_value(value.strip())


def recipe_names() -> list[str]:
    return sorted(p.name[:-5] for p in resources.files("mvsde.recipes").iterdir()
                  if p.name.endswith(".toml"))


def resolve_config_path(name: str):
    """A file path, or the name of a packaged recipe (``ex1_convergence``)."""
    if os.path.exists(name):
        return name
    stem = name[:-5] if name.endswith(".toml") else name
    if stem in recipe_names():
        return resources.files("mvsde.recipes").joinpath(stem + ".toml")
    return name


def load_config(path, overrides=(), seed=None, out=None) -> ExperimentConfig:
    path = resolve_config_path(str(path))
    with path.open("rb") if hasattr(path, "joinpath") else open(path, "rb") as fh:
        try:
            raw = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
    for item in overrides:
        apply_override(raw, item)
    if seed is not None:
        raw["seed"] = seed
    if out is not None:
        raw["output_dir"] = out
    return ExperimentConfig.from_dict(raw)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mvsde", description="Adaptive schemes for interacting particle systems")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run an experiment config")
    run.add_argument("config", help="TOML experiment file or packaged recipe name")
    run.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                     help="override a config entry (repeatable, dotted keys allowed)")
    run.add_argument("--workers", type=int, default=1, help="worker processes (results do not depend on it)")
    run.add_argument("--seed", type=int, default=None, help="master seed")
    run.add_argument("--out", default=None, help="output directory")
    sub.add_parser("recipes", help="list the packaged recipes")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "recipes":
        for name in recipe_names():
            print(name)
        return 0
    try:
        cfg = load_config(args.config, args.overrides, args.seed, args.out)
        report = run_experiment(cfg, workers=max(1, args.workers))
    except (ConfigError, DomainError, UnsupportedModelError) as exc:
        print(json.dumps({"error": "config", "message": str(exc)}), file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(json.dumps({"error": "io", "message": str(exc)}), file=sys.stderr)
        return EXIT_IO
    if report.failure:
        print(json.dumps({"error": "divergence", **report.failure}), file=sys.stderr)
    for path in report.outputs:
        print(path)
    return report.status


if __name__ == "__main__":
    sys.exit(main())
