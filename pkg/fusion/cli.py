"""
Plumbing shared by the management commands: instance loading, configuration
merging, error mapping and report output.
"""

import json
import time
from contextlib import contextmanager
from pathlib import Path

from django.core.management.base import CommandError

from . import instance as instance_io
from .exact import BnbConfig
from .exceptions import FusionError, InputError, NotPositiveDefinite, TooLarge
from .forms import BnbConfigForm
from .models import RunRecord
from .reports import write_json

EXIT_LIMIT = 1
EXIT_INPUT = 2
EXIT_NUMERICAL = 3


@contextmanager
def mapped_errors():
    """
    Turns solver errors into CommandError: input problems exit with 2, any other
    solver failure exits with 3.
    """
    try:
        yield
    except (InputError, NotPositiveDefinite, TooLarge) as exc:
        raise CommandError(f"{type(exc).__name__}: {exc}", returncode=EXIT_INPUT) from exc
    except FusionError as exc:
        raise CommandError(f"{type(exc).__name__}: {exc}", returncode=EXIT_NUMERICAL) from exc


def load_instance(path, s=None):
    """Loads an instance file, optionally overriding its budget."""
    with mapped_errors():
        inst = instance_io.load(path)
        if s is not None and s != inst.s:
            inst = inst.with_budget(s)
    return inst


def instance_descriptor(inst, path=None) -> dict:
    desc = inst.descriptor()
    if path is not None:
        desc["path"] = str(path)
    return desc


def add_config_arguments(parser):
    parser.add_argument("--config", help="JSON file with solver settings (lower-case BnbConfig keys).")
    parser.add_argument("--gap-tol", type=float, dest="gap_tol")
    parser.add_argument("--time-limit", type=float, dest="time_limit")
    parser.add_argument("--node-limit", type=int, dest="node_limit")
    parser.add_argument("--fw-iters", type=int, dest="fw_root_iters", help="Frank-Wolfe iterations at the root.")
    parser.add_argument("--no-gradient-cuts", action="store_false", dest="gradient_cuts", default=None)
    parser.add_argument("--no-submodular-cuts", action="store_false", dest="submodular_cuts", default=None)
    parser.add_argument("--no-optimality-cuts", action="store_false", dest="optimality_cuts", default=None)


def add_output_arguments(parser):
    parser.add_argument("--output", "-o", help="Write the JSON report here instead of stdout.")
    parser.add_argument("--record", action="store_true", help="Store the report in the database.")


def build_config(options) -> BnbConfig:
    """
    Merges settings.FUSIONOPT, the --config file and command-line flags (later
    wins) and validates the result with BnbConfigForm.
    """
    merged = BnbConfig.from_settings().to_dict()
    config_path = options.get("config")
    if config_path:
        try:
            doc = json.loads(Path(config_path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise CommandError(f"ParseError: {config_path}: {exc}", returncode=EXIT_INPUT) from exc
        if not isinstance(doc, dict):
            raise CommandError(f"ParseError: {config_path} must hold a JSON object", returncode=EXIT_INPUT)
        unknown = sorted(set(doc) - set(merged))
        if unknown:
            raise CommandError(f"unknown config keys: {', '.join(unknown)}", returncode=EXIT_INPUT)
        merged.update(doc)
    for key in merged:
        if options.get(key) is not None:
            merged[key] = options[key]
    form = BnbConfigForm(data=merged)
    if not form.is_valid():
        raise CommandError(f"invalid configuration: {form.error_text()}", returncode=EXIT_INPUT)
    return form.to_config()


class Stopwatch:
    """Named wall-clock timings for reports."""

    def __init__(self):
        self.started = time.monotonic()
        self.laps = {}

    @contextmanager
    def lap(self, name):
        t0 = time.monotonic()
        try:
            yield
        finally:
            self.laps[name] = time.monotonic() - t0

    def as_dict(self) -> dict:
        return {**self.laps, "total": time.monotonic() - self.started}


def emit(command, report, options, inst=None):
    """Writes the report to --output or stdout and stores it when --record is set."""
    if options.get("output"):
        write_json(options["output"], report)
    else:
        command.stdout.write(report.to_json())
    if options.get("record"):
        record = RunRecord.from_report(report, instance=inst)
        if options.get("verbosity", 1) >= 2:
            command.stderr.write(f"recorded run #{record.pk}")
