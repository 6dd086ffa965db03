from django.core.management.base import BaseCommand

from fusion.cli import (
    Stopwatch,
    add_output_arguments,
    build_config,
    emit,
    instance_descriptor,
    load_instance,
    mapped_errors,
)
from fusion.exact import analyze_root
from fusion.reports import RunReport


class Command(BaseCommand):
    help = "Report the variable fixings and cuts root probing finds, by setting a-e."

    def add_arguments(self, parser):
        parser.add_argument("instance", help="Instance JSON file.")
        parser.add_argument("--s", type=int, help="Override the budget stored in the file.")
        parser.add_argument("--config", help="JSON file with solver settings (lower-case BnbConfig keys).")
        parser.add_argument("--xi0", type=float, help="Primal threshold for 'near zero' entries.")
        parser.add_argument("--xi1", type=float, help="Primal threshold for 'near one' entries.")
        parser.add_argument(
            "--pair-budget", type=int, dest="pair_budget_factor",
            help="Candidate pairs tried, as a multiple of n.",
        )
        add_output_arguments(parser)

    def handle(self, *args, **options):
        inst = load_instance(options["instance"], options.get("s"))
        config = build_config({**options, "optimality_cuts": True})
        clock = Stopwatch()
        with mapped_errors(), clock.lap("probe"):
            root = analyze_root(inst, config)

        report = RunReport(
            command="probe",
            instance=instance_descriptor(inst, options["instance"]),
            config=config.to_dict(),
            results=root.to_dict(),
            timings=clock.as_dict(),
        )
        emit(self, report, options, inst)
        if options["verbosity"] >= 2:
            self.stderr.write(
                f"fixed {len(root.fix_one)} to one, {len(root.fix_zero)} to zero; "
                + ", ".join(f"{k}={v}" for k, v in root.counts().items())
            )
