from django.core.management.base import BaseCommand, CommandError

from fusion.cli import (
    EXIT_LIMIT,
    Stopwatch,
    add_config_arguments,
    add_output_arguments,
    build_config,
    emit,
    instance_descriptor,
    load_instance,
    mapped_errors,
)
from fusion.exact import solve_bnb
from fusion.reports import RunReport


class Command(BaseCommand):
    help = "Solve an instance to optimality with branch-and-bound."

    def add_arguments(self, parser):
        parser.add_argument("instance", help="Instance JSON file.")
        parser.add_argument("--s", type=int, help="Override the budget stored in the file.")
        add_config_arguments(parser)
        add_output_arguments(parser)

    def handle(self, *args, **options):
        inst = load_instance(options["instance"], options.get("s"))
        config = build_config(options)
        clock = Stopwatch()
        with mapped_errors(), clock.lap("solve"):
            result = solve_bnb(inst, config)

        results = result.to_dict()
        offset = inst.meta.get("offset")
        if offset is not None:
            results["mesp_value"] = result.incumbent.objective + float(offset)
        report = RunReport(
            command="solve",
            instance=instance_descriptor(inst, options["instance"]),
            config=config.to_dict(),
            results=results,
            timings=clock.as_dict(),
        )
        emit(self, report, options, inst)

        if not result.solved:
            raise CommandError(
                f"{result.status}: best {result.incumbent.objective:.9g}, bound {result.global_bound:.9g}",
                returncode=EXIT_LIMIT,
            )
        if options["verbosity"] >= 2:
            self.stderr.write(
                f"optimal {result.incumbent.objective:.9g} after {result.nodes_explored} node(s)"
            )
