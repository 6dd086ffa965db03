from django.conf import settings
from django.core.management.base import BaseCommand, CommandError

from fusion.approx import METHODS, run_approx, theoretical_bounds
from fusion.cli import (
    EXIT_INPUT,
    Stopwatch,
    add_output_arguments,
    emit,
    instance_descriptor,
    load_instance,
    mapped_errors,
)
from fusion.relax import FORMULATIONS, compute_bounds
from fusion.reports import RunReport


def parse_indices(text):
    try:
        return [int(tok) for tok in text.split(",") if tok.strip()]
    except ValueError as exc:
        raise CommandError(f"BadInit: --init expects comma-separated indices ({exc})", returncode=EXIT_INPUT) from exc


class Command(BaseCommand):
    help = "Run an approximation algorithm and compare it with the certified relaxation bounds."

    def add_arguments(self, parser):
        parser.add_argument("instance", help="Instance JSON file.")
        parser.add_argument("--s", type=int, help="Override the budget stored in the file.")
        parser.add_argument("--method", choices=METHODS, default="local")
        parser.add_argument("--seed", type=int, default=0, help="Sampling seed.")
        parser.add_argument("--init", help="Comma-separated starting selection for local search.")
        parser.add_argument(
            "--relaxation", choices=FORMULATIONS,
            help="Point to sample or derandomize from (default: M when s <= n/2, else Mc).",
        )
        parser.add_argument("--fw-iters", type=int, dest="fw_iters")
        add_output_arguments(parser)

    def handle(self, *args, **options):
        inst = load_instance(options["instance"], options.get("s"))
        defaults = settings.FUSIONOPT
        iters = options.get("fw_iters") or defaults["FW_ROOT_ITERS"]
        init = parse_indices(options["init"]) if options.get("init") else None
        clock = Stopwatch()

        with mapped_errors():
            with clock.lap("bounds"):
                bounds = compute_bounds(inst, iters=iters, tol=defaults["FW_TOL"])
            point = bounds.points.get(options["relaxation"]) if options.get("relaxation") else None
            with clock.lap(options["method"]):
                result = run_approx(
                    inst, options["method"], seed=options["seed"], init=init,
                    bounds=bounds, point=point, refresh=defaults["SM_REFRESH"],
                )

        bounds.lower_bound = result.selection.objective
        results = result.to_dict()
        results["bounds"] = bounds.to_dict()
        results["theoretical"] = theoretical_bounds(inst, x_min=bounds.points["R"].x_min)
        report = RunReport(
            command="approx",
            instance=instance_descriptor(inst, options["instance"]),
            config={"method": options["method"], "fw_iters": iters, "init": init, "relaxation": options.get("relaxation")},
            results=results,
            timings=clock.as_dict(),
            seed=options["seed"],
        )
        emit(self, report, options, inst)
        failed = [name for name, _, ok in result.bound_checks if not ok]
        if failed:
            self.stderr.write(f"selection exceeds certified bound(s): {', '.join(failed)}")
