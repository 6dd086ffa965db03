from django.conf import settings
from django.core.management.base import BaseCommand, CommandError

from fusion.approx import bound_curves, local_search
from fusion.cli import (
    EXIT_INPUT,
    Stopwatch,
    add_output_arguments,
    emit,
    instance_descriptor,
    load_instance,
    mapped_errors,
)
from fusion.relax import compute_bounds, gap_ceilings
from fusion.reports import BOUNDS_COLUMNS, CURVES_COLUMNS, RunReport, write_csv


class Command(BaseCommand):
    help = "Compute zR, zM and zMc over a range of budgets, or print the approximation bound curves."

    def add_arguments(self, parser):
        parser.add_argument("instance", nargs="?", help="Instance JSON file.")
        parser.add_argument("--s-values", dest="s_values", help="Comma-separated budgets (default: the file's s).")
        parser.add_argument("--sweep", action="store_true", help="All budgets 1..n.")
        parser.add_argument("--csv", help="Write the table as CSV to this path ('-' for stdout).")
        parser.add_argument("--curves", type=int, metavar="N", help="Bound curves for n = N instead of an instance.")
        parser.add_argument("--fw-iters", type=int, dest="fw_iters")
        add_output_arguments(parser)

    def handle(self, *args, **options):
        if options.get("curves") is not None:
            return self.handle_curves(options)
        if not options.get("instance"):
            raise CommandError("an instance file or --curves N is required", returncode=EXIT_INPUT)

        inst = load_instance(options["instance"])
        budgets = self.budgets(inst, options)
        iters = options.get("fw_iters") or settings.FUSIONOPT["FW_ROOT_ITERS"]
        clock = Stopwatch()
        rows, ceilings = [], {}
        with mapped_errors(), clock.lap("bounds"):
            for s in budgets:
                sub = inst.with_budget(s)
                lb = local_search(sub, refresh=settings.FUSIONOPT["SM_REFRESH"]).objective
                report = compute_bounds(sub, iters=iters, tol=settings.FUSIONOPT["FW_TOL"], lower_bound=lb)
                rows.append({"s": s, "zR": report.zR, "zM": report.zM, "zMc": report.zMc, "lb": lb})
                ceilings[s] = gap_ceilings(sub, x_min=report.points["R"].x_min)
                if options["verbosity"] >= 2:
                    self.stderr.write(f"s={s}: zR {report.zR:.6f} zM {report.zM:.6f} zMc {report.zMc:.6f} lb {lb:.6f}")

        if options.get("csv"):
            self.write_table(options["csv"], rows, BOUNDS_COLUMNS)
        report = RunReport(
            command="bounds",
            instance=instance_descriptor(inst, options["instance"]),
            config={"s_values": budgets, "fw_iters": iters},
            results={"rows": rows, "ceilings": ceilings},
            timings=clock.as_dict(),
        )
        if options.get("csv") != "-" or options.get("output"):
            emit(self, report, options, inst)

    def budgets(self, inst, options):
        if options.get("sweep"):
            return list(range(1, inst.n + 1))
        if not options.get("s_values"):
            return [inst.s]
        try:
            values = sorted({int(tok) for tok in options["s_values"].split(",") if tok.strip()})
        except ValueError as exc:
            raise CommandError(f"BadBudget: {exc}", returncode=EXIT_INPUT) from exc
        bad = [s for s in values if not 1 <= s <= inst.n]
        if bad or not values:
            raise CommandError(f"BadBudget: budgets must lie in 1..{inst.n}", returncode=EXIT_INPUT)
        return values

    def handle_curves(self, options):
        with mapped_errors():
            rows = bound_curves(options["curves"])
        self.write_table(options.get("csv") or "-", rows, CURVES_COLUMNS)

    def write_table(self, target, rows, columns):
        if target == "-":
            write_csv(self.stdout, rows, columns)
        else:
            write_csv(target, rows, columns)
