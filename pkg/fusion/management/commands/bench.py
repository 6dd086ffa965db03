from concurrent.futures import ProcessPoolExecutor
from functools import partial

from django.conf import settings
from django.core.management.base import BaseCommand, CommandError

from fusion.cli import (
    EXIT_INPUT,
    Stopwatch,
    add_config_arguments,
    build_config,
    mapped_errors,
)
from fusion.corpus import approx_entry, make_corpus, solve_entry
from fusion.models import RunRecord
from fusion.reports import BENCH_APPROX_COLUMNS, BENCH_SOLVE_COLUMNS, RunReport, write_csv


class Command(BaseCommand):
    help = "Run solve and approximation over a seeded random corpus and write CSV tables."

    def add_arguments(self, parser):
        parser.add_argument("--count", type=int, default=10, help="Number of instances.")
        parser.add_argument("--d", type=int, default=5)
        parser.add_argument("--n", type=int, default=12)
        parser.add_argument("--s", type=int, help="Budget for every entry (default: drawn per seed).")
        parser.add_argument("--seed", type=int, default=0, help="Seed of the first entry.")
        parser.add_argument("--mode", choices=("solve", "approx", "both"), default="both")
        parser.add_argument("--solve-csv", dest="solve_csv", default="bench_solve.csv")
        parser.add_argument("--approx-csv", dest="approx_csv", default="bench_approx.csv")
        parser.add_argument("--threads", type=int, help="Worker processes, capped by FUSIONOPT_THREADS.")
        parser.add_argument("--record", action="store_true", help="Store one run per entry in the database.")
        add_config_arguments(parser)

    def handle(self, *args, **options):
        if options["count"] < 1 or options["n"] < 2 or options["d"] < 1:
            raise CommandError("need --count >= 1, --n >= 2 and --d >= 1", returncode=EXIT_INPUT)
        if options.get("s") is not None and not 1 <= options["s"] <= options["n"]:
            raise CommandError(f"BadBudget: s must lie in 1..{options['n']}", returncode=EXIT_INPUT)
        config = build_config(options)
        cap = settings.FUSIONOPT["THREADS"]
        workers = max(1, min(options.get("threads") or config.threads, cap))
        corpus = make_corpus(options["count"], options["d"], options["n"], options.get("s"), options["seed"])

        clock = Stopwatch()
        tables = {}
        with mapped_errors():
            if options["mode"] in ("solve", "both"):
                with clock.lap("solve"):
                    tables["solve"] = self.run(solve_entry, corpus, config, workers)
                write_csv(options["solve_csv"], tables["solve"], BENCH_SOLVE_COLUMNS)
            if options["mode"] in ("approx", "both"):
                with clock.lap("approx"):
                    tables["approx"] = self.run(approx_entry, corpus, config, workers)
                write_csv(options["approx_csv"], tables["approx"], BENCH_APPROX_COLUMNS)

        if options["record"]:
            for kind, rows in tables.items():
                for entry, row in zip(corpus, rows):
                    RunRecord.from_report(RunReport(
                        command=f"bench-{kind}",
                        instance={"generator": "random", "seed": entry.seed, "d": entry.d, "n": entry.n, "s": entry.s},
                        config=config.to_dict(),
                        results=row,
                        timings={"total": row.get("time", 0.0)},
                        seed=entry.seed,
                    ))

        unsolved = [row["seed"] for row in tables.get("solve", []) if row["status"] != "optimal"]
        if options["verbosity"] >= 1:
            timings = clock.as_dict()
            self.stdout.write(
                f"{len(corpus)} instance(s) on {workers} worker(s) in {timings['total']:.1f}s"
                + (f"; unsolved seeds: {unsolved}" if unsolved else "")
            )

    def run(self, work, corpus, config, workers):
        job = partial(work, config=config)
        if workers == 1:
            return [job(entry) for entry in corpus]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(job, corpus))
