import json
from pathlib import Path

from django.core.management.base import BaseCommand, CommandError

from fusion import instance as instance_io
from fusion.cli import EXIT_INPUT, mapped_errors


class Command(BaseCommand):
    help = "Write an instance file: seeded random data, PMU placement on a grid FIM, or a MESP covariance."

    def add_arguments(self, parser):
        parser.add_argument("--kind", choices=("random", "pmu", "mesp"), default="random")
        parser.add_argument("--d", type=int, help="Parameter dimension (random).")
        parser.add_argument("--n", type=int, help="Number of candidates (random).")
        parser.add_argument("--s", type=int, required=True, help="Budget.")
        parser.add_argument("--seed", type=int, default=0)
        parser.add_argument("--fim", help="CSV file with the existing Fisher information matrix (pmu).")
        parser.add_argument("--sigma", type=float, default=0.02, help="PMU standard deviation, same for every bus.")
        parser.add_argument("--sigma-csv", dest="sigma_csv", help="CSV file with one PMU deviation per bus.")
        parser.add_argument("--mesp", help="CSV file with the covariance matrix (mesp).")
        parser.add_argument("--output", "-o", required=True, help="Instance JSON file to write.")
        parser.add_argument(
            "--external-csv", action="store_true", dest="external_csv",
            help="Store C and A as CSV files next to the JSON instead of inline.",
        )

    def handle(self, *args, **options):
        kind = options["kind"]
        with mapped_errors():
            if kind == "random":
                if options.get("d") is None or options.get("n") is None:
                    raise CommandError("--kind random needs --d and --n", returncode=EXIT_INPUT)
                inst = instance_io.gen_random(options["d"], options["n"], options["s"], options["seed"])
            elif kind == "pmu":
                if not options.get("fim"):
                    raise CommandError("--kind pmu needs --fim", returncode=EXIT_INPUT)
                C = instance_io.read_csv_matrix(options["fim"])
                sigma = (
                    instance_io.read_csv_matrix(options["sigma_csv"]).ravel()
                    if options.get("sigma_csv") else options["sigma"]
                )
                inst = instance_io.gen_pmu(C, sigma, options["s"])
            else:
                if not options.get("mesp"):
                    raise CommandError("--kind mesp needs --mesp", returncode=EXIT_INPUT)
                inst, _ = instance_io.from_mesp(instance_io.read_csv_matrix(options["mesp"]), options["s"])

        out = Path(options["output"])
        if options["external_csv"]:
            self.save_external(inst, out)
        else:
            instance_io.save(inst, out)
        if options["verbosity"] >= 1:
            self.stdout.write(f"wrote {out} (d={inst.d}, n={inst.n}, s={inst.s}, {inst.fingerprint()})")

    def save_external(self, inst, out):
        doc = instance_io.instance_to_dict(inst)
        for key in ("C", "A"):
            target = out.with_name(f"{out.stem}.{key}.csv")
            instance_io.write_csv_matrix(target, getattr(inst, key))
            doc[key] = target.name
        out.write_text(json.dumps(doc, indent=1))
