from django.db import models


class InstanceRecord(models.Model):
    """
    A stored problem instance.
    The payload is the same JSON document the instance files use, with inline matrices.
    """
    name = models.CharField(max_length=128, blank=True)
    fingerprint = models.CharField(
        max_length=16,
        db_index=True,
        help_text="Hash of (C, A, s) used to match reports to instances.",
    )
    d = models.PositiveIntegerField()
    n = models.PositiveIntegerField()
    s = models.PositiveIntegerField()
    payload = models.JSONField(help_text="Instance document {d, n, s, C, A, meta}.")
    meta = models.JSONField(default=dict, blank=True)
    created_at = models.DateTimeField(auto_now_add=True)

    class Meta:
        ordering = ["-created_at"]

    def __str__(self):
        return f"{self.name or self.fingerprint} (d={self.d}, n={self.n}, s={self.s})"

    @classmethod
    def from_instance(cls, inst, name=""):
        """
        Stores an instance, reusing an existing record with the same fingerprint.

        Args:
            inst (DdfInstance): Instance to store.
            name (str): Optional label.

        Returns:
            InstanceRecord: The saved record.
        """
        from .instance import instance_to_dict

        record, _ = cls.objects.get_or_create(
            fingerprint=inst.fingerprint(),
            defaults={
                "name": name,
                "d": inst.d,
                "n": inst.n,
                "s": inst.s,
                "payload": instance_to_dict(inst),
                "meta": dict(inst.meta),
            },
        )
        return record

    def to_instance(self):
        from .instance import instance_from_dict

        return instance_from_dict(self.payload)


class RunRecord(models.Model):
    """
    One command run: the full report plus the columns worth querying on.
    """
    class Status(models.TextChoices):
        OK = "ok", "Completed"
        OPTIMAL = "optimal", "Solved to optimality"
        TIME_LIMIT = "time_limit", "Time limit reached"
        NODE_LIMIT = "node_limit", "Node limit reached"

    command = models.CharField(max_length=32)
    instance = models.ForeignKey(
        InstanceRecord,
        on_delete=models.SET_NULL,
        null=True,
        blank=True,
        related_name="runs",
    )
    descriptor = models.JSONField(default=dict, blank=True)
    seed = models.BigIntegerField(null=True, blank=True)
    config = models.JSONField(default=dict, blank=True)
    results = models.JSONField(default=dict, blank=True)
    status = models.CharField(max_length=16, choices=Status.choices, default=Status.OK)
    objective = models.FloatField(null=True, blank=True)
    bound = models.FloatField(null=True, blank=True)
    wall_time = models.FloatField(default=0.0)
    created_at = models.DateTimeField(auto_now_add=True)

    class Meta:
        ordering = ["-created_at"]

    def __str__(self):
        return f"{self.command} [{self.status}] {self.descriptor.get('fingerprint', '')}"

    @property
    def gap(self):
        if self.objective is None or self.bound is None:
            return None
        return self.bound - self.objective

    @classmethod
    def from_report(cls, report, instance=None):
        """
        Persists a RunReport.

        Args:
            report (RunReport): The report to store.
            instance (DdfInstance | None): Also stored (or matched) as an InstanceRecord when given.

        Returns:
            RunRecord: The saved record.
        """
        record = InstanceRecord.from_instance(instance) if instance is not None else None
        results = report.results
        status = results.get("status", cls.Status.OK)
        if status not in cls.Status.values:
            status = cls.Status.OK
        return cls.objects.create(
            command=report.command,
            instance=record,
            descriptor=report.instance,
            seed=report.seed,
            config=report.config,
            results=results,
            status=status,
            objective=results.get("objective"),
            bound=results.get("global_bound", results.get("bound", results.get("best"))),
            wall_time=report.timings.get("total", 0.0),
        )
