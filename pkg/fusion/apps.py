from django.apps import AppConfig


class FusionConfig(AppConfig):
    name = 'fusion'
    verbose_name = "D-optimal data fusion"
