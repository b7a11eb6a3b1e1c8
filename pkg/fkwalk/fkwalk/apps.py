from django.apps import AppConfig


class FkwalkConfig(AppConfig):
    name = "fkwalk.fkwalk"
    label = "fkwalk"
    verbose_name = "Feynman-Kac random walk solver"
