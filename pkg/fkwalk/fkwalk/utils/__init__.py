# fkwalk/fkwalk/utils/__init__.py
from .seeding import combine, counter_normals, counter_uniforms, mix64

__all__ = ["combine", "counter_normals", "counter_uniforms", "mix64"]
