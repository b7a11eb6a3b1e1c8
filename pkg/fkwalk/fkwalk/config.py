"""
Run configuration: YAML documents of nested sections, resolved as

    built-in defaults < preset < --config file < command-line flags

and turned into the typed objects the solver works with.
"""

import copy
import logging
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional

import yaml
from django.conf import settings

from fkwalk.fkwalk.errors import ConfigurationError, FkwalkError
from fkwalk.fkwalk.estimator import GridSpec
from fkwalk.fkwalk.fdref import BoundaryTreatment
from fkwalk.fkwalk.geometry import DomainSpec, Inclusion, OuterShape, Point2
from fkwalk.fkwalk.machine import MachineModel, NoiseConfig
from fkwalk.fkwalk.sde import SdeParams, WalkConfig

logger = logging.getLogger(__name__)

RunSection = dict[str, Any]

DEFAULTS: dict[str, RunSection] = {
    "domain": {
        "outer_half_width": 1.0,
        "outer_shape": "square",
        "outer_boundary_value": 0.0,
        "outer_profile": None,
        "inclusions": [],
    },
    "sde": {"alpha": 0.5, "omega": [0.0, 0.0], "sigma": 0.0, "source": 0.0},
    "walk": {"dt": 1e-4, "max_steps": 1_000_000, "exit_mode": "interp"},
    "machine": {"range_limit": 1.0, "readout_quantum": 1e-4, "overload": True},
    "noise": {"mode": "ideal", "dc_bias": [0.0, 0.0], "highpass_time_constant": 0.01},
    "grid": {"nx": 50, "ny": 50, "extent": None},
    "run": {"walks": 200, "seed": 1, "workers": None},
    "fd": {"nx": 200, "ny": None, "tol": 1e-8, "max_iter": 10_000, "boundary_treatment": "cut_cell"},
    "lut": {"resolution": 256},
    "study": {"dt_list": [4e-4, 2e-4, 1e-4], "walks": 10_000, "start": [0.9, 0.9]},
    "output": {"prefix": None, "image": True, "range": [-1.0, 1.0], "error_range": [-0.15, 0.15]},
}

INCLUSION_KEYS = {"center", "radius", "value"}

# command-line option -> (section, key, list position)
FLAG_KEYS: dict[str, tuple[str, str, Optional[int]]] = {
    "nx": ("grid", "nx", None),
    "ny": ("grid", "ny", None),
    "walks": ("run", "walks", None),
    "dt": ("walk", "dt", None),
    "seed": ("run", "seed", None),
    "workers": ("run", "workers", None),
    "alpha": ("sde", "alpha", None),
    "omega_x": ("sde", "omega", 0),
    "omega_y": ("sde", "omega", 1),
    "sigma": ("sde", "sigma", None),
    "source": ("sde", "source", None),
    "exit_mode": ("walk", "exit_mode", None),
    "out": ("output", "prefix", None),
    "range": ("output", "range", None),
}


def _float(value: Any, where: str) -> float:
    # YAML 1.1 reads exponents without a dot, such as 1e-4, as strings
    if isinstance(value, bool):
        raise ConfigurationError(f"{where} must be a number, got {value!r}")
    try:
        return float(value)
    except (TypeError, ValueError):
        raise ConfigurationError(f"{where} must be a number, got {value!r}")


def _int(value: Any, where: str) -> int:
    number = _float(value, where)
    if not number.is_integer():
        raise ConfigurationError(f"{where} must be a whole number, got {value!r}")
    return int(number)


def _pair(value: Any, where: str) -> tuple[float, float]:
    if not isinstance(value, (list, tuple)) or len(value) != 2:
        raise ConfigurationError(f"{where} must be a pair of numbers, got {value!r}")
    return _float(value[0], f"{where}[0]"), _float(value[1], f"{where}[1]")


def parse_range(text: str) -> tuple[float, float]:
    """Parse a ``lo:hi`` render range."""
    parts = str(text).split(":")
    if len(parts) != 2:
        raise ConfigurationError(f"A range is written lo:hi, got {text!r}")
    lo, hi = _float(parts[0], "range low"), _float(parts[1], "range high")
    if not lo < hi:
        raise ConfigurationError(f"Range low must be below range high, got {text!r}")
    return lo, hi


def deep_merge(base: dict, override: dict) -> dict:
    merged = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def _check_keys(document: dict, source: str) -> None:
    if not isinstance(document, dict):
        raise ConfigurationError(f"{source} must be a mapping of sections")
    for section, values in document.items():
        if section not in DEFAULTS:
            raise ConfigurationError(f"{source}: unknown section '{section}'. Known: {', '.join(DEFAULTS)}")
        if not isinstance(values, dict):
            raise ConfigurationError(f"{source}: section '{section}' must be a mapping")
        unknown = set(values) - set(DEFAULTS[section])
        if unknown:
            raise ConfigurationError(f"{source}: unknown keys in '{section}': {', '.join(sorted(unknown))}")


def read_config_file(path: str | Path) -> dict:
    try:
        with open(path, "r") as file:
            document = yaml.safe_load(file) or {}
    except OSError as exc:
        raise ConfigurationError(f"Unable to read config file {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"Config file {path} is not valid YAML: {exc}") from exc
    _check_keys(document, str(path))
    return document


def preset_path(name: str) -> Path:
    return Path(settings.FKWALK_PRESETS_DIR) / f"{name}.yaml"


def available_presets() -> list[str]:
    directory = Path(settings.FKWALK_PRESETS_DIR)
    return sorted(path.stem for path in directory.glob("*.yaml")) if directory.is_dir() else []


def load_preset(name: str) -> dict:
    path = preset_path(name)
    if not path.is_file():
        raise ConfigurationError(f"Unknown preset '{name}'. Available presets: {', '.join(available_presets())}")
    return read_config_file(path)


def flag_overrides(options: dict[str, Any], grid_section: str = "grid") -> dict:
    """
    Turn parsed command-line options into a config document; unset options are skipped.
    ``grid_section`` is the section --nx and --ny apply to.
    """
    document: dict = {}
    for option, (section, key, position) in FLAG_KEYS.items():
        value = options.get(option)
        if value is None:
            continue
        if section == "grid":
            section = grid_section
        if option == "range":
            value = list(parse_range(value))
        target = document.setdefault(section, {})
        if position is None:
            target[key] = value
        else:
            # a single omega component keeps the other one from the lower layers
            target.setdefault(key, [None, None])[position] = value
    return document


@dataclass(frozen=True)
class FdSettings:
    nx: int
    ny: int
    tol: float
    max_iter: int
    boundary_treatment: BoundaryTreatment


@dataclass(frozen=True)
class StudySettings:
    dt_list: tuple[float, ...]
    walks: int
    start: Point2


@dataclass(frozen=True)
class OutputSettings:
    prefix: str
    image: bool
    range: tuple[float, float]
    error_range: tuple[float, float]


@dataclass(frozen=True)
class RunConfig:
    """
    A fully resolved run. ``record`` is the canonical, normalised document the run was built
    from; it is written next to the outputs and hashed into the run id.
    """

    domain: DomainSpec
    params: SdeParams
    walk: WalkConfig
    machine: MachineModel
    noise: NoiseConfig
    grid: GridSpec
    n_walks: int
    seed: int
    workers: Optional[int]
    fd: FdSettings
    lut_resolution: int
    study: StudySettings
    output: OutputSettings
    record: dict

    def to_dict(self) -> dict:
        return copy.deepcopy(self.record)

    @classmethod
    def from_dict(cls, document: dict) -> "RunConfig":
        _check_keys(document, "run configuration")
        data = deep_merge(DEFAULTS, document)
        try:
            return cls._build(data)
        except ConfigurationError:
            raise
        except FkwalkError as exc:
            raise ConfigurationError(str(exc)) from exc

    @classmethod
    def _build(cls, data: dict) -> "RunConfig":
        d, s, w, m, n, g, r, f, lut, st, o = (
            data[section]
            for section in ("domain", "sde", "walk", "machine", "noise", "grid", "run", "fd", "lut", "study", "output")
        )

        inclusions = []
        for idx, item in enumerate(d["inclusions"] or []):
            if not isinstance(item, dict) or set(item) != INCLUSION_KEYS:
                raise ConfigurationError(f"domain.inclusions[{idx}] needs exactly the keys {sorted(INCLUSION_KEYS)}")
            cx, cy = _pair(item["center"], f"domain.inclusions[{idx}].center")
            inclusions.append(
                Inclusion(
                    center=Point2(cx, cy),
                    radius=_float(item["radius"], f"domain.inclusions[{idx}].radius"),
                    boundary_value=_float(item["value"], f"domain.inclusions[{idx}].value"),
                )
            )
        domain = DomainSpec(
            outer_half_width=_float(d["outer_half_width"], "domain.outer_half_width"),
            inclusions=tuple(inclusions),
            outer_boundary_value=_float(d["outer_boundary_value"], "domain.outer_boundary_value"),
            outer_shape=_choice(d["outer_shape"], "domain.outer_shape", tuple(OuterShape)),
            outer_profile=d["outer_profile"],
        )
        params = SdeParams(
            alpha=_float(s["alpha"], "sde.alpha"),
            omega=_pair(s["omega"], "sde.omega"),
            sigma_abs=_float(s["sigma"], "sde.sigma"),
            source_f=_float(s["source"], "sde.source"),
        )
        walk = WalkConfig(
            dt=_float(w["dt"], "walk.dt"),
            max_steps=_int(w["max_steps"], "walk.max_steps"),
            exit_mode=_choice(w["exit_mode"], "walk.exit_mode", ("naive", "interp")),
        )
        machine = MachineModel(
            range_limit=_float(m["range_limit"], "machine.range_limit"),
            readout_quantum=_float(m["readout_quantum"], "machine.readout_quantum"),
            overload_enabled=bool(m["overload"]),
        )
        noise = NoiseConfig(
            mode=_choice(n["mode"], "noise.mode", ("ideal", "biased")),
            dc_bias=_pair(n["dc_bias"], "noise.dc_bias"),
            highpass_time_constant=_float(n["highpass_time_constant"], "noise.highpass_time_constant"),
        )
        extent = domain.outer_half_width if g["extent"] is None else _float(g["extent"], "grid.extent")
        grid = GridSpec(_int(g["nx"], "grid.nx"), _int(g["ny"], "grid.ny"), extent)

        n_walks = _int(r["walks"], "run.walks")
        if n_walks < 1:
            raise ConfigurationError(f"run.walks must be at least 1, got {n_walks}")
        seed = _int(r["seed"], "run.seed")
        if not 0 <= seed < 2**64:
            raise ConfigurationError(f"run.seed must be a 64-bit unsigned integer, got {seed}")
        workers = None if r["workers"] is None else _int(r["workers"], "run.workers")
        if workers is not None and workers < 0:
            raise ConfigurationError(f"run.workers must be non-negative, got {workers}")

        fd_nx = _int(f["nx"], "fd.nx")
        fd = FdSettings(
            nx=fd_nx,
            ny=fd_nx if f["ny"] is None else _int(f["ny"], "fd.ny"),
            tol=_float(f["tol"], "fd.tol"),
            max_iter=_int(f["max_iter"], "fd.max_iter"),
            boundary_treatment=BoundaryTreatment(
                _choice(f["boundary_treatment"], "fd.boundary_treatment", tuple(BoundaryTreatment))
            ),
        )
        if not fd.tol > 0 or fd.max_iter < 1:
            raise ConfigurationError("fd.tol and fd.max_iter must be positive")

        dt_list = tuple(_float(dt, "study.dt_list") for dt in st["dt_list"] or [])
        sx, sy = _pair(st["start"], "study.start")
        study = StudySettings(dt_list=dt_list, walks=_int(st["walks"], "study.walks"), start=Point2(sx, sy))

        prefix = o["prefix"] or os.path.join(settings.FKWALK_OUTPUT_DIR, "fkwalk")
        output = OutputSettings(
            prefix=str(prefix),
            image=bool(o["image"]),
            range=_ordered_pair(o["range"], "output.range"),
            error_range=_ordered_pair(o["error_range"], "output.error_range"),
        )

        record = {
            "domain": {
                "outer_half_width": domain.outer_half_width,
                "outer_shape": str(domain.outer_shape),
                "outer_boundary_value": domain.outer_boundary_value,
                "outer_profile": domain.outer_profile,
                "inclusions": [
                    {"center": [inc.center.x, inc.center.y], "radius": inc.radius, "value": inc.boundary_value}
                    for inc in domain.inclusions
                ],
            },
            "sde": {
                "alpha": params.alpha,
                "omega": list(params.omega),
                "sigma": params.sigma_abs,
                "source": params.source_f,
            },
            "walk": {"dt": walk.dt, "max_steps": walk.max_steps, "exit_mode": str(walk.exit_mode)},
            "machine": {
                "range_limit": machine.range_limit,
                "readout_quantum": machine.readout_quantum,
                "overload": machine.overload_enabled,
            },
            "noise": {
                "mode": str(noise.mode),
                "dc_bias": list(noise.dc_bias),
                "highpass_time_constant": noise.highpass_time_constant,
            },
            "grid": {"nx": grid.nx, "ny": grid.ny, "extent": grid.extent},
            "run": {"walks": n_walks, "seed": seed, "workers": workers},
            "fd": {
                "nx": fd.nx,
                "ny": fd.ny,
                "tol": fd.tol,
                "max_iter": fd.max_iter,
                "boundary_treatment": str(fd.boundary_treatment),
            },
            "lut": {"resolution": _int(lut["resolution"], "lut.resolution")},
            "study": {"dt_list": list(dt_list), "walks": study.walks, "start": [sx, sy]},
            "output": {
                "prefix": output.prefix,
                "image": output.image,
                "range": list(output.range),
                "error_range": list(output.error_range),
            },
        }
        return cls(
            domain=domain,
            params=params,
            walk=walk,
            machine=machine,
            noise=noise,
            grid=grid,
            n_walks=n_walks,
            seed=seed,
            workers=workers,
            fd=fd,
            lut_resolution=record["lut"]["resolution"],
            study=study,
            output=output,
            record=record,
        )


def _choice(value: Any, where: str, choices: tuple) -> str:
    if str(value) not in {str(choice) for choice in choices}:
        raise ConfigurationError(f"{where} must be one of {', '.join(str(c) for c in choices)}, got {value!r}")
    return str(value)


def _ordered_pair(value: Any, where: str) -> tuple[float, float]:
    lo, hi = _pair(value, where)
    if not lo < hi:
        raise ConfigurationError(f"{where} low must be below high, got {value!r}")
    return lo, hi


def load_run_config(
    preset: Optional[str] = None,
    config_path: Optional[str | Path] = None,
    options: Optional[dict[str, Any]] = None,
    grid_section: str = "grid",
) -> RunConfig:
    document: dict = {}
    if preset:
        document = deep_merge(document, load_preset(preset))
        logger.debug(f"Loaded preset {preset}")
    if config_path:
        document = deep_merge(document, read_config_file(config_path))
        logger.debug(f"Loaded config file {config_path}")
    overrides = flag_overrides(options or {}, grid_section)
    omega = overrides.get("sde", {}).get("omega")
    if omega is not None:
        # fill the component no flag set from the lower layers
        lower = deep_merge(DEFAULTS, document)["sde"]["omega"]
        overrides["sde"]["omega"] = [lower[i] if v is None else v for i, v in enumerate(omega)]
    return RunConfig.from_dict(deep_merge(document, overrides))


def write_run_record(config: RunConfig, path: str | Path) -> None:
    with open(path, "w") as file:
        yaml.safe_dump(config.to_dict(), file, sort_keys=True, default_flow_style=False)
