"""Configuration loading, validation and default resolution."""

from __future__ import annotations

import copy
import hashlib
import importlib
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .dynamics import ACCELERATIONS, EIGEN_METHODS, SearchConfig
from .landscape import DEFAULT_SAME_TOL, DEFAULT_SEED, LandscapeConfig, euclidean_judgement
from .system import SystemSpec, build_from_energy, build_from_force

log = logging.getLogger(__name__)

SAVE_TRAJECTORY_MAX_DIM = 100


class ConfigError(ValueError):
    def __init__(self, message: str, key: str | None = None):
        super().__init__(message)
        self.key = key


# Documented defaults, in the order they are reported.  ``None`` means
# "absent" (or derived, for dim and save_trajectory).
DEFAULTS = {
    # system
    "dim": None,
    "numerical_grad": False,
    "gradient_system": None,
    "symmetry_check": True,
    "dimer_length": 1e-5,
    "exact_hessian": False,
    "hessian_dimer_length": 1e-5,
    "plugin_options": {},
    # solver
    "tolerance": 1e-6,
    "search_area": 1000.0,
    "time_step": 1e-2,
    "max_iter": 1000,
    "save_trajectory": None,
    "verbose": False,
    "report_interval": 100,
    "saddle_index": None,
    # eigen
    "eigen_method": "auto",
    "eigen_max_iter": 10,
    "eigen_step_size": 1e-2,
    "precision_tol": 1e-5,
    "eigvec_unified": False,
    # acceleration
    "momentum": 0.0,
    "bb_step": False,
    "bb_cap": 0.5,
    "acceleration": "none",
    "nesterov_choice": 1,
    "nesterov_restart": None,
    # landscape
    "max_index": 1,
    "max_index_gap": 1,
    "same_judgement": {"method": "euclidean", "tol": DEFAULT_SAME_TOL},
    "perturbation_method": "uniform",
    "perturbation_radius": 1e-2,
    "perturbation_number": 1,
    "eigen_combination": "all",
    "initial_eigen_vectors": None,
    "rng_seed": DEFAULT_SEED,
    # workflow
    "restarts": [],
    "export": {},
}

SOURCE_KEYS = ("energy_expression", "force_plugin", "gallery_system")
REQUIRED = ("initial_point",)
KNOWN_KEYS = set(DEFAULTS) | set(SOURCE_KEYS) | set(REQUIRED)

_POSITIVE_REAL = ("dimer_length", "hessian_dimer_length", "tolerance", "search_area", "time_step",
                  "eigen_step_size", "precision_tol", "bb_cap", "perturbation_radius")
_POSITIVE_INT = ("max_iter", "report_interval", "eigen_max_iter", "max_index_gap", "perturbation_number")
_NONNEG_INT = ("max_index",)
_BOOL = ("numerical_grad", "symmetry_check", "exact_hessian", "verbose", "bb_step", "eigvec_unified")
_CHOICES = {
    "eigen_method": EIGEN_METHODS,
    "acceleration": ACCELERATIONS,
    "perturbation_method": ("uniform", "gaussian"),
    "eigen_combination": ("all", "min"),
    "nesterov_choice": (1, 2),
}


def load_raw(path) -> dict:
    """Read a JSON or YAML mapping from ``path``."""
    path = Path(path)
    text = path.read_text()
    if path.suffix.lower() in (".yaml", ".yml"):
        import yaml

        data = yaml.safe_load(text)
    else:
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"malformed config file {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"config file {path} must contain a mapping")
    return data


def _is_int(v) -> bool:
    return isinstance(v, (int, np.integer)) and not isinstance(v, bool)


def _is_real(v) -> bool:
    return (isinstance(v, (int, float, np.integer, np.floating)) and not isinstance(v, bool)
            and math.isfinite(float(v)))


def _check(values: dict):
    for key in _POSITIVE_REAL:
        v = values[key]
        if not _is_real(v):
            raise ConfigError(f"`{key}` must be a real number, got {v!r}", key)
        if not v > 0:
            raise ConfigError(f"`{key}` must be positive, got {v!r}", key)
        values[key] = float(v)
    for key in _POSITIVE_INT + _NONNEG_INT:
        v = values[key]
        if not _is_int(v):
            raise ConfigError(f"`{key}` must be an integer, got {v!r}", key)
        if v < (0 if key in _NONNEG_INT else 1):
            raise ConfigError(f"`{key}` out of range: {v!r}", key)
        values[key] = int(v)
    for key in _BOOL + ("save_trajectory",):
        if not isinstance(values[key], bool):
            raise ConfigError(f"`{key}` must be true or false, got {values[key]!r}", key)
    for key, choices in _CHOICES.items():
        if values[key] not in choices:
            raise ConfigError(f"`{key}` must be one of {list(choices)}, got {values[key]!r}", key)
    if values["gradient_system"] not in (None, True, False):
        raise ConfigError("`gradient_system` must be true, false or null", "gradient_system")
    m = values["momentum"]
    if not _is_real(m) or not 0.0 <= m < 1.0:
        raise ConfigError(f"`momentum` must lie in [0, 1), got {m!r}", "momentum")
    values["momentum"] = float(m)
    nr = values["nesterov_restart"]
    if nr is not None and (not _is_int(nr) or nr < 1):
        raise ConfigError(f"`nesterov_restart` must be a positive integer or null, got {nr!r}", "nesterov_restart")
    if values["saddle_index"] is not None and (not _is_int(values["saddle_index"]) or values["saddle_index"] < 0):
        raise ConfigError("`saddle_index` must be a non-negative integer", "saddle_index")
    if not _is_int(values["rng_seed"]):
        raise ConfigError("`rng_seed` must be an integer", "rng_seed")
    sj = values["same_judgement"]
    if not isinstance(sj, dict) or sj.get("method") not in ("euclidean", "translation", "translation_fft", "plugin"):
        raise ConfigError("`same_judgement` must be a mapping with method euclidean | translation | "
                          "translation_fft | plugin", "same_judgement")
    if not isinstance(values["restarts"], list):
        raise ConfigError("`restarts` must be a list", "restarts")
    for r in values["restarts"]:
        if not isinstance(r, dict) or r.get("type") not in ("point", "saddle"):
            raise ConfigError("each restart needs type 'point' or 'saddle'", "restarts")
    if not isinstance(values["export"], dict):
        raise ConfigError("`export` must be a mapping", "export")
    if not isinstance(values["plugin_options"], dict):
        raise ConfigError("`plugin_options` must be a mapping", "plugin_options")


@dataclass
class ResolvedConfig:
    values: dict
    defaults_applied: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    @property
    def dim(self) -> int:
        return self.values["dim"]

    def search_config(self, saddle_index: int | None = None) -> SearchConfig:
        v = self.values
        if saddle_index is None:
            saddle_index = v["saddle_index"] if v["saddle_index"] is not None else v["max_index"]
        return SearchConfig(
            saddle_index=saddle_index,
            time_step=v["time_step"],
            max_iter=v["max_iter"],
            tolerance=v["tolerance"],
            search_area=v["search_area"],
            bb_step=v["bb_step"],
            bb_cap=v["bb_cap"],
            acceleration=v["acceleration"],
            momentum=v["momentum"],
            nesterov_choice=v["nesterov_choice"],
            nesterov_restart=v["nesterov_restart"],
            verbose=v["verbose"],
            report_interval=v["report_interval"],
            save_trajectory=v["save_trajectory"],
            eigen_method=v["eigen_method"],
            eigen_max_iter=v["eigen_max_iter"],
            eigen_step_size=v["eigen_step_size"],
            precision_tol=v["precision_tol"],
            hessian_dimer_length=v["hessian_dimer_length"],
            exact_hessian=v["exact_hessian"],
            eigvec_unified=v["eigvec_unified"],
        )

    def landscape_config(self, seed: int | None = None) -> LandscapeConfig:
        v = self.values
        V0 = v["initial_eigen_vectors"]
        return LandscapeConfig(
            max_index=v["max_index"],
            max_index_gap=v["max_index_gap"],
            same_judgement=build_judgement(v["same_judgement"]),
            perturbation_method=v["perturbation_method"],
            perturbation_radius=v["perturbation_radius"],
            perturbation_number=v["perturbation_number"],
            eigen_combination=v["eigen_combination"],
            initial_eigen_vectors=None if V0 is None else np.asarray(V0, dtype=float),
            rng_seed=v["rng_seed"] if seed is None else seed,
        )

    def build_system(self) -> SystemSpec:
        return build_system(self.values)

    def system_hash(self) -> str:
        v = self.values
        key = json.dumps({k: v.get(k) for k in ("dim",) + SOURCE_KEYS + ("plugin_options", "gradient_system")},
                         sort_keys=True)
        return hashlib.sha256(key.encode()).hexdigest()


def _load_callable(ref: str, key: str):
    if not isinstance(ref, str) or ":" not in ref:
        raise ConfigError(f"`{key}` must look like 'module:callable', got {ref!r}", key)
    mod_name, attr = ref.split(":", 1)
    try:
        obj = importlib.import_module(mod_name)
        for part in attr.split("."):
            obj = getattr(obj, part)
    except (ImportError, AttributeError) as exc:
        raise ConfigError(f"cannot load `{key}` {ref!r}: {exc}", key) from exc
    if not callable(obj):
        raise ConfigError(f"`{key}` {ref!r} is not callable", key)
    return obj


def build_judgement(sj: dict):
    method = sj["method"]
    if method == "euclidean":
        return euclidean_judgement(float(sj.get("tol", DEFAULT_SAME_TOL)))
    if method in ("translation", "translation_fft"):
        from .gallery import translation_match, translation_match_fft

        shape = sj.get("shape")
        if shape is None or len(shape) != 2:
            raise ConfigError("translation judgement needs a 2-entry `shape`", "same_judgement")
        if method == "translation":
            return translation_match(shape, float(sj.get("tol", 0.05)))
        return translation_match_fft(shape, float(sj.get("threshold", 0.99)))
    fn = _load_callable(sj.get("callable"), "same_judgement")
    return fn


def build_system(values: dict) -> SystemSpec:
    dim = values["dim"]
    if values.get("gallery_system") is not None:
        from . import gallery

        opts = dict(values["gallery_system"])
        name = opts.pop("name", None)
        if name != "phase_field":
            raise ConfigError("`gallery_system` supports only name 'phase_field'; other gallery systems "
                              "use energy_expression", "gallery_system")
        n_grid = int(opts.get("n_grid", 16))
        if n_grid * n_grid != dim:
            raise ConfigError(f"phase field with n_grid={n_grid} needs dim {n_grid * n_grid}, got {dim}", "dim")
        return gallery.phase_field_spec(n_grid, float(opts.get("kappa", 0.05)), values["dimer_length"])
    if values.get("energy_expression") is not None:
        try:
            return build_from_energy(values["energy_expression"], dim, numerical_grad=values["numerical_grad"],
                                     dimer_length=values["dimer_length"])
        except ValueError as exc:
            raise ConfigError(str(exc), "energy_expression") from exc
    fn = _load_callable(values["force_plugin"], "force_plugin")
    opts = values["plugin_options"]

    def force(x, _fn=fn, _opts=opts):
        return _fn(x, **_opts)

    spec = build_from_force(force, dim, values["gradient_system"], symmetry_check=values["symmetry_check"],
                            dimer_length=values["dimer_length"], probe_center=values["initial_point"],
                            seed=values["rng_seed"])
    if values["eigen_method"] == "lobpcg" and not spec.is_gradient:
        raise ConfigError("eigen_method 'lobpcg' requires a gradient system", "eigen_method")
    return spec


def validate_config(raw: dict) -> ResolvedConfig:
    """Fill defaults, check types and ranges, and derive dim.

    Missing keys are reported as ``Parameter `X` not specified - using default
    value Y.``; unknown keys only warn.
    """
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping")
    raw = copy.deepcopy(raw)
    warnings_: list[str] = []
    applied: list[str] = []

    for key in sorted(set(raw) - KNOWN_KEYS):
        msg = f"unknown config key `{key}` ignored"
        warnings_.append(msg)
        log.warning(msg)
        raw.pop(key)

    sources = [k for k in SOURCE_KEYS if raw.get(k) is not None]
    if len(sources) != 1:
        raise ConfigError("exactly one of energy_expression, force_plugin, gallery_system is required",
                          "energy_expression")
    if "initial_point" not in raw:
        raise ConfigError("`initial_point` is required", "initial_point")
    x0 = raw["initial_point"]
    if not isinstance(x0, (list, tuple)) or not x0 or not all(_is_real(v) for v in x0):
        raise ConfigError("`initial_point` must be a non-empty list of real numbers", "initial_point")
    raw["initial_point"] = [float(v) for v in x0]

    values = {k: raw.get(k) for k in SOURCE_KEYS}
    values["initial_point"] = raw["initial_point"]
    for key, default in DEFAULTS.items():
        if key in raw:
            values[key] = raw[key]
        else:
            values[key] = copy.deepcopy(default)
            if default is not None:
                applied.append(key)
                log.info("Parameter `%s` not specified - using default value %s.", key, default)

    n = len(values["initial_point"])
    if values["dim"] is None:
        values["dim"] = n
        msg = f"`dim` parameter auto-adjusted to {n} based on `initial_point` dimensionality."
        warnings_.append(msg)
        log.info(msg)
    elif not _is_int(values["dim"]) or values["dim"] < 1:
        raise ConfigError(f"`dim` must be a positive integer, got {values['dim']!r}", "dim")
    elif values["dim"] != n:
        raise ConfigError(f"`dim` is {values['dim']} but `initial_point` has {n} entries", "dim")
    if values["save_trajectory"] is None:
        values["save_trajectory"] = values["dim"] <= SAVE_TRAJECTORY_MAX_DIM
        applied.append("save_trajectory")

    if values["energy_expression"] is not None:
        if not isinstance(values["energy_expression"], str):
            raise ConfigError("`energy_expression` must be text", "energy_expression")
        if values["gradient_system"] is False:
            raise ConfigError("an energy expression defines a gradient system; `gradient_system` cannot be false",
                              "gradient_system")
    if values["eigen_method"] == "lobpcg" and values["gradient_system"] is False:
        raise ConfigError("eigen_method 'lobpcg' contradicts gradient_system=false", "eigen_method")

    _check(values)
    if values["initial_eigen_vectors"] is not None:
        V = values["initial_eigen_vectors"]
        if isinstance(V, str):
            V = np.loadtxt(V, delimiter=",", ndmin=2).tolist()
        arr = np.asarray(V, dtype=float)
        if arr.ndim != 2 or arr.shape[0] != values["dim"]:
            raise ConfigError("`initial_eigen_vectors` must be a dim x K matrix", "initial_eigen_vectors")
        values["initial_eigen_vectors"] = arr.tolist()
    return ResolvedConfig(values, applied, warnings_)


@dataclass
class RunManifest:
    config: dict
    seed: int
    system_hash: str
    version: str = __version__
    duration: float = 0.0
    deterministic: bool = True
    defaults_applied: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "seed": self.seed,
            "system_hash": self.system_hash,
            "version": self.version,
            "duration": self.duration,
            "deterministic": self.deterministic,
            "defaults_applied": list(self.defaults_applied),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunManifest":
        return cls(d["config"], d["seed"], d["system_hash"], d.get("version", __version__), d.get("duration", 0.0),
                   d.get("deterministic", True), d.get("defaults_applied", []))

    @classmethod
    def from_resolved(cls, resolved: ResolvedConfig, seed: int | None = None) -> "RunManifest":
        values = copy.deepcopy(resolved.values)
        if seed is not None:
            values["rng_seed"] = seed
        return cls(values, values["rng_seed"], resolved.system_hash(), defaults_applied=list(resolved.defaults_applied))
