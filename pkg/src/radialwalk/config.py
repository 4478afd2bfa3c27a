"""Experiment configuration: flat key=value text with bracketed sections.

Example::

    command = marginal-fit

    [model]
    d = 2
    U = 1
    V = 3
    noise = rademacher
    perturb_c = 0
    perturb_delta = 1

    [run]
    n = 4096
    T = 1
    t_eval = 1
    N_traj = 1000
    seed = 123456789
    workers = 1

    [output]
    directory = out
    formats = csv,jsonl

CLI flags mirror the keys and override file values.
"""

from dataclasses import dataclass, field, fields, replace

import numpy as np

from .covariance import NOISE_KINDS, WalkModel, make_walk_model

DEFAULT_SEED = 123456789

COMMANDS = (
    "validate",
    "simulate",
    "marginal-fit",
    "compensators",
    "phase",
    "moments",
    "null-occupation",
)


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class ModelConfig:
    d: int = 2
    U: float = 1.0
    V: float = 3.0
    noise: str = "rademacher"
    perturb_c: float = 0.0
    perturb_delta: float = 1.0

    def to_dict(self) -> dict:
        return {
            "d": self.d,
            "U": self.U,
            "V": self.V,
            "noise": self.noise,
            "perturb_c": self.perturb_c,
            "perturb_delta": self.perturb_delta,
        }


@dataclass(frozen=True)
class RunConfig:
    n: int = 1024
    T: float = 1.0
    t_eval: float | None = None
    N_traj: int = 100
    N_steps: int | None = None
    seed: int = DEFAULT_SEED
    workers: int = 1
    start: str = "e1"
    radius: float = 20.0
    ball_radius: float = 10.0
    ell: int = 2
    m_grid: str = "16,32,64,128,256,512,1024,2048,4096,8192,16384"
    n_grid: str = "256,512,1024,2048,4096"
    n_dirs: int = 1000
    tol: float = 1e-10
    alpha: float = 0.01
    slack: float = 0.01
    expect: str | None = None
    dump: bool = False

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass(frozen=True)
class OutputConfig:
    directory: str = "."
    formats: str = "csv,jsonl"

    def to_dict(self) -> dict:
        return {"directory": self.directory, "formats": self.formats}


@dataclass(frozen=True)
class ExperimentConfig:
    command: str | None = None
    model: ModelConfig = field(default_factory=ModelConfig)
    run: RunConfig = field(default_factory=RunConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    def to_dict(self) -> dict:
        return {
            "command": self.command,
            "model": self.model.to_dict(),
            "run": self.run.to_dict(),
            "output": self.output.to_dict(),
        }


_BOOL_WORDS = {"true": True, "yes": True, "1": True, "false": False, "no": False, "0": False}


def _parse_bool(raw: str, line: int) -> bool:
    try:
        return _BOOL_WORDS[raw.strip().lower()]
    except KeyError:
        raise ConfigError(f"expected a boolean, got {raw!r}", line) from None


def _parse_int(raw: str, line: int) -> int:
    try:
        return int(raw, 0)
    except ValueError:
        raise ConfigError(f"expected an integer, got {raw!r}", line) from None


def _parse_float(raw: str, line: int) -> float:
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(f"expected a number, got {raw!r}", line) from None


_MODEL_KEYS = {
    "d": ("d", _parse_int),
    "U": ("U", _parse_float),
    "V": ("V", _parse_float),
    "noise": ("noise", lambda raw, line: raw.strip()),
    "perturb_c": ("perturb_c", _parse_float),
    "perturb_delta": ("perturb_delta", _parse_float),
}

_RUN_KEYS = {
    "n": ("n", _parse_int),
    "T": ("T", _parse_float),
    "t_eval": ("t_eval", _parse_float),
    "N_traj": ("N_traj", _parse_int),
    "N_steps": ("N_steps", _parse_int),
    "seed": ("seed", _parse_int),
    "workers": ("workers", _parse_int),
    "start": ("start", lambda raw, line: raw.strip()),
    "radius": ("radius", _parse_float),
    "ball_radius": ("ball_radius", _parse_float),
    "ell": ("ell", _parse_int),
    "m_grid": ("m_grid", lambda raw, line: raw.strip()),
    "n_grid": ("n_grid", lambda raw, line: raw.strip()),
    "n_dirs": ("n_dirs", _parse_int),
    "tol": ("tol", _parse_float),
    "alpha": ("alpha", _parse_float),
    "slack": ("slack", _parse_float),
    "expect": ("expect", lambda raw, line: raw.strip()),
    "dump": ("dump", _parse_bool),
}

_OUTPUT_KEYS = {
    "directory": ("directory", lambda raw, line: raw.strip()),
    "formats": ("formats", lambda raw, line: raw.strip()),
}

_SECTIONS = {"model": _MODEL_KEYS, "run": _RUN_KEYS, "output": _OUTPUT_KEYS}


def parse_config_text(text: str) -> ExperimentConfig:
    """Parse a config document, reporting the offending line on errors."""
    command = None
    values: dict[str, dict] = {"model": {}, "run": {}, "output": {}}
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            name = line[1:-1].strip()
            if name not in _SECTIONS:
                raise ConfigError(f"unknown section [{name}]", lineno)
            section = name
            continue
        if "=" not in line:
            raise ConfigError(f"expected key = value, got {line!r}", lineno)
        key, _, raw_value = line.partition("=")
        key = key.strip()
        raw_value = raw_value.strip()
        if section is None:
            if key != "command":
                raise ConfigError(
                    f"key {key!r} appears before any section (only 'command' may)", lineno
                )
            if raw_value not in COMMANDS:
                raise ConfigError(
                    f"unknown command {raw_value!r}; choose from {', '.join(COMMANDS)}",
                    lineno,
                )
            command = raw_value
            continue
        table = _SECTIONS[section]
        if key not in table:
            raise ConfigError(f"unknown key {key!r} in section [{section}]", lineno)
        field_name, parse = table[key]
        values[section][field_name] = parse(raw_value, lineno)
    try:
        model = ModelConfig(**values["model"])
        run = RunConfig(**values["run"])
        output = OutputConfig(**values["output"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return ExperimentConfig(command=command, model=model, run=run, output=output)


def load_config(path) -> ExperimentConfig:
    with open(path, "r") as fh:
        return parse_config_text(fh.read())


def config_from_dict(data: dict) -> ExperimentConfig:
    """Rebuild a config from a manifest echo."""
    return ExperimentConfig(
        command=data.get("command"),
        model=ModelConfig(**data["model"]),
        run=RunConfig(**data["run"]),
        output=OutputConfig(**data["output"]),
    )


def override(cfg: ExperimentConfig, section: str, **changes) -> ExperimentConfig:
    """Functional update of one section."""
    changes = {k: v for k, v in changes.items() if v is not None}
    if not changes:
        return cfg
    return replace(cfg, **{section: replace(getattr(cfg, section), **changes)})


def build_model(model_cfg: ModelConfig) -> WalkModel:
    if model_cfg.noise not in NOISE_KINDS:
        raise ConfigError(
            f"noise must be one of {', '.join(NOISE_KINDS)}, got {model_cfg.noise!r}"
        )
    try:
        return make_walk_model(
            dim=model_cfg.d,
            radial_var=model_cfg.U,
            total_var=model_cfg.V,
            noise=model_cfg.noise,
            perturb_amplitude=model_cfg.perturb_c,
            perturb_decay=model_cfg.perturb_delta,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def parse_grid(raw: str, name: str) -> list[int]:
    try:
        return [int(part.strip(), 0) for part in raw.split(",") if part.strip()]
    except ValueError:
        raise ConfigError(f"{name} must be a comma list of integers, got {raw!r}") from None


def parse_start(raw: str, dim: int) -> np.ndarray:
    """Start position: 'e1' or a comma list of coordinates."""
    if raw.strip() == "e1":
        out = np.zeros(dim)
        out[0] = 1.0
        return out
    try:
        coords = [float(part.strip()) for part in raw.split(",")]
    except ValueError:
        raise ConfigError(f"start must be 'e1' or comma floats, got {raw!r}") from None
    if len(coords) != dim:
        raise ConfigError(f"start has {len(coords)} coordinates, model dimension is {dim}")
    return np.array(coords, dtype=float)
