"""Experiment configuration: one INI file per experiment.

::

    [experiment]
    model = gbm
    horizon = 1.0
    steps = 1024
    schemes = ito_em, strat_heun
    samples = 256
    seed = 2024
    corrector = linear
    guard = inf
    guard_m = 1
    stride = 1
    levels = 3
    chunk = 64
    snapshots = false

    [model]
    sigma = 0.5

Everything under ``[model]`` is passed to :func:`itostrat.models.build_model`.
"""

from __future__ import annotations

import configparser
import io
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

from .errors import ConfigError
from .integrators import SCHEMES
from .models import MODEL_NAMES, build_model

CORRECTOR_OPTIONS = ("generic", "closed", "linear", "off")


@dataclass(frozen=True)
class ExperimentConfig:
    model: str
    horizon: float = 1.0
    steps: int = 256
    schemes: tuple = SCHEMES
    samples: int = 16
    seed: int = 0
    corrector: str = "generic"
    guard: float = math.inf
    guard_m: int = 1
    stride: int = 1
    levels: int = 3
    chunk: int = 64
    snapshots: bool = False
    out: str = "out"
    model_params: dict = field(default_factory=dict)

    def validate(self, convergence=False) -> ExperimentConfig:
        if self.model not in MODEL_NAMES:
            raise ConfigError(f"unknown model {self.model!r}; choose from {MODEL_NAMES}")
        for s in self.schemes:
            if s not in SCHEMES:
                raise ConfigError(f"unknown scheme {s!r}; choose from {SCHEMES}")
        if self.corrector not in CORRECTOR_OPTIONS:
            raise ConfigError(f"unknown corrector option {self.corrector!r}; choose from {CORRECTOR_OPTIONS}")
        if not (self.horizon > 0 and math.isfinite(self.horizon)):
            raise ConfigError("horizon must be a positive finite number")
        if self.steps < 1:
            raise ConfigError("steps must be positive")
        if self.samples < 0:
            raise ConfigError("samples must be non-negative")
        if self.chunk < 1:
            raise ConfigError("chunk must be positive")
        if self.stride < 1 or self.steps % self.stride:
            raise ConfigError(f"stride {self.stride} must divide steps {self.steps}")
        if convergence:
            if self.steps & (self.steps - 1):
                raise ConfigError(f"convergence runs need a power-of-two step count, got {self.steps}")
            if self.levels < 3:
                raise ConfigError("convergence runs need at least 3 dyadic levels")
            if self.steps >> (self.levels - 1) < 1:
                raise ConfigError(f"{self.steps} steps cannot be coarsened over {self.levels} levels")
        self.build_model()
        return self

    def build_model(self):
        return build_model(self.model, self.model_params)

    def with_overrides(self, **kw) -> ExperimentConfig:
        kw = {k: v for k, v in kw.items() if v is not None}
        return replace(self, **kw)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["schemes"] = list(self.schemes)
        d["guard"] = repr(self.guard)
        d["model_params"] = dict(sorted(self.model_params.items()))
        return d


def _bool(raw):
    low = raw.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError("expected a boolean")


def _get(sec, key, cast, default):
    if key not in sec:
        return default
    raw = sec[key].strip()
    try:
        return cast(raw)
    except ValueError as exc:
        raise ConfigError(f"[experiment] {key} = {raw!r}: {exc}") from exc


def parse_config(text: str, source="<string>") -> ExperimentConfig:
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text, source=str(source))
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    if "experiment" not in cp:
        raise ConfigError(f"{source}: missing [experiment] section")
    sec = cp["experiment"]
    if "model" not in sec:
        raise ConfigError(f"{source}: [experiment] needs a model")
    known = {"model", "horizon", "steps", "schemes", "samples", "seed", "corrector", "guard",
             "guard_m", "stride", "levels", "chunk", "snapshots", "out"}
    extra = set(sec) - known
    if extra:
        raise ConfigError(f"{source}: unknown [experiment] keys {sorted(extra)}")
    schemes = tuple(s.strip() for s in sec.get("schemes", ",".join(SCHEMES)).split(",") if s.strip())
    cfg = ExperimentConfig(
        model=sec["model"].strip(),
        horizon=_get(sec, "horizon", float, 1.0),
        steps=_get(sec, "steps", int, 256),
        schemes=schemes,
        samples=_get(sec, "samples", int, 16),
        seed=_get(sec, "seed", int, 0),
        corrector=sec.get("corrector", "generic").strip(),
        guard=_get(sec, "guard", float, math.inf),
        guard_m=_get(sec, "guard_m", int, 1),
        stride=_get(sec, "stride", int, 1),
        levels=_get(sec, "levels", int, 3),
        chunk=_get(sec, "chunk", int, 64),
        snapshots=_get(sec, "snapshots", _bool, False),
        out=sec.get("out", "out").strip(),
        model_params=dict(cp["model"]) if "model" in cp else {},
    )
    return cfg


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    # unreadable files surface as OSError (an I/O failure, not a config error)
    return parse_config(path.read_text(), path)


def dump_config(cfg: ExperimentConfig) -> str:
    """Canonical INI text (round-trips through :func:`parse_config`)."""
    cp = configparser.ConfigParser(interpolation=None)
    d = cfg.to_dict()
    params = d.pop("model_params")
    d["schemes"] = ", ".join(d["schemes"])
    cp["experiment"] = {k: str(v) for k, v in d.items()}
    if params:
        cp["model"] = {k: str(v) for k, v in params.items()}
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()
