"""Run configuration: TOML text validated by pydantic models that reject unknown keys."""
from __future__ import annotations

import sys
from pathlib import Path
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

RECIPE_DIR = Path(__file__).parent / "recipes"


class ConfigError(ValueError):
    """Every violation found in a configuration, as ``[(location, message), ...]``."""

    def __init__(self, errors: list[tuple[str, str]]):
        self.errors = errors
        super().__init__("; ".join(f"{loc}: {msg}" for loc, msg in errors))

    def as_dict(self) -> dict:
        return {"valid": False, "errors": [{"loc": loc, "msg": msg} for loc, msg in self.errors]}


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class AxisSpec(_Strict):
    min: Optional[float] = None
    max: Optional[float] = None
    count: Optional[int] = Field(default=None, ge=1)
    values: Optional[list[float]] = Field(default=None, min_length=1)

    @model_validator(mode="after")
    def _one_form(self):
        ranged = (self.min, self.max, self.count)
        if self.values is None and any(v is None for v in ranged):
            raise ValueError("axis needs either values or all of min, max, count")
        if self.values is not None and any(v is not None for v in ranged):
            raise ValueError("give values or min/max/count, not both")
        if self.values is None and self.count > 1 and not self.max > self.min:
            raise ValueError("max must exceed min")
        return self


class GridSpec(_Strict):
    names: list[str] = []
    axes: list[AxisSpec] = Field(min_length=1, max_length=2)


class LineSpec(_Strict):
    """Map a 1-D grid coordinate t to γ = offset + t·direction."""

    direction: tuple[float, float]
    offset: tuple[float, float] = (0.0, 0.0)


class IsingSpec(_Strict):
    L: int = Field(ge=2)
    backend: Literal["histogram", "exact"] = "histogram"
    representation: Literal["stat", "line", "config", "canonical"] = "stat"
    translations: bool = False
    n_samples: int = Field(default=10_000, ge=2)
    n_therm: int = Field(default=1_000, ge=0)
    anneal: Literal["increasing", "from_cold"] = "increasing"
    line: Optional[LineSpec] = None


class ClusterSpec(_Strict):
    L: int = Field(ge=3, le=12)
    h1: Optional[float] = None
    backend: Literal["exact", "povm"] = "exact"
    n_samples: int = Field(default=1_000, ge=1)

    @field_validator("L")
    @classmethod
    def _odd(cls, v):
        if v % 2 == 0:
            raise ValueError("cluster-Ising chain length must be odd")
        return v


class SyntheticSpec(_Strict):
    n_keys: int = Field(default=16, ge=2)
    width: float = Field(default=0.25, gt=0)
    seed: int = 0


class ClassSpec(_Strict):
    label: str
    points: list[list[float]] = Field(min_length=1)


class Scheme1Spec(_Strict):
    classes: list[ClassSpec] = Field(min_length=2)


class Scheme2Spec(_Strict):
    l: int = Field(default=1, ge=1)
    metric: Literal["axis", "euclidean"] = "axis"
    priors: list[Literal["uniform", "biased"]] = Field(default=["uniform"], min_length=1)


class SnakeSpec(_Strict):
    start: tuple[float, float]
    end: tuple[float, float]
    n_nodes: int = Field(default=20, ge=3)
    alpha: float = Field(default=0.002, ge=0)
    beta: float = Field(default=0.4, ge=0)
    kappa: float = Field(default=0.9, gt=0, lt=1)
    l_sense: int = Field(default=4, ge=1)
    lr_int: float = Field(default=1e-4, gt=0)
    lr_ext: float = Field(default=5e-4, gt=0)
    epochs: int = Field(default=400, ge=0)
    sigma_end: Optional[float] = Field(default=None, gt=0)
    pin_ends: bool = False


class EstimatorSpec(_Strict):
    kind: Literal["exact", "sampled"] = "exact"
    n: int = Field(default=1_000, ge=1)


class ReferenceSpec(_Strict):
    heat_capacity: bool = True
    onsager: bool = True
    string_order: bool = True


class DataSpec(_Strict):
    load: Optional[str] = None  # directory of model files written by a previous run
    dump_models: bool = False
    dump_samples: bool = False


Scheme = Literal["1", "2", "3", "3prime", "snake"]


class RunConfig(_Strict):
    system: Literal["ising", "cluster-ising", "synthetic"]
    description: str = ""
    seed: int = 0
    threads: Optional[int] = Field(default=None, ge=1)
    out: str = "out"
    grid: GridSpec
    schemes: list[Scheme] = Field(min_length=1)
    ising: Optional[IsingSpec] = None
    cluster: Optional[ClusterSpec] = None
    synthetic: Optional[SyntheticSpec] = None
    scheme1: Optional[Scheme1Spec] = None
    scheme2: Scheme2Spec = Scheme2Spec()
    snake: Optional[SnakeSpec] = None
    estimator: EstimatorSpec = EstimatorSpec()
    references: ReferenceSpec = ReferenceSpec()
    data: DataSpec = DataSpec()


def _pydantic_errors(e: ValidationError) -> list[tuple[str, str]]:
    out = []
    for err in e.errors():
        loc = ".".join(str(p) for p in err["loc"]) or "<root>"
        out.append((loc, err["msg"]))
    return out


def semantic_errors(cfg: RunConfig) -> list[tuple[str, str]]:
    """Cross-section checks that pydantic field validation cannot express."""
    errs = []
    d = len(cfg.grid.axes)
    if cfg.grid.names and len(cfg.grid.names) != d:
        errs.append(("grid.names", f"{len(cfg.grid.names)} names for {d} axes"))
    section = {"ising": cfg.ising, "cluster-ising": cfg.cluster, "synthetic": cfg.synthetic}[cfg.system]
    if section is None:
        name = {"ising": "ising", "cluster-ising": "cluster", "synthetic": "synthetic"}[cfg.system]
        errs.append((name, f"section [{name}] is required for system {cfg.system!r}"))
    if cfg.system == "ising" and cfg.ising is not None:
        s = cfg.ising
        if d == 1 and s.line is None:
            errs.append(("ising.line", "a 1-D Ising grid needs a line mapping"))
        if d == 2 and s.line is not None:
            errs.append(("ising.line", "line mapping only applies to 1-D grids"))
        if s.representation == "line":
            if s.line is None:
                errs.append(("ising.representation", "'line' representation needs ising.line"))
            elif any(float(v) != int(v) for v in s.line.direction):
                errs.append(("ising.line.direction", "'line' representation needs integer direction components"))
        if s.backend == "exact" and s.L > 4:
            errs.append(("ising.L", "exact enumeration backend supports L <= 4"))
        if s.backend == "histogram" and s.representation in ("config", "canonical"):
            errs.append(("ising.representation", f"{s.representation!r} keys need the exact backend"))
    if cfg.system == "cluster-ising" and cfg.cluster is not None:
        if d == 1 and cfg.cluster.h1 is None:
            errs.append(("cluster.h1", "a 1-D cluster-Ising grid scans h2 and needs a fixed h1"))
        if d == 2 and cfg.cluster.h1 is not None:
            errs.append(("cluster.h1", "h1 is an axis of 2-D grids; remove the fixed value"))
    if cfg.system == "synthetic" and d != 2:
        errs.append(("grid.axes", "the synthetic field is 2-D"))
    if "1" in cfg.schemes:
        if cfg.scheme1 is None:
            errs.append(("scheme1", "scheme 1 needs [scheme1] classes"))
        else:
            for k, c in enumerate(cfg.scheme1.classes):
                for p in c.points:
                    if len(p) != d:
                        errs.append((f"scheme1.classes.{k}.points", f"point {p} has {len(p)} coordinates, grid has {d}"))
    if "snake" in cfg.schemes:
        if cfg.snake is None:
            errs.append(("snake", "the snake scheme needs a [snake] section"))
        if d != 2:
            errs.append(("grid.axes", "the snake scheme needs a 2-D grid"))
    for ax_i, ax in enumerate(cfg.grid.axes):
        if ax.values is not None and any(b <= a for a, b in zip(ax.values, ax.values[1:])):
            errs.append((f"grid.axes.{ax_i}.values", "values must be strictly increasing"))
        needs_two = any(s in cfg.schemes for s in ("1", "3", "3prime", "snake"))
        n = len(ax.values) if ax.values is not None else ax.count
        if needs_two and n is not None and n < 2:
            errs.append((f"grid.axes.{ax_i}", "derivative-based schemes need at least 2 points per axis"))
    return errs


def parse_config(text: str, overrides: dict | None = None) -> RunConfig:
    """Parse and validate TOML text; raises ConfigError listing every violation."""
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        raise ConfigError([("<toml>", str(e))]) from None
    raw.update({k: v for k, v in (overrides or {}).items() if v is not None})
    try:
        cfg = RunConfig.model_validate(raw)
    except ValidationError as e:
        raise ConfigError(_pydantic_errors(e)) from None
    errs = semantic_errors(cfg)
    if errs:
        raise ConfigError(errs)
    return cfg


def list_recipes() -> list[tuple[str, str, Path]]:
    out = []
    for p in sorted(RECIPE_DIR.glob("*.toml")):
        desc = tomllib.loads(p.read_text()).get("description", "")
        out.append((p.stem, desc, p))
    return out


def resolve_config_path(name: str) -> Path:
    """A file path, or the name of a shipped recipe."""
    p = Path(name)
    if p.exists():
        return p
    r = RECIPE_DIR / f"{name}.toml"
    if r.exists():
        return r
    raise FileNotFoundError(f"no config file or recipe named {name!r}")
