"""Scenario and experiment configuration.

Experiments are described in YAML: a ``system`` block with the scenario
scalars plus the gain model, and experiment-kind specific keys. Parsing and
validation are separate steps so the CLI can distinguish syntax errors
(exit 2) from invariant violations (exit 3); ``validate`` is pure and
returns one diagnostic per problem, each naming the offending field.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Union

import yaml

from .bounds import McConfig
from .channels import LargeScaleModel, LogNormalShadowing, RingPathLoss, UniformPowerError

KINDS = ("bound-eval", "optimize", "sweep", "scaling-verify", "simulate", "compare")
SWEEP_AXES = ("tau_u", "M", "K")
DEFAULT_K = 800
DEFAULT_DELTA_BAR = 10.0

_MODEL_TAGS = {
    "uniform": UniformPowerError,
    "lognormal": LogNormalShadowing,
    "pathloss": RingPathLoss,
}


class SpecParseError(Exception):
    """Raised when an experiment file cannot be parsed; carries line/column."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line = line
        self.column = column
        where = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(message + where)


@dataclass(frozen=True)
class SystemConfig:
    """All scalar parameters of one scenario."""

    M: int
    K: int = DEFAULT_K
    tau_u: int = 100
    tau_p: int | None = None
    p_a: float | None = None
    model: LargeScaleModel = UniformPowerError(DEFAULT_DELTA_BAR, 0.0)
    seed: int = 0
    mc: McConfig = McConfig()

    def __post_init__(self):
        if self.M < 2:
            raise ValueError(f"M must be >= 2, got {self.M}")
        if self.K < 1:
            raise ValueError(f"K must be >= 1, got {self.K}")
        if self.tau_u < 1:
            raise ValueError(f"tau_u must be >= 1, got {self.tau_u}")
        if self.tau_p is not None and not 1 <= self.tau_p <= self.tau_u:
            raise ValueError(f"tau_p={self.tau_p} must lie in [1, tau_u={self.tau_u}]")
        if self.p_a is not None and not 0.0 <= self.p_a <= 1.0:
            raise ValueError(f"p_a={self.p_a} must lie in [0, 1]")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")


@dataclass(frozen=True)
class Diagnostic:
    field: str
    message: str

    def __str__(self):
        return f"{self.field}: {self.message}"


@dataclass
class ExperimentSpec:
    """One experiment: what to run, over what, and where the CSVs go."""

    kind: str
    system: dict = field(default_factory=dict)
    methods: list = field(default_factory=list)
    bounds: list = field(default_factory=lambda: ["R1"])
    sweep_axis: str = "tau_u"
    sweep_values: list = field(default_factory=list)
    evaluate_with: str = "R1"
    n_slots: int = 200
    n_frames: int = 1
    case: str = "balanced"
    ladder: list = field(default_factory=list)
    out_prefix: str = "experiment"


def parse_model(raw) -> LargeScaleModel:
    """Build a gain model from its YAML mapping. Raises ValueError on bad input."""
    if raw is None:
        return UniformPowerError(DEFAULT_DELTA_BAR, 0.0)
    if not isinstance(raw, dict):
        raise ValueError(f"model must be a mapping, got {type(raw).__name__}")
    raw = dict(raw)
    tag = raw.pop("type", "uniform")
    cls = _MODEL_TAGS.get(tag)
    if cls is None:
        raise ValueError(f"unknown model type {tag!r}; expected one of {sorted(_MODEL_TAGS)}")
    raw.setdefault("delta_bar", DEFAULT_DELTA_BAR)
    allowed = {f.name for f in fields(cls)}
    unknown = set(raw) - allowed
    if unknown:
        raise ValueError(f"unknown model parameters {sorted(unknown)} for {tag!r}")
    return cls(**raw)


def build_system(raw: dict) -> tuple[SystemConfig | None, list[Diagnostic]]:
    """Construct a SystemConfig from raw values, collecting diagnostics."""
    diags: list[Diagnostic] = []
    raw = dict(raw or {})
    model_raw = raw.pop("model", None)
    mc_raw = raw.pop("mc", None)
    try:
        model = parse_model(model_raw)
    except (ValueError, TypeError) as exc:
        diags.append(Diagnostic("system.model", str(exc)))
        model = UniformPowerError(DEFAULT_DELTA_BAR, 0.0)
    try:
        mc = McConfig(**(mc_raw or {}))
    except (ValueError, TypeError) as exc:
        diags.append(Diagnostic("system.mc", str(exc)))
        mc = McConfig()

    known = {f.name for f in fields(SystemConfig)} - {"model", "mc"}
    unknown = set(raw) - known
    for name in sorted(unknown):
        diags.append(Diagnostic(f"system.{name}", "unknown field"))
        raw.pop(name)
    if "M" not in raw:
        diags.append(Diagnostic("system.M", "required field is missing"))
        return None, diags

    checks = [
        ("M", lambda v: v >= 2, "must be >= 2"),
        ("K", lambda v: v >= 1, "must be >= 1"),
        ("tau_u", lambda v: v >= 1, "must be >= 1"),
        ("p_a", lambda v: 0.0 <= v <= 1.0, "must lie in [0, 1]"),
        ("seed", lambda v: v >= 0, "must be non-negative"),
    ]
    for name, ok, msg in checks:
        if name in raw and raw[name] is not None and not ok(raw[name]):
            diags.append(Diagnostic(f"system.{name}", f"{msg} (got {raw[name]})"))
    tau_u = raw.get("tau_u", 100)
    tau_p = raw.get("tau_p")
    if tau_p is not None and not 1 <= tau_p <= tau_u:
        diags.append(Diagnostic("system.tau_p", f"must lie in [1, tau_u={tau_u}] (got {tau_p})"))
    if diags:
        return None, diags
    return SystemConfig(model=model, mc=mc, **raw), diags


def parse_spec(source: Union[str, Path]) -> ExperimentSpec:
    """Parse an experiment file (or YAML string). Raises SpecParseError."""
    text = Path(source).read_text() if isinstance(source, Path) else str(source)
    try:
        raw = yaml.safe_load(text)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark
        raise SpecParseError(
            exc.problem or "malformed experiment file",
            None if mark is None else mark.line + 1,
            None if mark is None else mark.column + 1,
        ) from exc
    except yaml.YAMLError as exc:
        raise SpecParseError(str(exc)) from exc
    if not isinstance(raw, dict):
        raise SpecParseError("experiment file must be a mapping", 1, 1)
    known = {f.name for f in fields(ExperimentSpec)} | {"sweep"}
    sweep = raw.pop("sweep", None)
    if sweep is not None:
        if not isinstance(sweep, dict):
            raise SpecParseError("sweep must be a mapping with axis/values")
        raw.setdefault("sweep_axis", sweep.get("axis", "tau_u"))
        raw.setdefault("sweep_values", sweep.get("values", []))
    unknown = set(raw) - known
    if unknown:
        raise SpecParseError(f"unknown top-level keys {sorted(unknown)}")
    if "kind" not in raw:
        raise SpecParseError("missing required key 'kind'")
    return ExperimentSpec(**raw)


def validate(spec: ExperimentSpec) -> list[Diagnostic]:
    """Pure validation; an empty list means the spec can run."""
    diags: list[Diagnostic] = []
    if spec.kind not in KINDS:
        diags.append(Diagnostic("kind", f"unknown kind {spec.kind!r}; expected one of {KINDS}"))
        return diags
    cfg, sys_diags = build_system(spec.system)
    diags.extend(sys_diags)

    from .optimize import METHODS  # local import to keep config dependency-light

    if spec.kind in ("optimize", "sweep", "compare"):
        if not spec.methods:
            diags.append(Diagnostic("methods", "at least one method is required"))
        for m in spec.methods:
            if m not in METHODS:
                diags.append(Diagnostic("methods", f"unknown method {m!r}; expected one of {METHODS}"))
    if spec.kind == "sweep":
        if spec.sweep_axis not in SWEEP_AXES:
            diags.append(Diagnostic("sweep.axis", f"unknown axis {spec.sweep_axis!r}; expected one of {SWEEP_AXES}"))
        if not spec.sweep_values:
            diags.append(Diagnostic("sweep.values", "sweep value list is empty"))
        elif any(v <= 0 for v in spec.sweep_values):
            diags.append(Diagnostic("sweep.values", "sweep values must be positive"))
        elif (spec.sweep_axis == "tau_u" and cfg is not None and cfg.tau_p is not None
              and min(spec.sweep_values) < cfg.tau_p):
            diags.append(Diagnostic("sweep.values", f"swept tau_u would drop below tau_p={cfg.tau_p}"))
    if spec.kind == "bound-eval":
        for b in spec.bounds:
            if b not in ("R1", "R2", "R3", "Ra"):
                diags.append(Diagnostic("bounds", f"unknown bound {b!r}"))
    if spec.kind in ("bound-eval", "simulate") and cfg is not None:
        for name in ("tau_p", "p_a"):
            if getattr(cfg, name) is None:
                diags.append(Diagnostic(f"system.{name}", f"{spec.kind} needs {name} set"))
    if spec.kind in ("simulate", "compare"):
        if spec.n_slots < 1:
            diags.append(Diagnostic("n_slots", "must be >= 1"))
        if spec.n_frames < 1:
            diags.append(Diagnostic("n_frames", "must be >= 1"))
    if spec.kind == "scaling-verify":
        if spec.case not in ("antenna-rich", "slot-rich", "balanced"):
            diags.append(Diagnostic("case", f"unknown case {spec.case!r}"))
        if not spec.ladder:
            diags.append(Diagnostic("ladder", "ladder of (M, tau_u) pairs is empty"))
        else:
            for i, rung in enumerate(spec.ladder):
                if not (isinstance(rung, (list, tuple)) and len(rung) == 2):
                    diags.append(Diagnostic(f"ladder[{i}]", "each rung must be a (M, tau_u) pair"))
    if spec.evaluate_with not in ("R1", "R3", "Ra", "self"):
        diags.append(Diagnostic("evaluate_with", f"unknown metric {spec.evaluate_with!r}"))
    return diags
