"""Strict config loading for the command-line runners.

TOML or JSON by file extension. Exact thresholds are written as
rational strings ("1/8") so nothing is round-tripped through floats.
Unknown keys are rejected everywhere: a typo should fail loudly, not
silently fall back to a default.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:                       # Python < 3.11
    import tomli as tomllib

from coarselab.errors import ConfigurationError
from coarselab.groups import GroupModel, group_from_string
from coarselab.metric import (
    MetricWindow,
    _freeze_point,
    integer_window,
    l1_ball_window,
    load_window,
    union_of_lines_window,
)
from coarselab.util import parse_rational

_SECTIONS = {
    "scenario", "checks", "property_a", "pipeline",
    "verify_operators", "export", "output", "tolerances",
}


def _require_keys(table: dict, allowed: set, required: set, where: str) -> None:
    unknown = set(table) - allowed
    if unknown:
        raise ConfigurationError(f"unknown keys in [{where}]: {sorted(unknown)}")
    missing = required - set(table)
    if missing:
        raise ConfigurationError(f"missing keys in [{where}]: {sorted(missing)}")


def load_config(path) -> dict:
    p = Path(path)
    try:
        if p.suffix == ".toml":
            with open(p, "rb") as fh:
                doc = tomllib.load(fh)
        elif p.suffix == ".json":
            with open(p) as fh:
                doc = json.load(fh)
        else:
            raise ConfigurationError(
                f"config must be .toml or .json, got {p.suffix!r}"
            )
    except (OSError, tomllib.TOMLDecodeError, json.JSONDecodeError) as exc:
        raise ConfigurationError(f"cannot read config {p}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigurationError("config root must be a table")
    unknown = set(doc) - _SECTIONS
    if unknown:
        raise ConfigurationError(f"unknown config sections: {sorted(unknown)}")
    return doc


@dataclass(frozen=True)
class ScenarioConfig:
    group: str
    space: object                  # descriptor string or {"file": path}
    action: str
    basepoint: object
    section_policy: str = "min-length-then-lex"


def parse_scenario(doc: dict) -> ScenarioConfig:
    if "scenario" not in doc:
        raise ConfigurationError("config needs a [scenario] section")
    sc = doc["scenario"]
    _require_keys(
        sc,
        {"group", "space", "action", "basepoint", "section_policy"},
        {"group", "space", "action", "basepoint"},
        "scenario",
    )
    return ScenarioConfig(
        group=sc["group"],
        space=sc["space"],
        action=sc["action"],
        basepoint=_freeze_point(sc["basepoint"]),
        section_policy=sc.get("section_policy", "min-length-then-lex"),
    )


def parse_space_spec(doc: dict):
    """Space spec for commands that act on a bare space. A [scenario]
    section with only the space key is enough; group/action entries are
    tolerated so one config can drive several subcommands."""
    if "scenario" not in doc:
        raise ConfigurationError("config needs a [scenario] section with a space")
    sc = doc["scenario"]
    _require_keys(
        sc,
        {"group", "space", "action", "basepoint", "section_policy"},
        {"space"},
        "scenario",
    )
    return sc["space"]


def build_space(spec, window_override: int | None = None,
                base_dir: Path | None = None) -> MetricWindow:
    """Space descriptors: "Z-window:N", "Z2-window:N", "Z-union-window:N",
    or {"file": path} for a serialized window (validated by the caller)."""
    if isinstance(spec, dict):
        if set(spec) != {"file"}:
            raise ConfigurationError(f"space table must be {{file = path}}: {spec!r}")
        if window_override is not None:
            raise ConfigurationError("--window cannot override a space file")
        path = Path(spec["file"])
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        return load_window(path)
    if not isinstance(spec, str):
        raise ConfigurationError(f"bad space spec: {spec!r}")
    name, _, arg = spec.partition(":")
    try:
        radius = int(arg)
    except ValueError as exc:
        raise ConfigurationError(f"space descriptor needs an integer: {spec!r}") from exc
    if window_override is not None:
        radius = window_override
    if name == "Z-window":
        return integer_window(radius)
    if name == "Z2-window":
        return l1_ball_window(radius)
    if name == "Z-union-window":
        return union_of_lines_window(radius)
    raise ConfigurationError(f"unknown space descriptor {spec!r}")


def build_group(spec: str) -> GroupModel:
    if not isinstance(spec, str):
        raise ConfigurationError(f"group spec must be a string: {spec!r}")
    return group_from_string(spec)


def parse_schedule(raw) -> list:
    """[[R, "eps"], ...] with exact rational eps."""
    if not isinstance(raw, list) or not raw:
        raise ConfigurationError("schedule must be a nonempty list of [R, eps] pairs")
    out = []
    for item in raw:
        try:
            r, eps = item
            out.append((int(r), Fraction(parse_rational(eps))))
        except (TypeError, ValueError) as exc:
            raise ConfigurationError(f"bad schedule entry {item!r}") from exc
        if out[-1][0] < 0 or out[-1][1] <= 0:
            raise ConfigurationError(f"schedule entry out of range: {item!r}")
    return out


@dataclass(frozen=True)
class PropertyAConfig:
    schedule: tuple
    witness: str | None = None     # "ball:N" | "singleton" | file path
    kernel: str | None = None      # "triangular:N" | "gaussian:S" | file path
    random_witnesses: int = 0
    seed: int = 0
    psd_sample_cap: int = 301
    ladder: tuple | None = None


def parse_property_a(doc: dict) -> PropertyAConfig:
    pa = doc.get("property_a")
    if pa is None:
        raise ConfigurationError("config needs a [property_a] section")
    _require_keys(
        pa,
        {"schedule", "witness", "kernel", "random_witnesses", "seed",
         "psd_sample_cap", "ladder"},
        {"schedule"},
        "property_a",
    )
    if pa.get("witness") is not None and pa.get("kernel") is not None:
        raise ConfigurationError("[property_a] takes a witness or a kernel, not both")
    ladder = pa.get("ladder")
    return PropertyAConfig(
        schedule=tuple(parse_schedule(pa["schedule"])),
        witness=pa.get("witness"),
        kernel=pa.get("kernel"),
        random_witnesses=int(pa.get("random_witnesses", 0)),
        seed=int(pa.get("seed", 0)),
        psd_sample_cap=int(pa.get("psd_sample_cap", 301)),
        ladder=tuple(int(n) for n in ladder) if ladder is not None else None,
    )


@dataclass(frozen=True)
class PipelineConfig:
    radius: int
    eps: Fraction
    theta: dict
    psd_sample: int = 101


def parse_pipeline(doc: dict) -> PipelineConfig:
    pl = doc.get("pipeline")
    if pl is None:
        raise ConfigurationError("config needs a [pipeline] section")
    _require_keys(pl, {"R", "eps", "theta", "psd_sample"}, {"R", "eps", "theta"}, "pipeline")
    theta = dict(pl["theta"])
    if "kind" not in theta:
        raise ConfigurationError("theta spec needs a kind")
    return PipelineConfig(
        radius=int(pl["R"]),
        eps=Fraction(parse_rational(pl["eps"])),
        theta=theta,
        psd_sample=int(pl.get("psd_sample", 101)),
    )


@dataclass(frozen=True)
class ChecksConfig:
    isometry_radius: int = 2
    properness_radius: int = 3
    control_radius: int = 20
    max_ball: int = 20_000


def parse_checks(doc: dict) -> ChecksConfig:
    ch = doc.get("checks", {})
    _require_keys(
        ch,
        {"isometry_radius", "properness_radius", "control_radius", "max_ball"},
        set(),
        "checks",
    )
    return ChecksConfig(
        isometry_radius=int(ch.get("isometry_radius", 2)),
        properness_radius=int(ch.get("properness_radius", 3)),
        control_radius=int(ch.get("control_radius", 20)),
        max_ball=int(ch.get("max_ball", 20_000)),
    )


@dataclass(frozen=True)
class VerifyOperatorsConfig:
    lo: int
    hi: int
    policies: tuple = ("min-length-then-lex", "max-length")
    margin: int = 0


def parse_verify_operators(doc: dict) -> VerifyOperatorsConfig:
    vo = doc.get("verify_operators")
    if vo is None:
        raise ConfigurationError("config needs a [verify_operators] section")
    _require_keys(vo, {"range", "policies", "margin"}, {"range"}, "verify_operators")
    try:
        lo, hi = (int(v) for v in vo["range"])
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"bad sweep range {vo.get('range')!r}") from exc
    policies = tuple(vo.get("policies", ("min-length-then-lex", "max-length")))
    return VerifyOperatorsConfig(lo, hi, policies, int(vo.get("margin", 0)))


@dataclass(frozen=True)
class ExportConfig:
    kernel: str | None = None
    witness: str | None = None


def parse_export(doc: dict) -> ExportConfig:
    ex = doc.get("export")
    if ex is None:
        raise ConfigurationError("config needs an [export] section")
    _require_keys(ex, {"kernel", "witness"}, set(), "export")
    if (ex.get("kernel") is None) == (ex.get("witness") is None):
        raise ConfigurationError("[export] takes exactly one of kernel or witness")
    return ExportConfig(kernel=ex.get("kernel"), witness=ex.get("witness"))


@dataclass(frozen=True)
class Tolerances:
    psd: float = 1e-9


def parse_tolerances(doc: dict, override: float | None = None) -> Tolerances:
    tl = doc.get("tolerances", {})
    _require_keys(tl, {"psd"}, set(), "tolerances")
    psd = float(tl.get("psd", 1e-9))
    if override is not None:
        psd = override
    return Tolerances(psd=psd)


def output_dir(doc: dict, override=None) -> Path | None:
    out = doc.get("output", {})
    _require_keys(out, {"out_dir", "kernel_csv"}, set(), "output")
    if override is not None:
        return Path(override)
    if "out_dir" in out:
        return Path(out["out_dir"])
    return None


def want_kernel_csv(doc: dict) -> bool:
    return bool(doc.get("output", {}).get("kernel_csv", False))
