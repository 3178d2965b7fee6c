"""INI pipeline configuration: schema, validation, profiles, round-tripping."""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .rom import RomVariant


class ConfigError(ValueError):
    """Invalid configuration; the message carries the offending key path."""


def _parse_bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _parse_floats(s: str):
    return tuple(float(x) for x in s.replace(",", " ").split())


def _parse_names(s: str):
    return tuple(x.strip() for x in s.split(",") if x.strip())


# (section, key) -> (parser, default); None default means unset
SCHEMA = {
    "pipeline": {
        "profile": (str, None),
    },
    "fom": {
        "mesh": (str, None),            # file path or rect:NX[xNY]
        "nu": (float, None),
        "dt": (float, None),
        "t_end": (float, None),
        "scheme": (str, "bdf2"),
        "inflow_um": (float, 0.0),
        "channel_height": (float, 0.41),
        "forcing": (str, "none"),       # registered name
        "forcing_amplitude": (float, 1.0),
        "snap_t0": (float, None),
        "snap_t1": (float, None),
        "snap_stride": (int, 1),
        "qoi_diameter": (float, 0.1),
        "qoi_ubar": (float, 1.0),
    },
    "pod": {
        "l": (int, 8),
        "centered": (_parse_bool, False),
        "drop_tol": (float, 1e-10),
    },
    "nudging": {
        "kind": (str, "nodal"),
        "beta": (float, None),          # alias of rom.beta
        "coarse_mesh": (str, None),
        "ratio": (int, None),
    },
    "rom": {
        "variant": (str, "grad-div-da-rom"),
        "scheme": (str, "bdf2"),
        "l": (int, None),               # defaults to pod.l
        "mu": (float, 0.0),
        "beta": (float, None),
        "t_start": (float, None),
        "t_end": (float, None),
    },
    "analysis": {
        "qoi_exclude": (float, 0.0),    # transient seconds dropped from QoI maxima
    },
    "sweep": {
        "betas": (_parse_floats, (10.0, 100.0, 500.0)),
        "variants": (_parse_names, ("da-rom", "grad-div-da-rom")),
    },
}

_VALID_SCHEMES = ("bdf2", "euler")
_VALID_KINDS = ("nodal", "pc")
PROFILE_NAMES = ("desk", "re100-full", "re100-inaccurate", "re1000-full",
                 "re1000-inaccurate")


@dataclass
class PipelineConfig:
    """Resolved configuration for every pipeline stage."""

    sections: dict = field(default_factory=dict)
    profile: Optional[str] = None
    source: Optional[str] = None

    def get(self, section: str, key: str):
        return self.sections[section][key]

    def require(self, section: str, key: str):
        v = self.sections[section][key]
        if v is None:
            raise ConfigError(f"{section}.{key}: required key is missing")
        return v

    @property
    def variant(self) -> RomVariant:
        name = self.get("rom", "variant")
        try:
            return RomVariant(name)
        except ValueError:
            raise ConfigError(f"rom.variant: unknown variant {name!r}") from None

    @property
    def beta(self) -> float:
        b = self.get("rom", "beta")
        return 0.0 if b is None else b

    @property
    def rom_l(self) -> int:
        l = self.get("rom", "l")
        return self.get("pod", "l") if l is None else l


def _empty_sections():
    return {sec: {k: default for k, (_, default) in keys.items()}
            for sec, keys in SCHEMA.items()}


def parse_config(path) -> PipelineConfig:
    """Parse and validate an INI file; unknown sections or keys are rejected."""
    parser = configparser.ConfigParser(interpolation=None)
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc

    sections = _empty_sections()
    for sec in parser.sections():
        if sec not in SCHEMA:
            raise ConfigError(f"{sec}: unknown section")
        for key, raw in parser.items(sec):
            if key not in SCHEMA[sec]:
                raise ConfigError(f"{sec}.{key}: unknown key")
            fn, _ = SCHEMA[sec][key]
            try:
                sections[sec][key] = fn(raw)
            except ValueError as exc:
                raise ConfigError(f"{sec}.{key}: {exc}") from exc

    cfg = PipelineConfig(sections, sections["pipeline"]["profile"], str(path))
    _apply_profile(cfg)
    _validate(cfg, base_dir=Path(path).parent)
    return cfg


def _apply_profile(cfg: PipelineConfig) -> None:
    if cfg.profile is None:
        return
    if cfg.profile not in PROFILE_NAMES:
        raise ConfigError(f"pipeline.profile: unknown profile {cfg.profile!r}")
    from .profiles import profile_defaults

    for sec, keys in profile_defaults(cfg.profile).items():
        for key, value in keys.items():
            if cfg.sections[sec][key] is None or _is_schema_default(sec, key, cfg):
                cfg.sections[sec][key] = value


def _is_schema_default(sec, key, cfg):
    return cfg.sections[sec][key] == SCHEMA[sec][key][1]


def _validate(cfg: PipelineConfig, base_dir: Path) -> None:
    s = cfg.sections
    if s["fom"]["scheme"] not in _VALID_SCHEMES:
        raise ConfigError(f"fom.scheme: must be one of {_VALID_SCHEMES}")
    if s["rom"]["scheme"] not in _VALID_SCHEMES:
        raise ConfigError(f"rom.scheme: must be one of {_VALID_SCHEMES}")
    if s["nudging"]["kind"] not in _VALID_KINDS:
        raise ConfigError(f"nudging.kind: must be one of {_VALID_KINDS}")

    nb, rb = s["nudging"]["beta"], s["rom"]["beta"]
    if nb is not None and rb is not None and nb != rb:
        raise ConfigError(f"rom.beta: conflicts with nudging.beta ({rb} vs {nb})")
    if rb is None:
        s["rom"]["beta"] = nb

    variant = cfg.variant
    try:
        variant.resolve_parameters(s["rom"]["mu"], cfg.beta)
    except ValueError as exc:
        raise ConfigError(f"rom.variant: {exc}") from exc
    if variant.uses_nudging and cfg.beta == 0.0:
        raise ConfigError(f"rom.beta: {variant.value} needs a positive beta")

    for sec, key in (("fom", "mesh"), ("nudging", "coarse_mesh")):
        p = s[sec][key]
        if p is not None and not p.startswith(("rect:", "cylinder:")):
            path = Path(p)
            if not path.is_absolute():
                path = base_dir / path
            if not path.exists():
                raise ConfigError(f"{sec}.{key}: file not found: {path}")
            s[sec][key] = str(path)

    if s["nudging"]["coarse_mesh"] is not None and s["nudging"]["ratio"] is not None:
        raise ConfigError("nudging.ratio: give either a coarse mesh or a ratio, not both")

    for key in ("nu", "dt"):
        v = s["fom"][key]
        if v is not None and v <= 0:
            raise ConfigError(f"fom.{key}: must be positive")
    if s["pod"]["l"] < 1:
        raise ConfigError("pod.l: must be >= 1")


def serialize(cfg: PipelineConfig) -> str:
    """Resolved config as INI text; parse(serialize(cfg)) is a fixed point."""
    out = io.StringIO()
    for sec, keys in cfg.sections.items():
        lines = []
        for key, value in keys.items():
            if value is None:
                continue
            if isinstance(value, tuple):
                value = ",".join(str(v) for v in value)
            lines.append(f"{key} = {value}")
        if lines:
            out.write(f"[{sec}]\n")
            out.write("\n".join(lines) + "\n\n")
    return out.getvalue()


def parse_config_text(text: str) -> PipelineConfig:
    import tempfile

    with tempfile.NamedTemporaryFile("w", suffix=".ini", delete=False) as fh:
        fh.write(text)
        name = fh.name
    try:
        return parse_config(name)
    finally:
        Path(name).unlink(missing_ok=True)
