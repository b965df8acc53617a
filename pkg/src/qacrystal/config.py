"""Run configuration: a flat, sectioned key-value file format.

Grammar (UTF-8 text)::

    # comment or blank lines anywhere
    [section]
    key = value

Sections and keys::

    [model]   m, a, b1, b2, J, d, beta          (required reals / int)
              harmonic = true|false             (optional, default false)
    [grid]    half_width = auto | positive real (optional)
              points = integer >= 3             (optional, default 4000)
              levels = integer >= 2             (optional, default 8)
    [loops]   slices = auto | integer >= 2      (optional; auto uses the
              default slice-count rule)
    [volume]  extents = n1 n2 ... nd            (required for sampling
              commands; one extent per lattice axis)
              boundary = free | plus_clamped | minus_clamped
              clamp = auto | positive real      (auto = sqrt(upsilon))
    [chain]   sweeps, burn_in, thinning, seed   (integers)
              proposal_mix = p_redraw p_nudge p_flip
              nudge_scale = auto | positive real

Unknown sections or keys are rejected, as are duplicate keys (reported
with both line numbers).  `parse_config` and `serialize_config` round-trip
exactly; `config_digest` hashes the canonical serialization with SHA-256
truncated to 64 bits.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

from .errors import ConfigurationError
from .loops import BoundaryCondition, default_slices
from .sampler import ChainSettings
from .spectral import GridSpec, OscillatorParams

__all__ = [
    "RunConfig",
    "parse_config",
    "serialize_config",
    "config_digest",
]

_SCHEMA = {
    "model": {"m", "a", "b1", "b2", "J", "d", "beta", "harmonic"},
    "grid": {"half_width", "points", "levels"},
    "loops": {"slices"},
    "volume": {"extents", "boundary", "clamp"},
    "chain": {"sweeps", "burn_in", "thinning", "seed", "proposal_mix", "nudge_scale"},
}

_CHAIN_DEFAULTS = ChainSettings(sweeps=5000, burn_in=500, thinning=1, seed=20260809)


@dataclass(frozen=True)
class RunConfig:
    """Fully validated parameters for one CLI invocation."""

    model: OscillatorParams
    grid: GridSpec | None = None  # None selects the automatic grid
    levels: int = 8
    slices: int | None = None  # None selects the default slice-count rule
    volume: tuple[int, ...] | None = None
    boundary: BoundaryCondition = field(default_factory=BoundaryCondition.free)
    chain: ChainSettings = _CHAIN_DEFAULTS

    def resolved_slices(self) -> int:
        if self.slices is not None:
            return self.slices
        return default_slices(self.model.beta, self.model.m, self.model.a)

    def default_clamp(self) -> float:
        """Clamp level sqrt(upsilon): the reduced-potential minimum scale."""
        upsilon = self.model.upsilon
        if upsilon <= 0:
            raise ConfigurationError(
                "automatic clamp level needs the double-well regime (b1 > a/2); set clamp explicitly"
            )
        return math.sqrt(upsilon)


def _tokenize(text: str):
    """Yield (lineno, section, key, raw_value); enforce grammar and uniqueness."""
    section = None
    seen: dict[tuple[str, str], int] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if section not in _SCHEMA:
                raise ConfigurationError(
                    f"line {lineno}: unknown section [{section}]; expected one of {sorted(_SCHEMA)}"
                )
            continue
        if "=" not in line:
            raise ConfigurationError(f"line {lineno}: expected 'key = value', got {raw!r}")
        if section is None:
            raise ConfigurationError(f"line {lineno}: key outside any [section]")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in _SCHEMA[section]:
            raise ConfigurationError(
                f"line {lineno}: unknown key {section}.{key}; expected one of {sorted(_SCHEMA[section])}"
            )
        if (section, key) in seen:
            raise ConfigurationError(
                f"duplicate key {section}.{key} on lines {seen[(section, key)]} and {lineno}"
            )
        seen[(section, key)] = lineno
        yield lineno, section, key, value


def _parse_real(section, key, value, lineno) -> float:
    try:
        out = float(value)
    except ValueError:
        raise ConfigurationError(f"line {lineno}: {section}.{key} must be a real number, got {value!r}")
    if not math.isfinite(out):
        raise ConfigurationError(f"line {lineno}: {section}.{key} must be finite")
    return out


def _parse_int(section, key, value, lineno) -> int:
    try:
        return int(value)
    except ValueError:
        raise ConfigurationError(f"line {lineno}: {section}.{key} must be an integer, got {value!r}")


def _parse_bool(section, key, value, lineno) -> bool:
    lowered = value.lower()
    if lowered in ("true", "false"):
        return lowered == "true"
    raise ConfigurationError(f"line {lineno}: {section}.{key} must be true or false, got {value!r}")


def parse_config(text: str) -> RunConfig:
    """Parse and fully validate a configuration file."""
    data: dict[str, dict[str, tuple[str, int]]] = {name: {} for name in _SCHEMA}
    for lineno, section, key, value in _tokenize(text):
        data[section][key] = (value, lineno)

    model_raw = data["model"]
    required = ("m", "a", "b1", "b2", "J", "d", "beta")
    missing = [k for k in required if k not in model_raw]
    if missing:
        raise ConfigurationError(f"[model] is missing required keys: {', '.join(missing)}")
    numbers = {}
    for key in ("m", "a", "b1", "b2", "J", "beta"):
        numbers[key] = _parse_real("model", key, *model_raw[key])
    d = _parse_int("model", "d", *model_raw["d"])
    harmonic = False
    if "harmonic" in model_raw:
        harmonic = _parse_bool("model", "harmonic", *model_raw["harmonic"])
    for key in ("b1", "b2"):
        if numbers[key] <= 0:
            raise ConfigurationError(
                f"model.{key} = {numbers[key]} rejected: the quartic double-well "
                "coefficients must both be strictly positive"
            )
    try:
        model = OscillatorParams(
            m=numbers["m"], a=numbers["a"], b1=numbers["b1"], b2=numbers["b2"],
            J=numbers["J"], d=d, beta=numbers["beta"], harmonic=harmonic,
        )
    except ConfigurationError as err:
        raise ConfigurationError(f"[model]: {err}") from err

    grid = None
    levels = 8
    if data["grid"]:
        graw = data["grid"]
        if "levels" in graw:
            levels = _parse_int("grid", "levels", *graw["levels"])
            if levels < 2:
                raise ConfigurationError("grid.levels must be >= 2")
        points = _parse_int("grid", "points", *graw["points"]) if "points" in graw else 4000
        if "half_width" in graw and graw["half_width"][0] != "auto":
            half_width = _parse_real("grid", "half_width", *graw["half_width"])
            try:
                grid = GridSpec(half_width=half_width, points=points)
            except ConfigurationError as err:
                raise ConfigurationError(f"[grid]: {err}") from err
        elif "points" in graw:
            # automatic half-width at an explicit resolution: encode via levels-aware auto later
            grid = None
            from .spectral import auto_grid

            grid = auto_grid(model, levels=levels, points=points)

    slices = None
    if data["loops"] and data["loops"]["slices"][0] != "auto":
        slices = _parse_int("loops", "slices", *data["loops"]["slices"])
        if slices < 2:
            raise ConfigurationError("loops.slices must be >= 2 (or auto)")

    volume = None
    boundary = BoundaryCondition.free()
    if data["volume"]:
        vraw = data["volume"]
        if "extents" not in vraw:
            raise ConfigurationError("[volume] requires extents")
        value, lineno = vraw["extents"]
        try:
            volume = tuple(int(tok) for tok in value.split())
        except ValueError:
            raise ConfigurationError(f"line {lineno}: volume.extents must be integers, got {value!r}")
        if not volume or any(n < 1 for n in volume):
            raise ConfigurationError(f"line {lineno}: volume.extents must all be >= 1")
        if len(volume) != model.d:
            raise ConfigurationError(
                f"line {lineno}: volume.extents lists {len(volume)} axes but model.d = {model.d}"
            )
        kind = vraw["boundary"][0] if "boundary" in vraw else "free"
        if kind == "free":
            boundary = BoundaryCondition.free()
        elif kind in ("plus_clamped", "minus_clamped"):
            clamp = None
            if "clamp" in vraw and vraw["clamp"][0] != "auto":
                clamp = _parse_real("volume", "clamp", *vraw["clamp"])
            if clamp is None:
                upsilon = model.upsilon
                if upsilon <= 0:
                    raise ConfigurationError(
                        "volume.clamp = auto needs the double-well regime (b1 > a/2)"
                    )
                clamp = math.sqrt(upsilon)
            try:
                boundary = BoundaryCondition(kind=kind, clamp=clamp)
            except ConfigurationError as err:
                raise ConfigurationError(f"[volume]: {err}") from err
        else:
            raise ConfigurationError(
                f"volume.boundary must be free, plus_clamped, or minus_clamped, got {kind!r}"
            )

    chain = _CHAIN_DEFAULTS
    if data["chain"]:
        craw = data["chain"]
        kwargs = {
            "sweeps": _CHAIN_DEFAULTS.sweeps,
            "burn_in": _CHAIN_DEFAULTS.burn_in,
            "thinning": _CHAIN_DEFAULTS.thinning,
            "seed": _CHAIN_DEFAULTS.seed,
            "proposal_mix": _CHAIN_DEFAULTS.proposal_mix,
            "nudge_scale": _CHAIN_DEFAULTS.nudge_scale,
        }
        for key in ("sweeps", "burn_in", "thinning", "seed"):
            if key in craw:
                kwargs[key] = _parse_int("chain", key, *craw[key])
        if "proposal_mix" in craw:
            value, lineno = craw["proposal_mix"]
            try:
                kwargs["proposal_mix"] = tuple(float(tok) for tok in value.split())
            except ValueError:
                raise ConfigurationError(
                    f"line {lineno}: chain.proposal_mix must be three probabilities"
                )
        if "nudge_scale" in craw and craw["nudge_scale"][0] != "auto":
            kwargs["nudge_scale"] = _parse_real("chain", "nudge_scale", *craw["nudge_scale"])
        try:
            chain = ChainSettings(**kwargs)
        except ConfigurationError as err:
            raise ConfigurationError(f"[chain]: {err}") from err

    return RunConfig(
        model=model, grid=grid, levels=levels, slices=slices,
        volume=volume, boundary=boundary, chain=chain,
    )


def _format_real(x: float) -> str:
    return repr(float(x))


def serialize_config(config: RunConfig) -> str:
    """Canonical text form; `parse_config` of the output reproduces the input."""
    lines = ["[model]"]
    model = config.model
    for key in ("m", "a", "b1", "b2", "J"):
        lines.append(f"{key} = {_format_real(getattr(model, key))}")
    lines.append(f"d = {model.d}")
    lines.append(f"beta = {_format_real(model.beta)}")
    lines.append(f"harmonic = {'true' if model.harmonic else 'false'}")

    lines.append("[grid]")
    if config.grid is not None:
        lines.append(f"half_width = {_format_real(config.grid.half_width)}")
        lines.append(f"points = {config.grid.points}")
    lines.append(f"levels = {config.levels}")

    lines.append("[loops]")
    lines.append(f"slices = {config.slices if config.slices is not None else 'auto'}")

    if config.volume is not None:
        lines.append("[volume]")
        lines.append("extents = " + " ".join(str(n) for n in config.volume))
        lines.append(f"boundary = {config.boundary.kind}")
        if config.boundary.clamp is not None:
            lines.append(f"clamp = {_format_real(config.boundary.clamp)}")

    chain = config.chain
    lines.append("[chain]")
    lines.append(f"sweeps = {chain.sweeps}")
    lines.append(f"burn_in = {chain.burn_in}")
    lines.append(f"thinning = {chain.thinning}")
    lines.append(f"seed = {chain.seed}")
    lines.append("proposal_mix = " + " ".join(_format_real(p) for p in chain.proposal_mix))
    lines.append(
        "nudge_scale = "
        + ("auto" if chain.nudge_scale is None else _format_real(chain.nudge_scale))
    )
    return "\n".join(lines) + "\n"


def config_digest(config: RunConfig) -> str:
    """Stable 64-bit digest (16 hex digits of SHA-256) of the canonical serialization."""
    return hashlib.sha256(serialize_config(config).encode()).hexdigest()[:16]
