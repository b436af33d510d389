"""Run configuration parsing for the batch front end.

Configs are flat INI-style files: named sections of key = value lines,
no nesting.  Every power-like field carries an explicit unit tag ("W"
or "dBm") so that mixed-unit profiles resolve unambiguously; dBm values
are converted to Watts once, here, and never again downstream.
"""
from __future__ import annotations

import configparser
import hashlib
import math
from dataclasses import dataclass, field
from typing import Optional

from .model import ConfigurationError, Scenario, generate_channels

WATTS_PER_DBM_REF = 1e-3


def dbm_to_watts(x: float) -> float:
    """10^(x/10) milliwatts expressed in Watts."""
    return 10.0 ** (x / 10.0) * WATTS_PER_DBM_REF


def parse_power(text: str, name: str, *, allow_inf=False,
                allow_zero=True) -> float:
    """Parse a unit-tagged power field ("294.5 W", "43 dBm", "inf W")."""
    parts = text.strip().split()
    if len(parts) != 2:
        raise ConfigurationError(
            "%s must be '<number> W' or '<number> dBm', got %r"
            % (name, text)
        )
    raw, unit = parts
    try:
        value = float(raw)
    except ValueError as exc:
        raise ConfigurationError(
            "%s has a non-numeric magnitude %r" % (name, raw)
        ) from exc
    if unit == "W":
        watts = value
    elif unit == "dBm":
        if not math.isfinite(value):
            raise ConfigurationError("%s: dBm values must be finite" % name)
        watts = dbm_to_watts(value)
    else:
        raise ConfigurationError(
            "%s has unknown unit %r (use W or dBm)" % (name, unit)
        )
    if math.isnan(watts):
        raise ConfigurationError("%s is NaN" % name)
    if math.isinf(watts) and not allow_inf:
        raise ConfigurationError("%s must be finite" % name)
    if watts < 0.0:
        raise ConfigurationError("%s must be nonnegative, got %g W"
                                 % (name, watts))
    if watts == 0.0 and not allow_zero:
        raise ConfigurationError("%s must be positive" % name)
    return watts


@dataclass
class ScenarioSettings:
    links: int
    antennas: tuple
    eta: float
    circuit_power: float  # Watts
    noise: float  # Watts
    power_cap: tuple  # Watts per link
    bandwidth: float
    seed: int
    cross_gain: float

    def build(self, seed: Optional[int] = None) -> Scenario:
        use_seed = self.seed if seed is None else int(seed)
        return generate_channels(
            use_seed, self.links, self.antennas, self.cross_gain,
            noise=self.noise, power_caps=self.power_cap,
            circuit_power=self.circuit_power, amp_efficiency=self.eta,
            bandwidth=self.bandwidth,
        )


@dataclass
class SweepSettings:
    grid_size: int = 20
    eps: float = 1e-6


@dataclass
class DistributedSettings:
    alpha: float = 1.0
    delta: Optional[float] = None  # Watts; None picks the scale-aware default
    tau: float = 1e-6
    max_rounds: int = 500
    init: str = "zf"  # "zf" or comma-separated level entries in pair order
    eps: float = 1e-6


@dataclass
class VerifySettings:
    n_angle: int = 24
    n_power: int = 24
    grid_size: int = 10
    instances: int = 5
    eps: float = 1e-8
    cloud_tol: float = 0.1


@dataclass
class RunConfig:
    scenario: ScenarioSettings
    sweep: SweepSettings = field(default_factory=SweepSettings)
    distributed: DistributedSettings = field(default_factory=DistributedSettings)
    verify: VerifySettings = field(default_factory=VerifySettings)
    prefix: str = "eepareto"
    config_hash: str = ""


_SCENARIO_KEYS = {
    "links", "antennas", "eta", "circuit_power", "noise", "power_cap",
    "bandwidth", "seed", "cross_gain",
}
_SWEEP_KEYS = {"grid_size", "eps"}
_DISTRIBUTED_KEYS = {"alpha", "delta", "tau", "max_rounds", "init", "eps"}
_VERIFY_KEYS = {"n_angle", "n_power", "grid_size", "instances", "eps",
                "cloud_tol"}
_OUTPUT_KEYS = {"prefix"}
_SECTIONS = {"scenario", "sweep", "distributed", "special", "verify",
             "output"}


def _require(section, key, parser, path):
    if not parser.has_option(section, key):
        raise ConfigurationError(
            "%s: [%s] is missing required key %r" % (path, section, key)
        )
    return parser.get(section, key)


def _get_float(parser, section, key, default, *, minimum=None,
               strict_min=False):
    if not parser.has_option(section, key):
        return default
    raw = parser.get(section, key)
    try:
        value = float(raw)
    except ValueError as exc:
        raise ConfigurationError(
            "[%s] %s must be a number, got %r" % (section, key, raw)
        ) from exc
    if not math.isfinite(value):
        raise ConfigurationError("[%s] %s must be finite" % (section, key))
    if minimum is not None:
        if strict_min and not value > minimum:
            raise ConfigurationError(
                "[%s] %s must be > %g" % (section, key, minimum)
            )
        if not strict_min and value < minimum:
            raise ConfigurationError(
                "[%s] %s must be >= %g" % (section, key, minimum)
            )
    return value


def _get_int(parser, section, key, default, *, minimum=1):
    if not parser.has_option(section, key):
        return default
    raw = parser.get(section, key)
    try:
        value = int(raw)
    except ValueError as exc:
        raise ConfigurationError(
            "[%s] %s must be an integer, got %r" % (section, key, raw)
        ) from exc
    if value < minimum:
        raise ConfigurationError(
            "[%s] %s must be >= %d" % (section, key, minimum)
        )
    return value


def _parse_scenario(parser, path) -> ScenarioSettings:
    links_raw = _require("scenario", "links", parser, path)
    try:
        links = int(links_raw)
    except ValueError as exc:
        raise ConfigurationError("links must be an integer") from exc
    if links < 1:
        raise ConfigurationError("links must be >= 1")

    ant_raw = _require("scenario", "antennas", parser, path)
    pieces = [p.strip() for p in ant_raw.split(",") if p.strip()]
    try:
        ants = tuple(int(p) for p in pieces)
    except ValueError as exc:
        raise ConfigurationError(
            "antennas must be an integer or comma list, got %r" % ant_raw
        ) from exc
    if len(ants) == 1:
        ants = ants * links
    if len(ants) != links:
        raise ConfigurationError(
            "antennas lists %d entries for %d links" % (len(ants), links)
        )
    if any(m < 1 for m in ants):
        raise ConfigurationError("every antenna count must be >= 1")

    eta = _get_float(parser, "scenario", "eta", None, minimum=0.0,
                     strict_min=True)
    if eta is None:
        raise ConfigurationError("%s: [scenario] needs eta" % path)
    if eta > 1.0:
        raise ConfigurationError("eta is an efficiency, must be <= 1")

    circuit = parse_power(
        _require("scenario", "circuit_power", parser, path), "circuit_power"
    )
    noise = parse_power(
        _require("scenario", "noise", parser, path), "noise",
        allow_zero=False,
    )
    cap_raw = _require("scenario", "power_cap", parser, path)
    cap_pieces = [p.strip() for p in cap_raw.split(",") if p.strip()]
    caps = tuple(
        parse_power(p, "power_cap", allow_inf=True, allow_zero=False)
        for p in cap_pieces
    )
    if len(caps) == 1:
        caps = caps * links
    if len(caps) != links:
        raise ConfigurationError(
            "power_cap lists %d entries for %d links" % (len(caps), links)
        )

    bandwidth = _get_float(parser, "scenario", "bandwidth", 1.0,
                           minimum=0.0, strict_min=True)
    if not parser.has_option("scenario", "seed"):
        raise ConfigurationError(
            "%s: [scenario] needs seed (randomized channel draw)" % path
        )
    seed = _get_int(parser, "scenario", "seed", None, minimum=0)
    cross_gain = _get_float(parser, "scenario", "cross_gain", 1.0,
                            minimum=0.0)
    return ScenarioSettings(
        links=links, antennas=ants, eta=eta, circuit_power=circuit,
        noise=noise, power_cap=caps, bandwidth=bandwidth, seed=seed,
        cross_gain=cross_gain,
    )


def _parse_distributed(parser) -> DistributedSettings:
    settings = DistributedSettings()
    if not parser.has_section("distributed"):
        return settings
    settings.alpha = _get_float(parser, "distributed", "alpha",
                                settings.alpha, minimum=0.0)
    if parser.has_option("distributed", "delta"):
        settings.delta = parse_power(
            parser.get("distributed", "delta"), "delta"
        )
    settings.tau = _get_float(parser, "distributed", "tau", settings.tau,
                              minimum=0.0, strict_min=True)
    settings.max_rounds = _get_int(parser, "distributed", "max_rounds",
                                   settings.max_rounds)
    settings.eps = _get_float(parser, "distributed", "eps", settings.eps,
                              minimum=0.0, strict_min=True)
    if parser.has_option("distributed", "init"):
        init = parser.get("distributed", "init").strip()
        if init != "zf":
            for piece in init.split(","):
                try:
                    v = float(piece)
                except ValueError as exc:
                    raise ConfigurationError(
                        "init must be 'zf' or comma-separated level values, "
                        "got %r" % init
                    ) from exc
                if v < 0.0 or not math.isfinite(v):
                    raise ConfigurationError(
                        "explicit init levels must be finite and >= 0"
                    )
        settings.init = init
    return settings


def load_config(path: str) -> RunConfig:
    """Parse and validate a run configuration file."""
    parser = configparser.ConfigParser(
        inline_comment_prefixes=("#",), interpolation=None
    )
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    try:
        parser.read_string(text, source=path)
    except configparser.Error as exc:
        raise ConfigurationError("malformed config %s: %s"
                                 % (path, exc)) from exc

    for section in parser.sections():
        if section not in _SECTIONS:
            raise ConfigurationError(
                "%s: unknown section [%s]" % (path, section)
            )
        known = {
            "scenario": _SCENARIO_KEYS,
            "sweep": _SWEEP_KEYS,
            "distributed": _DISTRIBUTED_KEYS,
            "special": set(),
            "verify": _VERIFY_KEYS,
            "output": _OUTPUT_KEYS,
        }[section]
        for key in parser.options(section):
            if key not in known:
                raise ConfigurationError(
                    "%s: unknown key %r in [%s]" % (path, key, section)
                )

    if not parser.has_section("scenario"):
        raise ConfigurationError("%s: missing [scenario] section" % path)

    scenario = _parse_scenario(parser, path)

    sweep = SweepSettings()
    if parser.has_section("sweep"):
        sweep.grid_size = _get_int(parser, "sweep", "grid_size",
                                   sweep.grid_size)
        sweep.eps = _get_float(parser, "sweep", "eps", sweep.eps,
                               minimum=0.0, strict_min=True)

    distributed = _parse_distributed(parser)

    verify = VerifySettings()
    if parser.has_section("verify"):
        verify.n_angle = _get_int(parser, "verify", "n_angle", verify.n_angle)
        verify.n_power = _get_int(parser, "verify", "n_power", verify.n_power)
        verify.grid_size = _get_int(parser, "verify", "grid_size",
                                    verify.grid_size)
        verify.instances = _get_int(parser, "verify", "instances",
                                    verify.instances)
        verify.eps = _get_float(parser, "verify", "eps", verify.eps,
                                minimum=0.0, strict_min=True)
        verify.cloud_tol = _get_float(parser, "verify", "cloud_tol",
                                      verify.cloud_tol, minimum=0.0,
                                      strict_min=True)

    prefix = "eepareto"
    if parser.has_section("output") and parser.has_option("output", "prefix"):
        prefix = parser.get("output", "prefix").strip()
        if not prefix:
            raise ConfigurationError("output prefix must be non-empty")

    digest = hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]
    return RunConfig(
        scenario=scenario, sweep=sweep, distributed=distributed,
        verify=verify, prefix=prefix, config_hash=digest,
    )
