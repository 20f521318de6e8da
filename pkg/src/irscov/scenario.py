"""Link geometry, radio parameters, and large-scale path gains."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

SPEED_OF_LIGHT = 299792458.0  # [m/s]

SCHEMA_VERSION = 1

SIGN_CONVENTIONS = ("attenuation", "as-written")


class ConfigError(ValueError):
    """A scenario configuration violates the schema or an invariant."""


@dataclass(frozen=True)
class Position:
    """Planar position of a terminal or a reflecting surface."""

    x: float  # [m]
    y: float  # [m]

    def distance_to(self, other: "Position") -> float:
        return math.hypot(self.x - other.x, self.y - other.y)


@dataclass(frozen=True)
class PanelGeometry:
    """Rectangular element grid of one reflecting surface."""

    n_h: int  # elements per row
    n_v: int  # rows
    d_h: float  # horizontal element spacing [m]
    d_v: float  # vertical element spacing [m]

    def __post_init__(self):
        if self.n_h < 1 or self.n_v < 1:
            raise ConfigError("panel: n_h and n_v must be >= 1")
        if self.d_h <= 0.0 or self.d_v <= 0.0:
            raise ConfigError("panel: d_h and d_v must be > 0")

    @property
    def n_elements(self) -> int:
        return self.n_h * self.n_v

    @property
    def element_area(self) -> float:
        """Per-element area d_h*d_v [m^2], also the faithful correlation diagonal."""
        return self.d_h * self.d_v


@dataclass(frozen=True)
class RadioConfig:
    """Transmit power, noise, antenna gains, and carrier."""

    tx_power_dbm: float = 10.0  # [dBm]
    noise_floor_dbm: float = -94.0  # [dBm]
    noise_figure_db: float = 10.0  # [dB], set 0 to fold NF into the floor
    carrier_hz: float = 3e9  # [Hz]
    bandwidth_hz: float = 10e6  # [Hz], informational
    gain_tx_dbi: float = 3.2  # [dBi]
    gain_rx_dbi: float = 1.3  # [dBi]

    def __post_init__(self):
        if self.carrier_hz <= 0.0:
            raise ConfigError("radio: carrier_hz must be > 0")
        if self.bandwidth_hz <= 0.0:
            raise ConfigError("radio: bandwidth_hz must be > 0")

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_hz

    @property
    def effective_noise_dbm(self) -> float:
        """Noise floor plus receiver noise figure [dBm]."""
        return self.noise_floor_dbm + self.noise_figure_db


@dataclass(frozen=True)
class PathLossModel:
    """Log-distance path gain with antenna gains and a fixed intercept.

    The gain in dB is  gain_tx_dbi + gain_rx_dbi + intercept_db  plus the
    distance term 10*exponent*log10(d/1m), whose sign depends on the
    convention: "attenuation" subtracts it (gain shrinks with distance),
    "as-written" adds it.
    """

    exponent_link1: float = 2.0  # transmitter to surface
    exponent_link2: float = 2.0  # surface to receiver
    exponent_direct: float = 3.5  # transmitter to receiver
    intercept_db: float = -27.5  # [dB]
    sign_convention: str = "attenuation"

    def __post_init__(self):
        if self.sign_convention not in SIGN_CONVENTIONS:
            raise ConfigError(
                "path_loss: sign_convention must be one of %r" % (SIGN_CONVENTIONS,)
            )
        for name in ("exponent_link1", "exponent_link2", "exponent_direct"):
            if getattr(self, name) <= 0.0:
                raise ConfigError("path_loss: %s must be > 0" % name)


@dataclass(frozen=True)
class Scenario:
    """One deployment: terminals, surface positions, panel, radio, path loss."""

    tx: Position
    rx: Position
    irs_positions: tuple[Position, ...]
    panel: PanelGeometry
    radio: RadioConfig = field(default_factory=RadioConfig)
    path_loss: PathLossModel = field(default_factory=PathLossModel)

    def __post_init__(self):
        if self.tx.distance_to(self.rx) <= 0.0:
            raise ConfigError("tx and rx must not coincide")
        if len(self.irs_positions) < 1:
            raise ConfigError("at least one surface position is required")
        for i, p in enumerate(self.irs_positions):
            if p.distance_to(self.tx) <= 0.0 or p.distance_to(self.rx) <= 0.0:
                raise ConfigError(
                    "irs_positions[%d] coincides with a terminal" % i
                )

    @property
    def m_count(self) -> int:
        return len(self.irs_positions)

    @property
    def n_elements(self) -> int:
        return self.panel.n_elements


def place_irs_uniform(m_count: int, tx: Position, rx: Position) -> tuple[Position, ...]:
    """Evenly spaced surface positions strictly between the terminals.

    Surface k (1-based) sits at fraction k/(m_count+1) of the segment, so
    none coincides with a terminal.
    """
    if m_count < 1:
        raise ConfigError("m_count must be >= 1")
    out = []
    for k in range(1, m_count + 1):
        f = k / (m_count + 1)
        out.append(Position(tx.x + f * (rx.x - tx.x), tx.y + f * (rx.y - tx.y)))
    return tuple(out)


def place_irs_random(
    m_count: int, tx: Position, rx: Position, seed: int
) -> tuple[Position, ...]:
    """Seeded uniform-random placement along the open segment between terminals."""
    if m_count < 1:
        raise ConfigError("m_count must be >= 1")
    rng = np.random.default_rng(seed)
    # keep away from the endpoints so link distances stay positive
    fracs = np.sort(rng.uniform(0.02, 0.98, size=m_count))
    return tuple(
        Position(tx.x + float(f) * (rx.x - tx.x), tx.y + float(f) * (rx.y - tx.y))
        for f in fracs
    )


def path_loss_linear(
    distance: float, exponent: float, radio: RadioConfig, model: PathLossModel
) -> float:
    """Linear power gain of one link at the given distance [m]."""
    if distance <= 0.0:
        raise ConfigError("distance must be > 0")
    term = 10.0 * exponent * math.log10(distance)
    if model.sign_convention == "attenuation":
        term = -term
    gain_db = radio.gain_tx_dbi + radio.gain_rx_dbi + model.intercept_db + term
    return 10.0 ** (gain_db / 10.0)


def transmit_snr(radio: RadioConfig) -> float:
    """Linear transmit SNR: power over the noise-figure adjusted floor."""
    return 10.0 ** ((radio.tx_power_dbm - radio.effective_noise_dbm) / 10.0)


def link_gains(scenario: Scenario) -> tuple[np.ndarray, np.ndarray]:
    """Per-surface linear gains of the incident and departing links.

    Returns (beta1, beta2), each of shape (m_count,).
    """
    b1 = np.empty(scenario.m_count)
    b2 = np.empty(scenario.m_count)
    pl = scenario.path_loss
    for i, p in enumerate(scenario.irs_positions):
        b1[i] = path_loss_linear(
            scenario.tx.distance_to(p), pl.exponent_link1, scenario.radio, pl
        )
        b2[i] = path_loss_linear(
            p.distance_to(scenario.rx), pl.exponent_link2, scenario.radio, pl
        )
    return b1, b2


def cascaded_gains(scenario: Scenario) -> tuple[np.ndarray, float]:
    """Product gains beta1*beta2 per surface and the direct-link gain.

    Returns (betas of shape (m_count,), beta_direct).
    """
    b1, b2 = link_gains(scenario)
    beta_d = path_loss_linear(
        scenario.tx.distance_to(scenario.rx),
        scenario.path_loss.exponent_direct,
        scenario.radio,
        scenario.path_loss,
    )
    return b1 * b2, beta_d


def reference_scenario(m_count: int = 15, panel_side: int = 15) -> Scenario:
    """Bundled 60 m reference deployment used by the reproduction commands.

    Square panels of panel_side**2 elements at lambda/32 spacing, surfaces
    evenly placed between the terminals, default radio and path loss.
    """
    radio = RadioConfig()
    d = radio.wavelength / 32.0
    tx = Position(0.0, 0.0)
    rx = Position(60.0, 0.0)
    return Scenario(
        tx=tx,
        rx=rx,
        irs_positions=place_irs_uniform(m_count, tx, rx),
        panel=PanelGeometry(n_h=panel_side, n_v=panel_side, d_h=d, d_v=d),
        radio=radio,
        path_loss=PathLossModel(),
    )


def desk_scenario(m_count: int = 8, panel_side: int = 8) -> Scenario:
    """Small deployment sized for quick validation runs.

    Same 60 m link and radio as the reference, but 8 surfaces with 8x8
    panels at lambda/8 spacing by default.
    """
    radio = RadioConfig()
    d = radio.wavelength / 8.0
    tx = Position(0.0, 0.0)
    rx = Position(60.0, 0.0)
    return Scenario(
        tx=tx,
        rx=rx,
        irs_positions=place_irs_uniform(m_count, tx, rx),
        panel=PanelGeometry(n_h=panel_side, n_v=panel_side, d_h=d, d_v=d),
        radio=radio,
        path_loss=PathLossModel(),
    )


# ---------------------------------------------------------------------------
# JSON configuration


def _require(obj: dict, key: str, kind, path: str):
    if key not in obj:
        raise ConfigError("%s.%s: missing required key" % (path, key))
    val = obj[key]
    if kind is float and isinstance(val, int) and not isinstance(val, bool):
        val = float(val)
    if not isinstance(val, kind) or isinstance(val, bool):
        raise ConfigError(
            "%s.%s: expected %s, got %s" % (path, key, kind.__name__, type(val).__name__)
        )
    return val


def _optional(obj: dict, key: str, kind, path: str, default):
    if key not in obj:
        return default
    return _require(obj, key, kind, path)


def _position_from(obj, path: str) -> Position:
    if not isinstance(obj, dict):
        raise ConfigError("%s: expected an object with x and y" % path)
    return Position(x=_require(obj, "x", float, path), y=_require(obj, "y", float, path))


def scenario_from_dict(cfg: dict) -> Scenario:
    """Build a Scenario from a parsed configuration dictionary.

    Raises ConfigError with the offending key path on any violation.
    """
    if not isinstance(cfg, dict):
        raise ConfigError("config: expected a JSON object at the top level")
    version = _require(cfg, "schema_version", int, "config")
    if version != SCHEMA_VERSION:
        raise ConfigError(
            "config.schema_version: expected %d, got %d" % (SCHEMA_VERSION, version)
        )
    tx = _position_from(cfg.get("tx"), "config.tx")
    rx = _position_from(cfg.get("rx"), "config.rx")

    panel_obj = cfg.get("panel")
    if not isinstance(panel_obj, dict):
        raise ConfigError("config.panel: expected an object")
    panel = PanelGeometry(
        n_h=_require(panel_obj, "n_h", int, "config.panel"),
        n_v=_require(panel_obj, "n_v", int, "config.panel"),
        d_h=_require(panel_obj, "d_h", float, "config.panel"),
        d_v=_require(panel_obj, "d_v", float, "config.panel"),
    )

    radio_obj = cfg.get("radio", {})
    if not isinstance(radio_obj, dict):
        raise ConfigError("config.radio: expected an object")
    radio = RadioConfig(
        tx_power_dbm=_optional(radio_obj, "tx_power_dbm", float, "config.radio", 10.0),
        noise_floor_dbm=_optional(radio_obj, "noise_floor_dbm", float, "config.radio", -94.0),
        noise_figure_db=_optional(radio_obj, "noise_figure_db", float, "config.radio", 10.0),
        carrier_hz=_optional(radio_obj, "carrier_hz", float, "config.radio", 3e9),
        bandwidth_hz=_optional(radio_obj, "bandwidth_hz", float, "config.radio", 10e6),
        gain_tx_dbi=_optional(radio_obj, "gain_tx_dbi", float, "config.radio", 3.2),
        gain_rx_dbi=_optional(radio_obj, "gain_rx_dbi", float, "config.radio", 1.3),
    )

    pl_obj = cfg.get("path_loss", {})
    if not isinstance(pl_obj, dict):
        raise ConfigError("config.path_loss: expected an object")
    path_loss = PathLossModel(
        exponent_link1=_optional(pl_obj, "exponent_link1", float, "config.path_loss", 2.0),
        exponent_link2=_optional(pl_obj, "exponent_link2", float, "config.path_loss", 2.0),
        exponent_direct=_optional(pl_obj, "exponent_direct", float, "config.path_loss", 3.5),
        intercept_db=_optional(pl_obj, "intercept_db", float, "config.path_loss", -27.5),
        sign_convention=_optional(
            pl_obj, "sign_convention", str, "config.path_loss", "attenuation"
        ),
    )

    if "irs_positions" in cfg:
        raw = cfg["irs_positions"]
        if not isinstance(raw, list) or not raw:
            raise ConfigError("config.irs_positions: expected a non-empty list")
        positions = tuple(
            _position_from(p, "config.irs_positions[%d]" % i) for i, p in enumerate(raw)
        )
    elif "irs_count" in cfg:
        count = _require(cfg, "irs_count", int, "config")
        placement = _optional(cfg, "irs_placement", str, "config", "even")
        if placement == "even":
            positions = place_irs_uniform(count, tx, rx)
        elif placement == "random":
            seed = _optional(cfg, "irs_seed", int, "config", 0)
            positions = place_irs_random(count, tx, rx, seed)
        else:
            raise ConfigError("config.irs_placement: expected 'even' or 'random'")
    else:
        raise ConfigError("config: one of irs_positions or irs_count is required")

    return Scenario(
        tx=tx, rx=rx, irs_positions=positions, panel=panel, radio=radio, path_loss=path_loss
    )


def load_scenario(path: str) -> Scenario:
    """Load a Scenario from a JSON file, reporting schema violations by key path."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise ConfigError("config: cannot read %s (%s)" % (path, exc)) from exc
    except json.JSONDecodeError as exc:
        raise ConfigError("config: invalid JSON in %s (%s)" % (path, exc)) from exc
    return scenario_from_dict(cfg)


def scenario_to_dict(scenario: Scenario) -> dict:
    """Inverse of scenario_from_dict, suitable for json.dump."""
    return {
        "schema_version": SCHEMA_VERSION,
        "tx": {"x": scenario.tx.x, "y": scenario.tx.y},
        "rx": {"x": scenario.rx.x, "y": scenario.rx.y},
        "irs_positions": [{"x": p.x, "y": p.y} for p in scenario.irs_positions],
        "panel": {
            "n_h": scenario.panel.n_h,
            "n_v": scenario.panel.n_v,
            "d_h": scenario.panel.d_h,
            "d_v": scenario.panel.d_v,
        },
        "radio": {
            "tx_power_dbm": scenario.radio.tx_power_dbm,
            "noise_floor_dbm": scenario.radio.noise_floor_dbm,
            "noise_figure_db": scenario.radio.noise_figure_db,
            "carrier_hz": scenario.radio.carrier_hz,
            "bandwidth_hz": scenario.radio.bandwidth_hz,
            "gain_tx_dbi": scenario.radio.gain_tx_dbi,
            "gain_rx_dbi": scenario.radio.gain_rx_dbi,
        },
        "path_loss": {
            "exponent_link1": scenario.path_loss.exponent_link1,
            "exponent_link2": scenario.path_loss.exponent_link2,
            "exponent_direct": scenario.path_loss.exponent_direct,
            "intercept_db": scenario.path_loss.intercept_db,
            "sign_convention": scenario.path_loss.sign_convention,
        },
    }
