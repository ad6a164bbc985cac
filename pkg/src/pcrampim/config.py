"""Versioned simulator configuration (TOML)."""

import hashlib
import json
import os
import sys
from dataclasses import dataclass, field, replace
from importlib import resources

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError
from .pcram import TABLE3_ADDONS, EnergyParams, PcramGeometry, TimingParams
from .stochastic import DEFAULT_ROTATION_STRIDE, DEFAULT_SEED, DEFAULT_SELECT_OFFSET

SCHEMA_VERSION = 1
CONFIG_ENV = "PCRAMPIM_CONFIG"

DEFAULT_COMMAND_ADDONS = {
    "B_TO_S": {"SRAM-LUT": 32},
    "S_TO_B": {"ReLU Logic": 32, "8:256 Demux": 32},
    "ANN_POOL": {"Pooling Logic": 1},
}

_SECTIONS = {
    "schema_version": None,
    "geometry": {"channels", "ranks_per_channel", "banks_per_rank", "partitions_per_bank",
                 "rows_per_partition", "bits_per_row", "block_bits", "compute_partition"},
    "timing": {"t_read_ns", "t_write_ns"},
    "energy": {"e_read_pj", "e_write_pj", "addons", "command_addons"},
    "stochastic": {"lut_seed", "rotation_stride", "select_offset"},
    "engine": {"acc_cost_mode", "accumulation_mode", "pim_channels"},
    "compiler": {"pool_window", "conv_padding"},
}

COMMAND_KINDS = ("B_TO_S", "ANN_MUL", "ANN_ACC", "S_TO_B", "ANN_POOL")


@dataclass(frozen=True)
class SimConfig:
    geometry: PcramGeometry = field(default_factory=PcramGeometry)
    compute_partition: int = 15
    timing: TimingParams = field(default_factory=TimingParams)
    energy: EnergyParams = field(default_factory=EnergyParams)
    command_addons: dict = field(default_factory=lambda: {k: dict(v) for k, v in DEFAULT_COMMAND_ADDONS.items()})
    lut_seed: int = DEFAULT_SEED
    rotation_stride: int = DEFAULT_ROTATION_STRIDE
    select_offset: int = DEFAULT_SELECT_OFFSET
    acc_cost_mode: str = "table1"
    accumulation_mode: str = "tree"
    pim_channels: tuple = (1,)
    pool_window: int = 2
    conv_padding: str = "auto"
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        self.validate()

    def validate(self):
        g = self.geometry
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {self.schema_version}; expected {SCHEMA_VERSION}")
        if not 0 <= self.compute_partition < g.partitions_per_bank:
            raise ConfigError("compute_partition outside the bank")
        if g.partitions_per_bank < 2:
            raise ConfigError("need at least one partition besides the compute partition")
        if self.timing.t_read < 0 or self.timing.t_write < 0:
            raise ConfigError("timings must be non-negative")
        if self.acc_cost_mode not in ("table1", "flow3"):
            raise ConfigError(f"acc_cost_mode must be table1 or flow3, got {self.acc_cost_mode!r}")
        if self.accumulation_mode not in ("tree", "sequential"):
            raise ConfigError(f"accumulation_mode must be tree or sequential, got {self.accumulation_mode!r}")
        if self.pool_window not in (2, 3):
            raise ConfigError("pool_window must be 2 or 3")
        if self.conv_padding not in ("valid", "same", "auto"):
            raise ConfigError("conv_padding must be valid, same or auto")
        if not self.pim_channels:
            raise ConfigError("pim_channels must not be empty")
        for ch in self.pim_channels:
            if not 0 <= ch < g.channels:
                raise ConfigError(f"pim channel {ch} outside 0..{g.channels - 1}")
        if not 0 <= self.lut_seed < 2 ** 64:
            raise ConfigError("lut_seed must be a 64-bit unsigned integer")
        for name in ("rotation_stride", "select_offset"):
            if not 0 <= getattr(self, name) < 256:
                raise ConfigError(f"{name} must be in 0..255")
        for kind, usage in self.command_addons.items():
            if kind not in COMMAND_KINDS:
                raise ConfigError(f"unknown command kind {kind!r} in command_addons")
            for comp, count in usage.items():
                if comp not in self.energy.addon:
                    raise ConfigError(f"command_addons.{kind} uses unknown component {comp!r}")
                if count < 0:
                    raise ConfigError("add-on counts must be non-negative")

    @property
    def pim_banks(self) -> list:
        g = self.geometry
        per_channel = g.ranks_per_channel * g.banks_per_rank
        return [ch * per_channel + i for ch in sorted(set(self.pim_channels)) for i in range(per_channel)]

    def addon_energy(self, kind: str) -> float:
        usage = self.command_addons.get(kind, {})
        return float(sum(count * self.energy.addon[comp][0] for comp, count in sorted(usage.items())))

    def to_dict(self) -> dict:
        g = self.geometry
        return {
            "schema_version": self.schema_version,
            "geometry": {
                "channels": g.channels, "ranks_per_channel": g.ranks_per_channel,
                "banks_per_rank": g.banks_per_rank, "partitions_per_bank": g.partitions_per_bank,
                "rows_per_partition": g.rows_per_partition, "bits_per_row": g.bits_per_row,
                "block_bits": g.block_bits, "compute_partition": self.compute_partition,
            },
            "timing": {"t_read_ns": self.timing.t_read, "t_write_ns": self.timing.t_write},
            "energy": {
                "e_read_pj": self.energy.e_read, "e_write_pj": self.energy.e_write,
                "addons": {k: list(v) for k, v in sorted(self.energy.addon.items())},
                "command_addons": {k: dict(sorted(v.items())) for k, v in sorted(self.command_addons.items())},
            },
            "stochastic": {"lut_seed": self.lut_seed, "rotation_stride": self.rotation_stride,
                           "select_offset": self.select_offset},
            "engine": {"acc_cost_mode": self.acc_cost_mode, "accumulation_mode": self.accumulation_mode,
                       "pim_channels": list(self.pim_channels)},
            "compiler": {"pool_window": self.pool_window, "conv_padding": self.conv_padding},
        }

    def fingerprint(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def with_overrides(self, **kwargs) -> "SimConfig":
        return replace(self, **kwargs)


def from_dict(data: dict) -> SimConfig:
    for key, value in data.items():
        if key not in _SECTIONS:
            raise ConfigError(f"unknown config key {key!r}")
        allowed = _SECTIONS[key]
        if allowed is not None:
            if not isinstance(value, dict):
                raise ConfigError(f"[{key}] must be a table")
            for sub in value:
                if sub not in allowed:
                    raise ConfigError(f"unknown config key {key}.{sub}")

    if "schema_version" not in data:
        raise ConfigError("config is missing schema_version")
    geo = dict(data.get("geometry", {}))
    compute_partition = geo.pop("compute_partition", None)
    timing = data.get("timing", {})
    energy = data.get("energy", {})
    stoch = data.get("stochastic", {})
    engine = data.get("engine", {})
    compiler = data.get("compiler", {})
    try:
        geometry = PcramGeometry(**geo)
        addons = energy.get("addons", TABLE3_ADDONS)
        addon_table = {}
        for name, pair in addons.items():
            if not isinstance(pair, (list, tuple)) or len(pair) != 2:
                raise ConfigError(f"energy.addons.{name} must be [energy_pj, delay_ns]")
            addon_table[name] = (float(pair[0]), float(pair[1]))
        if "command_addons" in energy:
            cmd_addons = {k: dict(v) for k, v in energy["command_addons"].items()}
        elif "addons" in energy:
            cmd_addons = {k: {c: n for c, n in v.items() if c in addon_table}
                          for k, v in DEFAULT_COMMAND_ADDONS.items()}
        else:
            cmd_addons = {k: dict(v) for k, v in DEFAULT_COMMAND_ADDONS.items()}
        cfg = SimConfig(
            geometry=geometry,
            compute_partition=geometry.partitions_per_bank - 1 if compute_partition is None else compute_partition,
            timing=TimingParams(float(timing.get("t_read_ns", 48.0)), float(timing.get("t_write_ns", 60.0))),
            energy=EnergyParams(float(energy.get("e_read_pj", 25.6)), float(energy.get("e_write_pj", 1536.0)),
                                addon_table),
            command_addons=cmd_addons,
            lut_seed=int(stoch.get("lut_seed", DEFAULT_SEED)),
            rotation_stride=int(stoch.get("rotation_stride", DEFAULT_ROTATION_STRIDE)),
            select_offset=int(stoch.get("select_offset", DEFAULT_SELECT_OFFSET)),
            acc_cost_mode=engine.get("acc_cost_mode", "table1"),
            accumulation_mode=engine.get("accumulation_mode", "tree"),
            pim_channels=tuple(engine.get("pim_channels", (1,) if geometry.channels > 1 else (0,))),
            pool_window=int(compiler.get("pool_window", 2)),
            conv_padding=compiler.get("conv_padding", "auto"),
            schema_version=int(data["schema_version"]),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    return cfg


def loads(text: str) -> SimConfig:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    return from_dict(data)


def default_config_text() -> str:
    return resources.files("pcrampim").joinpath("data/default_config.toml").read_text()


def load(path=None) -> SimConfig:
    """Load ``path``, else ``$PCRAMPIM_CONFIG``, else the shipped defaults."""
    if path is None:
        path = os.environ.get(CONFIG_ENV) or None
    if path is None:
        return loads(default_config_text())
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return loads(text)
