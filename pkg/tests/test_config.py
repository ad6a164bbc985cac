import pytest

from pcrampim import config as config_mod
from pcrampim.config import SimConfig, from_dict, loads
from pcrampim.errors import ConfigError


def test_default_file_matches_dataclass_defaults():
    assert config_mod.load().fingerprint() == SimConfig().fingerprint()


def test_defaults():
    cfg = config_mod.load()
    assert (cfg.timing.t_read, cfg.timing.t_write) == (48.0, 60.0)
    assert cfg.geometry.capacity_bytes == 16 * 2 ** 30
    assert cfg.pim_banks == list(range(128, 256))
    assert cfg.lut_seed == 0xC0FFEE


def test_addon_energy():
    cfg = SimConfig()
    assert cfg.addon_energy("B_TO_S") == pytest.approx(9.504)
    assert cfg.addon_energy("S_TO_B") == pytest.approx(32 * (185.0 + 149.19))
    assert cfg.addon_energy("ANN_MUL") == 0.0


@pytest.mark.parametrize("text", [
    "geometry = 3\n",
    "schema_version = 1\n[timing]\nt_read = 4\n",
    "schema_version = 1\nextra = 1\n",
    "[timing]\nt_read_ns = 4.0\n",
    "schema_version = 2\n",
    "schema_version = 1\n[engine]\nacc_cost_mode = 'fast'\n",
    "schema_version = 1\n[engine]\npim_channels = [5]\n",
    "schema_version = 1\n[compiler]\npool_window = 4\n",
    "schema_version = 1\n[geometry]\nchannels = 0\n",
    "schema_version = 1\n[stochastic]\nrotation_stride = 300\n",
    "schema_version = 1\n[energy.command_addons]\nANN_MUL = { 'Warp Core' = 1 }\n",
    "not toml [[\n",
])
def test_rejects(text):
    with pytest.raises(ConfigError):
        loads(text)


def test_fingerprint_tracks_content():
    a = loads("schema_version = 1\n")
    b = loads("schema_version = 1\n[timing]\nt_read_ns = 49.0\n")
    assert a.fingerprint() == SimConfig().fingerprint()
    assert a.fingerprint() != b.fingerprint()
    assert len(a.fingerprint()) == 64


def test_roundtrip_dict():
    cfg = SimConfig(accumulation_mode="sequential", pim_channels=(0, 1))
    assert from_dict(cfg.to_dict()).fingerprint() == cfg.fingerprint()


def test_overrides_are_validated():
    with pytest.raises(ConfigError):
        SimConfig().with_overrides(pool_window=5)


def test_missing_file():
    with pytest.raises(ConfigError):
        config_mod.load("/nonexistent/cfg.toml")
