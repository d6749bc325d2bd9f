import numpy as np
import pytest

from dimerqpt.config import DEFAULT_MULTIPLES, T_C, ConfigError, load_config
from dimerqpt.process import PORPHYRIN_RATES
from dimerqpt.units import boltzmann_ratio


def test_defaults():
    cfg = load_config()
    assert np.allclose(cfg.times, T_C * np.array(DEFAULT_MULTIPLES))
    assert np.allclose(cfg.times, [23.75, 47.5, 71.25, 95.0, 213.75, 237.5])
    assert cfg.configs == ("zzzz", "zzxx")
    assert np.degrees(cfg.phi) == pytest.approx(65.0)
    assert cfg.model.k_down == PORPHYRIN_RATES["aabb"]
    assert cfg.model.balance_error() < 1e-12
    assert cfg.dephasing["ag"] == pytest.approx(0.0134)
    assert cfg.pulses.sigma == pytest.approx(8.49, abs=5e-3)


def test_manifest_is_json_ready():
    import json

    text = json.dumps(load_config().manifest())
    assert "omega_alpha_beta_cm" in text


def test_overrides(tmp_path):
    p = tmp_path / "c.ini"
    p.write_text("[dimer]\nphi_deg = 90\n[grid]\nt_fs = 10, 20\n[bath]\ngamma = 0.02\n")
    cfg = load_config(p)
    assert cfg.phi == pytest.approx(np.pi / 2)
    assert np.array_equal(cfg.times, [10.0, 20.0])
    assert cfg.dephasing["fb"] == 0.02
    assert cfg.source == str(p)


def test_unitary_keeps_line_width():
    cfg = load_config(text="[bath]\nmodel = unitary\n")
    assert all(v == 0 for v in cfg.model.rates.values())
    assert cfg.dephasing["ag"] > 0


def test_explicit_uphill_must_balance():
    with pytest.raises(ConfigError) as err:
        load_config(text="[bath]\nk_up = 8.02e-4\n")
    assert "detailed balance" in str(err.value)
    up = PORPHYRIN_RATES["aabb"] / boltzmann_ratio(350.0, 273.0)
    cfg = load_config(text=f"[bath]\nk_up = {up!r}\n")
    assert cfg.model.k_up == up


@pytest.mark.parametrize(
    "text, line, key",
    [
        ("[dimer]\nphi_deg = 200\n", 2, "phi_deg"),
        ("[dimer]\n\nJ = abc\n", 3, "j"),
        ("[pulses]\ncarriers = 1, 2\n", 2, "carriers"),
        ("[pulses]\nconfigs = zzzz, yyyy\n", 2, "configs"),
        ("[grid]\nt_fs = 0, 10\n", 2, "t_fs"),
        ("[grid]\nt_fs = 20, 10\n", 2, "t_fs"),
        ("[bath]\nmodel = lindblad\n", 2, "model"),
        ("[bath]\nr_ag = -1\n", 2, "r_ag"),
        ("[pulses]\ncommon = 1\n", 2, "common"),
    ],
)
def test_errors_carry_line_numbers(tmp_path, text, line, key):
    p = tmp_path / "bad.ini"
    p.write_text(text)
    with pytest.raises(ConfigError) as err:
        load_config(p)
    msg = str(err.value)
    assert f"bad.ini:{line}" in msg
    assert key in msg


def test_missing_file():
    with pytest.raises(ConfigError):
        load_config("/nonexistent/config.ini")


def test_syntax_error():
    with pytest.raises(ConfigError):
        load_config(text="no section header\n")
