import math

import pytest

from cfmimo.config import (
    ConfigError,
    InfeasibleConfigError,
    SystemConfig,
    apply_overrides,
    config_file_text,
    config_header,
    load_config,
    parse_config_text,
    parse_header,
    snr_from_power,
    validate,
)


def test_defaults_are_valid():
    cfg = validate(SystemConfig())
    assert cfg.m_aps == 128 and cfg.n_adv == 32 and cfg.k_users == 4


def test_snr_from_power_zero_and_linearity():
    cfg = SystemConfig()
    assert snr_from_power(0.0, cfg) == 0.0
    assert snr_from_power(400.0, cfg) == pytest.approx(2 * snr_from_power(200.0, cfg))


def test_snr_from_power_table_defaults():
    # 200 mW over 20 MHz with a 9 dB noise figure:
    # noise = -174 + 10 log10(20e6) + 9 dBm, power = 10 log10(200) dBm,
    # so the normalized SNR is exactly 115 dB.
    cfg = SystemConfig()
    noise_dbm = -174.0 + 10.0 * math.log10(20e6) + 9.0
    power_dbm = 10.0 * math.log10(200.0)
    assert snr_from_power(200.0, cfg) == pytest.approx(
        10.0 ** ((power_dbm - noise_dbm) / 10.0), rel=1e-12)
    assert cfg.rho_dp == pytest.approx(10.0 ** 11.5, rel=1e-12)


def test_parse_suffixes_and_comments(tmp_path):
    text = """
    # comment line
    m_aps = 16
    k_users = 2   # trailing comment
    tau_u = 8
    tau_d = 8
    tau_c = 40
    rho_dp = 200mW
    mu_dp = 23.0102999566398dBm
    rho_up = 12.5
    """
    cfg = parse_config_text(text)
    assert cfg.m_aps == 16
    assert cfg.rho_dp == pytest.approx(SystemConfig().rho_dp)
    # 23.0103 dBm is exactly 200 mW
    assert cfg.mu_dp == pytest.approx(cfg.rho_dp, rel=1e-10)
    assert cfg.rho_up == 12.5
    path = tmp_path / "c.cfg"
    path.write_text(text)
    assert load_config(path) == cfg


def test_unknown_key_and_bad_values():
    with pytest.raises(ConfigError, match="unknown config key 'bogus'"):
        parse_config_text("bogus = 3")
    with pytest.raises(ConfigError):
        parse_config_text("m_aps = zebra")
    with pytest.raises(ConfigError):
        validate(SystemConfig(alpha_dl=1.5))
    with pytest.raises(ConfigError):
        validate(SystemConfig(tau_u=2))  # < k_users


def test_prelog_infeasible():
    with pytest.raises(InfeasibleConfigError):
        validate(SystemConfig(tau_c=60))  # tau_u + tau_d >= tau_c


def test_header_round_trip():
    cfg = validate(SystemConfig(seed=42, sigma_sh=7.25, trials=2000))
    assert parse_header(config_header(cfg)) == cfg
    assert parse_config_text(config_file_text(cfg)) == cfg


def test_apply_overrides_with_power_suffix():
    cfg = SystemConfig()
    out = apply_overrides(cfg, ["mu_dp=400mW", "seed=9"])
    assert out.mu_dp == pytest.approx(2 * cfg.rho_dp)
    assert out.seed == 9
    with pytest.raises(ConfigError):
        apply_overrides(cfg, ["nope=1"])
