"""Scalar system configuration and the key=value config-file format.

All transmit powers are carried internally as *normalized* linear SNRs:
transmit power divided by the thermal noise power over the configured
bandwidth.  Noise power follows the usual budget

    P_noise [dBm] = -174 + 10*log10(bandwidth [Hz]) + noise figure,

with a 9 dB noise figure.  Config files may give the SNR fields either as a
raw linear value or as a power with an explicit ``mW`` or ``dBm`` suffix
(``rho_dp = 200mW``), converted on load.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace

NOISE_FLOOR_DBM_PER_HZ = -174.0  # thermal noise PSD at 290 K
NOISE_FIGURE_DB = 9.0

# Default transmit powers (mW): downlink pilots 200 mW; the adversaries spend
# the same budget in whichever phase they attack; uplink pilots 100 mW.
_DEFAULT_POWER_MW = {
    "rho_up": 100.0,
    "rho_dp": 200.0,
    "rho_d": 200.0,
    "mu_dp": 200.0,
    "rho_da": 200.0,
}

_SNR_FIELDS = tuple(_DEFAULT_POWER_MW)
_INT_FIELDS = ("m_aps", "n_adv", "k_users", "tau_u", "tau_d", "tau_c", "seed", "trials")


class ConfigError(ValueError):
    """Invalid configuration value or unknown key (CLI exit code 2)."""


class InfeasibleConfigError(ConfigError):
    """Configuration with no usable payload fraction (CLI exit code 3)."""


@dataclass(frozen=True)
class SystemConfig:
    m_aps: int = 128         # legitimate APs (M)
    n_adv: int = 32          # adversarial APs (N)
    k_users: int = 4         # users (K)
    tau_u: int = 32          # uplink pilot length (symbols)
    tau_d: int = 32          # downlink pilot length (symbols)
    tau_c: int = 200         # coherence interval (symbols)
    rho_up: float = None     # uplink pilot SNR (linear, normalized)
    rho_dp: float = None     # downlink pilot SNR
    rho_d: float = None      # downlink data SNR
    mu_dp: float = None      # adversarial downlink-pilot SNR
    rho_da: float = None     # adversarial data-phase SNR
    alpha_dl: float = 0.5    # downlink payload fraction
    area_side: float = 1.0   # square side (km)
    sigma_sh: float = 8.0    # shadowing std-dev (dB)
    carrier_freq: float = 1.9  # GHz
    bandwidth: float = 20.0    # MHz
    seed: int = 1            # master seed
    trials: int = 100000     # Monte Carlo sample count

    def __post_init__(self):
        for name, power_mw in _DEFAULT_POWER_MW.items():
            if getattr(self, name) is None:
                object.__setattr__(self, name, snr_from_power(power_mw, self))

    def prelog(self) -> float:
        """Payload prelog alpha_dl * (1 - (tau_u + tau_d) / tau_c)."""
        return self.alpha_dl * (1.0 - (self.tau_u + self.tau_d) / self.tau_c)


def noise_power_dbm(config: SystemConfig) -> float:
    bw_hz = config.bandwidth * 1e6
    return NOISE_FLOOR_DBM_PER_HZ + 10.0 * math.log10(bw_hz) + NOISE_FIGURE_DB


def snr_from_power(power_mw: float, config: SystemConfig) -> float:
    """Normalized linear SNR of a transmit power given the noise budget."""
    if power_mw < 0:
        raise ConfigError(f"negative power: {power_mw}")
    if power_mw == 0:
        return 0.0
    noise_mw = 10.0 ** (noise_power_dbm(config) / 10.0)
    return power_mw / noise_mw


def validate(config: SystemConfig) -> SystemConfig:
    """Check every invariant; returns the config for chaining."""
    c = config
    if c.m_aps < 1 or c.k_users < 1:
        raise ConfigError("m_aps and k_users must be >= 1")
    if c.n_adv < 0:
        raise ConfigError("n_adv must be >= 0")
    if c.tau_u < 1 or c.tau_d < 1 or c.tau_c < 1:
        raise ConfigError("pilot/coherence lengths must be >= 1")
    if c.tau_u < c.k_users or c.tau_d < c.k_users:
        raise ConfigError("orthonormal pilots need tau_u >= k_users and tau_d >= k_users")
    if c.tau_u + c.tau_d >= c.tau_c:
        raise InfeasibleConfigError(
            f"tau_u + tau_d = {c.tau_u + c.tau_d} leaves no payload in tau_c = {c.tau_c}")
    for name in _SNR_FIELDS:
        if getattr(c, name) < 0:
            raise ConfigError(f"{name} must be >= 0")
    if not 0.0 <= c.alpha_dl <= 1.0:
        raise ConfigError("alpha_dl must lie in [0, 1]")
    if c.area_side <= 0:
        raise ConfigError("area_side must be > 0")
    if c.sigma_sh < 0:
        raise ConfigError("sigma_sh must be >= 0")
    if c.bandwidth <= 0 or c.carrier_freq <= 0:
        raise ConfigError("bandwidth and carrier_freq must be > 0")
    if c.trials < 1:
        raise ConfigError("trials must be >= 1")
    if not 0 <= c.seed < 2 ** 64:
        raise ConfigError("seed must be an unsigned 64-bit integer")
    return c


def _parse_scalar(key: str, raw: str, bandwidth_mhz: float):
    raw = raw.strip()
    try:
        if key in _INT_FIELDS:
            return int(raw)
        if key in _SNR_FIELDS:
            low = raw.lower()
            probe = SystemConfig(bandwidth=bandwidth_mhz)
            if low.endswith("dbm"):
                return snr_from_power(10.0 ** (float(raw[:-3]) / 10.0), probe)
            if low.endswith("mw"):
                return snr_from_power(float(raw[:-2]), probe)
            return float(raw)
        return float(raw)
    except ValueError as exc:
        raise ConfigError(f"bad value for config key '{key}': {raw!r}") from exc


def parse_config_text(text: str, base: SystemConfig | None = None) -> SystemConfig:
    """Parse 'key = value' lines; '#' starts a comment; later keys win."""
    known = {f.name for f in fields(SystemConfig)}
    pairs = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in known:
            raise ConfigError(f"unknown config key '{key}'")
        pairs[key] = raw

    # bandwidth must be resolved before any power suffix is converted
    bandwidth = (base.bandwidth if base is not None else SystemConfig.bandwidth)
    if "bandwidth" in pairs:
        bandwidth = _parse_scalar("bandwidth", pairs["bandwidth"], bandwidth)
    values = {k: _parse_scalar(k, raw, bandwidth) for k, raw in pairs.items()}
    config = replace(base, **values) if base is not None else SystemConfig(**values)
    return validate(config)


def load_config(path) -> SystemConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config_text(fh.read())


def apply_overrides(config: SystemConfig, overrides) -> SystemConfig:
    """Apply CLI '--set key=value' strings on top of a config."""
    return parse_config_text("\n".join(overrides), base=config)


def config_header(config: SystemConfig) -> str:
    """Canonical single-line 'key=value' rendering (lossless, CSV header)."""
    parts = []
    for f in fields(SystemConfig):
        v = getattr(config, f.name)
        parts.append(f"{f.name}={v!r}" if isinstance(v, float) else f"{f.name}={v}")
    return " ".join(parts)


def parse_header(line: str) -> SystemConfig:
    """Invert :func:`config_header` (used by `validate` on emitted CSVs)."""
    return parse_config_text(line.replace(" ", "\n"))


def config_file_text(config: SystemConfig) -> str:
    lines = ["# cfmimo configuration (linear normalized SNRs; see README)"]
    for f in fields(SystemConfig):
        v = getattr(config, f.name)
        lines.append(f"{f.name} = {v!r}" if isinstance(v, float) else f"{f.name} = {v}")
    return "\n".join(lines) + "\n"
