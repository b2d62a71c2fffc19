"""Network geometry, large-scale fading, and small-scale channel draws.

Randomness is organized as named substreams derived from the master seed, so
any quantity can be redrawn independently and trials can be evaluated in
parallel with results independent of scheduling:

    rng_stream(seed, purpose, index)  ->  numpy Generator

``purpose`` is one of the registered tags below and ``index`` a free integer
(drop number, trial-chunk number, ...).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import SystemConfig

# Registered substream purposes.  The integer ids are part of the on-disk
# reproducibility contract: do not renumber.
PURPOSES = {
    "layout": 0,
    "shadowing": 1,
    "smallscale": 2,
    "uplink-noise": 3,
    "downlink-noise": 4,
    "mc": 5,
    "drop": 6,
}

# Three-slope path loss: breakpoints at 10 m and 50 m, Hata-COST231 constant
# for a 15 m AP and a 1.65 m user.
D0_KM = 0.010
D1_KM = 0.050
AP_HEIGHT_M = 15.0
USER_HEIGHT_M = 1.65
MIN_DISTANCE_KM = 0.001  # 1 m clamp; the <= 10 m slope is flat anyway


def rng_stream(seed: int, purpose: str, index: int = 0) -> np.random.Generator:
    ss = np.random.SeedSequence(seed, spawn_key=(PURPOSES[purpose], index))
    return np.random.default_rng(ss)


@dataclass(frozen=True)
class Layout:
    ap: np.ndarray     # (M, 2) km
    adv: np.ndarray    # (N, 2) km
    user: np.ndarray   # (K, 2) km


@dataclass(frozen=True)
class LargeScaleFading:
    beta: np.ndarray        # (M, K) linear gains, legitimate APs
    theta: np.ndarray       # (N, K) linear gains, adversarial APs
    pl_db: np.ndarray       # (M, K) path-loss component of beta (dB)
    shadow_db: np.ndarray   # (M, K) shadowing component of beta (dB)
    pl_db_adv: np.ndarray
    shadow_db_adv: np.ndarray
    layout: Layout


@dataclass(frozen=True)
class ChannelRealization:
    g: np.ndarray  # (M, K) complex, g_mk = h_mk sqrt(beta_mk)
    f: np.ndarray  # (N, K) complex, f_nk = q_nk sqrt(theta_nk)


def generate_layout(config: SystemConfig, rng: np.random.Generator) -> Layout:
    """Uniform i.i.d. positions in the square; draws APs, adversaries, users
    in that fixed order."""
    side = config.area_side
    ap = rng.uniform(0.0, side, size=(config.m_aps, 2))
    adv = rng.uniform(0.0, side, size=(config.n_adv, 2))
    user = rng.uniform(0.0, side, size=(config.k_users, 2))
    return Layout(ap=ap, adv=adv, user=user)


def _cost231_constant(carrier_ghz: float) -> float:
    f_mhz = carrier_ghz * 1000.0
    lf = math.log10(f_mhz)
    return (46.3 + 33.9 * lf - 13.82 * math.log10(AP_HEIGHT_M)
            - (1.1 * lf - 0.7) * USER_HEIGHT_M + (1.56 * lf - 0.8))


def path_loss_db(distance_km, config: SystemConfig):
    """Three-slope path loss in dB (<= 0), continuous and non-increasing.

    -L - 35 log10(d)                  for d >  d1
    -L - 15 log10(d1) - 20 log10(d)   for d0 < d <= d1
    -L - 15 log10(d1) - 20 log10(d0)  for d <= d0
    """
    L = _cost231_constant(config.carrier_freq)
    d = np.maximum(np.asarray(distance_km, dtype=float), MIN_DISTANCE_KM)
    far = -L - 35.0 * np.log10(d)
    mid = -L - 15.0 * math.log10(D1_KM) - 20.0 * np.log10(d)
    near = -L - 15.0 * math.log10(D1_KM) - 20.0 * math.log10(D0_KM)
    out = np.where(d > D1_KM, far, np.where(d > D0_KM, mid, near))
    return out if out.ndim else float(out)


def _distances_km(points_a: np.ndarray, points_b: np.ndarray) -> np.ndarray:
    diff = points_a[:, None, :] - points_b[None, :, :]
    return np.maximum(np.hypot(diff[..., 0], diff[..., 1]), MIN_DISTANCE_KM)


def large_scale(layout: Layout, config: SystemConfig,
                rng: np.random.Generator) -> LargeScaleFading:
    """beta_mk = PL_mk * 10^(sigma_sh z_mk / 10), i.i.d. z ~ N(0,1); theta
    is modeled the same way for the adversarial APs.  Draw order: legitimate
    shadowing then adversarial shadowing."""
    if layout.ap.shape[0] != config.m_aps or layout.adv.shape[0] != config.n_adv \
            or layout.user.shape[0] != config.k_users:
        raise ValueError("layout dimensions do not match config")
    pl = path_loss_db(_distances_km(layout.ap, layout.user), config)
    pl_adv = path_loss_db(_distances_km(layout.adv, layout.user), config)
    shadow = config.sigma_sh * rng.standard_normal(pl.shape)
    shadow_adv = config.sigma_sh * rng.standard_normal(pl_adv.shape)
    beta = 10.0 ** ((pl + shadow) / 10.0)
    theta = 10.0 ** ((pl_adv + shadow_adv) / 10.0)
    return LargeScaleFading(beta=beta, theta=theta, pl_db=pl, shadow_db=shadow,
                            pl_db_adv=pl_adv, shadow_db_adv=shadow_adv, layout=layout)


def complex_normal(rng: np.random.Generator, shape) -> np.ndarray:
    """CN(0, 1) samples: real and imaginary parts N(0, 1/2) each."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) \
        * math.sqrt(0.5)


def sample_small_scale(config: SystemConfig, rng: np.random.Generator):
    """i.i.d. CN(0,1) small-scale coefficients (h for legitimate links, q for
    adversarial links); h is drawn before q."""
    h = complex_normal(rng, (config.m_aps, config.k_users))
    q = complex_normal(rng, (config.n_adv, config.k_users))
    return h, q


def channel_realization(fading: LargeScaleFading, h: np.ndarray,
                        q: np.ndarray) -> ChannelRealization:
    return ChannelRealization(g=h * np.sqrt(fading.beta),
                              f=q * np.sqrt(fading.theta))


def draw_channels(fading: LargeScaleFading, config: SystemConfig,
                  rng: np.random.Generator) -> ChannelRealization:
    h, q = sample_small_scale(config, rng)
    return channel_realization(fading, h, q)


def drop_fading(config: SystemConfig, drop: int = 0) -> LargeScaleFading:
    """One network drop: layout plus large-scale fading, reproducible from
    (seed, drop)."""
    layout = generate_layout(config, rng_stream(config.seed, "layout", drop))
    return large_scale(layout, config, rng_stream(config.seed, "shadowing", drop))
