"""Uplink MMSE channel estimation, downlink training, and the LMMSE
estimator of the effective downlink channel (clean and under a pilot
spoofing attack).

Pilots are mutually orthonormal, so all training is simulated directly in
the pilot-projection domain: the projected observation of link (m,k) is
sqrt(tau_u rho_up) g_mk + noise with unit-variance projected noise.  This is
mathematically identical to materializing the pilot vectors and a factor
tau cheaper.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import SystemConfig
from .model import ChannelRealization, LargeScaleFading, complex_normal


@dataclass(frozen=True)
class PowerAllocation:
    eta: np.ndarray   # (M, K) legitimate power coefficients
    zeta: np.ndarray  # (N, K) adversarial power coefficients


@dataclass(frozen=True)
class UplinkEstimates:
    g_hat: np.ndarray    # (M, K)
    gamma: np.ndarray    # (M, K) var(g_hat)
    f_hat: np.ndarray    # (N, K)
    kappa: np.ndarray    # (N, K) var(f_hat)
    g_tilde: np.ndarray  # g - g_hat
    f_tilde: np.ndarray  # f - f_hat


@dataclass(frozen=True)
class EffectiveChannel:
    a: np.ndarray  # (K, K), a[k, k'] = sum_m sqrt(eta_mk') g_mk conj(g_hat_mk')
    b: np.ndarray  # (K, K), b[k, k'] = sum_n sqrt(zeta_nk') f_nk conj(f_hat_nk')


@dataclass(frozen=True)
class TrainingObservation:
    y_proj: np.ndarray      # (K,) pilot-projected downlink observation
    noise_proj: np.ndarray  # (K,) the projected noise that entered y_proj
    attack: str             # 'none' | 'psa'


@dataclass(frozen=True)
class LmmseStats:
    mean_a: np.ndarray   # (K,) E{a_kk}
    mean_y: np.ndarray   # (K,) E{y_dp,k}
    cov_ay: np.ndarray   # (K,)
    cov_yy: np.ndarray   # (K,)
    ratio: np.ndarray    # (K,) A1 = cov_ay / cov_yy


def gamma_coeff(beta, tau_u, rho_up):
    """Uplink estimate variance rho_up tau_u beta^2 / (1 + rho_up tau_u beta)."""
    beta = np.asarray(beta, dtype=float)
    return rho_up * tau_u * beta ** 2 / (1.0 + rho_up * tau_u * beta)


def kappa_coeff(theta, tau_u, rho_up):
    """Same functional form as :func:`gamma_coeff` for adversarial links."""
    return gamma_coeff(theta, tau_u, rho_up)


def uplink_estimate(channels: ChannelRealization, fading: LargeScaleFading,
                    config: SystemConfig, rng: np.random.Generator) -> UplinkEstimates:
    """MMSE estimates of every AP-user link from one projected pilot shot.

    Draw order: legitimate projected noise (M,K) then adversarial (N,K).
    """
    beta, theta = fading.beta, fading.theta
    if channels.g.shape != beta.shape or channels.f.shape != theta.shape:
        raise ValueError("channel realization does not match fading dimensions")
    snr = config.tau_u * config.rho_up
    w_g = complex_normal(rng, beta.shape)
    w_f = complex_normal(rng, theta.shape)
    coeff_g = math.sqrt(snr) * beta / (1.0 + snr * beta) if snr else np.zeros_like(beta)
    coeff_f = math.sqrt(snr) * theta / (1.0 + snr * theta) if snr else np.zeros_like(theta)
    g_hat = coeff_g * (math.sqrt(snr) * channels.g + w_g)
    f_hat = coeff_f * (math.sqrt(snr) * channels.f + w_f)
    return UplinkEstimates(
        g_hat=g_hat,
        gamma=gamma_coeff(beta, config.tau_u, config.rho_up),
        f_hat=f_hat,
        kappa=kappa_coeff(theta, config.tau_u, config.rho_up),
        g_tilde=channels.g - g_hat,
        f_tilde=channels.f - f_hat,
    )


def effective_channels(channels: ChannelRealization, estimates: UplinkEstimates,
                       alloc: PowerAllocation) -> EffectiveChannel:
    """Effective downlink channels seen by each user under conjugate
    beamforming from the legitimate and adversarial AP sets."""
    a = channels.g.T @ np.conj(np.sqrt(alloc.eta) * estimates.g_hat)
    k = channels.g.shape[1]
    if alloc.zeta.shape[0]:
        b = channels.f.T @ np.conj(np.sqrt(alloc.zeta) * estimates.f_hat)
    else:
        b = np.zeros((k, k), dtype=complex)
    return EffectiveChannel(a=a, b=b)


def lmmse_stats(alloc: PowerAllocation, fading: LargeScaleFading,
                gamma: np.ndarray, config: SystemConfig) -> LmmseStats:
    """Closed-form first/second-order statistics the user applies to estimate
    its effective channel from the projected downlink training shot.

    cov_yy = 1 + tau_d rho_dp xi_k with xi_k = sum_m eta_mk beta_mk gamma_mk.
    """
    snr_dp = config.tau_d * config.rho_dp
    mean_a = (np.sqrt(alloc.eta) * gamma).sum(axis=0)
    xi = (alloc.eta * fading.beta * gamma).sum(axis=0)
    mean_y = math.sqrt(snr_dp) * mean_a
    cov_ay = math.sqrt(snr_dp) * xi
    cov_yy = 1.0 + snr_dp * xi
    return LmmseStats(mean_a=mean_a, mean_y=mean_y, cov_ay=cov_ay,
                      cov_yy=cov_yy, ratio=cov_ay / cov_yy)


def downlink_observation(effective: EffectiveChannel, config: SystemConfig,
                         rng: np.random.Generator, attack: str = "none"
                         ) -> TrainingObservation:
    """Pilot-projected downlink training observation per user; under a PSA
    the adversarial beamformed pilots add sqrt(tau_d mu_dp) b_kk."""
    if attack not in ("none", "psa"):
        raise ValueError(f"unknown attack mode {attack!r}")
    a_kk = np.diagonal(effective.a)
    noise = complex_normal(rng, a_kk.shape)
    y = math.sqrt(config.tau_d * config.rho_dp) * a_kk + noise
    if attack == "psa":
        y = y + math.sqrt(config.tau_d * config.mu_dp) * np.diagonal(effective.b)
    return TrainingObservation(y_proj=y, noise_proj=noise, attack=attack)


def estimate_effective(obs: TrainingObservation, stats: LmmseStats) -> np.ndarray:
    """LMMSE estimate a_hat = E{a} + A1 (y - E{y}); the user applies the
    clean statistics whether or not the observation was attacked."""
    if np.any(stats.cov_yy <= 0):
        raise ValueError("cov_yy must be positive")
    return stats.mean_a + stats.ratio * (obs.y_proj - stats.mean_y)
