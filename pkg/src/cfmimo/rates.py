"""Closed-form per-user downlink rates for both attack modes, the clean
baseline, the sum rate, and the Monte Carlo estimators that validate every
derived expectation.

The rate expressions follow the log2(1 + E{X}/E{Y}) approximation level: the
closed forms evaluate the exact moments of the estimator/interference terms,
and :func:`mc_rate` estimates the same moments by sample means over full
channel and noise realizations, so the two routes agree up to Monte Carlo
noise.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .config import InfeasibleConfigError, SystemConfig
from .estimation import (
    PowerAllocation,
    gamma_coeff,
    kappa_coeff,
)
from .model import LargeScaleFading, complex_normal, rng_stream

MC_CHUNK = 2048  # trials per RNG substream; fixed, part of reproducibility

ATTACK_MODES = ("none", "psa", "data")


@dataclass(frozen=True)
class ClosedFormTerms:
    """Per-user constants of the closed-form SINRs (arrays of length K)."""
    eps: np.ndarray       # sum_m sqrt(eta_mk) gamma_mk
    xi: np.ndarray        # sum_m eta_mk beta_mk gamma_mk (= cross[k, k])
    ups: np.ndarray       # sum_n sqrt(zeta_nk) kappa_nk
    cross: np.ndarray     # (K, K) cross[k, k'] = sum_m eta_mk' beta_mk gamma_mk'
    varrho: np.ndarray    # tau_d rho_dp xi^2 / (1 + tau_d rho_dp xi)
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    script_D: np.ndarray  # D * (sum_n zeta theta kappa + ups^2)
    script_F: np.ndarray  # rho_da * (ups^2 + sum_k' sum_n zeta_nk' theta_nk kappa_nk')


@dataclass(frozen=True)
class RateReport:
    attack: str             # 'none' | 'psa' | 'data'
    source: str             # 'closed-form' | 'monte-carlo'
    sinr: np.ndarray        # (K,)
    rate: np.ndarray        # (K,) bits/s/Hz
    sum_rate: float         # bits/s/Hz, prelog applied
    stderr: np.ndarray | None = None   # (K,) std error of rate (MC only)
    term_stats: dict = field(default_factory=dict)  # name -> (mean(K,), se(K,))

    def rows(self):
        """Tidy CSV rows: (mode, source, user, sinr, rate, sum_rate, stderr)."""
        out = []
        for k in range(len(self.sinr)):
            se = float(self.stderr[k]) if self.stderr is not None else float("nan")
            out.append((self.attack, self.source, k, float(self.sinr[k]),
                        float(self.rate[k]), self.sum_rate, se))
        return out


def uniform_full_power_eta(gamma: np.ndarray) -> np.ndarray:
    """Default legitimate allocation eta_mk = 1 / sum_k' gamma_mk': each AP
    spends its full budget uniformly (sum_k eta_mk gamma_mk = 1)."""
    return np.broadcast_to(1.0 / gamma.sum(axis=1, keepdims=True), gamma.shape).copy()


def closed_form_terms(alloc: PowerAllocation, fading: LargeScaleFading,
                      gamma: np.ndarray, kappa: np.ndarray,
                      config: SystemConfig) -> ClosedFormTerms:
    if config.rho_d <= 0:
        raise InfeasibleConfigError("rho_d must be positive for rate evaluation")
    eta, zeta = alloc.eta, alloc.zeta
    beta, theta = fading.beta, fading.theta
    if eta.shape != beta.shape or zeta.shape != theta.shape:
        raise ValueError("allocation dimensions do not match fading")
    t, r, mu = config.tau_d, config.rho_dp, config.mu_dp

    eps = (np.sqrt(eta) * gamma).sum(axis=0)
    xi = (eta * beta * gamma).sum(axis=0)
    cross = np.einsum("mj,mk,mj->kj", eta, beta, gamma)
    varrho = t * r * xi ** 2 / (1.0 + t * r * xi)
    if zeta.shape[0]:
        ups = (np.sqrt(zeta) * kappa).sum(axis=0)
        w_own = (zeta * theta * kappa).sum(axis=0)          # sum_n zeta_nk theta_nk kappa_nk
        w_all = np.einsum("nj,nk,nj->k", zeta, theta, kappa)  # sum over all k'
    else:
        ups = w_own = w_all = np.zeros_like(eps)

    one = t * r * xi + 1.0
    interf = cross.sum(axis=1) - xi  # sum_{k' != k} cross[k, k']
    A = eps ** 2 * one ** 2 + (t * r) ** 2 * xi ** 3 + t * r * xi ** 2
    B = xi + t * r * xi ** 2 + (interf + 1.0 / config.rho_d) * one ** 2
    C = 2.0 * t * eps * xi * math.sqrt(r * mu) * one
    D = t ** 2 * r * mu * xi ** 2
    script_D = D * (w_own + ups ** 2)
    script_F = config.rho_da * (ups ** 2 + w_all)
    return ClosedFormTerms(eps=eps, xi=xi, ups=ups, cross=cross, varrho=varrho,
                           A=A, B=B, C=C, D=D, script_D=script_D, script_F=script_F)


def terms_for(fading: LargeScaleFading, config: SystemConfig,
              alloc: PowerAllocation | None = None):
    """Convenience: default allocations + coefficient matrices for a drop."""
    gamma = gamma_coeff(fading.beta, config.tau_u, config.rho_up)
    kappa = kappa_coeff(fading.theta, config.tau_u, config.rho_up)
    if alloc is None:
        from .minmax import equal_allocation
        zeta = equal_allocation(kappa) if kappa.shape[0] else np.zeros_like(kappa)
        alloc = PowerAllocation(eta=uniform_full_power_eta(gamma), zeta=zeta)
    return closed_form_terms(alloc, fading, gamma, kappa, config), alloc, gamma, kappa


def _report(attack, source, sinr, config, stderr=None, term_stats=None):
    rate = np.log2(1.0 + sinr)
    return RateReport(attack=attack, source=source, sinr=sinr, rate=rate,
                      sum_rate=sum_rate(rate, config), stderr=stderr,
                      term_stats=term_stats or {})


def clean_training_moments(terms: ClosedFormTerms):
    """Exact second moments of the clean downlink-training estimator:
    E|a_hat|^2 = eps^2 + varrho and E|a_tilde|^2 = sigma_kk - varrho."""
    return terms.eps ** 2 + terms.varrho, terms.xi - terms.varrho


def psa_training_moments(terms: ClosedFormTerms, config: SystemConfig):
    """Exact second moments of the estimator fed a spoofed training shot.

    With t = tau_d, r = rho_dp, mu = mu_dp, W = sum_n zeta theta kappa:

      E|a_hat|^2 = 2 eps ups xi t sqrt(r mu)/(t r xi + 1) + eps^2
                   + t r xi^2 (t r xi + t mu (ups^2 + W) + 1)/(t r xi + 1)^2
      E|a_til|^2 = (xi + t r xi^2 + t^2 r mu xi^2 (ups^2 + W))/(t r xi + 1)^2
    """
    t, r, mu = config.tau_d, config.rho_dp, config.mu_dp
    eps, xi, ups = terms.eps, terms.xi, terms.ups
    w_own = terms.script_D / terms.D - ups ** 2 if np.any(terms.D) else \
        np.zeros_like(ups)
    one = t * r * xi + 1.0
    e_hat = (2.0 * eps * ups * xi * t * math.sqrt(r * mu) / one + eps ** 2
             + (t * r * xi ** 2 / one ** 2)
             * (t * r * xi + t * mu * (ups ** 2 + w_own) + 1.0))
    e_til = (xi + t * r * xi ** 2
             + t ** 2 * r * mu * xi ** 2 * (ups ** 2 + w_own)) / one ** 2
    return e_hat, e_til


def adversarial_interference_moment(terms: ClosedFormTerms, config: SystemConfig):
    """Exact total jamming power sum_k' E|b_kk'|^2 = ups^2 + the
    power-weighted cross gains (the F term divided by rho_da)."""
    if config.rho_da == 0:
        raise ValueError("rho_da is zero; the moment is script_F / rho_da")
    return terms.script_F / config.rho_da


def psa_sinr(terms: ClosedFormTerms) -> np.ndarray:
    """Closed-form SINR under a downlink pilot spoofing attack."""
    return (terms.C * terms.ups + terms.script_D + terms.A) / (terms.script_D + terms.B)


def rate_psa(terms: ClosedFormTerms, config: SystemConfig) -> RateReport:
    """Per-user rate under the downlink PSA.

    Evaluates both algebraic arrangements of the same SINR (the direct ratio
    and the log2(2 + ...) rearrangement) and insists they agree to 1e-12
    relative, as a transcription guard.
    """
    if np.any(terms.B <= 0):
        raise ValueError("B must be positive")
    sinr = psa_sinr(terms)
    if not np.all(np.isfinite(sinr)):
        raise ValueError("non-finite closed-form terms")
    rate = np.log2(1.0 + sinr)
    alt = np.log2(2.0 + (terms.C * terms.ups + terms.A - terms.B)
                  / (terms.script_D + terms.B))
    if np.any(np.abs(rate - alt) > 1e-12 * np.maximum(rate, 1.0)):
        raise AssertionError("rate rearrangement mismatch beyond 1e-12")
    return _report("psa", "closed-form", sinr, config)


def data_attack_sinr(terms: ClosedFormTerms, config: SystemConfig) -> np.ndarray:
    """Closed-form SINR when adversaries jam the downlink data phase."""
    rho_d = config.rho_d
    num = rho_d * terms.eps ** 2 + rho_d * terms.varrho
    den = (rho_d * terms.cross.sum(axis=1) - rho_d * terms.varrho
           + terms.script_F + 1.0)
    if np.any(den <= 0):
        raise ValueError("nonpositive SINR denominator; corrupted terms")
    return num / den


def rate_data_attack(terms: ClosedFormTerms, alloc: PowerAllocation,
                     config: SystemConfig) -> RateReport:
    if config.rho_d <= 0:
        raise InfeasibleConfigError("rho_d must be positive")
    return _report("data", "closed-form", data_attack_sinr(terms, config), config)


def rate_clean(terms: ClosedFormTerms, config: SystemConfig) -> RateReport:
    """No-attack baseline (either attack formula with its attack power 0)."""
    return _report("none", "closed-form", terms.A / terms.B, config)


def closed_form_report(attack: str, terms: ClosedFormTerms,
                       alloc: PowerAllocation, config: SystemConfig) -> RateReport:
    if attack == "none":
        return rate_clean(terms, config)
    if attack == "psa":
        return rate_psa(terms, config)
    if attack == "data":
        return rate_data_attack(terms, alloc, config)
    raise ValueError(f"unknown attack mode {attack!r}")


def sum_rate(per_user_rates, config: SystemConfig) -> float:
    """alpha_dl (1 - (tau_u + tau_d)/tau_c) sum_k R_k."""
    if config.tau_u + config.tau_d >= config.tau_c:
        raise InfeasibleConfigError("tau_u + tau_d must be < tau_c")
    return config.prelog() * float(np.sum(per_user_rates))


def _resolve_workers(workers) -> int:
    if workers is not None:
        return max(1, int(workers))
    env = os.environ.get("CFMIMO_THREADS")
    if env:
        return max(1, int(env))
    return min(4, os.cpu_count() or 1)


def _mc_chunk(chunk_idx, n_trials, attack, config, alloc, fading, gamma, kappa, seed):
    """Per-chunk moment accumulation.  Fixed draw order per chunk: h, q,
    legitimate uplink noise, adversarial uplink noise, downlink training
    noise.  All attack modes consume the identical stream, so e.g. a PSA run
    with mu_dp = 0 is bit-identical to the clean run."""
    rng = rng_stream(seed, "mc", chunk_idx)
    M, K = fading.beta.shape
    N = fading.theta.shape[0]
    t, r, mu = config.tau_d, config.rho_dp, config.mu_dp
    snr_u = config.tau_u * config.rho_up

    h = complex_normal(rng, (n_trials, M, K))
    q = complex_normal(rng, (n_trials, N, K))
    w_g = complex_normal(rng, (n_trials, M, K))
    w_f = complex_normal(rng, (n_trials, N, K))
    n_dl = complex_normal(rng, (n_trials, K))

    g = h * np.sqrt(fading.beta)
    coeff_g = math.sqrt(snr_u) * fading.beta / (1.0 + snr_u * fading.beta)
    g_hat = coeff_g * (math.sqrt(snr_u) * g + w_g)
    a = np.einsum("tmk,tmj->tkj", g, np.conj(np.sqrt(alloc.eta) * g_hat))
    a_kk = np.einsum("tkk->tk", a)

    if N:
        f = q * np.sqrt(fading.theta)
        coeff_f = math.sqrt(snr_u) * fading.theta / (1.0 + snr_u * fading.theta)
        f_hat = coeff_f * (math.sqrt(snr_u) * f + w_f)
        b = np.einsum("tnk,tnj->tkj", f, np.conj(np.sqrt(alloc.zeta) * f_hat))
        b_kk = np.einsum("tkk->tk", b)
        b2_sum = (np.abs(b) ** 2).sum(axis=2)
    else:
        b_kk = np.zeros((n_trials, K), dtype=complex)
        b2_sum = np.zeros((n_trials, K))

    mean_a = (np.sqrt(alloc.eta) * gamma).sum(axis=0)
    xi = (alloc.eta * fading.beta * gamma).sum(axis=0)
    mean_y = math.sqrt(t * r) * mean_a
    ratio = math.sqrt(t * r) * xi / (1.0 + t * r * xi)

    y = math.sqrt(t * r) * a_kk + n_dl
    if attack == "psa":
        y = y + math.sqrt(t * mu) * b_kk
    a_hat = mean_a + ratio * (y - mean_y)
    a_til = a_kk - a_hat

    ahat2 = np.abs(a_hat) ** 2
    atil2 = np.abs(a_til) ** 2
    cross_full = np.abs(a) ** 2                      # (T, K, K) |a_kk'|^2
    cross2 = cross_full.sum(axis=2) - np.abs(a_kk) ** 2  # sum_{k' != k}

    rho_d, rho_da = config.rho_d, config.rho_da
    x_num = rho_d * ahat2
    y_den = rho_d * atil2 + rho_d * cross2 + 1.0
    if attack == "data":
        y_den = y_den + rho_da * b2_sum

    terms = {"ahat2": ahat2, "atil2": atil2, "cross2": cross2, "b2_sum": b2_sum,
             "cross_full": cross_full, "num": x_num, "den": y_den}
    out = {}
    for name, v in terms.items():
        out[name] = (v.sum(axis=0), (v * v).sum(axis=0))
    out["num_den"] = ((x_num * y_den).sum(axis=0), None)
    return out


def mc_moments(attack, config, alloc, fading, trials, seed, workers=None):
    """Sample means and standard errors of every rate-expression moment.

    Trials are split into fixed chunks of :data:`MC_CHUNK`; chunk c uses the
    ("mc", c) substream of ``seed`` and partial sums are reduced in chunk
    order, so results are bit-identical for any worker count.
    """
    if attack not in ATTACK_MODES:
        raise ValueError(f"unknown attack mode {attack!r}")
    gamma = gamma_coeff(fading.beta, config.tau_u, config.rho_up)
    kappa = kappa_coeff(fading.theta, config.tau_u, config.rho_up)
    n_chunks = (trials + MC_CHUNK - 1) // MC_CHUNK
    sizes = [MC_CHUNK] * (n_chunks - 1) + [trials - MC_CHUNK * (n_chunks - 1)]
    workers = _resolve_workers(workers)

    def run(c):
        return _mc_chunk(c, sizes[c], attack, config, alloc, fading, gamma, kappa, seed)

    if workers > 1 and n_chunks > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            partials = list(pool.map(run, range(n_chunks)))
    else:
        partials = [run(c) for c in range(n_chunks)]

    stats = {}
    names = partials[0].keys()
    for name in names:
        s1 = sum(p[name][0] for p in partials)
        if partials[0][name][1] is None:
            stats[name] = (s1 / trials, None)
            continue
        s2 = sum(p[name][1] for p in partials)
        mean = s1 / trials
        var = np.maximum(s2 / trials - mean ** 2, 0.0)
        stats[name] = (mean, np.sqrt(var / trials))
    return stats


def mc_rate(attack: str, config: SystemConfig, alloc: PowerAllocation,
            fading: LargeScaleFading, trials: int | None = None,
            seed: int | None = None, workers=None) -> RateReport:
    """Monte Carlo rate at the log2(1 + E{X}/E{Y}) approximation level.

    X is the beamforming-gain numerator and Y the interference-plus-noise
    denominator of the attack mode's SINR; both are averaged over full
    channel/noise realizations.  Standard errors per term are reported, and
    the rate stderr follows from the delta method on (X, Y) including their
    covariance.
    """
    trials = config.trials if trials is None else int(trials)
    if trials < 1000:
        raise ValueError("mc_rate needs at least 1e3 trials")
    seed = config.seed if seed is None else seed
    stats = mc_moments(attack, config, alloc, fading, trials, seed, workers)
    x_mean, x_se = stats["num"]
    y_mean, y_se = stats["den"]
    cov_xy = (stats["num_den"][0] / trials - x_mean * y_mean) / trials
    sinr = x_mean / y_mean
    var_sinr = ((x_se / y_mean) ** 2 + (x_mean * y_se / y_mean ** 2) ** 2
                - 2.0 * x_mean * cov_xy / y_mean ** 3)
    se_rate = np.sqrt(np.maximum(var_sinr, 0.0)) / ((1.0 + sinr) * math.log(2.0))
    return _report(attack, "monte-carlo", sinr, config,
                   stderr=se_rate, term_stats=stats)
