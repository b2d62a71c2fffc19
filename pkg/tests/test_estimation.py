"""Estimation-chain tests: hand values for the MMSE coefficients, Monte
Carlo checks of every estimator moment, and the exact decomposition and
orthogonality properties."""

import numpy as np
import pytest

from cfmimo.config import SystemConfig
from cfmimo.estimation import (
    PowerAllocation,
    downlink_observation,
    effective_channels,
    estimate_effective,
    gamma_coeff,
    kappa_coeff,
    lmmse_stats,
    uplink_estimate,
)
from cfmimo.model import (
    channel_realization,
    complex_normal,
    drop_fading,
    rng_stream,
    sample_small_scale,
)
from cfmimo.rates import uniform_full_power_eta
from cfmimo.minmax import equal_allocation


def small_config(**kw):
    base = dict(m_aps=8, n_adv=4, k_users=2, tau_u=8, tau_d=8, tau_c=40)
    base.update(kw)
    return SystemConfig(**base)


def test_gamma_coeff_values():
    assert gamma_coeff(0.0, 32, 100.0) == 0.0
    assert gamma_coeff(1.0, 1, 1e6) == pytest.approx(1e6 / (1 + 1e6))
    assert gamma_coeff(0.5, 32, 100.0) == pytest.approx(800.0 / 1601.0)


def test_kappa_coeff_matches_gamma_form():
    assert kappa_coeff(0.0, 32, 100.0) == 0.0
    assert kappa_coeff(0.2, 32, 100.0) == pytest.approx(128.0 / 641.0)
    x = np.linspace(0.01, 5.0, 57)
    assert np.array_equal(kappa_coeff(x, 16, 3.0), gamma_coeff(x, 16, 3.0))


def test_uplink_estimate_zero_snr_and_decomposition():
    cfg = small_config(rho_up=0.0)
    fad = drop_fading(cfg, 0)
    ch = channel_realization(fad, *sample_small_scale(cfg, rng_stream(0, "smallscale")))
    est = uplink_estimate(ch, fad, cfg, rng_stream(0, "uplink-noise"))
    assert np.all(est.g_hat == 0)
    assert np.allclose(est.g_tilde, ch.g)
    cfg2 = small_config()
    est2 = uplink_estimate(ch, fad, cfg2, rng_stream(0, "uplink-noise"))
    assert np.allclose(est2.g_hat + est2.g_tilde, ch.g, rtol=1e-9, atol=0)
    assert np.allclose(est2.f_hat + est2.f_tilde, ch.f, rtol=1e-9, atol=0)
    assert np.all(est2.gamma < fad.beta) and np.all(est2.gamma >= 0)
    assert np.all(est2.kappa < fad.theta)


def test_uplink_estimate_noiseless_high_snr_limit():
    # with the noise stream zeroed and tau_u*rho_up huge, g_hat -> g
    cfg = small_config(rho_up=1e12)
    fad = drop_fading(cfg, 0)
    ch = channel_realization(fad, *sample_small_scale(cfg, rng_stream(1, "smallscale")))
    snr = cfg.tau_u * cfg.rho_up
    coeff = np.sqrt(snr) * fad.beta / (1 + snr * fad.beta)
    g_hat = coeff * (np.sqrt(snr) * ch.g + 0.0)
    assert np.allclose(g_hat, ch.g, rtol=1e-6)


def _mc_uplink_stats(cfg, fad, trials=100_000, seed=5):
    snr = cfg.tau_u * cfg.rho_up
    coeff = np.sqrt(snr) * fad.beta / (1 + snr * fad.beta)
    s_hat2 = np.zeros_like(fad.beta)
    s_cov = np.zeros_like(fad.beta, dtype=complex)
    chunk = 10_000
    for c in range(trials // chunk):
        rng = rng_stream(seed, "mc", c)
        h = complex_normal(rng, (chunk,) + fad.beta.shape)
        g = h * np.sqrt(fad.beta)
        w = complex_normal(rng, g.shape)
        g_hat = coeff * (np.sqrt(snr) * g + w)
        g_til = g - g_hat
        s_hat2 += (np.abs(g_hat) ** 2).sum(axis=0)
        s_cov += (g_hat * np.conj(g_til)).sum(axis=0)
    return s_hat2 / trials, s_cov / trials


def test_uplink_estimator_moments():
    cfg = small_config(m_aps=4, n_adv=0, k_users=2)
    fad = drop_fading(cfg, 0)
    var_hat, cov = _mc_uplink_stats(cfg, fad)
    gamma = gamma_coeff(fad.beta, cfg.tau_u, cfg.rho_up)
    assert np.all(np.abs(var_hat / gamma - 1) < 0.02)
    # orthogonality of estimate and error, in correlation units
    denom = np.sqrt(gamma * (fad.beta - gamma))
    assert np.all(np.abs(cov) / denom < 5.0 / np.sqrt(100_000))


def synthetic_setup(seed=0, m=6, n=3, k=2, unit_scale=True):
    """Random O(1) fading for moment tests (avoids tiny physical gains)."""
    rng = np.random.default_rng(seed)
    cfg = SystemConfig(m_aps=m, n_adv=n, k_users=k, tau_u=8, tau_d=8,
                       tau_c=40, rho_up=3.0, rho_dp=5.0, mu_dp=4.0,
                       rho_d=50.0, rho_da=6.0)
    from cfmimo.model import LargeScaleFading, Layout
    beta = rng.uniform(0.1, 1.0, (m, k))
    theta = rng.uniform(0.1, 1.0, (n, k))
    fad = LargeScaleFading(beta=beta, theta=theta,
                           pl_db=10 * np.log10(beta),
                           shadow_db=np.zeros_like(beta),
                           pl_db_adv=10 * np.log10(theta),
                           shadow_db_adv=np.zeros_like(theta),
                           layout=Layout(np.zeros((m, 2)), np.zeros((n, 2)),
                                         np.zeros((k, 2))))
    gamma = gamma_coeff(beta, cfg.tau_u, cfg.rho_up)
    kappa = kappa_coeff(theta, cfg.tau_u, cfg.rho_up)
    alloc = PowerAllocation(eta=uniform_full_power_eta(gamma),
                            zeta=equal_allocation(kappa))
    return cfg, fad, alloc, gamma, kappa


def test_effective_channel_trivials():
    cfg, fad, alloc, gamma, kappa = synthetic_setup()
    ch = channel_realization(fad, *sample_small_scale(cfg, rng_stream(2, "smallscale")))
    est = uplink_estimate(ch, fad, cfg, rng_stream(2, "uplink-noise"))
    eff0 = effective_channels(ch, est, PowerAllocation(alloc.eta,
                                                       np.zeros_like(alloc.zeta)))
    assert np.all(eff0.b == 0)
    # single-term sum: M = 1, eta = 1, g = g_hat = 1
    one = type(ch)(g=np.ones((1, 1), dtype=complex), f=np.zeros((0, 1), complex))
    est1 = type(est)(g_hat=np.ones((1, 1), complex), gamma=np.ones((1, 1)),
                     f_hat=np.zeros((0, 1), complex), kappa=np.zeros((0, 1)),
                     g_tilde=np.zeros((1, 1), complex),
                     f_tilde=np.zeros((0, 1), complex))
    eff1 = effective_channels(one, est1,
                              PowerAllocation(np.ones((1, 1)), np.zeros((0, 1))))
    assert eff1.a[0, 0] == pytest.approx(1.0)


def test_effective_channel_moments():
    cfg, fad, alloc, gamma, kappa = synthetic_setup(seed=3)
    trials = 100_000
    chunk = 5_000
    k = cfg.k_users
    s_a = np.zeros(k, complex)
    s_a2 = np.zeros(k)
    s_off = np.zeros((k, k), complex)
    for c in range(trials // chunk):
        rng = rng_stream(9, "mc", c)
        h = complex_normal(rng, (chunk,) + fad.beta.shape)
        q = complex_normal(rng, (chunk,) + fad.theta.shape)
        w = complex_normal(rng, h.shape)
        snr = cfg.tau_u * cfg.rho_up
        coeff = np.sqrt(snr) * fad.beta / (1 + snr * fad.beta)
        g = h * np.sqrt(fad.beta)
        g_hat = coeff * (np.sqrt(snr) * g + w)
        a = np.einsum("tmk,tmj->tkj", g, np.conj(np.sqrt(alloc.eta) * g_hat))
        akk = np.einsum("tkk->tk", a)
        s_a += akk.sum(axis=0)
        s_a2 += (np.abs(akk) ** 2).sum(axis=0)
        s_off += a.sum(axis=0)
    mean_a = (np.sqrt(alloc.eta) * gamma).sum(axis=0)
    var_a = (alloc.eta * fad.beta * gamma).sum(axis=0)  # sigma_kk
    est_mean = s_a / trials
    est_var = s_a2 / trials - np.abs(est_mean) ** 2
    assert np.all(np.abs(est_mean - mean_a) < 4 * np.sqrt(var_a / trials))
    assert np.all(np.abs(est_var / var_a - 1) < 0.02)
    # cross-user mean is zero under orthonormal pilots
    off = s_off / trials
    np.fill_diagonal(off, 0)
    assert np.max(np.abs(off)) < 5 * np.sqrt(var_a.max() / trials)


def test_lmmse_stats_identities():
    cfg, fad, alloc, gamma, kappa = synthetic_setup(seed=4)
    stats = lmmse_stats(alloc, fad, gamma, cfg)
    assert np.all(stats.cov_yy > 0)
    # structural identity of the adopted covariance correction
    assert np.allclose(stats.cov_yy - 1.0,
                       np.sqrt(cfg.tau_d * cfg.rho_dp) * stats.cov_ay)
    zero = lmmse_stats(PowerAllocation(np.zeros_like(alloc.eta), alloc.zeta),
                       fad, gamma, cfg)
    assert np.all(zero.mean_a == 0) and np.all(zero.cov_ay == 0)
    assert np.all(zero.cov_yy == 1.0)


def test_lmmse_empirical_covariances():
    cfg, fad, alloc, gamma, kappa = synthetic_setup(seed=5)
    stats = lmmse_stats(alloc, fad, gamma, cfg)
    trials, chunk = 100_000, 5_000
    k = cfg.k_users
    s_ay = np.zeros(k, complex)
    s_y = np.zeros(k, complex)
    s_a = np.zeros(k, complex)
    s_yy = np.zeros(k)
    for c in range(trials // chunk):
        rng = rng_stream(21, "mc", c)
        ch = [complex_normal(rng, (chunk,) + fad.beta.shape),
              complex_normal(rng, (chunk,) + fad.beta.shape)]
        snr = cfg.tau_u * cfg.rho_up
        coeff = np.sqrt(snr) * fad.beta / (1 + snr * fad.beta)
        g = ch[0] * np.sqrt(fad.beta)
        g_hat = coeff * (np.sqrt(snr) * g + ch[1])
        a = np.einsum("tmk,tmk->tk", g, np.conj(np.sqrt(alloc.eta) * g_hat))
        noise = complex_normal(rng, (chunk, k))
        y = np.sqrt(cfg.tau_d * cfg.rho_dp) * a + noise
        s_a += a.sum(axis=0)
        s_y += y.sum(axis=0)
        s_ay += (a * np.conj(y)).sum(axis=0)
        s_yy += (np.abs(y) ** 2).sum(axis=0)
    cov_ay = (s_ay / trials - (s_a / trials) * np.conj(s_y / trials)).real
    cov_yy = s_yy / trials - np.abs(s_y / trials) ** 2
    assert np.all(np.abs(cov_ay / stats.cov_ay - 1) < 0.03)
    assert np.all(np.abs(cov_yy / stats.cov_yy - 1) < 0.03)


def test_downlink_observation_modes_and_variance():
    cfg, fad, alloc, gamma, kappa = synthetic_setup(seed=6)
    stats = lmmse_stats(alloc, fad, gamma, cfg)
    w_own = (alloc.zeta * fad.theta * kappa).sum(axis=0)
    trials, chunk = 100_000, 5_000
    k = cfg.k_users
    s_dev = np.zeros(k)
    for c in range(trials // chunk):
        rng = rng_stream(31, "mc", c)
        snr = cfg.tau_u * cfg.rho_up
        cg = np.sqrt(snr) * fad.beta / (1 + snr * fad.beta)
        cf = np.sqrt(snr) * fad.theta / (1 + snr * fad.theta)
        h = complex_normal(rng, (chunk,) + fad.beta.shape)
        q = complex_normal(rng, (chunk,) + fad.theta.shape)
        wg = complex_normal(rng, h.shape)
        wf = complex_normal(rng, q.shape)
        g = h * np.sqrt(fad.beta)
        f = q * np.sqrt(fad.theta)
        g_hat = cg * (np.sqrt(snr) * g + wg)
        f_hat = cf * (np.sqrt(snr) * f + wf)
        a = np.einsum("tmk,tmk->tk", g, np.conj(np.sqrt(alloc.eta) * g_hat))
        b = np.einsum("tnk,tnk->tk", f, np.conj(np.sqrt(alloc.zeta) * f_hat))
        noise = complex_normal(rng, (chunk, k))
        y = (np.sqrt(cfg.tau_d * cfg.rho_dp) * a
             + np.sqrt(cfg.tau_d * cfg.mu_dp) * b + noise)
        s_dev += (np.abs(y - stats.mean_y) ** 2).sum(axis=0)
    # E|y - E{y_clean}|^2 = cov_yy + tau_d mu_dp (var(b) + |E b|^2)
    ups = (np.sqrt(alloc.zeta) * kappa).sum(axis=0)
    expect = stats.cov_yy + cfg.tau_d * cfg.mu_dp * (w_own + ups ** 2)
    assert np.all(np.abs(s_dev / trials / expect - 1) < 0.03)


def test_downlink_observation_psa_zero_power():
    cfg, fad, alloc, gamma, kappa = synthetic_setup(seed=7)
    cfg0 = SystemConfig(**{**cfg.__dict__, "mu_dp": 0.0})
    ch = channel_realization(fad, *sample_small_scale(cfg, rng_stream(8, "smallscale")))
    est = uplink_estimate(ch, fad, cfg, rng_stream(8, "uplink-noise"))
    eff = effective_channels(ch, est, alloc)
    obs_none = downlink_observation(eff, cfg0, rng_stream(8, "downlink-noise"), "none")
    obs_psa = downlink_observation(eff, cfg0, rng_stream(8, "downlink-noise"), "psa")
    assert np.allclose(obs_none.y_proj, obs_psa.y_proj)
    with pytest.raises(ValueError):
        downlink_observation(eff, cfg, rng_stream(8, "downlink-noise"), "jam")


def test_estimate_effective_trivials_and_decomposition():
    cfg, fad, alloc, gamma, kappa = synthetic_setup(seed=8)
    stats = lmmse_stats(alloc, fad, gamma, cfg)
    ch = channel_realization(fad, *sample_small_scale(cfg, rng_stream(9, "smallscale")))
    est = uplink_estimate(ch, fad, cfg, rng_stream(9, "uplink-noise"))
    eff = effective_channels(ch, est, alloc)
    obs = downlink_observation(eff, cfg, rng_stream(9, "downlink-noise"), "psa")
    # y at the prior mean returns the prior mean
    from cfmimo.estimation import TrainingObservation
    prior = TrainingObservation(y_proj=stats.mean_y + 0j,
                                noise_proj=np.zeros_like(stats.mean_y) + 0j,
                                attack="none")
    assert np.allclose(estimate_effective(prior, stats), stats.mean_a)
    # exact decomposition per realization, both estimator variants
    a_kk = np.diagonal(eff.a)
    for attack in ("none", "psa"):
        o = downlink_observation(eff, cfg, rng_stream(10, "downlink-noise"), attack)
        a_hat = estimate_effective(o, stats)
        assert np.allclose(a_hat + (a_kk - a_hat), a_kk, rtol=1e-9, atol=0)


def test_psa_estimator_moments_match_closed_forms():
    from cfmimo.rates import (
        closed_form_terms,
        clean_training_moments,
        psa_training_moments,
        mc_moments,
    )
    for seed in (11, 12, 13):  # three random parameter sets
        cfg, fad, alloc, gamma, kappa = synthetic_setup(seed=seed)
        terms = closed_form_terms(alloc, fad, gamma, kappa, cfg)
        stats = mc_moments("psa", cfg, alloc, fad, trials=100_000, seed=seed)
        e_hat, e_til = psa_training_moments(terms, cfg)
        assert np.all(np.abs(stats["ahat2"][0] / e_hat - 1) < 0.03)
        assert np.all(np.abs(stats["atil2"][0] / e_til - 1) < 0.03)
        clean = mc_moments("none", cfg, alloc, fad, trials=100_000, seed=seed)
        c_hat, c_til = clean_training_moments(terms)
        assert np.all(np.abs(clean["ahat2"][0] / c_hat - 1) < 0.03)
        assert np.all(np.abs(clean["atil2"][0] / c_til - 1) < 0.03)
