import math

import numpy as np
import pytest

from cfmimo.config import SystemConfig
from cfmimo.model import (
    channel_realization,
    drop_fading,
    generate_layout,
    large_scale,
    path_loss_db,
    rng_stream,
    sample_small_scale,
)


def small_config(**kw):
    base = dict(m_aps=8, n_adv=4, k_users=2, tau_u=8, tau_d=8, tau_c=40)
    base.update(kw)
    return SystemConfig(**base)


def test_layout_range_and_determinism():
    cfg = small_config(area_side=1.0)
    lay1 = generate_layout(cfg, rng_stream(3, "layout"))
    lay2 = generate_layout(cfg, rng_stream(3, "layout"))
    for arr in (lay1.ap, lay1.adv, lay1.user):
        assert arr.min() >= 0.0 and arr.max() <= 1.0
    assert np.array_equal(lay1.ap, lay2.ap)
    assert np.array_equal(lay1.user, lay2.user)
    lay3 = generate_layout(cfg, rng_stream(4, "layout"))
    assert not np.array_equal(lay1.ap, lay3.ap)


def test_layout_law_of_large_numbers():
    cfg = small_config(m_aps=10_000)
    lay = generate_layout(cfg, rng_stream(0, "layout"))
    assert np.abs(lay.ap.mean(axis=0) - 0.5).max() < 0.01


def test_path_loss_hand_value_and_shape():
    cfg = SystemConfig()
    # independent evaluation of the COST231 constant at 1.9 GHz, 15 m AP,
    # 1.65 m user; at 1 km the three-slope model gives exactly -L
    lf = math.log10(1900.0)
    L = (46.3 + 33.9 * lf - 13.82 * math.log10(15.0)
         - (1.1 * lf - 0.7) * 1.65 + (1.56 * lf - 0.8))
    assert path_loss_db(1.0, cfg) == pytest.approx(-L, abs=1e-9)
    assert L == pytest.approx(140.715087, abs=1e-4)


def test_path_loss_continuity_and_monotonicity():
    cfg = SystemConfig()
    for d0 in (0.010, 0.050):
        below = path_loss_db(d0 * (1 - 1e-9), cfg)
        at = path_loss_db(d0, cfg)
        assert at == pytest.approx(below, abs=1e-5)
    d = np.linspace(1e-4, 3.0, 4001)
    pl = path_loss_db(d, cfg)
    assert np.all(np.diff(pl) <= 1e-12)
    assert np.all(pl <= 0.0)
    # flat below the first breakpoint (distance clamp is immaterial)
    assert path_loss_db(0.0, cfg) == path_loss_db(0.009, cfg)


def test_large_scale_zero_shadowing_and_positivity():
    cfg = small_config(sigma_sh=0.0)
    lay = generate_layout(cfg, rng_stream(1, "layout"))
    fad = large_scale(lay, cfg, rng_stream(1, "shadowing"))
    assert np.all(fad.shadow_db == 0.0)
    assert np.allclose(fad.beta, 10.0 ** (fad.pl_db / 10.0))
    cfg8 = small_config(sigma_sh=8.0)
    fad8 = large_scale(lay, cfg8, rng_stream(1, "shadowing"))
    assert np.all(fad8.beta > 0) and np.all(np.isfinite(fad8.beta))
    assert np.all(fad8.theta > 0)
    assert np.allclose(fad8.beta,
                       10.0 ** ((fad8.pl_db + fad8.shadow_db) / 10.0))


def test_shadowing_moment():
    # one link redrawn 1e5 times: mean of 10 log10(beta) - pl_db ~ 0 within
    # 0.1 dB (sigma 8/sqrt(1e5) ~ 0.025)
    cfg = small_config(m_aps=1, n_adv=0, k_users=1, tau_u=1, tau_d=1, tau_c=40)
    lay = generate_layout(cfg, rng_stream(5, "layout"))
    devs = []
    for i in range(100):
        rng = rng_stream(5, "shadowing", i)
        z = cfg.sigma_sh * rng.standard_normal((1000, 1, 1))
        devs.append(z.mean())
    assert abs(np.mean(devs)) < 0.1


def test_small_scale_moments():
    cfg = small_config(m_aps=50, n_adv=0, k_users=2)
    rng = rng_stream(7, "smallscale")
    h = np.concatenate([sample_small_scale(cfg, rng)[0].ravel()
                        for _ in range(1000)])  # 1e5 draws
    assert h.size == 100_000
    assert abs(np.mean(np.abs(h) ** 2) - 1.0) < 0.01
    assert abs(np.mean(h)) < 0.01
    assert abs(np.var(h.real) - 0.5) < 0.005
    assert abs(np.var(h.imag) - 0.5) < 0.005


def test_channel_variance_matches_beta():
    cfg = small_config(m_aps=2, n_adv=2, k_users=1)
    fad = drop_fading(cfg, 0)
    n = 100_000
    from cfmimo.model import complex_normal
    rng = rng_stream(11, "smallscale")
    h = complex_normal(rng, (n, 2, 1))
    q = complex_normal(rng, (n, 2, 1))
    g = h * np.sqrt(fad.beta)
    f = q * np.sqrt(fad.theta)
    assert np.all(np.abs((np.abs(g) ** 2).mean(axis=0) / fad.beta - 1) < 0.02)
    assert np.all(np.abs((np.abs(f) ** 2).mean(axis=0) / fad.theta - 1) < 0.02)
    assert np.all(np.abs(g.mean(axis=0)) < 3 * np.sqrt(fad.beta / n))


def test_channel_realization_applies_fading():
    cfg = small_config()
    fad = drop_fading(cfg, 0)
    h, q = sample_small_scale(cfg, rng_stream(0, "smallscale"))
    ch = channel_realization(fad, h, q)
    assert np.allclose(ch.g, h * np.sqrt(fad.beta))
    assert np.allclose(ch.f, q * np.sqrt(fad.theta))


def test_drop_fading_deterministic_and_thread_free():
    cfg = small_config(seed=123)
    a = drop_fading(cfg, 2)
    b = drop_fading(cfg, 2)
    assert np.array_equal(a.beta, b.beta)
    assert np.array_equal(a.theta, b.theta)
    c = drop_fading(cfg, 3)
    assert not np.array_equal(a.beta, c.beta)
