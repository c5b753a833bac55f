import numpy as np
import pytest

from sspf.emissions import (
    EmissionConfig,
    ensemble_log_emission,
    frame_log_emission,
    log_emis_doa,
    log_emis_dvec,
    log_emis_ssl,
    pack_observations,
)
from sspf.model import BinGeometry, ChannelObservation, ModelParams, ObservationFrame, Particle

from conftest import random_unit

VM_ANTIPODE_K2 = -4.66187060789230176649   # -2 - log(2 pi I0(2)), mpmath


def random_frame(rng, params, channels):
    frame = ObservationFrame()
    for n in channels:
        s = rng.random(params.bins.S) ** 3
        frame.channels[n] = ChannelObservation(
            random_unit(rng, params.D), s / s.sum(), rng.uniform(-np.pi, np.pi))
    return frame


def random_particle(rng, params):
    return Particle(rng.integers(0, params.M, params.N), rng.uniform(-np.pi, np.pi, params.M))


def test_dvec_examples():
    mu = np.array([0.6, 0.8])
    assert log_emis_dvec(mu, mu, 7.0) == pytest.approx(7.0)
    assert log_emis_dvec(np.array([-0.8, 0.6]), mu, 7.0) == pytest.approx(0.0)
    assert log_emis_dvec(-mu, mu, 7.0) == pytest.approx(-7.0)
    with pytest.raises(ValueError):
        log_emis_dvec(np.ones(3) / np.sqrt(3), mu, 1.0)


def test_doa_examples():
    assert log_emis_doa(0.4, 0.4, 0.0) == pytest.approx(-np.log(2 * np.pi))
    assert log_emis_doa(0.4 + 0.3, 0.4, 5.0) == pytest.approx(log_emis_doa(0.4 - 0.3, 0.4, 5.0))
    assert log_emis_doa(1.0 + np.pi, 1.0, 2.0) == pytest.approx(VM_ANTIPODE_K2, abs=1e-12)


def test_ssl_examples(rng):
    assert log_emis_ssl(3.0, 0.5, 0.5) == pytest.approx(3.0)
    assert log_emis_ssl(0.0, 0.0, 2.0) == 0.0
    from sspf.model import ssl_equiv_stats
    bins = BinGeometry(72)
    for _ in range(20):
        s = rng.random(72)
        s /= s.sum()
        rho, eta = ssl_equiv_stats(s, 6.0, bins)
        theta = rng.uniform(-np.pi, np.pi)
        direct = 6.0 * np.sum(s * np.cos(bins.centers - theta))
        assert log_emis_ssl(rho, eta, theta) == pytest.approx(direct, abs=1e-9)


@pytest.mark.parametrize("feature", ["none", "doa", "ssl"])
def test_silent_frame_contributes_nothing(rng, small_params, feature):
    cfg = EmissionConfig.from_params(small_params, feature)
    assert frame_log_emission(ObservationFrame(), random_particle(rng, small_params), small_params, cfg) == 0.0


@pytest.mark.parametrize("feature", ["none", "doa", "ssl"])
def test_additive_over_channels(rng, feature):
    for N in range(1, 5):
        mu = random_unit(rng, (3, 6))
        params = ModelParams(mu, np.full((3, 3), 1 / 3), N, 4.0, 10.0, 3.0, BinGeometry(24))
        cfg = EmissionConfig.from_params(params, feature)
        frame = random_frame(rng, params, range(N))
        particle = random_particle(rng, params)
        total = frame_log_emission(frame, particle, params, cfg)
        parts = sum(
            frame_log_emission(ObservationFrame({n: ch}), particle, params, cfg)
            for n, ch in frame.channels.items()
        )
        assert total == pytest.approx(parts, abs=1e-12)


def test_single_channel_is_sum_of_terms(rng, small_params):
    cfg = EmissionConfig.from_params(small_params, "doa")
    frame = random_frame(rng, small_params, [1])
    p = random_particle(rng, small_params)
    ch = frame.channels[1]
    q = p.q[1]
    expected = (log_emis_dvec(ch.dvec, small_params.mu[q], cfg.gamma)
                + log_emis_doa(ch.doa, p.theta[q], cfg.kappa))
    assert frame_log_emission(frame, p, small_params, cfg) == pytest.approx(expected)


def test_no_location_feature_ignores_theta(rng, small_params):
    cfg = EmissionConfig.from_params(small_params, "none")
    frame = random_frame(rng, small_params, [0, 1])
    p = random_particle(rng, small_params)
    moved = Particle(p.q, p.theta + rng.uniform(-3, 3, small_params.M))
    assert frame_log_emission(frame, p, small_params, cfg) == frame_log_emission(frame, moved, small_params, cfg)


@pytest.mark.parametrize("feature", ["none", "doa", "ssl"])
def test_vectorised_matches_scalar(rng, small_params, feature):
    cfg = EmissionConfig.from_params(small_params, feature)
    frames = [random_frame(rng, small_params, c) for c in ([0], [1], [0, 1], [])]
    packed = pack_observations(frames, small_params, cfg)
    q = rng.integers(0, 3, (40, 2))
    theta = rng.uniform(-np.pi, np.pi, (40, 3))
    for t, frame in enumerate(frames):
        vec = ensemble_log_emission(packed, t, q, theta)
        scalar = [frame_log_emission(frame, Particle(q[r], theta[r]), small_params, cfg) for r in range(40)]
        np.testing.assert_allclose(vec, scalar, rtol=1e-12, atol=1e-12)


def test_finite_for_large_concentrations(rng):
    mu = random_unit(rng, (2, 4))
    params = ModelParams(mu, np.eye(2), 1, 1000.0, 1000.0, 1000.0, BinGeometry(360))
    for feature in ("doa", "ssl"):
        cfg = EmissionConfig.from_params(params, feature)
        frame = random_frame(rng, params, [0])
        for _ in range(20):
            assert np.isfinite(frame_log_emission(frame, random_particle(rng, params), params, cfg))


def test_config_validation():
    with pytest.raises(ValueError):
        EmissionConfig("beamformer")
    assert EmissionConfig("none", 1.0, 5.0).effective_kappa == 0.0
