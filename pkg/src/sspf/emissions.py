"""Emission log-likelihoods for d-vector, DOA and SSL observations.

Constants shared by every particle in a frame (the vMF normaliser, the
continuous-categorical normaliser and the discretised von Mises
denominator) are dropped: weights are normalised across particles, so they
cancel.
"""

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .circstats import LOG_2PI, log_i0, vm_logpdf
from .model import ModelParams, ObservationFrame, Particle, ssl_equiv_stats, ssl_mode_doa

LOCATION_FEATURES = ("none", "doa", "ssl")


@dataclass(frozen=True)
class EmissionConfig:
    location_feature: str = "ssl"
    gamma: float = 1.0
    kappa: float = 0.0

    def __post_init__(self):
        if self.location_feature not in LOCATION_FEATURES:
            raise ValueError(
                f"location_feature must be one of {LOCATION_FEATURES}, "
                f"got {self.location_feature!r}"
            )
        if self.gamma < 0 or self.kappa < 0:
            raise ValueError("concentrations must be non-negative")

    @property
    def effective_kappa(self) -> float:
        return 0.0 if self.location_feature == "none" else float(self.kappa)

    @classmethod
    def from_params(cls, params: ModelParams, location_feature: str = "ssl") -> "EmissionConfig":
        return cls(location_feature, float(params.gamma), float(params.kappa))


def log_emis_dvec(d, mu_q, gamma: float) -> float:
    """Unnormalised vMF log-likelihood: ``gamma * <mu_q, d>``."""
    d = np.asarray(d, dtype=float)
    mu_q = np.asarray(mu_q, dtype=float)
    if d.shape != mu_q.shape:
        raise ValueError(f"dimension mismatch: {d.shape} vs {mu_q.shape}")
    return float(gamma) * float(np.dot(mu_q, d))


def log_emis_doa(phi, theta_q, kappa: float):
    return vm_logpdf(phi, theta_q, kappa)


def log_emis_ssl(rho: float, eta, theta_q):
    out = rho * np.cos(np.asarray(eta) - np.asarray(theta_q))
    return float(out) if np.ndim(out) == 0 else out


def _location_term(ch, theta_q, params: ModelParams, cfg: EmissionConfig):
    kappa = cfg.effective_kappa
    if cfg.location_feature == "doa":
        phi = ch.doa
        if phi is None and ch.ssl is not None:
            phi = ssl_mode_doa(ch.ssl, params.bins)
        if phi is None:
            return 0.0
        return log_emis_doa(phi, theta_q, kappa)
    if cfg.location_feature == "ssl" and ch.ssl is not None:
        rho, eta = ssl_equiv_stats(ch.ssl, kappa, params.bins)
        return log_emis_ssl(rho, eta, theta_q)
    return 0.0


def frame_log_emission(obs: ObservationFrame, particle: Particle, params: ModelParams,
                       cfg: EmissionConfig) -> float:
    """Joint log emission of one frame under one particle.

    Channels are independent given the state; silent channels contribute 0.
    """
    total = 0.0
    for n, ch in obs.channels.items():
        q = int(particle.q[n])
        total += log_emis_dvec(ch.dvec, params.mu[q], cfg.gamma)
        total += _location_term(ch, particle.theta[q], params, cfg)
    return float(total)


@dataclass
class PackedObservations:
    """Dense per-frame arrays precomputed once per pass.

    ``scores[t, n, m]`` is the d-vector term for speaker ``m``;
    ``loc_conc`` and ``loc_mean`` give the location term as
    ``loc_conc * cos(loc_mean - theta) + loc_offset``.
    """

    active: np.ndarray      # (T, N) bool
    scores: np.ndarray      # (T, N, M)
    loc_conc: np.ndarray    # (T, N)
    loc_mean: np.ndarray    # (T, N)
    loc_offset: np.ndarray  # (T, N)

    @property
    def T(self) -> int:
        return self.active.shape[0]

    @property
    def N(self) -> int:
        return self.active.shape[1]


def pack_observations(frames: Sequence[ObservationFrame], params: ModelParams,
                      cfg: EmissionConfig) -> PackedObservations:
    T, N, M = len(frames), params.N, params.M
    active = np.zeros((T, N), dtype=bool)
    scores = np.zeros((T, N, M))
    loc_conc = np.zeros((T, N))
    loc_mean = np.zeros((T, N))
    loc_offset = np.zeros((T, N))
    kappa = cfg.effective_kappa
    doa_norm = -LOG_2PI - log_i0(kappa)
    for t, frame in enumerate(frames):
        for n, ch in frame.channels.items():
            if not 0 <= n < N:
                raise ValueError(f"frame {t}: channel {n} outside 0..{N - 1}")
            if ch.dvec.shape[0] != params.D:
                raise ValueError(
                    f"frame {t} channel {n}: d-vector dim {ch.dvec.shape[0]} != {params.D}"
                )
            active[t, n] = True
            scores[t, n] = cfg.gamma * (params.mu @ ch.dvec)
            if cfg.location_feature == "doa":
                phi = ch.doa
                if phi is None and ch.ssl is not None:
                    phi = ssl_mode_doa(ch.ssl, params.bins)
                if phi is not None:
                    loc_conc[t, n] = kappa
                    loc_mean[t, n] = phi
                    loc_offset[t, n] = doa_norm
            elif cfg.location_feature == "ssl" and ch.ssl is not None:
                loc_conc[t, n], loc_mean[t, n] = ssl_equiv_stats(ch.ssl, kappa, params.bins)
    return PackedObservations(active, scores, loc_conc, loc_mean, loc_offset)


def ensemble_log_emission(packed: PackedObservations, t: int, q: np.ndarray,
                          theta: np.ndarray) -> np.ndarray:
    """Vectorised ``frame_log_emission`` for particle arrays.

    ``q`` has shape (R, N) and ``theta`` shape (R, M); returns (R,).
    """
    R = q.shape[0]
    out = np.zeros(R)
    rows = np.arange(R)
    for n in np.flatnonzero(packed.active[t]):
        qn = q[:, n]
        out += packed.scores[t, n, qn]
        conc = packed.loc_conc[t, n]
        if conc != 0.0:
            out += conc * np.cos(packed.loc_mean[t, n] - theta[rows, qn])
        out += packed.loc_offset[t, n]
    return out
