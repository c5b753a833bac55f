"""Sequential importance resampling forward pass."""

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterator, List, Optional, Sequence

import numpy as np
from scipy.special import logsumexp

from .circstats import TWO_PI, vm_sample
from .emissions import EmissionConfig, PackedObservations, ensemble_log_emission, pack_observations
from .model import ModelParams, Particle, WordSegment, boundary_frames, check_params

THREADS_ENV = "SSPF_NUM_THREADS"

# Spawn-key tags keep the filter and smoother random streams disjoint.
FILTER_STREAM = 0
SMOOTHER_STREAM = 1


class ModelDataMismatchError(RuntimeError):
    """Every particle received zero posterior mass."""

    def __init__(self, frame: int, message: str = ""):
        self.frame = frame
        super().__init__(message or f"zero posterior mass at frame {frame}")


@dataclass(frozen=True)
class FilterConfig:
    n_particles: int = 20000
    ess_threshold: float = 0.5
    restrict_boundaries: bool = False
    seed: int = 0

    def __post_init__(self):
        if int(self.n_particles) < 1:
            raise ValueError("n_particles must be >= 1")
        if not 0.0 <= self.ess_threshold <= 1.0:
            raise ValueError("ess_threshold must lie in [0, 1]")


@dataclass
class ParticleEnsemble:
    """Particles of one frame after the update step.

    ``ancestors[r]`` indexes the particle of frame ``t - 1`` that particle
    ``r`` was propagated from (``None`` at the first frame).  ``resampled``
    records whether resampling followed this frame's update.
    """

    t: int
    q: np.ndarray            # (R, N) speaker labels
    theta: np.ndarray        # (R, M) locations
    log_weights: np.ndarray  # (R,) normalised log weights
    resampled: bool = False
    ancestors: Optional[np.ndarray] = None
    source: Optional[np.ndarray] = None  # indices into the full ensemble after sub-sampling

    @property
    def weights(self) -> np.ndarray:
        return np.exp(self.log_weights)

    @property
    def R(self) -> int:
        return self.q.shape[0]

    def particle(self, r: int) -> Particle:
        return Particle(self.q[r].copy(), self.theta[r].copy())


def frame_rng(seed: int, t: int, stream: int = FILTER_STREAM) -> np.random.Generator:
    """Independent generator for frame ``t``; reproducible from ``seed``."""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(stream, int(t))))


def thread_count() -> int:
    value = os.environ.get(THREADS_ENV)
    if value:
        return max(1, int(value))
    return os.cpu_count() or 1


def sample_initial_batch(rng, params: ModelParams, R: int):
    q = rng.integers(0, params.M, size=(R, params.N)).astype(np.int32)
    theta = np.pi - TWO_PI * rng.random((R, params.M))
    return q, theta


def sample_initial(rng, params: ModelParams) -> Particle:
    """Uniform speaker per channel, uniform location per speaker."""
    q, theta = sample_initial_batch(rng, params, 1)
    return Particle(q[0], theta[0])


def sample_labels(rng, q_prev: np.ndarray, A: np.ndarray) -> np.ndarray:
    """Draw each label from the row of ``A`` selected by its previous value."""
    cum = np.cumsum(A, axis=1)
    cum[:, -1] = 1.0
    u = rng.random(q_prev.shape)
    rows = cum[q_prev]  # (..., M)
    q = (rows <= u[..., None]).sum(axis=-1)
    return np.minimum(q, A.shape[0] - 1).astype(np.int32)


def sample_transition_batch(rng, q_prev, theta_prev, params: ModelParams, allow_switch: bool):
    if allow_switch:
        q = sample_labels(rng, q_prev, params.A)
    else:
        q = q_prev.copy()
    theta = vm_sample(rng, theta_prev, params.sigma_move)
    return q, np.asarray(theta, dtype=float)


def sample_transition(rng, prev: Particle, params: ModelParams, allow_switch: bool = True) -> Particle:
    q, theta = sample_transition_batch(
        rng, np.asarray(prev.q)[None, :], np.asarray(prev.theta, dtype=float)[None, :],
        params, allow_switch,
    )
    return Particle(q[0], theta[0])


def update_log_weights(prev_log_weights, log_emissions, frame: int = -1):
    """Log-domain weight update; returns (normalised log weights, log normaliser)."""
    unnorm = np.asarray(prev_log_weights, dtype=float) + np.asarray(log_emissions, dtype=float)
    log_norm = logsumexp(unnorm)
    if not np.isfinite(log_norm):
        raise ModelDataMismatchError(frame)
    return unnorm - log_norm, float(log_norm)


def update_weights(prev_weights, log_emissions):
    """Multiply weights by emission likelihoods and renormalise.

    Returns ``(weights, log_normalizer)`` where ``log_normalizer`` is the log
    of the unnormalised total.
    """
    with np.errstate(divide="ignore"):
        prev_log = np.log(np.asarray(prev_weights, dtype=float))
    log_w, log_norm = update_log_weights(prev_log, log_emissions)
    w = np.exp(log_w)
    return w / w.sum(), log_norm


def effective_sample_size(weights) -> float:
    w = np.asarray(weights, dtype=float)
    return float(1.0 / np.dot(w, w))


def systematic_resample(rng, weights) -> np.ndarray:
    """Systematic resampling: one uniform offset, ``R`` evenly spaced points.

    Returns ancestor indices in ascending order.
    """
    w = np.asarray(weights, dtype=float)
    R = w.size
    cum = np.cumsum(w)
    cum /= cum[-1]
    cum[-1] = 1.0
    positions = (rng.random() + np.arange(R)) / R
    return np.minimum(np.searchsorted(cum, positions, side="right"), R - 1)


def _emissions(packed: PackedObservations, t: int, q, theta, n_threads: int) -> np.ndarray:
    R = q.shape[0]
    if n_threads <= 1 or R < 4096:
        return ensemble_log_emission(packed, t, q, theta)
    # Elementwise per particle, so chunking cannot change the result.
    bounds = np.linspace(0, R, n_threads + 1).astype(int)
    out = np.empty(R)

    def work(k):
        lo, hi = bounds[k], bounds[k + 1]
        out[lo:hi] = ensemble_log_emission(packed, t, q[lo:hi], theta[lo:hi])

    with ThreadPoolExecutor(max_workers=n_threads) as pool:
        list(pool.map(work, range(n_threads)))
    return out


def iter_forward(observations, words: Sequence[WordSegment], params: ModelParams,
                 emis_cfg: EmissionConfig, filt_cfg: FilterConfig,
                 n_threads: Optional[int] = None) -> Iterator[ParticleEnsemble]:
    """Run the particle filter, yielding one ensemble per frame.

    Only the current frame is held in memory; collect the iterator to keep
    every ensemble (as the smoother needs).
    """
    check_params(params)
    if isinstance(observations, PackedObservations):
        packed = observations
    else:
        packed = pack_observations(observations, params, emis_cfg)
    if packed.N != params.N:
        raise ValueError(f"observations have {packed.N} channels, params {params.N}")
    n_threads = thread_count() if n_threads is None else max(1, int(n_threads))
    R = int(filt_cfg.n_particles)
    starts = set(boundary_frames(words).tolist()) if filt_cfg.restrict_boundaries else None
    threshold = filt_cfg.ess_threshold * R

    q = theta = log_w = None
    for t in range(packed.T):
        rng = frame_rng(filt_cfg.seed, t)
        if t == 0:
            q, theta = sample_initial_batch(rng, params, R)
            prev_log_w = np.full(R, -np.log(R))
            ancestors = None
        else:
            allow = starts is None or t in starts
            q, theta = sample_transition_batch(rng, q, theta, params, allow)
            prev_log_w = log_w
            ancestors = parents
        log_w, _ = update_log_weights(prev_log_w, _emissions(packed, t, q, theta, n_threads), t)

        w = np.exp(log_w)
        resampled = effective_sample_size(w) < threshold
        ensemble = ParticleEnsemble(t, q, theta, log_w, resampled, ancestors)
        yield ensemble

        if resampled:
            parents = systematic_resample(rng, w)
            q, theta = q[parents], theta[parents]
            log_w = np.full(R, -np.log(R))
        else:
            parents = np.arange(R)


def forward_pass(observations, words: Sequence[WordSegment], params: ModelParams,
                 emis_cfg: EmissionConfig, filt_cfg: FilterConfig,
                 n_threads: Optional[int] = None) -> List[ParticleEnsemble]:
    return list(iter_forward(observations, words, params, emis_cfg, filt_cfg, n_threads))
