"""Synthetic meetings with ground truth, and an exact grid oracle.

The oracle discretises every speaker location onto ``G`` bins and runs an
exact forward-backward over the joint (speaker labels, location bins)
space, using the same emission forms as the particle filter.
"""

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import vonmises_fisher

from .circstats import vm_sample
from .emissions import EmissionConfig, pack_observations
from .model import (
    BinGeometry,
    ChannelObservation,
    ModelParams,
    ObservationFrame,
    WordSegment,
    boundary_frames,
    discretized_vm,
    ssl_mode_doa,
)

ORACLE_MAX_STATES = 100_000
SILENCE = -1


@dataclass(frozen=True)
class SimConfig:
    M: int = 4
    N: int = 2
    T: int = 1500
    frame_seconds: float = 0.4
    sigma_true: float = 1000.0
    kappa_true: float = 10.0
    gamma_true: float = 15.0
    D: int = 128
    S: int = 360
    persistence: float = 0.9
    silence_prob: float = 0.3
    word_frames: Tuple[int, int] = (1, 3)
    seed: int = 0
    # (speaker, first frame, last frame) during which the speaker never talks
    mute: Optional[Tuple[int, int, int]] = None

    def __post_init__(self):
        if self.M < 1 or self.N < 1 or self.T < 1 or self.D < 2 or self.S < 1:
            raise ValueError("M, N, T, S must be >= 1 and D >= 2")
        for name in ("persistence", "silence_prob"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        lo, hi = self.word_frames
        if not 1 <= lo <= hi:
            raise ValueError("word_frames must satisfy 1 <= min <= max")
        if min(self.sigma_true, self.kappa_true, self.gamma_true) < 0:
            raise ValueError("concentrations must be non-negative")


@dataclass
class GroundTruth:
    theta: np.ndarray        # (T, M) true locations
    active: np.ndarray       # (T, N) speaker per channel, -1 when silent
    word_labels: np.ndarray  # (L,) speaker of each word


def true_transition_matrix(M: int, persistence: float, silence_prob: float) -> np.ndarray:
    """Speaker transition matrix implied by the simulator's label chain."""
    switch = (1.0 - persistence) * (1.0 - silence_prob) / M
    A = np.full((M, M), switch)
    A[np.diag_indices(M)] += persistence
    total = A.sum(axis=1, keepdims=True)
    if np.any(total == 0):
        return np.eye(M)
    return A / total


def _label_chains(rng, cfg: SimConfig) -> np.ndarray:
    active = np.full((cfg.T, cfg.N), SILENCE, dtype=int)

    def fresh(size):
        speaker = rng.integers(0, cfg.M, size=size)
        silent = rng.random(size) < cfg.silence_prob
        return np.where(silent, SILENCE, speaker)

    state = fresh(cfg.N)
    for t in range(cfg.T):
        if t > 0:
            move = rng.random(cfg.N) >= cfg.persistence
            state = np.where(move, fresh(cfg.N), state)
        if cfg.mute is not None:
            m, lo, hi = cfg.mute
            state = np.where((state == m) & (lo <= t <= hi), SILENCE, state)
        for n in range(1, cfg.N):
            if state[n] != SILENCE and state[n] in state[:n]:
                state[n] = SILENCE
        active[t] = state
    return active


def _split_words(rng, active: np.ndarray, word_frames) -> Tuple[List[WordSegment], np.ndarray]:
    lo, hi = word_frames
    pieces = []
    T, N = active.shape
    for n in range(N):
        t = 0
        while t < T:
            spk = active[t, n]
            if spk == SILENCE:
                t += 1
                continue
            end = t
            while end + 1 < T and active[end + 1, n] == spk:
                end += 1
            s = t
            while s <= end:
                length = int(rng.integers(lo, hi + 1))
                e = min(s + length - 1, end)
                pieces.append((s, n, e, spk))
                s = e + 1
            t = end + 1
    pieces.sort()
    words = [WordSegment(l, n, s, e) for l, (s, n, e, _) in enumerate(pieces)]
    labels = np.array([p[3] for p in pieces], dtype=int)
    return words, labels


def simulate_meeting(cfg: SimConfig):
    """Generate observations, words, ground truth and the generating params."""
    rng = np.random.default_rng(cfg.seed)
    bins = BinGeometry(cfg.S)

    mu = rng.standard_normal((cfg.M, cfg.D))
    mu /= np.linalg.norm(mu, axis=1, keepdims=True)

    theta = np.empty((cfg.T, cfg.M))
    theta[0] = np.pi - 2.0 * np.pi * rng.random(cfg.M)
    for t in range(1, cfg.T):
        theta[t] = vm_sample(rng, theta[t - 1], cfg.sigma_true)

    active = _label_chains(rng, cfg)
    words, word_labels = _split_words(rng, active, cfg.word_frames)

    frames = [ObservationFrame() for _ in range(cfg.T)]
    for t in range(cfg.T):
        for n in range(cfg.N):
            m = active[t, n]
            if m == SILENCE:
                continue
            if cfg.gamma_true > 0:
                d = vonmises_fisher(mu[m], cfg.gamma_true).rvs(1, random_state=rng)[0]
            else:
                d = rng.standard_normal(cfg.D)
            d = d / np.linalg.norm(d)
            noisy = vm_sample(rng, theta[t, m], cfg.kappa_true)
            ssl = discretized_vm(noisy, cfg.kappa_true, bins)
            frames[t].channels[n] = ChannelObservation(d, ssl, ssl_mode_doa(ssl, bins))

    params = ModelParams(
        mu=mu,
        A=true_transition_matrix(cfg.M, cfg.persistence, cfg.silence_prob),
        N=cfg.N,
        gamma=cfg.gamma_true,
        sigma_move=cfg.sigma_true,
        kappa=cfg.kappa_true,
        bins=bins,
    )
    return frames, words, GroundTruth(theta, active, word_labels), params


def has_movement(theta: np.ndarray, active: np.ndarray, min_frames: int,
                 arc: float = np.pi / 6, grid: int = 72) -> bool:
    """Whether some speaker moves between two regions split by two arcs.

    True when two disjoint arcs of width ``arc`` exist such that the
    speaker is active for at least ``min_frames`` frames in each of the two
    remaining regions.
    """
    starts = np.linspace(0.0, 2.0 * np.pi, grid, endpoint=False)
    for m in range(theta.shape[1]):
        ts = np.flatnonzero((active == m).any(axis=1))
        if ts.size < 2 * min_frames:
            continue
        ang = np.mod(theta[ts, m], 2.0 * np.pi)
        for a in starts:
            rel = np.mod(ang - a, 2.0 * np.pi)
            for b in starts:
                b_rel = np.mod(b - a, 2.0 * np.pi)
                if b_rel < arc or b_rel + arc > 2.0 * np.pi:
                    continue
                first = np.count_nonzero((rel > arc) & (rel < b_rel))
                second = np.count_nonzero(rel > b_rel + arc)
                if first >= min_frames and second >= min_frames:
                    return True
    return False


def is_moving_meeting(truth: GroundTruth, reference_seconds: float = 3600.0,
                      min_active_seconds: float = 30.0) -> bool:
    """Moving/stationary label.

    The minimum active time per region is ``min_active_seconds`` of a
    ``reference_seconds`` meeting, scaled to this meeting's frame count.
    """
    T = truth.theta.shape[0]
    min_frames = max(1, int(round(T * min_active_seconds / reference_seconds)))
    return has_movement(truth.theta, truth.active, min_frames)


def _apply(belief: np.ndarray, axis: int, matrix: np.ndarray) -> np.ndarray:
    """Contract ``belief`` along ``axis`` with ``matrix`` (rows = source)."""
    moved = np.moveaxis(belief, axis, -1) @ matrix
    return np.moveaxis(moved, -1, axis)


@dataclass
class OraclePosteriors:
    filtered: np.ndarray  # (T, N, M)
    smoothed: np.ndarray  # (T, N, M)


def grid_hmm_posterior(observations: Sequence[ObservationFrame], words: Sequence[WordSegment],
                       params: ModelParams, G: int, location_feature: str = "ssl",
                       restrict: bool = False) -> OraclePosteriors:
    """Exact filtered and smoothed speaker marginals on a discretised model."""
    M, N = params.M, params.N
    n_states = M ** N * G ** M
    if n_states > ORACLE_MAX_STATES:
        raise ValueError(f"oracle state space {n_states} exceeds {ORACLE_MAX_STATES}")
    cfg = EmissionConfig.from_params(params, location_feature)
    packed = pack_observations(observations, params, cfg)
    T = packed.T
    centers = BinGeometry(G).centers
    kernel = np.array([discretized_vm(c, params.sigma_move, BinGeometry(G)) for c in centers])
    starts = set(boundary_frames(words).tolist()) if restrict else None

    shape = (M,) * N + (G,) * M
    qc = np.indices((M,) * N).reshape(N, -1).T            # (Q, N)
    grid = np.indices((G,) * M).reshape(M, -1)            # (M, G^M)

    def log_emission(t):
        out = np.zeros((qc.shape[0], grid.shape[1]))
        for n in np.flatnonzero(packed.active[t]):
            table = (packed.scores[t, n][:, None]
                     + packed.loc_conc[t, n] * np.cos(packed.loc_mean[t, n] - centers)[None, :]
                     + packed.loc_offset[t, n])     # (M, G)
            qn = qc[:, n]
            out += table[qn[:, None], grid[qn]]
        return out.reshape(shape)

    def transition(belief, t_next, backward=False):
        if starts is None or t_next in starts:
            for n in range(N):
                belief = _apply(belief, n, params.A.T if backward else params.A)
        for m in range(M):
            belief = _apply(belief, N + m, kernel.T if backward else kernel)
        return belief

    emis = []
    alphas = np.empty((T,) + shape)
    belief = np.full(shape, 1.0 / n_states)
    for t in range(T):
        if t > 0:
            belief = transition(alphas[t - 1], t)
        le = log_emission(t)
        e = np.exp(le - le.max())
        emis.append(e)
        belief = belief * e
        alphas[t] = belief / belief.sum()

    betas = np.empty_like(alphas)
    betas[-1] = 1.0
    for t in range(T - 2, -1, -1):
        b = transition(emis[t + 1] * betas[t + 1], t + 1, backward=True)
        betas[t] = b / b.sum()

    filtered = np.empty((T, N, M))
    smoothed = np.empty((T, N, M))
    for t in range(T):
        post = alphas[t] * betas[t]
        post /= post.sum()
        for n in range(N):
            other = tuple(a for a in range(N + M) if a != n)
            filtered[t, n] = alphas[t].sum(axis=other)
            smoothed[t, n] = post.sum(axis=other)
    return OraclePosteriors(filtered, smoothed)
