"""Forward filtering-backward smoothing over stored particle ensembles."""

from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence

import numpy as np
from scipy.special import logsumexp

from .circstats import LOG_2PI, log_i0
from .filter import SMOOTHER_STREAM, FilterConfig, ParticleEnsemble, frame_rng
from .model import ModelParams, WordSegment, boundary_frames

# Upper bound on entries of one (k, chunk) transition block.
_BLOCK_ENTRIES = 2_000_000


class ParticleImpoverishmentError(RuntimeError):
    """No particle at frame ``t`` can reach the particles at ``t + 1``."""

    def __init__(self, frame: int):
        self.frame = frame
        super().__init__(f"all backward transition sums vanish at frame {frame}")


@dataclass
class SmoothedEnsemble:
    """Backward-weighted particles of one frame.

    ``indices`` point into the full forward ensemble of the same frame.
    """

    t: int
    indices: np.ndarray
    q: np.ndarray
    theta: np.ndarray
    log_weights: np.ndarray

    @property
    def weights(self) -> np.ndarray:
        return np.exp(self.log_weights)

    @property
    def R(self) -> int:
        return self.q.shape[0]


def subsample(ensemble: ParticleEnsemble, k: int, rng) -> ParticleEnsemble:
    """Keep ``k`` particles chosen uniformly without replacement."""
    R = ensemble.R
    if not 1 <= k <= R:
        raise ValueError(f"cannot sub-sample {k} particles from {R}")
    idx = rng.choice(R, size=k, replace=False)
    log_w = ensemble.log_weights[idx]
    log_w = log_w - logsumexp(log_w)
    return ParticleEnsemble(
        ensemble.t, ensemble.q[idx], ensemble.theta[idx], log_w,
        ensemble.resampled, None, idx,
    )


# Stand-in for log(0) inside the matrix product; anything below _CUT is -inf.
_NEG_BIG = -1e12
_CUT = -1e11


def log_transition_block(q_from, theta_from, q_to, theta_to, log_A, sigma_move: float,
                         allow_switch: bool = True) -> np.ndarray:
    """``log p(z_to[i] | z_from[r])`` as an (r, i) matrix.

    Computed as one matrix product: label terms through one-hot columns and
    the movement term through cos(b - a) = cos a cos b + sin a sin b.
    """
    M = log_A.shape[0]
    N = q_from.shape[1]
    table = log_A if allow_switch else np.where(np.eye(M, dtype=bool), 0.0, -np.inf)
    table = np.where(np.isneginf(table), _NEG_BIG, table)
    left = [table[q_from[:, n]] for n in range(N)]
    right = [np.eye(M)[q_to[:, n]] for n in range(N)]
    if sigma_move > 0:
        left += [sigma_move * np.cos(theta_from), sigma_move * np.sin(theta_from)]
        right += [np.cos(theta_to), np.sin(theta_to)]
    out = np.hstack(left) @ np.hstack(right).T
    out[out < _CUT] = -np.inf
    out -= theta_from.shape[1] * (LOG_2PI + log_i0(sigma_move))
    return out


def _backward_step(cur: ParticleEnsemble, nxt_q, nxt_theta, nxt_log_w, log_A, sigma_move,
                   allow_switch: bool) -> np.ndarray:
    """``log sum_i f(i | r) w_next[i] / den[i]`` for every current particle r."""
    k = cur.R
    c = nxt_q.shape[0]
    chunk = max(1, _BLOCK_ENTRIES // max(k, 1))
    lw = cur.log_weights
    acc = np.full(k, -np.inf)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        for lo in range(0, c, chunk):
            hi = min(lo + chunk, c)
            x = log_transition_block(
                cur.q, cur.theta, nxt_q[lo:hi], nxt_theta[lo:hi], log_A, sigma_move, allow_switch,
            )
            x += lw[:, None]
            top = x.max(axis=0)
            ok = np.isfinite(top)
            if not ok.any():
                continue
            x = x[:, ok]
            top = top[ok]
            x -= top
            np.exp(x, out=x)
            # the denominator of target i is exp(top[i]) * colsum[i]
            log_den = top + np.log(x.sum(axis=0))
            scale = nxt_log_w[lo:hi][ok] - log_den + top
            shift = scale.max()
            if not np.isfinite(shift):
                continue
            row = x @ np.exp(scale - shift)
            acc = np.logaddexp(acc, np.log(row) + shift - lw)
    acc[np.isneginf(lw)] = -np.inf
    return acc


def backward_pass(ensembles: Iterable[ParticleEnsemble], params: ModelParams,
                  filt_cfg: FilterConfig, k_backward: Optional[int] = None,
                  words: Sequence[WordSegment] = (), restrict: Optional[bool] = None,
                  seed: Optional[int] = None) -> List[SmoothedEnsemble]:
    """Backward importance weights for every frame.

    ``ensembles`` may be any iterable, such as a stream read from a store.
    Each frame is first sub-sampled uniformly to ``k_backward`` particles
    (all particles when ``k_backward`` is None or not smaller than R).
    ``restrict`` defaults to ``filt_cfg.restrict_boundaries`` and applies the
    identity speaker transition at frames that do not start a word.
    """
    restrict = filt_cfg.restrict_boundaries if restrict is None else restrict
    seed = filt_cfg.seed if seed is None else seed
    starts = set(boundary_frames(words).tolist()) if restrict else None
    with np.errstate(divide="ignore"):
        log_A = np.log(params.A)

    # Sub-sample while reading so only k particles per frame stay in memory.
    reduced = []
    for ens in ensembles:
        if k_backward is None or k_backward >= ens.R:
            reduced.append(ParticleEnsemble(ens.t, ens.q, ens.theta, ens.log_weights,
                                            ens.resampled, None, np.arange(ens.R)))
        else:
            reduced.append(subsample(ens, int(k_backward), frame_rng(seed, ens.t, SMOOTHER_STREAM)))
    T = len(reduced)
    if T == 0:
        return []

    out: List[Optional[SmoothedEnsemble]] = [None] * T
    last = reduced[-1]
    out[-1] = SmoothedEnsemble(last.t, last.source, last.q, last.theta, last.log_weights.copy())
    for t in range(T - 2, -1, -1):
        cur, nxt = reduced[t], out[t + 1]
        allow = starts is None or (t + 1) in starts
        acc = _backward_step(cur, nxt.q, nxt.theta, nxt.log_weights, log_A,
                             float(params.sigma_move), allow)
        log_w = cur.log_weights + acc
        total = logsumexp(log_w)
        if not np.isfinite(total):
            raise ParticleImpoverishmentError(t)
        out[t] = SmoothedEnsemble(cur.t, cur.source, cur.q, cur.theta, log_w - total)
    return out
