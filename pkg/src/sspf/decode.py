"""Speaker posteriors, word-level aggregation and location traces."""

from typing import List, Sequence

import numpy as np

from .circstats import RESULTANT_EPS, wrap_angle
from .model import WordSegment

AGGREGATIONS = ("sum", "product", "majority")


def frame_speaker_posterior(ensemble, n: int, M: int) -> np.ndarray:
    """P(q_n = m) for one frame, locations and other channels marginalised.

    ``ensemble`` is anything with ``q`` and ``weights`` (filtered or
    smoothed).
    """
    w = ensemble.weights
    p = np.bincount(ensemble.q[:, n], weights=w, minlength=M)
    return p / p.sum()


def posterior_array(ensembles, M: int) -> np.ndarray:
    """Stack per-frame, per-channel posteriors into a (T, N, M) array."""
    T = len(ensembles)
    if T == 0:
        return np.zeros((0, 0, M))
    N = ensembles[0].q.shape[1]
    out = np.empty((T, N, M))
    for t, ens in enumerate(ensembles):
        for n in range(N):
            out[t, n] = frame_speaker_posterior(ens, n, M)
    return out


def _first_argmax(x) -> int:
    return int(np.argmax(x))


def aggregate_word(posteriors, method: str = "sum") -> int:
    """Pick a speaker from a (frames, M) block of per-frame posteriors.

    Ties go to the lowest speaker index.
    """
    p = np.atleast_2d(np.asarray(posteriors, dtype=float))
    if p.shape[0] == 0:
        raise ValueError("cannot aggregate an empty word")
    if method == "sum":
        return _first_argmax(p.sum(axis=0))
    if method == "product":
        with np.errstate(divide="ignore"):
            return _first_argmax(np.log(p).sum(axis=0))
    if method == "majority":
        votes = np.bincount(p.argmax(axis=1), minlength=p.shape[1])
        return _first_argmax(votes)
    raise ValueError(f"unknown aggregation {method!r}; expected one of {AGGREGATIONS}")


def decode_words(posteriors: np.ndarray, words: Sequence[WordSegment], method: str = "sum") -> np.ndarray:
    """Speaker label for each word from a (T, N, M) posterior array."""
    T, N = posteriors.shape[:2]
    labels = np.empty(len(words), dtype=int)
    for i, w in enumerate(words):
        if w.end >= T or w.n >= N:
            raise ValueError(f"word {w.l} outside the decoded range (T={T}, N={N})")
        labels[i] = aggregate_word(posteriors[w.start:w.end + 1, w.n], method)
    return labels


def frame_location_summary(ensemble):
    """Weighted circular mean and resultant of every speaker's location."""
    w = ensemble.weights
    c = w @ np.cos(ensemble.theta)
    s = w @ np.sin(ensemble.theta)
    resultant = np.minimum(np.hypot(c, s), 1.0)
    mean = np.where(resultant < RESULTANT_EPS, 0.0, np.arctan2(s, c))
    return wrap_angle(mean), resultant


def location_trace(ensembles):
    """Per-frame location mean and resultant, each of shape (T, M)."""
    means, resultants = [], []
    for ens in ensembles:
        m, r = frame_location_summary(ens)
        means.append(np.atleast_1d(m))
        resultants.append(np.atleast_1d(r))
    return np.array(means), np.array(resultants)


def summarise_stream(ensembles, M: int):
    """Posteriors (T, N, M) plus location means and resultants (T, M).

    Consumes any iterable, e.g. ``iter_forward``, holding one frame at a time.
    """
    posts, means, resultants = [], [], []
    for ens in ensembles:
        posts.append(posterior_array([ens], M)[0])
        m, r = frame_location_summary(ens)
        means.append(np.atleast_1d(m))
        resultants.append(np.atleast_1d(r))
    return np.array(posts), np.array(means), np.array(resultants)
