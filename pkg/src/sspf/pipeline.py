"""AHC initialisation, Hungarian speaker tagging and diarisation metrics."""

from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .model import BinGeometry, ModelParams, ObservationFrame, WordSegment


@dataclass
class Segment:
    n: int
    start: int
    end: int
    embedding: np.ndarray


@dataclass
class Clustering:
    labels: np.ndarray  # per segment, 0..K-1
    K: int


def segments_from_words(observations: Sequence[ObservationFrame],
                        words: Sequence[WordSegment]) -> List[Segment]:
    """One segment per word: the renormalised mean d-vector over its frames."""
    segments = []
    for w in words:
        vecs = [observations[t].channels[w.n].dvec for t in w.frames
                if w.n in observations[t].channels]
        if not vecs:
            raise ValueError(f"word {w.l} covers no observed frame on channel {w.n}")
        mean = np.sum(vecs, axis=0)
        norm = np.linalg.norm(mean)
        if norm == 0:
            raise ValueError(f"word {w.l} has a zero mean embedding")
        segments.append(Segment(w.n, w.start, w.end, mean / norm))
    return segments


def ahc_cluster(segments: Sequence[Segment], threshold: float) -> Clustering:
    """Greedy agglomerative clustering on cluster-mean cosine similarity.

    The most similar pair is merged until the best similarity drops below
    ``threshold``.  Ties go to the lexicographically smallest pair of
    cluster ids, where a cluster's id is its smallest member index.
    """
    if len(segments) == 0:
        raise ValueError("need at least one segment")
    sums = np.array([s.embedding for s in segments], dtype=float)
    n = sums.shape[0]
    owner = np.arange(n)
    alive = np.ones(n, dtype=bool)
    unit = sums / np.linalg.norm(sums, axis=1, keepdims=True)
    sim = unit @ unit.T
    # only the upper triangle (a < b) is searched
    sim[np.tril_indices(n)] = -np.inf

    while n > 1:
        a, b = divmod(int(np.argmax(sim)), n)
        if not sim[a, b] >= threshold:
            break
        sums[a] += sums[b]
        owner[owner == b] = a
        alive[b] = False
        sim[b, :] = -np.inf
        sim[:, b] = -np.inf
        others = np.flatnonzero(alive)
        others = others[others != a]
        if others.size == 0:
            break
        units = sums[others] / np.linalg.norm(sums[others], axis=1, keepdims=True)
        row = units @ (sums[a] / np.linalg.norm(sums[a]))
        lower = others < a
        sim[others[lower], a] = row[lower]
        sim[a, others[~lower]] = row[~lower]

    ids, labels = np.unique(owner, return_inverse=True)
    return Clustering(labels.astype(int), ids.size)


def estimate_centroids(segments: Sequence[Segment], clustering: Clustering) -> np.ndarray:
    """vMF maximum-likelihood mean direction of every cluster."""
    emb = np.array([s.embedding for s in segments], dtype=float)
    out = np.empty((clustering.K, emb.shape[1]))
    for k in range(clustering.K):
        total = emb[clustering.labels == k].sum(axis=0)
        norm = np.linalg.norm(total)
        if norm < 1e-12:
            raise ValueError(f"cluster {k} has a zero resultant; mean direction undefined")
        out[k] = total / norm
    return out


def estimate_transitions(frame_labels: Sequence[Sequence[int]], M: int, alpha: float = 0.1) -> np.ndarray:
    """Bigram transition matrix pooled over channels, smoothed towards uniform.

    Negative labels mark silence; bigrams touching silence are skipped.
    Rows without any counts fall back to uniform.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    counts = np.zeros((M, M))
    for seq in frame_labels:
        seq = np.asarray(seq, dtype=int)
        if seq.size and seq.max() >= M:
            raise ValueError(f"label {seq.max()} outside 0..{M - 1}")
        prev, nxt = seq[:-1], seq[1:]
        keep = (prev >= 0) & (nxt >= 0)
        np.add.at(counts, (prev[keep], nxt[keep]), 1.0)
    totals = counts.sum(axis=1, keepdims=True)
    ml = np.where(totals > 0, counts / np.where(totals > 0, totals, 1.0), 1.0 / M)
    A = (1.0 - alpha) * ml + alpha / M
    return A / A.sum(axis=1, keepdims=True)


def hungarian_map(cost) -> dict:
    """Minimum-cost one-to-one assignment of rows to columns."""
    cost = np.asarray(cost, dtype=float)
    if not np.all(np.isfinite(cost)):
        raise ValueError("cost matrix must be finite")
    rows, cols = linear_sum_assignment(cost)
    return {int(r): int(c) for r, c in zip(rows, cols)}


def map_labels(hyp, ref) -> dict:
    """Hypothesis label -> reference label mapping maximising agreement."""
    hyp = np.asarray(hyp)
    ref = np.asarray(ref)
    h_ids = np.unique(hyp)
    r_ids = np.unique(ref)
    conf = np.zeros((h_ids.size, r_ids.size))
    np.add.at(conf, (np.searchsorted(h_ids, hyp), np.searchsorted(r_ids, ref)), 1.0)
    assignment = hungarian_map(-conf)
    return {int(h_ids[i]): int(r_ids[j]) for i, j in assignment.items()}


@dataclass
class DiarisationReport:
    word_error_rate: float
    frame_error_rate: float
    confusion: np.ndarray
    mapping: dict

    def to_text(self) -> str:
        lines = [
            f"word_speaker_error_rate {self.word_error_rate:.6f}",
            f"frame_speaker_error_rate {self.frame_error_rate:.6f}",
            "mapping " + " ".join(f"{h}->{r}" for h, r in sorted(self.mapping.items())),
            "confusion",
        ]
        lines += [" ".join(str(int(v)) for v in row) for row in self.confusion]
        return "\n".join(lines) + "\n"


def diarisation_metrics(hyp, ref, durations=None) -> DiarisationReport:
    """Speaker error rates after optimal relabelling of the hypothesis.

    ``durations`` (frames per word) weights the frame-level rate; without it
    every word counts as one frame.
    """
    hyp = np.asarray(hyp, dtype=int)
    ref = np.asarray(ref, dtype=int)
    if hyp.shape != ref.shape:
        raise ValueError(f"hypothesis has {hyp.size} words, reference {ref.size}")
    if hyp.size == 0:
        raise ValueError("no words to score")
    durations = np.ones(hyp.size) if durations is None else np.asarray(durations, dtype=float)
    if durations.shape != hyp.shape:
        raise ValueError("durations must align with the words")
    mapping = map_labels(hyp, ref)
    mapped = np.array([mapping.get(int(h), -1) for h in hyp])
    wrong = mapped != ref
    h_ids, r_ids = np.unique(hyp), np.unique(ref)
    conf = np.zeros((h_ids.size, r_ids.size), dtype=int)
    np.add.at(conf, (np.searchsorted(h_ids, hyp), np.searchsorted(r_ids, ref)), 1)
    return DiarisationReport(
        word_error_rate=float(wrong.mean()),
        frame_error_rate=float(durations[wrong].sum() / durations.sum()),
        confusion=conf,
        mapping=mapping,
    )


def initialize_params(observations: Sequence[ObservationFrame], words: Sequence[WordSegment],
                      N: int, gamma: float, sigma_move: float, kappa: float,
                      threshold: float = 0.5, alpha: float = 0.1, S: int = 360,
                      enrolled: Optional[np.ndarray] = None):
    """Model parameters from an AHC run over word segments.

    With ``enrolled`` centroids, clusters are reordered by a Hungarian match
    on cosine similarity so cluster ``k`` is tagged as the enrolled speaker
    it maps to; unmatched clusters keep trailing indices.

    Returns ``(params, segment_labels)``.
    """
    segments = segments_from_words(observations, words)
    clustering = ahc_cluster(segments, threshold)
    centroids = estimate_centroids(segments, clustering)
    labels = clustering.labels
    if enrolled is not None:
        enrolled = np.asarray(enrolled, dtype=float)
        assignment = hungarian_map(-(centroids @ enrolled.T))
        order = sorted(range(clustering.K), key=lambda k: (assignment.get(k, enrolled.shape[0] + k)))
        remap = np.empty(clustering.K, dtype=int)
        remap[order] = np.arange(clustering.K)
        centroids = centroids[order]
        labels = remap[labels]

    T = len(observations)
    frame_labels = np.full((N, T), -1, dtype=int)
    for w, lab in zip(words, labels):
        frame_labels[w.n, w.start:w.end + 1] = lab
    A = estimate_transitions(frame_labels, clustering.K, alpha)
    params = ModelParams(centroids, A, N, gamma, sigma_move, kappa, BinGeometry(S))
    return params, labels
