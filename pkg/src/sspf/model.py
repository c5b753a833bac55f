"""Core data types, angular bin geometry and SSL feature utilities."""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
from scipy.special import logsumexp

from .circstats import TWO_PI, circ_mean_resultant, wrap_angle

SSL_TOL = 1e-9
SSL_RENORM_TOL = 1e-6
UNIT_NORM_TOL = 1e-6
ROW_SUM_TOL = 1e-9


@dataclass(frozen=True)
class BinGeometry:
    """``S`` evenly spaced angular bins, centres offset by half a bin."""

    S: int

    def __post_init__(self):
        if int(self.S) < 1:
            raise ValueError(f"number of bins must be positive, got {self.S}")

    @property
    def centers(self) -> np.ndarray:
        return -np.pi + (np.arange(self.S) + 0.5) * (TWO_PI / self.S)

    @property
    def width(self) -> float:
        return TWO_PI / self.S


def as_ssl(s, S: Optional[int] = None) -> np.ndarray:
    """Validate an SSL vector, renormalising tiny serialisation drift."""
    s = np.asarray(s, dtype=float).reshape(-1)
    if S is not None and s.size != S:
        raise ValueError(f"SSL vector has {s.size} bins, expected {S}")
    if s.size == 0 or not np.all(np.isfinite(s)) or np.any(s < 0):
        raise ValueError("SSL vector must be finite and non-negative")
    total = s.sum()
    if abs(total - 1.0) <= SSL_TOL:
        return s
    if abs(total - 1.0) <= SSL_RENORM_TOL:
        return s / total
    raise ValueError(f"SSL vector sums to {total!r}, not 1")


@dataclass
class ChannelObservation:
    """Observation for one active channel in one frame."""

    dvec: np.ndarray
    ssl: Optional[np.ndarray] = None
    doa: Optional[float] = None

    def __post_init__(self):
        self.dvec = np.asarray(self.dvec, dtype=float).reshape(-1)
        norm = np.linalg.norm(self.dvec)
        if abs(norm - 1.0) > UNIT_NORM_TOL:
            raise ValueError(f"d-vector must have unit norm, got {norm!r}")
        if self.ssl is not None:
            self.ssl = as_ssl(self.ssl)
        if self.doa is not None:
            self.doa = wrap_angle(float(self.doa))


@dataclass
class ObservationFrame:
    """Per-channel observations of one frame; a missing channel is silent."""

    channels: Dict[int, ChannelObservation] = field(default_factory=dict)

    def is_silent(self, n: int) -> bool:
        return n not in self.channels


@dataclass(frozen=True)
class WordSegment:
    l: int
    n: int
    start: int
    end: int

    def __post_init__(self):
        if self.start > self.end:
            raise ValueError(f"word {self.l}: start {self.start} > end {self.end}")
        if self.start < 0 or self.n < 0:
            raise ValueError(f"word {self.l}: negative frame or channel index")

    @property
    def frames(self) -> range:
        return range(self.start, self.end + 1)


@dataclass
class Particle:
    """One hypothesis: active speaker per channel and location per speaker."""

    q: np.ndarray
    theta: np.ndarray


@dataclass
class ModelParams:
    """Parameters of the switching state-space model.

    ``mu`` holds the ``M`` speaker centroids as rows, ``A`` the speaker
    transition matrix shared across channels.  ``sigma_move`` is the
    location random-walk concentration, ``kappa`` the location emission
    concentration and ``gamma`` the d-vector concentration.
    """

    mu: np.ndarray
    A: np.ndarray
    N: int
    gamma: float
    sigma_move: float
    kappa: float
    bins: BinGeometry = field(default_factory=lambda: BinGeometry(360))

    def __post_init__(self):
        self.mu = np.atleast_2d(np.asarray(self.mu, dtype=float))
        self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
        self.N = int(self.N)
        if not isinstance(self.bins, BinGeometry):
            self.bins = BinGeometry(int(self.bins))

    @property
    def M(self) -> int:
        return self.mu.shape[0]

    @property
    def D(self) -> int:
        return self.mu.shape[1]

    def to_dict(self) -> dict:
        return {
            "M": self.M,
            "N": self.N,
            "mu": self.mu.tolist(),
            "A": self.A.tolist(),
            "gamma": float(self.gamma),
            "sigma_move": float(self.sigma_move),
            "kappa": float(self.kappa),
            "S": self.bins.S,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelParams":
        return cls(
            mu=np.asarray(d["mu"], dtype=float),
            A=np.asarray(d["A"], dtype=float),
            N=int(d["N"]),
            gamma=float(d["gamma"]),
            sigma_move=float(d["sigma_move"]),
            kappa=float(d["kappa"]),
            bins=BinGeometry(int(d.get("S", 360))),
        )


def ssl_mode_doa(s, bins: BinGeometry) -> float:
    """DOA as the centre of the most probable bin (lowest index on ties)."""
    s = as_ssl(s, bins.S)
    return float(bins.centers[int(np.argmax(s))])


def ssl_equiv_stats(s, kappa: float, bins: BinGeometry):
    """Equivalent concentration and mean direction of an SSL vector.

    Returns ``(rho, eta)`` such that
    ``kappa * sum_i s_i cos(b_i - theta) == rho * cos(eta - theta)``.
    """
    s = as_ssl(s, bins.S)
    eta, resultant = circ_mean_resultant(bins.centers, s)
    return float(kappa) * resultant, eta


def discretized_vm(theta: float, kappa: float, bins: BinGeometry) -> np.ndarray:
    """von Mises mass over the bins, normalised to a categorical vector."""
    logits = float(kappa) * np.cos(bins.centers - theta)
    logits -= logits.max()
    p = np.exp(logits)
    return p / p.sum()


def denominator_profile(kappa: float, S: int, grid: int = 1000) -> float:
    """Relative ripple (max - min) / mean of sum_j exp(kappa cos(b_j - theta))."""
    if grid < 100:
        raise ValueError("grid must have at least 100 points")
    centers = BinGeometry(S).centers
    thetas = np.linspace(-np.pi, np.pi, grid, endpoint=False)
    log_f = logsumexp(kappa * np.cos(centers[None, :] - thetas[:, None]), axis=1)
    f = np.exp(log_f - log_f.max())
    return float((f.max() - f.min()) / f.mean())


def validate_params(p: ModelParams) -> List[str]:
    """Every invariant violation of ``p``; an empty list means valid."""
    problems = []
    M = p.M
    if M < 1:
        problems.append("no speaker centroids")
    if p.N < 1:
        problems.append(f"channel count N={p.N} must be >= 1")
    if p.A.shape != (M, M):
        problems.append(f"transition matrix has shape {p.A.shape}, expected {(M, M)}")
    else:
        if np.any(p.A < 0) or not np.all(np.isfinite(p.A)):
            problems.append("transition matrix has negative or non-finite entries")
        for i, total in enumerate(p.A.sum(axis=1)):
            if abs(total - 1.0) > ROW_SUM_TOL:
                problems.append(f"transition row {i} sums to {total:.12g}, not 1")
    norms = np.linalg.norm(p.mu, axis=1)
    for m, norm in enumerate(norms):
        if not np.isfinite(norm) or abs(norm - 1.0) > UNIT_NORM_TOL:
            problems.append(f"centroid {m} has norm {norm:.12g}, not 1")
    for name in ("gamma", "sigma_move", "kappa"):
        value = getattr(p, name)
        if not np.isfinite(value) or value < 0:
            problems.append(f"{name}={value} must be finite and >= 0")
    return problems


def check_params(p: ModelParams) -> ModelParams:
    """Raise ``ValueError`` listing all problems if ``p`` is invalid."""
    problems = validate_params(p)
    if problems:
        raise ValueError("invalid model parameters: " + "; ".join(problems))
    return p


def boundary_frames(words: Sequence[WordSegment]) -> np.ndarray:
    """Sorted unique frame indices at which some word starts."""
    return np.unique(np.array([w.start for w in words], dtype=int))
