"""scikit-learn style front end for the particle-filter diariser."""

from typing import Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils import check_random_state
from sklearn.utils.validation import check_is_fitted

from .decode import AGGREGATIONS, decode_words, frame_location_summary, posterior_array
from .emissions import LOCATION_FEATURES, EmissionConfig, pack_observations
from .filter import FilterConfig, iter_forward
from .model import ModelParams, ObservationFrame, WordSegment, check_params
from .pipeline import initialize_params
from .smoother import backward_pass


def check_observations(X, N: Optional[int] = None) -> list:
    """Validate a sequence of ``ObservationFrame`` objects."""
    if isinstance(X, ObservationFrame):
        raise TypeError("expected a sequence of ObservationFrame, got a single frame")
    frames = list(X)
    if not frames:
        raise ValueError("no observation frames")
    for t, frame in enumerate(frames):
        if not isinstance(frame, ObservationFrame):
            raise TypeError(f"frame {t} is {type(frame).__name__}, not ObservationFrame")
        if N is not None:
            bad = [n for n in frame.channels if not 0 <= n < N]
            if bad:
                raise ValueError(f"frame {t} has channels {bad} outside 0..{N - 1}")
    return frames


def check_words(words, T: int, N: Optional[int] = None) -> list:
    words = list(words)
    for w in words:
        if not isinstance(w, WordSegment):
            raise TypeError(f"expected WordSegment, got {type(w).__name__}")
        if w.end >= T:
            raise ValueError(f"word {w.l} ends at frame {w.end}, beyond T={T}")
        if N is not None and w.n >= N:
            raise ValueError(f"word {w.l} on channel {w.n}, beyond N={N}")
    return words


class SSPFDiariser(BaseEstimator):
    """Diarise words while tracking every speaker's angular location.

    ``fit`` initialises the model from an AHC clustering of the word
    segments (or adopts ``params`` when given).  ``predict_proba`` runs the
    particle filter, optionally followed by the backward smoother, and
    returns per-frame speaker posteriors of shape (T, N, M).  ``predict``
    aggregates them into one speaker per word.
    """

    def __init__(self, n_particles=20000, ess_threshold=0.5, location_feature="ssl",
                 gamma=10.0, sigma_move=1000.0, kappa=10.0, aggregate="sum", smooth=False,
                 n_backward=5000, restrict_forward=False, restrict_backward=False,
                 ahc_threshold=0.5, transition_smoothing=0.1, n_bins=360, n_channels=None,
                 params=None, random_state=0):
        self.n_particles = n_particles
        self.ess_threshold = ess_threshold
        self.location_feature = location_feature
        self.gamma = gamma
        self.sigma_move = sigma_move
        self.kappa = kappa
        self.aggregate = aggregate
        self.smooth = smooth
        self.n_backward = n_backward
        self.restrict_forward = restrict_forward
        self.restrict_backward = restrict_backward
        self.ahc_threshold = ahc_threshold
        self.transition_smoothing = transition_smoothing
        self.n_bins = n_bins
        self.n_channels = n_channels
        self.params = params
        self.random_state = random_state

    def _check_hyperparams(self):
        if self.location_feature not in LOCATION_FEATURES:
            raise ValueError(f"location_feature must be one of {LOCATION_FEATURES}")
        if self.aggregate not in AGGREGATIONS:
            raise ValueError(f"aggregate must be one of {AGGREGATIONS}")
        if self.params is not None and not isinstance(self.params, ModelParams):
            raise TypeError("params must be a ModelParams instance")

    def _seed(self) -> int:
        if isinstance(self.random_state, (int, np.integer)):
            return int(self.random_state)
        return int(check_random_state(self.random_state).randint(2**31 - 1))

    def fit(self, X, words: Sequence[WordSegment] = (), enrolled=None):
        self._check_hyperparams()
        frames = check_observations(X)
        if self.params is not None:
            params = check_params(self.params)
            self.segment_labels_ = None
        else:
            N = self.n_channels
            if N is None:
                N = 1 + max((n for f in frames for n in f.channels), default=0)
            words = check_words(words, len(frames), N)
            if not words:
                raise ValueError("AHC initialisation needs word segments")
            params, self.segment_labels_ = initialize_params(
                frames, words, N, self.gamma, self.sigma_move, self.kappa,
                threshold=self.ahc_threshold, alpha=self.transition_smoothing,
                S=self.n_bins, enrolled=enrolled,
            )
        self.params_ = params
        self.n_speakers_ = params.M
        self.seed_ = self._seed()
        return self

    def _configs(self):
        emis = EmissionConfig(self.location_feature, float(self.params_.gamma),
                              float(self.params_.kappa))
        filt = FilterConfig(int(self.n_particles), float(self.ess_threshold),
                            bool(self.restrict_forward), self.seed_)
        return emis, filt

    def predict_proba(self, X, words: Sequence[WordSegment] = ()) -> np.ndarray:
        check_is_fitted(self, "params_")
        params = self.params_
        frames = check_observations(X, params.N)
        words = check_words(words, len(frames), params.N)
        emis, filt = self._configs()
        packed = pack_observations(frames, params, emis)
        M = params.M

        means, resultants, posts = [], [], []

        def stream():
            for ens in iter_forward(packed, words, params, emis, filt):
                mean, res = frame_location_summary(ens)
                means.append(np.atleast_1d(mean))
                resultants.append(np.atleast_1d(res))
                if not self.smooth:
                    posts.append(posterior_array([ens], M)[0])
                yield ens

        if self.smooth:
            # the smoother sub-samples each frame as it arrives
            smoothed = backward_pass(stream(), params, filt, int(self.n_backward), words,
                                     restrict=bool(self.restrict_backward))
            result = posterior_array(smoothed, M)
        else:
            for _ in stream():
                pass
            result = np.array(posts)
        self.location_mean_ = np.array(means)
        self.location_resultant_ = np.array(resultants)
        return result

    def predict(self, X, words: Sequence[WordSegment]) -> np.ndarray:
        words = list(words)
        posteriors = self.predict_proba(X, words)
        return decode_words(posteriors, words, self.aggregate)

    def fit_predict(self, X, words: Sequence[WordSegment], enrolled=None) -> np.ndarray:
        return self.fit(X, words, enrolled=enrolled).predict(X, words)
