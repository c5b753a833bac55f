import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from sspf import SSPFDiariser
from sspf.estimator import check_observations, check_words
from sspf.model import ObservationFrame, WordSegment
from sspf.pipeline import diarisation_metrics
from sspf.simkit import SimConfig, simulate_meeting


@pytest.fixture(scope="module")
def meeting():
    return simulate_meeting(SimConfig(M=3, N=2, T=150, gamma_true=40.0, D=16, S=72,
                                      sigma_true=300.0, seed=8))


def test_params_roundtrip_and_clone():
    est = SSPFDiariser(n_particles=123, aggregate="majority", smooth=True)
    params = est.get_params()
    assert params["n_particles"] == 123 and params["aggregate"] == "majority"
    twin = clone(est)
    assert twin.get_params() == params
    est.set_params(location_feature="doa")
    assert est.location_feature == "doa"


def test_predict_before_fit():
    with pytest.raises(NotFittedError):
        SSPFDiariser().predict_proba([ObservationFrame()])


def test_bad_hyperparameters(meeting):
    X, words, _, _ = meeting
    for kw in (dict(location_feature="xyz"), dict(aggregate="mean"), dict(params="nope")):
        with pytest.raises((ValueError, TypeError)):
            SSPFDiariser(**kw).fit(X, words)


def test_fixed_params_path(meeting):
    X, words, truth, params = meeting
    est = SSPFDiariser(n_particles=1500, params=params).fit(X)
    assert est.n_speakers_ == 3
    proba = est.predict_proba(X, words)
    assert proba.shape == (150, 2, 3)
    np.testing.assert_allclose(proba.sum(axis=-1), 1.0)
    assert est.location_mean_.shape == est.location_resultant_.shape == (150, 3)
    labels = est.predict(X, words)
    assert diarisation_metrics(labels, truth.word_labels).word_error_rate < 0.1


def test_fit_predict_from_ahc_with_smoothing(meeting):
    X, words, truth, params = meeting
    est = SSPFDiariser(n_particles=800, smooth=True, n_backward=200, gamma=40.0,
                       n_bins=72, random_state=3)
    labels = est.fit_predict(X, words, enrolled=params.mu)
    assert est.params_.M == 3
    assert diarisation_metrics(labels, truth.word_labels).word_error_rate < 0.1


def test_same_seed_same_output(meeting):
    X, words, _, params = meeting
    a = SSPFDiariser(n_particles=300, params=params, random_state=5).fit(X).predict_proba(X, words)
    b = SSPFDiariser(n_particles=300, params=params, random_state=5).fit(X).predict_proba(X, words)
    c = SSPFDiariser(n_particles=300, params=params, random_state=6).fit(X).predict_proba(X, words)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)
    rs = np.random.RandomState(0)
    assert isinstance(SSPFDiariser(params=params, random_state=rs).fit(X).seed_, int)


def test_input_validation():
    frames = [ObservationFrame(), ObservationFrame()]
    with pytest.raises(TypeError):
        check_observations(ObservationFrame())
    with pytest.raises(ValueError):
        check_observations([])
    with pytest.raises(TypeError):
        check_observations([ObservationFrame(), "frame"])
    assert len(check_observations(frames, N=1)) == 2
    with pytest.raises(ValueError):
        check_words([WordSegment(0, 0, 1, 2)], T=2)
    with pytest.raises(ValueError):
        check_words([WordSegment(0, 3, 0, 0)], T=2, N=2)
    with pytest.raises(TypeError):
        check_words([(0, 0, 0, 0)], T=2)


def test_fit_without_words_needs_params():
    with pytest.raises(ValueError):
        SSPFDiariser().fit([ObservationFrame()])
