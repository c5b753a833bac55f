"""Joint speaker diarisation and location tracking with a switching
state-space particle filter."""

from .circstats import circ_mean_resultant, vm_logpdf, vm_sample, wrap_angle
from .decode import (
    aggregate_word,
    decode_words,
    frame_speaker_posterior,
    location_trace,
    posterior_array,
    summarise_stream,
)
from .emissions import EmissionConfig, frame_log_emission
from .estimator import SSPFDiariser
from .filter import FilterConfig, ModelDataMismatchError, ParticleEnsemble, forward_pass, iter_forward
from .model import (
    BinGeometry,
    ChannelObservation,
    ModelParams,
    ObservationFrame,
    Particle,
    WordSegment,
    validate_params,
)
from .simkit import SimConfig, grid_hmm_posterior, simulate_meeting
from .smoother import ParticleImpoverishmentError, backward_pass

__version__ = "0.1.0"
