import numpy as np
import pytest

from radarspectrum import signal as sig


@pytest.fixture
def short_params() -> sig.RadarParams:
    """Full-fidelity waveform parameters with a one-chirp-pair frame.

    The receiver pipeline only uses the first up/down windows, so shrinking
    the frame changes nothing except synthesis cost.
    """
    p = sig.RadarParams()
    return p.with_(frame_duration=2.0 * p.chirp_interval)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)
