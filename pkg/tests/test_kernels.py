"""Kernel-level tests: hand-rolled elementwise math, dtype handling, and
equivalence of the compiled path with the pure-numpy fallback."""

import json
import os
import subprocess
import sys

import numpy as np
import pytest

from radarspectrum import _kernels, nn


def test_exp1d_accuracy():
    rng = np.random.default_rng(0)
    x = rng.uniform(-60.0, 60.0, size=4096)
    got = _kernels._exp1d(x.copy())
    ref = np.exp(x)
    assert np.max(np.abs(got - ref) / ref) < 1e-12


def test_exp1d_clamps_extremes():
    x = np.array([-1000.0, 0.0, 1000.0])
    got = _kernels._exp1d(x.copy())
    assert np.all(np.isfinite(got))
    assert got[1] == pytest.approx(1.0)
    assert got[0] < 1e-30


def test_tanh2d_accuracy():
    rng = np.random.default_rng(1)
    x = rng.uniform(-8.0, 8.0, size=(16, 33))
    got = _kernels._tanh2d(x.copy())
    assert np.max(np.abs(got - np.tanh(x))) < 1e-12


def test_chirp_phase_piecewise():
    b, tc = 200e6, 50e-6
    t = 10e-6
    assert _kernels.chirp_phase(t, b, tc) == pytest.approx(
        np.pi * (b / tc) * t * t)
    t2 = 60e-6
    assert _kernels.chirp_phase(t2, b, tc) == pytest.approx(
        -np.pi * (b / tc) * (t2 - 2 * tc) ** 2)
    # periodic with period 2 Tc
    assert _kernels.chirp_phase(t + 2 * tc, b, tc) == pytest.approx(
        _kernels.chirp_phase(t, b, tc), rel=1e-9)


_FALLBACK_WORKER = r"""
import json, sys
import numpy as np
from radarspectrum import _kernels, nn
assert not _kernels.USE_NUMBA
cfg = nn.NetConfig(input_width=7, fcl_width=4, lstm_widths=(4, 4, 3, 2),
                   n_actions=3, dtype="float64")
params = nn.init_params(np.random.default_rng(33), cfg)
rng = np.random.default_rng(44)
obs = rng.normal(size=(4, 2, 7))
acts = rng.integers(0, 3, size=(4, 2))
targets = rng.normal(size=(4, 2))
q, h1 = nn.forward(params, obs[0], nn.HiddenState.zeros(cfg, 2))
loss, grads = nn.bptt_gradients(params, obs, acts, targets,
                                nn.HiddenState.zeros(cfg, 2))
print(json.dumps({
    "q": q.tolist(),
    "h": [a.tolist() for a in h1.h],
    "loss": loss,
    "g0": grads[0].tolist(),
    "glast": grads[-1].tolist(),
}))
"""


@pytest.mark.skipif(not _kernels.USE_NUMBA,
                    reason="already running on the fallback")
def test_fallback_matches_numba():
    """The numpy fallback and the compiled kernels agree to float64 accuracy
    on the forward pass, the loss, and the gradients."""
    env = dict(os.environ, RADARSPECTRUM_NUMBA="0")
    res = subprocess.run([sys.executable, "-c", _FALLBACK_WORKER], env=env,
                         capture_output=True, text=True, check=True)
    fb = json.loads(res.stdout.strip().splitlines()[-1])

    cfg = nn.NetConfig(input_width=7, fcl_width=4, lstm_widths=(4, 4, 3, 2),
                       n_actions=3, dtype="float64")
    params = nn.init_params(np.random.default_rng(33), cfg)
    rng = np.random.default_rng(44)
    obs = rng.normal(size=(4, 2, 7))
    acts = rng.integers(0, 3, size=(4, 2))
    targets = rng.normal(size=(4, 2))
    q, h1 = nn.forward(params, obs[0], nn.HiddenState.zeros(cfg, 2))
    loss, grads = nn.bptt_gradients(params, obs, acts, targets,
                                    nn.HiddenState.zeros(cfg, 2))
    assert np.allclose(q, fb["q"], atol=1e-10)
    for a, b in zip(h1.h, fb["h"]):
        assert np.allclose(a, b, atol=1e-10)
    assert loss == pytest.approx(fb["loss"], rel=1e-10)
    assert np.allclose(grads[0], fb["g0"], atol=1e-10)
    assert np.allclose(grads[-1], fb["glast"], atol=1e-10)


def test_float32_kernels_run_and_agree():
    cfg32 = nn.NetConfig(n_actions=2, dtype="float32")
    p32 = nn.init_params(np.random.default_rng(5), cfg32)
    rng = np.random.default_rng(6)
    obs = rng.normal(size=(3, 2, 7)).astype(np.float32)
    acts = rng.integers(0, 2, size=(3, 2))
    targets = rng.normal(size=(3, 2)).astype(np.float32)
    loss, grads = nn.bptt_gradients(p32, obs, acts, targets,
                                    nn.HiddenState.zeros(cfg32, 2))
    assert np.isfinite(loss)
    assert all(g.dtype == np.float32 for g in grads)
