"""Compare the compiled kernels against the pure-numpy fallback.

Each backend is timed in a fresh subprocess (RADARSPECTRUM_NUMBA=1 / 0) so
JIT state cannot leak between measurements. Run:

    python3 benchmarks/bench_kernels.py
"""

import json
import os
import subprocess
import sys

_WORKER = r"""
import json, os, time
import numpy as np
from radarspectrum import _kernels, nn

assert _kernels.USE_NUMBA == (os.environ.get("RADARSPECTRUM_NUMBA", "1") != "0")

rng = np.random.default_rng(0)
cfg = nn.NetConfig(n_actions=2, dtype="float32")
params = nn.init_params(rng, cfg)
pargs = tuple(params._kernel_args())
dt = np.dtype(cfg.dtype)

def timeit(fn, reps, warmup=3):
    for _ in range(warmup):
        fn()
    t0 = time.perf_counter()
    for _ in range(reps):
        fn()
    return (time.perf_counter() - t0) / reps

out = {}

# single-step forward (the acting path)
obs1 = rng.normal(size=(1, 7)).astype(dt)
hid1 = [np.zeros((1, w), dt) for w in cfg.lstm_widths for _ in (0, 1)]
hid1 = []
for w in cfg.lstm_widths:
    hid1 += [np.zeros((1, w), dt), np.zeros((1, w), dt)]
out["forward_1_us"] = timeit(
    lambda: _kernels.qnet_forward_step(obs1, *pargs, *hid1), 200) * 1e6

# batched target forward (K*P = 800 rows)
obsb = rng.normal(size=(800, 7)).astype(dt)
hidb = []
for w in cfg.lstm_widths:
    hidb += [np.zeros((800, w), dt), np.zeros((800, w), dt)]
out["forward_800_ms"] = timeit(
    lambda: _kernels.qnet_forward_step(obsb, *pargs, *hidb), 20) * 1e3

# full BPTT update batch (P=20, K=40)
p, k = 20, 40
obs = rng.normal(size=(p, k, 7)).astype(dt)
acts = rng.integers(0, 2, size=(p, k))
targets = rng.normal(size=(p, k)).astype(dt)
hidden = nn.HiddenState.zeros(cfg, k)
out["bptt_ms"] = timeit(
    lambda: nn.bptt_gradients(params, obs, acts, targets, hidden), 10) * 1e3

print(json.dumps(out))
"""


def run_backend(numba_on: bool) -> dict:
    env = dict(os.environ, RADARSPECTRUM_NUMBA="1" if numba_on else "0")
    res = subprocess.run([sys.executable, "-c", _WORKER], env=env,
                         capture_output=True, text=True, check=True)
    return json.loads(res.stdout.strip().splitlines()[-1])


def main():
    numba = run_backend(True)
    numpy_ = run_backend(False)
    print(f"{'kernel':<18}{'numba':>12}{'numpy':>12}{'speedup':>10}")
    units = {"forward_1_us": "us", "forward_800_ms": "ms", "bptt_ms": "ms"}
    for key, unit in units.items():
        a, b = numba[key], numpy_[key]
        print(f"{key:<18}{a:>10.3f}{unit:>2}{b:>10.3f}{unit:>2}{b / a:>9.1f}x")


if __name__ == "__main__":
    main()
