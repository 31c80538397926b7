"""Hot numeric kernels: FMCW sample synthesis and the recurrent Q-network
forward/backward passes.

Every kernel is written as plain numpy-compatible Python and jit-compiled
with numba unless the environment variable ``RADARSPECTRUM_NUMBA=0`` is set,
in which case the pure-numpy fallback is used (same code, no compilation).
``benchmarks/bench_kernels.py`` compares the two paths.

Network kernels are dtype-polymorphic (float32 or float64, following their
inputs); signal synthesis is complex128. The elementwise exp is hand-rolled
(range reduction + polynomial + exponent bit twiddling) because the scalar
libm calls emitted without SVML dominate the LSTM runtime otherwise; it is
accurate to ~1e-14 relative.
"""

import math
import os

import numpy as np

USE_NUMBA = os.environ.get("RADARSPECTRUM_NUMBA", "1").lower() not in ("0", "false", "no")

if USE_NUMBA:
    try:
        from numba import njit as _njit

        def jit(fn):
            return _njit(cache=True, nogil=True, fastmath=True)(fn)
    except ImportError:  # pragma: no cover
        USE_NUMBA = False

if not USE_NUMBA:
    def jit(fn):
        return fn


C_LIGHT = 3.0e8


# ---------------------------------------------------------------------------
# FMCW signal synthesis
# ---------------------------------------------------------------------------

@jit
def chirp_phase(t, bandwidth, tc):
    """Baseband phase (rad) of the periodic triangular chirp at time t.

    Up-ramp on [0, Tc), down-ramp on [Tc, 2Tc), extended periodically.
    """
    tm = t % (2.0 * tc)
    if tm < tc:
        return math.pi * (bandwidth / tc) * tm * tm
    return -math.pi * (bandwidth / tc) * (tm - 2.0 * tc) * (tm - 2.0 * tc)


@jit
def synth_tx(n, fs, bandwidth, tc):
    """Unit-amplitude baseband samples of the triangular chirp train."""
    out = np.empty(n, dtype=np.complex128)
    for k in range(n):
        p = chirp_phase(k / fs, bandwidth, tc)
        out[k] = complex(math.cos(p), math.sin(p))
    return out


@jit
def synth_rx(n, fs, bandwidth, tc, fm, echoes, interferers):
    """Superposition of echoes and interferer signals (noise added by caller).

    echoes:      (E, 3) rows [range_m, radial_velocity, rx_power]
    interferers: (I, 4) rows [distance_m, relative_velocity, rx_power, tc_prime]

    Delays are applied by evaluating the analytic chirp phase at the delayed
    time; the carrier contributes exp(-j 2 pi f_m tau) after baseband mixing.
    """
    out = np.zeros(n, dtype=np.complex128)
    two_pi = 2.0 * math.pi
    for k in range(n):
        t = k / fs
        acc_re = 0.0
        acc_im = 0.0
        for e in range(echoes.shape[0]):
            d = echoes[e, 0]
            v = echoes[e, 1]
            amp = math.sqrt(echoes[e, 2])
            tau = 2.0 * (d - v * t) / C_LIGHT
            p = chirp_phase(t - tau, bandwidth, tc) - two_pi * fm * tau
            acc_re += amp * math.cos(p)
            acc_im += amp * math.sin(p)
        for i in range(interferers.shape[0]):
            dp = interferers[i, 0]
            vp = interferers[i, 1]
            amp = math.sqrt(interferers[i, 2])
            tcp = interferers[i, 3]
            tau = (dp - vp * t) / C_LIGHT
            p = chirp_phase(t - tau, bandwidth, tcp) - two_pi * fm * tau
            acc_re += amp * math.cos(p)
            acc_im += amp * math.sin(p)
        out[k] = complex(acc_re, acc_im)
    return out


# ---------------------------------------------------------------------------
# Vectorizable elementwise activations
#
# Scalar exp via range reduction + degree-11 polynomial + power-of-two table;
# accurate to ~1e-14 relative on the clamped range, and inlineable so the
# gate loops vectorize without libm calls.
# ---------------------------------------------------------------------------

_LOG2E = 1.4426950408889634
_LN2_HI = 6.93147180369123816490e-01
_LN2_LO = 1.90821492927058770002e-10


@jit
def _exp1d(v):
    """Elementwise exp over a 1-D array, clamped to |v| <= 80.

    Two vectorizable passes: degree-11 polynomial on the reduced argument,
    then scaling by 2**n assembled directly in the exponent bits. Accurate to
    ~1e-14 relative; the clamp only matters where downstream sigmoids and
    tanhs are saturated anyway.
    """
    n = v.shape[0]
    out = np.empty(n, v.dtype)
    bits = np.empty(n, np.int64)
    for k in range(n):
        x = v[k]
        if x > 80.0:
            x = 80.0
        elif x < -80.0:
            x = -80.0
        fn = math.floor(x * _LOG2E + 0.5)
        r = x - fn * _LN2_HI - fn * _LN2_LO
        p = 1.0 / 39916800.0
        p = p * r + 1.0 / 3628800.0
        p = p * r + 1.0 / 362880.0
        p = p * r + 1.0 / 40320.0
        p = p * r + 1.0 / 5040.0
        p = p * r + 1.0 / 720.0
        p = p * r + 1.0 / 120.0
        p = p * r + 1.0 / 24.0
        p = p * r + 1.0 / 6.0
        p = p * r + 0.5
        p = p * r + 1.0
        p = p * r + 1.0
        out[k] = p
        bits[k] = (np.int64(fn) + 1023) << 52
    scale = bits.view(np.float64)
    for k in range(n):
        out[k] *= scale[k]
    return out


@jit
def _tanh2d(x):
    rows, cols = x.shape
    n = rows * cols
    flat = np.empty(n, x.dtype)
    xr = np.ascontiguousarray(x).reshape(n)
    for k in range(n):
        flat[k] = -2.0 * xr[k]
    e = _exp1d(flat)
    out = np.empty((rows, cols), x.dtype)
    o = out.reshape(n)
    for k in range(n):
        o[k] = (1.0 - e[k]) / (1.0 + e[k])
    return out


# ---------------------------------------------------------------------------
# Recurrent Q-network kernels
#
# Architecture: FCL (tanh) -> 4 stacked LSTM layers -> linear head.
# Gate layout within the width-4H gate axis: [input, forget, candidate, output].
# ---------------------------------------------------------------------------

@jit
def _cell_elementwise(xw, hu, b, c_prev, gi, gf, gg, go, c_out, tc_out, h_out):
    """Fused gate activations and state update for one time step.

    xw, hu: (B, 4H) input and recurrent projections; b: (4H,) bias.
    Outputs are written into the (B, H) buffers.
    """
    batch, four_h = xw.shape
    hwidth = four_h // 4
    v = np.empty(batch * four_h, xw.dtype)
    for bi in range(batch):
        base = bi * four_h
        for j in range(hwidth):
            v[base + j] = -(xw[bi, j] + hu[bi, j] + b[j])
            v[base + hwidth + j] = -(xw[bi, hwidth + j] + hu[bi, hwidth + j] + b[hwidth + j])
            v[base + 2 * hwidth + j] = -2.0 * (xw[bi, 2 * hwidth + j] + hu[bi, 2 * hwidth + j] + b[2 * hwidth + j])
            v[base + 3 * hwidth + j] = -(xw[bi, 3 * hwidth + j] + hu[bi, 3 * hwidth + j] + b[3 * hwidth + j])
    e = _exp1d(v)
    cneg = np.empty(batch * hwidth, xw.dtype)
    for bi in range(batch):
        base = bi * four_h
        for j in range(hwidth):
            i_ = 1.0 / (1.0 + e[base + j])
            f_ = 1.0 / (1.0 + e[base + hwidth + j])
            eg = e[base + 2 * hwidth + j]
            g_ = (1.0 - eg) / (1.0 + eg)
            o_ = 1.0 / (1.0 + e[base + 3 * hwidth + j])
            c = f_ * c_prev[bi, j] + i_ * g_
            gi[bi, j] = i_
            gf[bi, j] = f_
            gg[bi, j] = g_
            go[bi, j] = o_
            c_out[bi, j] = c
            cneg[bi * hwidth + j] = -2.0 * c
    ec = _exp1d(cneg)
    for bi in range(batch):
        for j in range(hwidth):
            x = ec[bi * hwidth + j]
            tc = (1.0 - x) / (1.0 + x)
            tc_out[bi, j] = tc
            h_out[bi, j] = go[bi, j] * tc


@jit
def _cell_fwd(xw, hu, b, c_prev, c_out, h_out):
    """Inference-only cell step: updates (c, h) without caching gate values."""
    batch, four_h = xw.shape
    hwidth = four_h // 4
    v = np.empty(batch * four_h, xw.dtype)
    for bi in range(batch):
        base = bi * four_h
        for j in range(hwidth):
            v[base + j] = -(xw[bi, j] + hu[bi, j] + b[j])
            v[base + hwidth + j] = -(xw[bi, hwidth + j] + hu[bi, hwidth + j] + b[hwidth + j])
            v[base + 2 * hwidth + j] = -2.0 * (xw[bi, 2 * hwidth + j] + hu[bi, 2 * hwidth + j] + b[2 * hwidth + j])
            v[base + 3 * hwidth + j] = -(xw[bi, 3 * hwidth + j] + hu[bi, 3 * hwidth + j] + b[3 * hwidth + j])
    e = _exp1d(v)
    cneg = np.empty(batch * hwidth, xw.dtype)
    for bi in range(batch):
        base = bi * four_h
        for j in range(hwidth):
            i_ = 1.0 / (1.0 + e[base + j])
            f_ = 1.0 / (1.0 + e[base + hwidth + j])
            eg = e[base + 2 * hwidth + j]
            g_ = (1.0 - eg) / (1.0 + eg)
            c = f_ * c_prev[bi, j] + i_ * g_
            c_out[bi, j] = c
            cneg[bi * hwidth + j] = -2.0 * c
    ec = _exp1d(cneg)
    for bi in range(batch):
        base = bi * four_h
        for j in range(hwidth):
            x = ec[bi * hwidth + j]
            o_ = 1.0 / (1.0 + e[base + 3 * hwidth + j])
            h_out[bi, j] = o_ * (1.0 - x) / (1.0 + x)


@jit
def _layer_fwd_step(x, h_prev, c_prev, w, u, b):
    """Inference step for one layer: returns (h, c)."""
    batch = h_prev.shape[0]
    hwidth = h_prev.shape[1]
    xw = np.dot(x, w)
    hu = np.dot(h_prev, u)
    c = np.empty((batch, hwidth), h_prev.dtype)
    h = np.empty((batch, hwidth), h_prev.dtype)
    _cell_fwd(xw, hu, b, c_prev, c, h)
    return h, c


@jit
def _lstm_cell(xw, h_prev, c_prev, u, b):
    """One cell step; xw is the precomputed input projection x @ W."""
    batch = h_prev.shape[0]
    hwidth = h_prev.shape[1]
    hu = np.dot(h_prev, u)
    gi = np.empty((batch, hwidth), h_prev.dtype)
    gf = np.empty((batch, hwidth), h_prev.dtype)
    gg = np.empty((batch, hwidth), h_prev.dtype)
    go = np.empty((batch, hwidth), h_prev.dtype)
    c = np.empty((batch, hwidth), h_prev.dtype)
    tc = np.empty((batch, hwidth), h_prev.dtype)
    h = np.empty((batch, hwidth), h_prev.dtype)
    _cell_elementwise(xw, hu, b, c_prev, gi, gf, gg, go, c, tc, h)
    return gi, gf, gg, go, c, tc, h


@jit
def qnet_forward_step(obs, fcl_w, fcl_b,
                      w1, u1, b1, w2, u2, b2, w3, u3, b3, w4, u4, b4,
                      head_w, head_b,
                      h1, c1, h2, c2, h3, c3, h4, c4):
    """Single-step batched forward pass (inference path, no activation caches).

    Returns (q, nh1, nc1, nh2, nc2, nh3, nc3, nh4, nc4).
    """
    a = _tanh2d(np.dot(obs, fcl_w) + fcl_b)
    nh1, nc1 = _layer_fwd_step(a, h1, c1, w1, u1, b1)
    nh2, nc2 = _layer_fwd_step(nh1, h2, c2, w2, u2, b2)
    nh3, nc3 = _layer_fwd_step(nh2, h3, c3, w3, u3, b3)
    nh4, nc4 = _layer_fwd_step(nh3, h4, c4, w4, u4, b4)
    q = np.dot(nh4, head_w) + head_b
    return q, nh1, nc1, nh2, nc2, nh3, nc3, nh4, nc4


@jit
def _lstm_layer_forward(xs, h0, c0, w, u, b):
    """Run one LSTM layer over a (P, B, in) sequence; cache activations.

    The input projection for all time steps is batched into one matmul; only
    the recurrent projection runs per step.
    """
    steps, batch, inw = xs.shape
    hwidth = h0.shape[1]
    gi = np.empty((steps, batch, hwidth), xs.dtype)
    gf = np.empty((steps, batch, hwidth), xs.dtype)
    gg = np.empty((steps, batch, hwidth), xs.dtype)
    go = np.empty((steps, batch, hwidth), xs.dtype)
    cs = np.empty((steps, batch, hwidth), xs.dtype)
    tcs = np.empty((steps, batch, hwidth), xs.dtype)
    hs = np.empty((steps, batch, hwidth), xs.dtype)
    xw_all = np.dot(np.ascontiguousarray(xs).reshape(steps * batch, inw), w)
    h = h0
    c = c0
    for t in range(steps):
        hu = np.dot(h, u)
        _cell_elementwise(xw_all[t * batch:(t + 1) * batch], hu, b, c,
                          gi[t], gf[t], gg[t], go[t], cs[t], tcs[t], hs[t])
        h = hs[t]
        c = cs[t]
    return gi, gf, gg, go, cs, tcs, hs


@jit
def _lstm_layer_backward(xs, h0, c0, hs, w, u, gi, gf, gg, go, cs, tcs, dh_in):
    """BPTT through one LSTM layer; returns (dW, dU, db, dxs).

    Per-step work is elementwise plus the recurrent projection; weight
    gradients and input gradients are batched matmuls over all steps.
    """
    steps, batch, inw = xs.shape
    hwidth = h0.shape[1]
    u_t = np.ascontiguousarray(u.T)
    w_t = np.ascontiguousarray(w.T)
    dpre_all = np.empty((steps, batch, 4 * hwidth), xs.dtype)
    dh_rec = np.zeros((batch, hwidth), xs.dtype)
    dc_rec = np.zeros((batch, hwidth), xs.dtype)
    for t in range(steps - 1, -1, -1):
        c_prev = cs[t - 1] if t > 0 else c0
        dpre = dpre_all[t]
        for bi in range(batch):
            for j in range(hwidth):
                gi_ = gi[t, bi, j]
                gf_ = gf[t, bi, j]
                gg_ = gg[t, bi, j]
                go_ = go[t, bi, j]
                tc = tcs[t, bi, j]
                dh = dh_in[t, bi, j] + dh_rec[bi, j]
                dc = dh * go_ * (1.0 - tc * tc) + dc_rec[bi, j]
                dpre[bi, j] = dc * gg_ * gi_ * (1.0 - gi_)
                dpre[bi, hwidth + j] = dc * c_prev[bi, j] * gf_ * (1.0 - gf_)
                dpre[bi, 2 * hwidth + j] = dc * gi_ * (1.0 - gg_ * gg_)
                dpre[bi, 3 * hwidth + j] = dh * tc * go_ * (1.0 - go_)
                dc_rec[bi, j] = dc * gf_
        dh_rec = np.dot(dpre, u_t)
    flat_dpre = dpre_all.reshape(steps * batch, 4 * hwidth)
    flat_xs = np.ascontiguousarray(xs).reshape(steps * batch, inw)
    # h_prev sequence: h0 followed by hs[:-1]
    flat_hprev = np.empty((steps * batch, hwidth), xs.dtype)
    flat_hprev[:batch] = h0
    if steps > 1:
        flat_hprev[batch:] = hs[:steps - 1].reshape((steps - 1) * batch, hwidth)
    dw = np.dot(np.ascontiguousarray(flat_xs.T), flat_dpre)
    du = np.dot(np.ascontiguousarray(flat_hprev.T), flat_dpre)
    db = flat_dpre.sum(axis=0)
    dxs = np.dot(flat_dpre, w_t).reshape(steps, batch, inw)
    return dw, du, db, dxs


@jit
def qnet_loss_and_grads(obs, actions, targets,
                        fcl_w, fcl_b,
                        w1, u1, b1, w2, u2, b2, w3, u3, b3, w4, u4, b4,
                        head_w, head_b,
                        h1, c1, h2, c2, h3, c3, h4, c4):
    """Mean-squared TD loss over a (P, B) batch and its exact gradients.

    obs: (P, B, in), actions: (P, B) int64, targets: (P, B).
    Initial hidden states are treated as constants (no gradient through them).
    """
    steps, batch, inw = obs.shape
    n_actions = head_b.shape[0]
    fwidth = fcl_b.shape[0]

    flat_obs = np.ascontiguousarray(obs).reshape(steps * batch, inw)
    a_flat = _tanh2d(np.dot(flat_obs, fcl_w) + fcl_b)
    a = a_flat.reshape(steps, batch, fwidth)

    i1, f1_, g1, o1, cs1, tc1, hs1 = _lstm_layer_forward(a, h1, c1, w1, u1, b1)
    i2, f2_, g2, o2, cs2, tc2, hs2 = _lstm_layer_forward(hs1, h2, c2, w2, u2, b2)
    i3, f3_, g3, o3, cs3, tc3, hs3 = _lstm_layer_forward(hs2, h3, c3, w3, u3, b3)
    i4, f4_, g4, o4, cs4, tc4, hs4 = _lstm_layer_forward(hs3, h4, c4, w4, u4, b4)

    hw4 = h4.shape[1]
    h4_flat = np.ascontiguousarray(hs4).reshape(steps * batch, hw4)
    q = (np.dot(h4_flat, head_w) + head_b).reshape(steps, batch, n_actions)

    # loss and dL/dq (only the chosen action's entry is non-zero)
    scale = 1.0 / (steps * batch)
    loss = 0.0
    dq = np.zeros((steps, batch, n_actions), obs.dtype)
    for t in range(steps):
        for bi in range(batch):
            act = actions[t, bi]
            err = q[t, bi, act] - targets[t, bi]
            loss += err * err * scale
            dq[t, bi, act] = 2.0 * err * scale

    dq_flat = dq.reshape(steps * batch, n_actions)
    dhead_w = np.dot(np.ascontiguousarray(h4_flat.T), dq_flat)
    dhead_b = dq_flat.sum(axis=0)
    dh4_in = np.dot(dq_flat, np.ascontiguousarray(head_w.T)).reshape(steps, batch, hw4)

    dw4, du4, db4, dx4 = _lstm_layer_backward(hs3, h4, c4, hs4, w4, u4, i4, f4_, g4, o4, cs4, tc4, dh4_in)
    dw3, du3, db3, dx3 = _lstm_layer_backward(hs2, h3, c3, hs3, w3, u3, i3, f3_, g3, o3, cs3, tc3, dx4)
    dw2, du2, db2, dx2 = _lstm_layer_backward(hs1, h2, c2, hs2, w2, u2, i2, f2_, g2, o2, cs2, tc2, dx3)
    dw1, du1, db1, dx1 = _lstm_layer_backward(a, h1, c1, hs1, w1, u1, i1, f1_, g1, o1, cs1, tc1, dx2)

    dx1_flat = dx1.reshape(steps * batch, fwidth)
    dpre_fcl = np.empty_like(a_flat)
    for i in range(steps * batch):
        for j in range(fwidth):
            av = a_flat[i, j]
            dpre_fcl[i, j] = dx1_flat[i, j] * (1.0 - av * av)
    dfcl_w = np.dot(np.ascontiguousarray(flat_obs.T), dpre_fcl)
    dfcl_b = dpre_fcl.sum(axis=0)

    return (loss, dfcl_w, dfcl_b,
            dw1, du1, db1, dw2, du2, db2, dw3, du3, db3, dw4, du4, db4,
            dhead_w, dhead_b)
