"""From-scratch recurrent Q-network.

Fully connected input layer (tanh), four stacked LSTM layers, linear output
head. Exact gradients via backpropagation through time, adaptive-moment
optimizer, and a versioned binary checkpoint format. Heavy lifting lives in
``_kernels``; this module owns parameter containers and bookkeeping.
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass, field

import numpy as np

from . import _kernels

DEFAULT_INPUT = 7
DEFAULT_FCL = 30
DEFAULT_LSTM = (30, 30, 20, 10)

MAGIC = b"RQNC"
FORMAT_VERSION = 1


@dataclass
class NetConfig:
    input_width: int = DEFAULT_INPUT
    fcl_width: int = DEFAULT_FCL
    lstm_widths: tuple = DEFAULT_LSTM
    n_actions: int = 2
    dtype: str = "float64"

    def __post_init__(self):
        if len(self.lstm_widths) != 4:
            raise ValueError("exactly 4 LSTM layers supported")
        if self.n_actions < 1:
            raise ValueError("n_actions must be >= 1")


@dataclass
class QNetworkParams:
    """All weights and biases. LSTM gate axis layout: [input, forget, candidate, output]."""

    cfg: NetConfig
    fcl_w: np.ndarray
    fcl_b: np.ndarray
    lstm_w: list  # 4 input->gates matrices
    lstm_u: list  # 4 recurrent matrices
    lstm_b: list  # 4 gate bias vectors
    head_w: np.ndarray
    head_b: np.ndarray

    def flat(self):
        """Parameter arrays in a fixed order (shared by grads and optimizer)."""
        out = [self.fcl_w, self.fcl_b]
        for w, u, b in zip(self.lstm_w, self.lstm_u, self.lstm_b):
            out.extend((w, u, b))
        out.extend((self.head_w, self.head_b))
        return out

    def copy(self) -> "QNetworkParams":
        return QNetworkParams(
            cfg=self.cfg,
            fcl_w=self.fcl_w.copy(),
            fcl_b=self.fcl_b.copy(),
            lstm_w=[w.copy() for w in self.lstm_w],
            lstm_u=[u.copy() for u in self.lstm_u],
            lstm_b=[b.copy() for b in self.lstm_b],
            head_w=self.head_w.copy(),
            head_b=self.head_b.copy(),
        )

    def _kernel_args(self):
        args = [self.fcl_w, self.fcl_b]
        for w, u, b in zip(self.lstm_w, self.lstm_u, self.lstm_b):
            args.extend((w, u, b))
        args.extend((self.head_w, self.head_b))
        return args


class HiddenState:
    """Per-layer (h, c) pairs for a batch; zero at episode start."""

    __slots__ = ("h", "c")

    def __init__(self, h, c):
        self.h = h
        self.c = c

    @classmethod
    def zeros(cls, cfg: NetConfig, batch: int = 1) -> "HiddenState":
        dt = np.dtype(cfg.dtype)
        return cls(
            [np.zeros((batch, w), dtype=dt) for w in cfg.lstm_widths],
            [np.zeros((batch, w), dtype=dt) for w in cfg.lstm_widths],
        )

    def pack(self) -> np.ndarray:
        """Concatenate all h then all c into one flat vector (batch must be 1)."""
        return np.concatenate([a.ravel() for a in self.h] + [a.ravel() for a in self.c])

    @classmethod
    def unpack(cls, vec: np.ndarray, cfg: NetConfig) -> "HiddenState":
        widths = cfg.lstm_widths
        total = sum(widths)
        hs, cs = [], []
        off = 0
        for w in widths:
            hs.append(vec[off:off + w].reshape(1, w).copy())
            off += w
        for w in widths:
            cs.append(vec[off:off + w].reshape(1, w).copy())
            off += w
        assert off == 2 * total
        return cls(hs, cs)

    def _kernel_args(self):
        out = []
        for h, c in zip(self.h, self.c):
            out.extend((h, c))
        return out


def init_params(rng: np.random.Generator, cfg: NetConfig) -> QNetworkParams:
    """Uniform init scaled by 1/sqrt(fan_in); forget-gate biases 1, others 0."""
    dt = np.dtype(cfg.dtype)

    def mat(fan_in, fan_out):
        lim = np.sqrt(3.0 / fan_in)
        return rng.uniform(-lim, lim, size=(fan_in, fan_out)).astype(dt)

    fcl_w = mat(cfg.input_width, cfg.fcl_width)
    fcl_b = np.zeros(cfg.fcl_width, dtype=dt)
    lstm_w, lstm_u, lstm_b = [], [], []
    in_w = cfg.fcl_width
    for hw in cfg.lstm_widths:
        lstm_w.append(mat(in_w, 4 * hw))
        lstm_u.append(mat(hw, 4 * hw))
        b = np.zeros(4 * hw, dtype=dt)
        b[hw:2 * hw] = 1.0
        lstm_b.append(b)
        in_w = hw
    head_w = mat(cfg.lstm_widths[-1], cfg.n_actions)
    head_b = np.zeros(cfg.n_actions, dtype=dt)
    return QNetworkParams(cfg, fcl_w, fcl_b, lstm_w, lstm_u, lstm_b, head_w, head_b)


def forward(params: QNetworkParams, obs: np.ndarray, hidden: HiddenState):
    """One step for a batch of observations. Returns (q, new HiddenState)."""
    obs2 = np.atleast_2d(np.asarray(obs, dtype=params.fcl_w.dtype))
    if not np.all(np.isfinite(obs2)):
        raise ValueError("non-finite observation")
    out = _kernels.qnet_forward_step(
        np.ascontiguousarray(obs2), *params._kernel_args(), *hidden._kernel_args()
    )
    q = out[0]
    hs = [out[1], out[3], out[5], out[7]]
    cs = [out[2], out[4], out[6], out[8]]
    return q, HiddenState(hs, cs)


def forward_sequence(params: QNetworkParams, obs_seq, hidden: HiddenState):
    """Repeated forward over a sequence; returns (list of q, list of HiddenState)."""
    qs, hs = [], []
    h = hidden
    for obs in obs_seq:
        q, h = forward(params, obs, h)
        qs.append(q)
        hs.append(h)
    return qs, hs


def bptt_gradients(params: QNetworkParams, obs, actions, targets, hidden: HiddenState):
    """Exact gradient of the mean-squared TD loss over a (P, B) batch.

    obs: (P, B, input), actions: (P, B) ints, targets: (P, B).
    Returns (loss, grads) with grads in ``flat()`` order.
    """
    dt = params.fcl_w.dtype
    obs = np.ascontiguousarray(np.asarray(obs, dtype=dt))
    actions = np.ascontiguousarray(np.asarray(actions, dtype=np.int64))
    targets = np.ascontiguousarray(np.asarray(targets, dtype=dt))
    out = _kernels.qnet_loss_and_grads(
        obs, actions, targets, *params._kernel_args(), *hidden._kernel_args()
    )
    return float(out[0]), list(out[1:])


def clip_gradients(grads, max_norm: float) -> float:
    """Scale grads in place so the global L2 norm is at most max_norm."""
    total = 0.0
    for g in grads:
        total += float(np.sum(g.astype(np.float64) ** 2))
    norm = np.sqrt(total)
    if norm > max_norm > 0:
        scale = max_norm / norm
        for g in grads:
            g *= scale
    return norm


@dataclass
class OptimizerState:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    @classmethod
    def for_params(cls, params: QNetworkParams, learning_rate: float = 1e-3):
        return cls(
            learning_rate=learning_rate,
            m=[np.zeros_like(p) for p in params.flat()],
            v=[np.zeros_like(p) for p in params.flat()],
        )


def optimizer_step(params: QNetworkParams, grads, opt: OptimizerState) -> None:
    """Adaptive-moment update, in place on params and opt."""
    for g in grads:
        if not np.all(np.isfinite(g)):
            raise ValueError("non-finite gradient")
    opt.step += 1
    t = opt.step
    bc1 = 1.0 - opt.beta1 ** t
    bc2 = 1.0 - opt.beta2 ** t
    for p, g, m, v in zip(params.flat(), grads, opt.m, opt.v):
        m *= opt.beta1
        m += (1.0 - opt.beta1) * g
        v *= opt.beta2
        v += (1.0 - opt.beta2) * g * g
        p -= opt.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + opt.eps)


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def serialize(params: QNetworkParams) -> bytes:
    cfg = params.cfg
    header = struct.pack(
        "<4sBIIII4I",
        MAGIC, FORMAT_VERSION,
        cfg.input_width, cfg.fcl_width, cfg.n_actions,
        np.dtype(cfg.dtype).itemsize,
        *cfg.lstm_widths,
    )
    body = b"".join(np.ascontiguousarray(p, dtype=np.float64).tobytes() for p in params.flat())
    payload = header + body
    return payload + struct.pack("<I", zlib.crc32(payload) & 0xFFFFFFFF)


def deserialize(data: bytes) -> QNetworkParams:
    head_len = struct.calcsize("<4sBIIII4I")
    if len(data) < head_len + 4:
        raise ValueError("checkpoint truncated")
    payload, (crc,) = data[:-4], struct.unpack("<I", data[-4:])
    if zlib.crc32(payload) & 0xFFFFFFFF != crc:
        raise ValueError("checkpoint checksum mismatch")
    magic, ver, in_w, fcl_w_, n_act, itemsize, l1, l2, l3, l4 = struct.unpack(
        "<4sBIIII4I", payload[:head_len]
    )
    if magic != MAGIC:
        raise ValueError("bad checkpoint magic")
    if ver != FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint version {ver}")
    dtype = {4: "float32", 8: "float64"}[itemsize]
    cfg = NetConfig(in_w, fcl_w_, (l1, l2, l3, l4), n_act, dtype)
    ref = init_params(np.random.default_rng(0), cfg)
    arrays = []
    off = head_len
    for p in ref.flat():
        n = p.size * 8
        arr = np.frombuffer(payload, dtype=np.float64, count=p.size, offset=off)
        arrays.append(arr.reshape(p.shape).astype(cfg.dtype))
        off += n
    if off != len(payload):
        raise ValueError("checkpoint size mismatch")
    it = iter(arrays)
    fcl_w = next(it)
    fcl_b = next(it)
    lstm_w, lstm_u, lstm_b = [], [], []
    for _ in range(4):
        lstm_w.append(next(it))
        lstm_u.append(next(it))
        lstm_b.append(next(it))
    head_w = next(it)
    head_b = next(it)
    return QNetworkParams(cfg, fcl_w, fcl_b, lstm_w, lstm_u, lstm_b, head_w, head_b)


def dump_json(params: QNetworkParams) -> str:
    """Layer-keyed JSON weight dump for debugging."""
    cfg = params.cfg
    obj = {
        "config": {
            "input_width": cfg.input_width,
            "fcl_width": cfg.fcl_width,
            "lstm_widths": list(cfg.lstm_widths),
            "n_actions": cfg.n_actions,
            "dtype": cfg.dtype,
        },
        "fcl": {"w": params.fcl_w.tolist(), "b": params.fcl_b.tolist()},
        "lstm": [
            {"w": w.tolist(), "u": u.tolist(), "b": b.tolist()}
            for w, u, b in zip(params.lstm_w, params.lstm_u, params.lstm_b)
        ],
        "head": {"w": params.head_w.tolist(), "b": params.head_b.tolist()},
    }
    return json.dumps(obj)
