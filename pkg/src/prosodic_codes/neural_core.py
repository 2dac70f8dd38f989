"""Small trainable sequence-network pieces with hand-written backward passes.

Everything is float64.  Layers are stateless with respect to activations:
``forward`` returns ``(output, cache)`` and ``backward(dout, cache)``
accumulates parameter gradients and returns the input gradient, so the same
layer can be run several times per step (the VAMP prior runs the encoder on
both data and pseudo-inputs).
"""
from __future__ import annotations

import json
import math
import struct
from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np

from . import kernels
from .errors import FormatError, NonFiniteLoss, ShapeMismatch


class ParamTensor:
    """A named parameter array with its gradient buffer."""

    __slots__ = ("name", "value", "grad")

    def __init__(self, name: str, value: np.ndarray):
        self.name = name
        self.value = np.ascontiguousarray(value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"ParamTensor({self.name!r}, shape={self.value.shape})"


class ParamStore(dict):
    """Ordered ``name -> ParamTensor`` mapping."""

    def add(self, name: str, value: np.ndarray) -> ParamTensor:
        if name in self:
            raise KeyError(f"duplicate parameter {name!r}")
        p = ParamTensor(name, value)
        self[name] = p
        return p

    def zero_grad(self):
        for p in self.values():
            p.grad[...] = 0.0

    def values_dict(self) -> dict[str, np.ndarray]:
        return {k: p.value for k, p in self.items()}

    def load_values(self, arrays: dict[str, np.ndarray]):
        for k, p in self.items():
            if k not in arrays:
                raise FormatError(f"checkpoint lacks parameter {k!r}")
            v = np.asarray(arrays[k], dtype=np.float64)
            if v.shape != p.value.shape:
                raise ShapeMismatch(f"{k}: expected {p.value.shape}, got {v.shape}")
            p.value[...] = v

    def n_values(self) -> int:
        return sum(p.value.size for p in self.values())


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int, shape=None):
    a = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=shape or (fan_in, fan_out))


def orthogonal(rng: np.random.Generator, n: int) -> np.ndarray:
    q, r = np.linalg.qr(rng.normal(size=(n, n)))
    return q * np.sign(np.diag(r))


class Dense:
    """Affine layer ``y = act(x W + b)`` applied over the last axis."""

    def __init__(self, store: ParamStore, name: str, n_in: int, n_out: int,
                 rng: np.random.Generator, activation: str = "tanh"):
        if activation not in ("tanh", "linear"):
            raise ValueError(f"unsupported activation {activation!r}")
        self.n_in, self.n_out = n_in, n_out
        self.activation = activation
        self.W = store.add(f"{name}.W", glorot_uniform(rng, n_in, n_out))
        self.b = store.add(f"{name}.b", np.zeros(n_out))

    def forward(self, x):
        if x.shape[-1] != self.n_in:
            raise ShapeMismatch(f"Dense expects width {self.n_in}, got {x.shape[-1]}")
        a = x @ self.W.value + self.b.value
        y = np.tanh(a) if self.activation == "tanh" else a
        return y, (x, y)

    def backward(self, dy, cache):
        x, y = cache
        da = dy * (1.0 - y * y) if self.activation == "tanh" else dy
        x2 = x.reshape(-1, self.n_in)
        da2 = da.reshape(-1, self.n_out)
        self.W.grad += x2.T @ da2
        self.b.grad += da2.sum(axis=0)
        return da @ self.W.value.T


class GRULayer:
    """Gated recurrent layer over time-major input ``(T, B, D)``.

    h_t = (1 - z_t) * h_{t-1} + z_t * n_t with
    z_t = sig(x W_z + h U_z + b_z), r_t = sig(x W_r + h U_r + b_r),
    n_t = tanh(x W_n + (r_t * h_{t-1}) U_n + b_n).  The initial state is zero.
    """

    def __init__(self, store: ParamStore, name: str, n_in: int, n_hidden: int,
                 rng: np.random.Generator):
        self.n_in, self.n_hidden = n_in, n_hidden
        H = n_hidden
        W = np.concatenate([glorot_uniform(rng, n_in, H) for _ in range(3)], axis=1)
        U = np.concatenate([orthogonal(rng, H) for _ in range(3)], axis=1)
        self.W = store.add(f"{name}.W", W)
        self.U = store.add(f"{name}.U", U)
        self.b = store.add(f"{name}.b", np.zeros(3 * H))

    def forward(self, x, h0=None):
        if x.ndim != 3 or x.shape[-1] != self.n_in:
            raise ShapeMismatch(f"GRU expects (T, B, {self.n_in}), got {x.shape}")
        T, B, _ = x.shape
        if h0 is None:
            h0 = np.zeros((B, self.n_hidden))
        xproj = x @ self.W.value + self.b.value
        hs, zs, rs, ns = kernels.gru_forward(xproj, self.U.value, h0)
        return hs, (x, h0, hs, zs, rs, ns)

    def backward(self, dhs, cache):
        x, h0, hs, zs, rs, ns = cache
        T, B, H = hs.shape
        dxproj, _ = kernels.gru_backward(dhs, self.U.value, h0, hs, zs, rs, ns)
        hprev = np.concatenate([h0[None], hs[:-1]], axis=0).reshape(-1, H)
        d2 = dxproj.reshape(-1, 3 * H)
        self.W.grad += x.reshape(-1, self.n_in).T @ d2
        self.b.grad += d2.sum(axis=0)
        self.U.grad[:, : 2 * H] += hprev.T @ d2[:, : 2 * H]
        self.U.grad[:, 2 * H :] += (rs.reshape(-1, H) * hprev).T @ d2[:, 2 * H :]
        return dxproj @ self.W.value.T


class SequenceStack:
    """Feedforward layer, a stack of GRU layers, then a linear projection."""

    def __init__(self, store: ParamStore, name: str, n_in: int, n_out: int,
                 rng: np.random.Generator, ff_units: int = 256,
                 rnn_units: int = 64, rnn_layers: int = 3):
        self.n_in, self.n_out = n_in, n_out
        self.ff = Dense(store, f"{name}.ff", n_in, ff_units, rng, "tanh")
        self.rnns = []
        width = ff_units
        for i in range(rnn_layers):
            self.rnns.append(GRULayer(store, f"{name}.gru{i}", width, rnn_units, rng))
            width = rnn_units
        self.proj = Dense(store, f"{name}.proj", width, n_out, rng, "linear")

    def forward(self, x):
        y, c_ff = self.ff.forward(x)
        c_rnn = []
        for layer in self.rnns:
            y, c = layer.forward(y)
            c_rnn.append(c)
        out, c_proj = self.proj.forward(y)
        return out, (c_ff, c_rnn, c_proj)

    def backward(self, dout, cache):
        c_ff, c_rnn, c_proj = cache
        dy = self.proj.backward(dout, c_proj)
        for layer, c in zip(reversed(self.rnns), reversed(c_rnn)):
            dy = layer.backward(dy, c)
        return self.ff.backward(dy, c_ff)


class Adam:
    """Adam with bias correction; ``lr`` is supplied per step."""

    def __init__(self, store: ParamStore, beta1=0.9, beta2=0.999, eps=1e-8):
        self.store = store
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = {k: np.zeros_like(p.value) for k, p in store.items()}
        self.v = {k: np.zeros_like(p.value) for k, p in store.items()}
        self.t = 0

    def step(self, lr: float):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for k, p in self.store.items():
            if p.grad.shape != p.value.shape:
                raise ShapeMismatch(f"{k}: grad {p.grad.shape} vs value {p.value.shape}")
            m, v = self.m[k], self.v[k]
            m *= b1
            m += (1.0 - b1) * p.grad
            v *= b2
            v += (1.0 - b2) * p.grad * p.grad
            p.value -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def adam_step(params: dict, grads: dict, state: dict, lr: float,
              beta1=0.9, beta2=0.999, eps=1e-8):
    """Functional Adam update on plain arrays; returns ``(params, state)``.

    ``state`` is ``{"t": int, "m": {...}, "v": {...}}`` (empty dict to start).
    """
    t = state.get("t", 0) + 1
    m_all = dict(state.get("m", {}))
    v_all = dict(state.get("v", {}))
    out = {}
    for k, theta in params.items():
        g = np.asarray(grads[k], dtype=np.float64)
        theta = np.asarray(theta, dtype=np.float64)
        if g.shape != theta.shape:
            raise ShapeMismatch(f"{k}: grad {g.shape} vs param {theta.shape}")
        m = beta1 * m_all.get(k, np.zeros_like(theta)) + (1 - beta1) * g
        v = beta2 * v_all.get(k, np.zeros_like(theta)) + (1 - beta2) * g * g
        mhat = m / (1 - beta1 ** t)
        vhat = v / (1 - beta2 ** t)
        out[k] = theta - lr * mhat / (np.sqrt(vhat) + eps)
        m_all[k], v_all[k] = m, v
    return out, {"t": t, "m": m_all, "v": v_all}


@dataclass
class TrainSchedule:
    peak_lr: float = 0.005
    warmup_epochs: int = 8
    batches_per_epoch: int = 1
    kl_zero_epochs: int = 5
    kl_ramp_epochs: int = 20
    kl_max: float = 0.001
    total_epochs: int = 100
    batch_size: int = 32
    decay_exponent: float = 0.5

    def __post_init__(self):
        for name in ("peak_lr", "batches_per_epoch", "kl_ramp_epochs", "total_epochs",
                     "batch_size", "decay_exponent", "warmup_epochs"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.kl_zero_epochs < 0 or self.kl_max < 0:
            raise ValueError("kl_zero_epochs and kl_max must be non-negative")

    @property
    def warmup_steps(self) -> int:
        return self.warmup_epochs * self.batches_per_epoch


def lr_at(step: int, schedule: TrainSchedule) -> float:
    """Linear warm-up to the peak, then inverse-power decay in the batch count."""
    if step < 0:
        raise ValueError("step must be >= 0")
    s_warm = schedule.warmup_steps
    if step <= s_warm:
        return schedule.peak_lr * step / s_warm
    return schedule.peak_lr * (s_warm / step) ** schedule.decay_exponent


def kl_weight_at(epoch: float, schedule: TrainSchedule) -> float:
    if epoch < 0:
        raise ValueError("epoch must be >= 0")
    if epoch < schedule.kl_zero_epochs:
        return 0.0
    frac = (epoch - schedule.kl_zero_epochs) / schedule.kl_ramp_epochs
    return schedule.kl_max * min(1.0, frac)


def relative_error(a, b, floor: float = 1e-6):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)


def grad_check(store: ParamStore, loss_fn: Callable[[bool], float], eps: float = 1e-5,
               floor: float = 1e-6, names=None) -> float:
    """Worst relative error between analytic and central-difference gradients.

    ``loss_fn(backward)`` must return the scalar loss and, when ``backward``
    is true, accumulate gradients into ``store`` (grads are zeroed here
    first).  Every element of every checked parameter is perturbed.  The
    relative-error denominator is floored at ``floor`` so gradients far below
    the finite-difference noise level are compared absolutely.
    """
    store.zero_grad()
    loss = loss_fn(True)
    if not np.isfinite(loss):
        raise NonFiniteLoss(f"loss is {loss}")
    names = list(store) if names is None else list(names)
    analytic = {k: store[k].grad.copy() for k in names}
    worst = 0.0
    for k in names:
        p = store[k]
        flat = p.value.reshape(-1)
        num = np.empty(flat.size)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + eps
            lp = loss_fn(False)
            flat[i] = old - eps
            lm = loss_fn(False)
            flat[i] = old
            if not (np.isfinite(lp) and np.isfinite(lm)):
                raise NonFiniteLoss(f"loss became non-finite perturbing {k}[{i}]")
            num[i] = (lp - lm) / (2 * eps)
        err = relative_error(analytic[k].reshape(-1), num, floor)
        if err.size:
            worst = max(worst, float(err.max()))
    return worst


# ---------------------------------------------------------------------------
# Array container: byte-stable on-disk format for checkpoints and caches.
#
#   8 bytes  magic b"PCARR001"
#   4 bytes  little-endian uint32 header length
#   header   UTF-8 JSON (sorted keys): {"meta": ..., "arrays": [...]}
#   payload  concatenated little-endian array bytes, in header order

MAGIC = b"PCARR001"
_DTYPES = {"f8": np.dtype("<f8"), "i8": np.dtype("<i8")}


def write_container(path, arrays: dict[str, np.ndarray], meta: dict):
    entries = []
    blobs = []
    offset = 0
    for name in sorted(arrays):
        arr = arrays[name]
        arr = np.asarray(arr)
        code = "i8" if np.issubdtype(arr.dtype, np.integer) else "f8"
        data = np.ascontiguousarray(arr, dtype=_DTYPES[code]).tobytes()
        entries.append({"name": name, "dtype": code, "shape": list(arr.shape),
                        "offset": offset, "nbytes": len(data)})
        blobs.append(data)
        offset += len(data)
    header = json.dumps({"meta": meta, "arrays": entries}, sort_keys=True,
                        separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        for blob in blobs:
            fh.write(blob)


def read_container(path) -> tuple[dict[str, np.ndarray], dict]:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:8] != MAGIC:
        raise FormatError("not an array container (bad magic)", path)
    (hlen,) = struct.unpack("<I", raw[8:12])
    try:
        header = json.loads(raw[12 : 12 + hlen].decode("utf-8"))
    except ValueError as exc:
        raise FormatError(f"corrupt header: {exc}", path) from exc
    base = 12 + hlen
    arrays = {}
    for e in header["arrays"]:
        start = base + e["offset"]
        buf = raw[start : start + e["nbytes"]]
        if len(buf) != e["nbytes"]:
            raise FormatError(f"truncated payload for {e['name']}", path)
        arrays[e["name"]] = np.frombuffer(buf, dtype=_DTYPES[e["dtype"]]).reshape(e["shape"]).copy()
    return arrays, header["meta"]


def schedule_to_dict(schedule: TrainSchedule) -> dict:
    return asdict(schedule)
