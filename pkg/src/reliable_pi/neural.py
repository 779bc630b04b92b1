"""Dense two-hidden-layer MLPs with hand-written backprop and Adam.

Parameters live in a single flat float64 vector; per-layer weight and bias
arrays are views into it, so optimizers and target-network updates operate
on one contiguous buffer.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

CHECKPOINT_MAGIC = b"RPIMLP01"


class DimensionError(ValueError):
    pass


@dataclass(frozen=True)
class MlpSpec:
    input_dim: int
    hidden: tuple[int, int]
    output_dim: int
    hidden_activation: str = "relu"
    output_activation: str = "identity"

    def __post_init__(self):
        dims = (self.input_dim, *self.hidden, self.output_dim)
        if len(self.hidden) != 2 or any(int(d) < 1 for d in dims):
            raise ValueError(f"invalid MLP dimensions {dims}")
        if self.hidden_activation != "relu":
            raise ValueError(f"unsupported hidden activation {self.hidden_activation!r}")
        if self.output_activation not in ("identity", "tanh"):
            raise ValueError(f"unsupported output activation {self.output_activation!r}")

    @property
    def layer_dims(self) -> list[tuple[int, int]]:
        dims = (self.input_dim, *self.hidden, self.output_dim)
        return list(zip(dims[:-1], dims[1:]))

    @property
    def num_params(self) -> int:
        return sum(i * o + o for i, o in self.layer_dims)


def _layer_views(spec: MlpSpec, flat: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
    views = []
    offset = 0
    for fan_in, fan_out in spec.layer_dims:
        w = flat[offset:offset + fan_in * fan_out].reshape(fan_in, fan_out)
        offset += fan_in * fan_out
        b = flat[offset:offset + fan_out]
        offset += fan_out
        views.append((w, b))
    return views


@dataclass
class MlpParams:
    """Weights stored as ``x @ W + b`` with W of shape (fan_in, fan_out)."""

    spec: MlpSpec
    flat: np.ndarray
    layers: list[tuple[np.ndarray, np.ndarray]] = field(init=False, repr=False)

    def __post_init__(self):
        self.flat = np.ascontiguousarray(self.flat, dtype=np.float64)
        if self.flat.shape != (self.spec.num_params,):
            raise DimensionError(
                f"expected {self.spec.num_params} parameters, got {self.flat.shape}"
            )
        self.layers = _layer_views(self.spec, self.flat)

    @classmethod
    def zeros(cls, spec: MlpSpec) -> "MlpParams":
        return cls(spec, np.zeros(spec.num_params))

    def copy(self) -> "MlpParams":
        return MlpParams(self.spec, self.flat.copy())

    def copy_from(self, other: "MlpParams") -> None:
        self.flat[:] = other.flat

    def polyak_from(self, other: "MlpParams", tau: float) -> None:
        """In place: self <- tau * other + (1 - tau) * self."""
        self.flat *= 1.0 - tau
        self.flat += tau * other.flat

    def unflatten(self, vec: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
        return _layer_views(self.spec, vec)


def init_params(spec: MlpSpec, rng: np.random.Generator) -> MlpParams:
    """He-uniform for ReLU layers, uniform +-1/sqrt(fan_in) for the output layer."""
    params = MlpParams.zeros(spec)
    n_layers = len(params.layers)
    for idx, (w, _b) in enumerate(params.layers):
        fan_in = w.shape[0]
        if idx < n_layers - 1:
            bound = np.sqrt(6.0 / fan_in)
        else:
            bound = 1.0 / np.sqrt(fan_in)
        w[...] = rng.uniform(-bound, bound, size=w.shape)
    return params


def forward(params: MlpParams, batch: np.ndarray, return_cache: bool = False):
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.spec.input_dim:
        raise DimensionError(
            f"batch shape {x.shape} incompatible with input_dim {params.spec.input_dim}"
        )
    (w1, b1), (w2, b2), (w3, b3) = params.layers
    h1 = x @ w1
    h1 += b1
    np.maximum(h1, 0.0, out=h1)
    h2 = h1 @ w2
    h2 += b2
    np.maximum(h2, 0.0, out=h2)
    out = h2 @ w3
    out += b3
    if params.spec.output_activation == "tanh":
        np.tanh(out, out=out)
    if return_cache:
        return out, (x, h1, h2, out)
    return out


def backward(params: MlpParams, batch: np.ndarray, output_grad: np.ndarray,
             cache=None, input_grad: bool = False):
    """Gradient of sum(output_grad * forward(batch)) w.r.t. the flat parameters.

    Returns a flat vector laid out like ``params.flat``; with ``input_grad``
    also returns the gradient w.r.t. the batch.
    """
    if cache is None:
        _, cache = forward(params, batch, return_cache=True)
    x, h1, h2, out = cache
    g = np.asarray(output_grad, dtype=np.float64)
    if g.shape != out.shape:
        raise DimensionError(f"output_grad shape {g.shape} != output shape {out.shape}")
    if params.spec.output_activation == "tanh":
        g = g * (1.0 - out * out)
    (w1, _), (w2, _), (w3, _) = params.layers
    grad = np.empty_like(params.flat)
    (gw1, gb1), (gw2, gb2), (gw3, gb3) = params.unflatten(grad)

    np.dot(h2.T, g, out=gw3)
    gb3[:] = g.sum(axis=0)
    d2 = g @ w3.T
    d2 *= h2 > 0.0
    np.dot(h1.T, d2, out=gw2)
    gb2[:] = d2.sum(axis=0)
    d1 = d2 @ w2.T
    d1 *= h1 > 0.0
    np.dot(x.T, d1, out=gw1)
    gb1[:] = d1.sum(axis=0)
    if input_grad:
        return grad, d1 @ w1.T
    return grad


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: MlpParams) -> "AdamState":
        return cls(np.zeros_like(params.flat), np.zeros_like(params.flat))


def adam_step(params: MlpParams, grads: np.ndarray, state: AdamState, lr: float) -> None:
    """Bias-corrected Adam, applied in place to ``params`` and ``state``."""
    if grads.shape != params.flat.shape or state.m.shape != params.flat.shape:
        raise DimensionError("Adam shapes do not match parameters")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    state.m *= b1
    state.m += (1.0 - b1) * grads
    state.v *= b2
    state.v += (1.0 - b2) * (grads * grads)
    m_hat = state.m / (1.0 - b1 ** state.step)
    denom = np.sqrt(state.v / (1.0 - b2 ** state.step))
    denom += state.eps
    m_hat /= denom
    m_hat *= lr
    params.flat -= m_hat


def save_checkpoint(path: str | Path, nets: dict[str, MlpParams]) -> None:
    """Flat binary: magic, net count, then per net name/spec header and LE float64 data."""
    chunks = [CHECKPOINT_MAGIC, struct.pack("<I", len(nets))]
    for name, p in nets.items():
        s = p.spec
        name_b = name.encode()
        act_b = s.output_activation.encode()
        chunks.append(struct.pack("<I", len(name_b)) + name_b)
        chunks.append(struct.pack("<4I", s.input_dim, s.hidden[0], s.hidden[1], s.output_dim))
        chunks.append(struct.pack("<I", len(act_b)) + act_b)
        chunks.append(struct.pack("<Q", p.flat.size))
        chunks.append(p.flat.astype("<f8").tobytes())
    Path(path).write_bytes(b"".join(chunks))


def load_checkpoint(path: str | Path) -> dict[str, MlpParams]:
    data = Path(path).read_bytes()
    if not data.startswith(CHECKPOINT_MAGIC):
        raise ValueError(f"{path}: not an MLP checkpoint")
    pos = len(CHECKPOINT_MAGIC)

    def take(fmt):
        nonlocal pos
        vals = struct.unpack_from(fmt, data, pos)
        pos += struct.calcsize(fmt)
        return vals

    (count,) = take("<I")
    nets = {}
    for _ in range(count):
        (n,) = take("<I")
        name = data[pos:pos + n].decode()
        pos += n
        i, h1, h2, o = take("<4I")
        (n,) = take("<I")
        act = data[pos:pos + n].decode()
        pos += n
        (size,) = take("<Q")
        flat = np.frombuffer(data, dtype="<f8", count=size, offset=pos).astype(np.float64)
        pos += 8 * size
        nets[name] = MlpParams(MlpSpec(i, (h1, h2), o, output_activation=act), flat)
    return nets
