"""Small fully connected ReLU networks with hand-written backprop and Adam.

Weights are stored as ``(fan_in, fan_out)`` matrices so a batch of row
vectors goes through as ``x @ W + b``.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

CHECKPOINT_MAGIC = b"FBCKPT01"


class NonFiniteError(FloatingPointError):
    pass


@dataclass
class MlpParams:
    sizes: tuple[int, ...]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    seed: int = 0

    def __post_init__(self):
        self.sizes = tuple(int(s) for s in self.sizes)
        if len(self.weights) != len(self.sizes) - 1 or len(self.biases) != len(self.weights):
            raise ValueError("layer count does not match sizes")
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            if W.shape != (self.sizes[i], self.sizes[i + 1]) or b.shape != (self.sizes[i + 1],):
                raise ValueError(f"layer {i} has shapes {W.shape}, {b.shape}; sizes say {self.sizes}")

    @classmethod
    def init(cls, sizes, seed: int = 0) -> "MlpParams":
        """He-uniform hidden layers, U(+-1/sqrt(fan_in)) output layer, zero biases."""
        rng = np.random.default_rng(seed)
        sizes = tuple(int(s) for s in sizes)
        weights, biases = [], []
        for i in range(len(sizes) - 1):
            fan_in = sizes[i]
            last = i == len(sizes) - 2
            bound = 1.0 / math.sqrt(fan_in) if last else math.sqrt(6.0 / fan_in)
            weights.append(rng.uniform(-bound, bound, size=(fan_in, sizes[i + 1])))
            biases.append(np.zeros(sizes[i + 1]))
        return cls(sizes, weights, biases, seed)

    def arrays(self) -> list[np.ndarray]:
        out = []
        for W, b in zip(self.weights, self.biases):
            out.extend((W, b))
        return out

    def copy(self) -> "MlpParams":
        return MlpParams(self.sizes, [W.copy() for W in self.weights],
                         [b.copy() for b in self.biases], self.seed)

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays()])


@dataclass
class MlpCache:
    inputs: list[np.ndarray]  # input to each layer
    pre: list[np.ndarray]     # pre-activations of hidden layers


def mlp_forward(params: MlpParams, x) -> tuple[np.ndarray, MlpCache]:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != params.sizes[0]:
        raise ValueError(f"input width {x.shape[-1]} != {params.sizes[0]}")
    inputs, pre = [], []
    h = x
    last = len(params.weights) - 1
    for i, (W, b) in enumerate(zip(params.weights, params.biases)):
        inputs.append(h)
        z = h @ W + b
        if i < last:
            pre.append(z)
            h = np.maximum(z, 0.0)
        else:
            h = z
    return h, MlpCache(inputs, pre)


def mlp_backward(params: MlpParams, cache: MlpCache, output_grad) -> list[tuple[np.ndarray, np.ndarray]]:
    """Gradients of ``sum(output * output_grad)`` as ``[(dW, db), ...]``.

    Batched inputs accumulate over the batch axis.
    """
    g = np.asarray(output_grad, dtype=np.float64)
    out_width = params.sizes[-1]
    if g.shape[-1] != out_width or g.shape[:-1] != cache.inputs[0].shape[:-1]:
        raise ValueError(f"output_grad shape {g.shape} does not match the forward pass")
    grads = [None] * len(params.weights)
    for i in range(len(params.weights) - 1, -1, -1):
        a = cache.inputs[i]
        if a.ndim == 1:
            dW = np.outer(a, g)
            db = g.copy()
        else:
            dW = a.T @ g
            db = g.sum(axis=0)
        grads[i] = (dW, db)
        if i > 0:
            g = (g @ params.weights[i].T) * (cache.pre[i - 1] > 0.0)
    return grads


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    lr: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0

    @classmethod
    def for_params(cls, params: MlpParams, lr: float = 3e-4, **kw) -> "AdamState":
        arrays = params.arrays()
        return cls([np.zeros_like(a) for a in arrays], [np.zeros_like(a) for a in arrays], lr, **kw)


def adam_step(params: MlpParams, grads, state: AdamState) -> tuple[MlpParams, AdamState]:
    """One bias-corrected Adam update, applied in place."""
    flat_grads = []
    for i, (dW, db) in enumerate(grads):
        if not (np.all(np.isfinite(dW)) and np.all(np.isfinite(db))):
            raise NonFiniteError(f"non-finite gradient in layer {i}")
        flat_grads.extend((dW, db))
    arrays = params.arrays()
    if len(flat_grads) != len(arrays):
        raise ValueError("gradient list does not match parameters")
    state.step += 1
    c1 = 1.0 - state.beta1 ** state.step
    c2 = 1.0 - state.beta2 ** state.step
    for p, g, m, v in zip(arrays, flat_grads, state.m, state.v):
        if g.shape != p.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape}")
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params, state


def scale_grads(grads, factor: float):
    return [(dW * factor, db * factor) for dW, db in grads]


def add_grads(a, b):
    return [(dWa + dWb, dba + dbb) for (dWa, dba), (dWb, dbb) in zip(a, b)]


# Checkpoint layout (all integers little-endian):
#   magic "FBCKPT01"
#   u32 number of networks
#   per network: u16 name length, utf-8 name, u64 seed, u32 layer-size count,
#                u32 sizes..., then per layer W (fan_in x fan_out, row-major)
#                and b, as little-endian float64.

def save_checkpoint(path, nets: dict[str, MlpParams]) -> None:
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(nets)))
        for name, p in nets.items():
            raw = name.encode()
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<QI", p.seed & 0xFFFFFFFFFFFFFFFF, len(p.sizes)))
            fh.write(struct.pack(f"<{len(p.sizes)}I", *p.sizes))
            for a in p.arrays():
                fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def load_checkpoint(path) -> dict[str, MlpParams]:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:8] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: bad checkpoint magic")
    pos = 8
    (count,) = struct.unpack_from("<I", data, pos)
    pos += 4
    nets = {}
    for _ in range(count):
        (nlen,) = struct.unpack_from("<H", data, pos)
        pos += 2
        name = data[pos:pos + nlen].decode()
        pos += nlen
        seed, nsizes = struct.unpack_from("<QI", data, pos)
        pos += 12
        sizes = struct.unpack_from(f"<{nsizes}I", data, pos)
        pos += 4 * nsizes
        weights, biases = [], []
        for i in range(nsizes - 1):
            n = sizes[i] * sizes[i + 1]
            weights.append(np.frombuffer(data, "<f8", n, pos).reshape(sizes[i], sizes[i + 1]).astype(np.float64))
            pos += 8 * n
            biases.append(np.frombuffer(data, "<f8", sizes[i + 1], pos).astype(np.float64))
            pos += 8 * sizes[i + 1]
        nets[name] = MlpParams(sizes, weights, biases, int(seed))
    if pos != len(data):
        raise ValueError(f"{path}: {len(data) - pos} trailing bytes")
    return nets
