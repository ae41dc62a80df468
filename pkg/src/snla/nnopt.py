"""
Numpy learning substrate: ReLU MLPs with hand-written backprop, Adam,
a ring replay buffer, the tanh-squashed Gaussian policy head, and the
portable checkpoint container.
"""

from __future__ import annotations

import io
import math
import struct
from dataclasses import dataclass

import numpy as np

LOG_STD_MIN, LOG_STD_MAX = -20.0, 2.0
SQUASH_EPS = 1e-6
HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


class ShapeError(ValueError):
    pass


class NetStateError(RuntimeError):
    pass


class BufferEmptyError(RuntimeError):
    pass


class CheckpointFormatError(ValueError):
    pass


class DenseNet:
    """Fully connected network, ReLU on hidden layers, identity output.

    ``forward`` caches what ``backward`` needs; inputs may be a single
    vector or a (batch, features) matrix.
    """

    def __init__(self, layer_dims, rng: np.random.Generator | None = None, dtype=np.float64):
        layer_dims = [int(d) for d in layer_dims]
        if len(layer_dims) < 2 or min(layer_dims) < 1:
            raise ShapeError(f"bad layer dims {layer_dims}")
        self.layer_dims = layer_dims
        self.dtype = np.dtype(dtype)
        self.weights = []
        self.biases = []
        for fan_in, fan_out in zip(layer_dims[:-1], layer_dims[1:]):
            bound = 1.0 / math.sqrt(fan_in)
            if rng is None:
                w = np.zeros((fan_in, fan_out))
                b = np.zeros(fan_out)
            else:
                w = rng.uniform(-bound, bound, (fan_in, fan_out))
                b = rng.uniform(-bound, bound, fan_out)
            self.weights.append(w.astype(self.dtype))
            self.biases.append(b.astype(self.dtype))
        self._cache = None

    @property
    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def forward(self, x):
        x = np.asarray(x, dtype=self.dtype)
        single = x.ndim == 1
        h = x[None, :] if single else x
        if h.shape[-1] != self.layer_dims[0]:
            raise ShapeError(f"expected {self.layer_dims[0]} input features, got {h.shape[-1]}")
        acts = [h]
        last = self.n_layers - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w + b
            h = np.maximum(z, 0.0) if i < last else z
            acts.append(h)
        self._cache = (acts, single)
        return h[0] if single else h

    __call__ = forward

    def backward(self, grad_out, param_grads=True):
        """Reverse pass for the last ``forward`` call.

        Returns ``(param_grads, grad_input)`` with ``param_grads`` ordered as
        :attr:`params` (``None`` entries when ``param_grads`` is false).
        Gradients are summed over the batch.
        """
        if self._cache is None:
            raise NetStateError("backward() needs a preceding forward()")
        acts, single = self._cache
        g = np.asarray(grad_out, dtype=self.dtype)
        if single:
            g = g[None, :]
        if g.shape != acts[-1].shape:
            raise ShapeError(f"upstream gradient shape {g.shape} != output shape {acts[-1].shape}")
        grads = [None] * (2 * self.n_layers)
        for i in range(self.n_layers - 1, -1, -1):
            if i < self.n_layers - 1:
                g = g * (acts[i + 1] > 0.0)
            if param_grads:
                grads[2 * i] = acts[i].T @ g
                grads[2 * i + 1] = g.sum(axis=0)
            g = g @ self.weights[i].T
        return grads, (g[0] if single else g)

    def copy(self) -> "DenseNet":
        other = DenseNet.__new__(DenseNet)
        other.layer_dims = list(self.layer_dims)
        other.dtype = self.dtype
        other.weights = [w.copy() for w in self.weights]
        other.biases = [b.copy() for b in self.biases]
        other._cache = None
        return other

    def load_params(self, params) -> None:
        for dst, src in zip(self.params, params):
            if dst.shape != np.shape(src):
                raise ShapeError(f"parameter shape {np.shape(src)} != {dst.shape}")
            dst[...] = src

    def soft_update_from(self, source: "DenseNet", retention: float) -> None:
        """self <- retention * self + (1 - retention) * source, element-wise."""
        for t, s in zip(self.params, source.params):
            t *= retention
            t += (1.0 - retention) * s

    def all_finite(self) -> bool:
        return all(np.isfinite(p).all() for p in self.params)

    def flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.params])


@dataclass
class Adam:
    """Bias-corrected Adam over a fixed list of parameter arrays (updated in place)."""

    params: list
    learning_rate: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon_hat: float = 1e-8
    step_count: int = 0

    def __post_init__(self):
        self.first_moment = [np.zeros_like(p) for p in self.params]
        self.second_moment = [np.zeros_like(p) for p in self.params]

    def step(self, grads) -> None:
        if len(grads) != len(self.params):
            raise ShapeError(f"{len(grads)} gradients for {len(self.params)} parameters")
        self.step_count += 1
        t = self.step_count
        c1 = 1.0 - self.beta1**t
        c2 = 1.0 - self.beta2**t
        for p, g, m, v in zip(self.params, grads, self.first_moment, self.second_moment):
            if g.shape != p.shape:
                raise ShapeError(f"gradient shape {g.shape} != parameter shape {p.shape}")
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.learning_rate * (m / c1) / (np.sqrt(v / c2) + self.epsilon_hat)


class ReplayBuffer:
    """Fixed-capacity ring of (s, a, r, s', done) transitions."""

    def __init__(self, state_dim: int, action_dim: int, capacity: int = 1_000_000):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = int(capacity)
        self.states = np.zeros((0, state_dim))
        self.actions = np.zeros((0, action_dim))
        self.rewards = np.zeros(0)
        self.next_states = np.zeros((0, state_dim))
        self.dones = np.zeros(0)
        self.size = 0
        self.write_cursor = 0

    def _grow(self):
        # storage grows geometrically up to capacity
        new = min(self.capacity, max(1024, 2 * len(self.rewards)))
        for name in ("states", "actions", "rewards", "next_states", "dones"):
            old = getattr(self, name)
            arr = np.zeros((new,) + old.shape[1:])
            arr[: len(old)] = old
            setattr(self, name, arr)

    def push(self, state, action, reward, next_state, done=False) -> None:
        if self.write_cursor >= len(self.rewards):
            self._grow()
        i = self.write_cursor
        self.states[i] = state
        self.actions[i] = action
        self.rewards[i] = reward
        self.next_states[i] = next_state
        self.dones[i] = float(done)
        self.write_cursor = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def __len__(self):
        return self.size

    def sample(self, batch_size: int, rng: np.random.Generator):
        """Uniform batch, without replacement inside the batch."""
        if self.size == 0:
            raise BufferEmptyError("cannot sample from an empty replay buffer")
        if batch_size > self.size:
            raise ValueError(f"batch_size {batch_size} > buffer size {self.size}")
        idx = rng.choice(self.size, size=batch_size, replace=False)
        return (self.states[idx], self.actions[idx], self.rewards[idx],
                self.next_states[idx], self.dones[idx])


@dataclass
class SquashedSample:
    action: np.ndarray
    log_prob: np.ndarray
    pre_tanh: np.ndarray
    noise: np.ndarray
    std: np.ndarray


class SquashedGaussianHead:
    """Gaussian over pre-activations u, action a = tanh(u)."""

    def __init__(self, mean, log_std):
        self.mean = np.asarray(mean, dtype=np.float64)
        self.raw_log_std = np.asarray(log_std, dtype=np.float64)
        self.log_std = np.clip(self.raw_log_std, LOG_STD_MIN, LOG_STD_MAX)

    @classmethod
    def from_output(cls, out):
        """Split a network output [..., 2d] into mean and log-std halves."""
        d = out.shape[-1] // 2
        return cls(out[..., :d], out[..., d:])

    def log_prob(self, u):
        """Log-density of a = tanh(u), summed over the last axis."""
        u = np.asarray(u, dtype=np.float64)
        z = (u - self.mean) / np.exp(self.log_std)
        a = np.tanh(u)
        return np.sum(-0.5 * z * z - self.log_std - HALF_LOG_2PI
                      - np.log(1.0 - a * a + SQUASH_EPS), axis=-1)

    def sample(self, rng: np.random.Generator | None = None, deterministic=False, noise=None):
        """Reparameterised draw; ``noise`` overrides the standard normal draw."""
        std = np.exp(self.log_std)
        if deterministic:
            noise = np.zeros_like(self.mean)
        elif noise is None:
            noise = rng.standard_normal(self.mean.shape)
        u = self.mean + std * noise
        a = np.tanh(u)
        logp = np.sum(-0.5 * noise * noise - self.log_std - HALF_LOG_2PI
                      - np.log(1.0 - a * a + SQUASH_EPS), axis=-1)
        return SquashedSample(a, logp, u, noise, std)

    def grad_wrt_output(self, s: SquashedSample, dloss_da, dloss_dlogp):
        """Pull gradients w.r.t. (a, log pi) back to the [mean, raw_log_std] output.

        ``s`` must come from :meth:`sample` on this head; the noise is held
        fixed (reparameterisation) and the log-std clip passes zero gradient
        outside its range.
        """
        a = s.action
        one_m = 1.0 - a * a
        dlogp_du = 2.0 * a * one_m / (one_m + SQUASH_EPS)
        du = dloss_da * one_m + dloss_dlogp[..., None] * dlogp_du
        dmean = du
        dlogstd = du * s.std * s.noise - dloss_dlogp[..., None]
        inside = (self.raw_log_std >= LOG_STD_MIN) & (self.raw_log_std <= LOG_STD_MAX)
        dlogstd = dlogstd * inside
        return np.concatenate([dmean, dlogstd], axis=-1)


# --- checkpoint container -------------------------------------------------
#
# magic b"SNLA" | u16 version | u8 len + algorithm tag | u16 record count
# per record: u8 len + name | u8 kind (0 dense net, 1 table) | u16 ndims | u32 dims...
# then every record's float64 values, little-endian, in record order.
# Dense nets store W0 (row-major, in x out), b0, W1, b1, ...

MAGIC = b"SNLA"
FORMAT_VERSION = 1
KIND_NET, KIND_TABLE = 0, 1


def _pack_str(s: str) -> bytes:
    raw = s.encode("ascii")
    if len(raw) > 255:
        raise ValueError("name too long")
    return struct.pack("<B", len(raw)) + raw


def dump_checkpoint(algorithm: str, records: dict) -> bytes:
    """Serialise named :class:`DenseNet` objects and numpy tables."""
    head = io.BytesIO()
    body = io.BytesIO()
    head.write(MAGIC)
    head.write(struct.pack("<H", FORMAT_VERSION))
    head.write(_pack_str(algorithm))
    head.write(struct.pack("<H", len(records)))
    for name, obj in records.items():
        head.write(_pack_str(name))
        if isinstance(obj, DenseNet):
            dims = obj.layer_dims
            head.write(struct.pack("<B", KIND_NET))
            values = obj.flat()
        else:
            arr = np.asarray(obj, dtype=np.float64)
            dims = list(arr.shape)
            head.write(struct.pack("<B", KIND_TABLE))
            values = arr.ravel()
        head.write(struct.pack("<H", len(dims)))
        head.write(struct.pack(f"<{len(dims)}I", *dims))
        body.write(values.astype("<f8").tobytes())
    return head.getvalue() + body.getvalue()


def load_checkpoint(data: bytes):
    """Inverse of :func:`dump_checkpoint`; returns ``(algorithm, records)``."""
    view = memoryview(data)
    pos = 0

    def take(n):
        nonlocal pos
        if pos + n > len(view):
            raise CheckpointFormatError("truncated checkpoint")
        out = bytes(view[pos:pos + n])
        pos += n
        return out

    def take_str():
        (n,) = struct.unpack("<B", take(1))
        try:
            return take(n).decode("ascii")
        except UnicodeDecodeError as exc:
            raise CheckpointFormatError("non-ascii name") from exc

    if take(4) != MAGIC:
        raise CheckpointFormatError("bad magic bytes")
    (version,) = struct.unpack("<H", take(2))
    if version != FORMAT_VERSION:
        raise CheckpointFormatError(f"unsupported format version {version}")
    algorithm = take_str()
    (count,) = struct.unpack("<H", take(2))
    headers = []
    for _ in range(count):
        name = take_str()
        (kind,) = struct.unpack("<B", take(1))
        (ndims,) = struct.unpack("<H", take(2))
        dims = list(struct.unpack(f"<{ndims}I", take(4 * ndims)))
        if kind not in (KIND_NET, KIND_TABLE):
            raise CheckpointFormatError(f"unknown record kind {kind}")
        headers.append((name, kind, dims))

    records = {}
    for name, kind, dims in headers:
        if kind == KIND_NET:
            if len(dims) < 2 or min(dims) < 1:
                raise CheckpointFormatError(f"bad layer dims for {name}")
            n = sum(a * b + b for a, b in zip(dims[:-1], dims[1:]))
        else:
            n = int(np.prod(dims)) if dims else 1
        values = np.frombuffer(take(8 * n), dtype="<f8").astype(np.float64)
        if kind == KIND_NET:
            net = DenseNet(dims)
            off = 0
            for p in net.params:
                p[...] = values[off:off + p.size].reshape(p.shape)
                off += p.size
            records[name] = net
        else:
            records[name] = values.reshape(dims)
    if pos != len(view):
        raise CheckpointFormatError("trailing bytes after checkpoint payload")
    return algorithm, records
