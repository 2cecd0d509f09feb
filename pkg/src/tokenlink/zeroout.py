"""Zero-out training of a tiny MLP autoencoder.

Each training step draws a truncation point ``t`` uniformly from
``{key_count, ..., N}``, zeroes latent tokens ``t..N-1`` and trains the
decoder to reconstruct the input from what is left.  Training this way
pushes the information the decoder needs most into the earliest tokens.

Architecture (``p`` inputs, ``N`` tokens of ``d`` dims, ``hidden`` units)::

    h = tanh(W1 x + b1)          z = W2 h + b2      (N*d latent)
    g = tanh(W3 zero_out(z) + b3)  x_hat = W4 g + b4
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from importlib import resources
from os import PathLike
from pathlib import Path

import numpy as np
from scipy.fft import idctn

from .errors import ConfigError, TrainingError

MODEL_MAGIC = b"RTAE"
PATCH_MAGIC = b"RTPD"
PARAM_NAMES = ("W1", "b1", "W2", "b2", "W3", "b3", "W4", "b4")


@dataclass
class TinyAutoencoder:
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    W3: np.ndarray
    b3: np.ndarray
    W4: np.ndarray
    b4: np.ndarray
    n_tokens: int
    token_dim: int

    @classmethod
    def init(cls, p: int = 64, n_tokens: int = 16, token_dim: int = 4, hidden: int = 64, seed: int = 0):
        rng = np.random.default_rng(seed)
        latent = n_tokens * token_dim

        def layer(fan_in, fan_out):
            return rng.normal(0.0, 1.0 / np.sqrt(fan_in), (fan_out, fan_in)), np.zeros(fan_out)

        W1, b1 = layer(p, hidden)
        W2, b2 = layer(hidden, latent)
        W3, b3 = layer(latent, hidden)
        W4, b4 = layer(hidden, p)
        return cls(W1, b1, W2, b2, W3, b3, W4, b4, n_tokens, token_dim)

    @property
    def p(self) -> int:
        return self.W1.shape[1]

    @property
    def hidden(self) -> int:
        return self.W1.shape[0]

    @property
    def latent_size(self) -> int:
        return self.n_tokens * self.token_dim

    def params(self) -> dict[str, np.ndarray]:
        return {k: getattr(self, k) for k in PARAM_NAMES}

    def copy(self) -> "TinyAutoencoder":
        return TinyAutoencoder(**{k: v.copy() for k, v in self.params().items()},
                               n_tokens=self.n_tokens, token_dim=self.token_dim)

    def check(self) -> None:
        L = self.latent_size
        shapes = {
            "W1": (self.hidden, self.p), "b1": (self.hidden,),
            "W2": (L, self.hidden), "b2": (L,),
            "W3": (self.hidden, L), "b3": (self.hidden,),
            "W4": (self.p, self.hidden), "b4": (self.p,),
        }
        for name, shape in shapes.items():
            arr = getattr(self, name)
            if arr.shape != shape:
                raise ConfigError(f"{name} has shape {arr.shape}, expected {shape}")
            if not np.isfinite(arr).all():
                raise TrainingError(f"{name} contains non-finite values")

    def encode(self, x: np.ndarray) -> np.ndarray:
        """``(B, N, d)`` latents."""
        h = np.tanh(x @ self.W1.T + self.b1)
        z = h @ self.W2.T + self.b2
        return z.reshape(x.shape[0], self.n_tokens, self.token_dim)

    def decode(self, latents: np.ndarray) -> np.ndarray:
        z = latents.reshape(latents.shape[0], -1)
        g = np.tanh(z @ self.W3.T + self.b3)
        return g @ self.W4.T + self.b4

    def save(self, path: str | PathLike) -> None:
        with open(path, "wb") as fh:
            fh.write(MODEL_MAGIC)
            fh.write(struct.pack("<4I", self.p, self.n_tokens, self.token_dim, self.hidden))
            for name in PARAM_NAMES:
                fh.write(getattr(self, name).astype("<f4").tobytes(order="C"))

    @classmethod
    def load(cls, path: str | PathLike) -> "TinyAutoencoder":
        raw = Path(path).read_bytes()
        if raw[:4] != MODEL_MAGIC:
            raise ConfigError(f"{path}: not a model checkpoint")
        p, n, d, hid = struct.unpack("<4I", raw[4:20])
        L = n * d
        shapes = [(hid, p), (hid,), (L, hid), (L,), (hid, L), (hid,), (p, hid), (p,)]
        pos = 20
        arrays = {}
        for name, shape in zip(PARAM_NAMES, shapes):
            size = int(np.prod(shape))
            chunk = raw[pos : pos + 4 * size]
            if len(chunk) != 4 * size:
                raise ConfigError(f"{path}: truncated at {name}")
            arrays[name] = np.frombuffer(chunk, dtype="<f4").reshape(shape).astype(np.float64)
            pos += 4 * size
        if pos != len(raw):
            raise ConfigError(f"{path}: {len(raw) - pos} trailing bytes")
        model = cls(**arrays, n_tokens=n, token_dim=d)
        model.check()
        return model


@dataclass(frozen=True)
class TrainConfig:
    key_count: int = 4
    batch_size: int = 32
    learning_rate: float = 0.05
    steps: int = 2000
    seed: int = 0

    def __post_init__(self):
        if self.key_count < 0:
            raise ConfigError("key_count must be non-negative")
        if not self.learning_rate >= 0:
            raise ConfigError("learning rate must be non-negative")
        if self.batch_size < 1 or self.steps < 0:
            raise ConfigError("batch_size must be positive and steps non-negative")


def sample_truncation(key_count: int, n: int, rng: np.random.Generator) -> int:
    """Uniform draw from ``{key_count, ..., n}`` (both ends inclusive)."""
    if key_count > n:
        raise ValueError(f"key_count {key_count} exceeds token count {n}")
    return int(rng.integers(key_count, n + 1))


def zero_out(latents: np.ndarray, t: int) -> np.ndarray:
    """Copy of ``(B, N, d)`` or ``(N, d)`` latents with tokens ``t..N-1`` zeroed."""
    z = np.asarray(latents)
    n = z.shape[-2]
    if not 0 <= t <= n:
        raise ValueError(f"truncation point {t} outside [0, {n}]")
    out = np.zeros_like(z)
    out[..., :t, :] = z[..., :t, :]
    return out


def loss_and_grads(model: TinyAutoencoder, batch: np.ndarray, t: int):
    """MSE of the zeroed reconstruction and its gradient for every parameter."""
    x = np.asarray(batch, dtype=np.float64)
    B = x.shape[0]
    h = np.tanh(x @ model.W1.T + model.b1)
    z = h @ model.W2.T + model.b2
    zk = zero_out(z.reshape(B, model.n_tokens, model.token_dim), t).reshape(B, -1)
    g = np.tanh(zk @ model.W3.T + model.b3)
    y = g @ model.W4.T + model.b4
    diff = y - x
    loss = float(np.mean(diff**2))

    dy = 2.0 * diff / diff.size
    grads = {"W4": dy.T @ g, "b4": dy.sum(axis=0)}
    dg = (dy @ model.W4) * (1.0 - g**2)
    grads["W3"] = dg.T @ zk
    grads["b3"] = dg.sum(axis=0)
    dz = dg @ model.W3
    dz[:, t * model.token_dim :] = 0.0
    grads["W2"] = dz.T @ h
    grads["b2"] = dz.sum(axis=0)
    dh = (dz @ model.W2) * (1.0 - h**2)
    grads["W1"] = dh.T @ x
    grads["b1"] = dh.sum(axis=0)
    return loss, grads


def train_step(model: TinyAutoencoder, batch: np.ndarray, cfg: TrainConfig,
               rng: np.random.Generator, t: int | None = None) -> float:
    """One zero-out gradient-descent step; returns the loss before the update.

    ``t`` is drawn with :func:`sample_truncation` unless given.
    """
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0 or x.shape[1] != model.p:
        raise ValueError(f"batch must be (B>0, {model.p}), got {x.shape}")
    if t is None:
        t = sample_truncation(cfg.key_count, model.n_tokens, rng)
    with np.errstate(all="ignore"):
        loss, grads = loss_and_grads(model, x, t)
    if not np.isfinite(loss):
        raise TrainingError(f"non-finite loss {loss} at truncation t={t}")
    for name, grad in grads.items():
        getattr(model, name)[...] -= cfg.learning_rate * grad
    return loss


def train(model: TinyAutoencoder, data: np.ndarray, cfg: TrainConfig, log_every: int = 0, log=print):
    """Run ``cfg.steps`` steps on minibatches drawn with replacement.

    One truncation point is drawn per minibatch.  Returns the loss history.
    """
    rng = np.random.default_rng(cfg.seed)
    history = []
    for step in range(cfg.steps):
        idx = rng.integers(0, data.shape[0], cfg.batch_size)
        history.append(train_step(model, data[idx], cfg, rng))
        if log_every and (step + 1) % log_every == 0:
            log(f"step {step + 1}: loss {np.mean(history[-log_every:]):.6f}")
    return history


def reconstruction_mse(model: TinyAutoencoder, data: np.ndarray, t: int | None = None) -> float:
    z = model.encode(np.asarray(data, dtype=np.float64))
    if t is not None:
        z = zero_out(z, t)
    return float(np.mean((model.decode(z) - data) ** 2))


def evaluate_information_gradient(model: TinyAutoencoder, dataset: np.ndarray, t_values):
    """``[(t, mean MSE with tokens >= t zeroed), ...]`` for ascending ``t_values``."""
    data = np.asarray(dataset, dtype=np.float64)
    if data.ndim != 2 or data.shape[0] == 0:
        raise ValueError("dataset must be a non-empty (n, p) array")
    ts = list(t_values)
    if ts != sorted(ts):
        raise ValueError("t_values must be ascending")
    return [(int(t), reconstruction_mse(model, data, t)) for t in ts]


def synthetic_patches(count: int = 4096, size: int = 8, rank: int = 48, seed: int = 0) -> np.ndarray:
    """Low-rank ``size x size`` patches built from the lowest DCT basis images.

    Each patch mixes ``rank`` low-frequency basis images with Gaussian
    amplitudes whose scale decays as ``1 / sqrt(1 + k)``.
    """
    rng = np.random.default_rng(seed)
    basis = []
    for s in range(2 * size):
        for u in range(s + 1):
            v = s - u
            if u < size and v < size and len(basis) < rank:
                e = np.zeros((size, size))
                e[u, v] = 1.0
                basis.append(idctn(e, norm="ortho").ravel())
    basis = np.array(basis)
    amps = rng.normal(size=(count, rank)) / np.sqrt(1.0 + np.arange(rank))
    return amps @ basis * size / 2.0


def save_patches(data: np.ndarray, path: str | PathLike) -> None:
    """Write ``RTPD`` blob: magic, u32 count, u32 patch length, float32 rows."""
    data = np.asarray(data)
    with open(path, "wb") as fh:
        fh.write(PATCH_MAGIC)
        fh.write(struct.pack("<2I", *data.shape))
        fh.write(data.astype("<f4").tobytes())


def load_patches(path: str | PathLike | None = None) -> np.ndarray:
    """Read a patch blob, or a directory of raw float32 patch files.

    ``None`` loads the dataset shipped with the package.
    """
    if path is None:
        raw = resources.files("tokenlink.data").joinpath("zeroout_patches.bin").read_bytes()
    else:
        path = Path(path)
        if path.is_dir():
            files = sorted(f for f in path.iterdir() if f.is_file())
            if not files:
                raise ConfigError(f"{path}: no patch files")
            return np.stack([np.fromfile(f, dtype="<f4").astype(np.float64) for f in files])
        raw = path.read_bytes()
    if raw[:4] != PATCH_MAGIC:
        raise ConfigError("not a patch dataset (bad magic)")
    n, p = struct.unpack("<2I", raw[4:12])
    if len(raw) != 12 + 4 * n * p:
        raise ConfigError("patch dataset size does not match its header")
    return np.frombuffer(raw, dtype="<f4", offset=12).reshape(n, p).astype(np.float64)


REFERENCE_STEPS = 20000


def reference_run(data: np.ndarray | None = None, steps: int = REFERENCE_STEPS, seed: int = 0):
    """Train the default model on the shipped dataset with a fixed seed.

    Returns ``(trained_model, untrained_mse)`` where the MSE is the full-token
    reconstruction error of the freshly initialised model.
    """
    data = load_patches() if data is None else data
    model = TinyAutoencoder.init(p=data.shape[1], seed=seed)
    untrained = reconstruction_mse(model, data)
    train(model, data, TrainConfig(steps=steps, seed=seed))
    return model, untrained
