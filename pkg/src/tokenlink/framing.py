"""Progressive source framing: key/detail split, channel budget, bit packing.

The detail-token budget under a channel bandwidth ratio ``cbr`` is

    n_symbols = round(cbr * H * W * 3)
    n_t       = floor(n_symbols * m * r / b_token) - key_count

i.e. the number of whole tokens that fit in the information-bit capacity of
``n_symbols`` symbols carrying ``m`` coded bits each at code rate ``r``, minus
the key tokens that are always sent.  ``budget_form="printed"`` swaps ``m`` to
the denominator, ``floor(cbr * H * W * 3 * r / (b_token * m))``, for
comparison only; that form shrinks with larger constellations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from os import PathLike
from pathlib import Path

import numpy as np

from .errors import ConfigError, FramingError
from .vq import TokenSequence

BUDGET_FORMS = ("consistent", "printed")


@dataclass(frozen=True)
class FrameConfig:
    key_count: int = 16
    total_tokens: int = 256
    b_token: int = 12
    target_cbr: float = 1 / 256
    height: int = 256
    width: int = 256
    budget_form: str = "consistent"

    def __post_init__(self):
        if not self.target_cbr > 0:
            raise ConfigError("target_cbr must be positive")
        if not 1 <= self.key_count <= self.total_tokens:
            raise ConfigError("need 1 <= key_count <= total_tokens")
        if self.b_token < 1:
            raise ConfigError("b_token must be positive")
        if self.budget_form not in BUDGET_FORMS:
            raise ConfigError(f"budget_form must be one of {BUDGET_FORMS}")

    @property
    def source_size(self) -> int:
        return self.height * self.width * 3

    @property
    def n_symbols(self) -> int:
        # half-up rounding, not banker's rounding
        return int(math.floor(self.target_cbr * self.source_size + 0.5))


@dataclass(frozen=True)
class DetailBudget:
    n_t: int
    n_symbols: int
    token_capacity: int
    feasible: bool

    @property
    def tokens(self) -> int:
        """Tokens to send: key tokens plus ``n_t`` details (0 if infeasible)."""
        return self.token_capacity if self.feasible else 0


def compute_detail_budget(cfg: FrameConfig, r, m: int) -> DetailBudget:
    """Detail tokens that fit the channel budget.

    ``feasible`` is False when not even the key tokens fit; ``n_t`` is then 0
    and nothing should be sent.  The result never exceeds the available
    detail tokens.
    """
    rate = Fraction(r).limit_denominator(1 << 20)
    if not 0 < rate <= 1:
        raise ConfigError(f"code rate {r} outside (0, 1]")
    if m not in (1, 2, 4, 6):
        raise ConfigError(f"bits per symbol {m} not in (1, 2, 4, 6)")
    n_s = cfg.n_symbols
    if cfg.budget_form == "consistent":
        capacity = math.floor(n_s * m * rate / cfg.b_token)
    else:
        capacity = math.floor(Fraction(cfg.target_cbr) * cfg.source_size * rate / (cfg.b_token * m))
    feasible = capacity >= cfg.key_count
    n_t = min(max(capacity - cfg.key_count, 0), cfg.total_tokens - cfg.key_count)
    return DetailBudget(n_t, n_s, cfg.key_count + n_t, feasible)


def select_tokens(seq: TokenSequence, n_t: int) -> np.ndarray:
    """Key tokens followed by the ``n_t`` most important detail tokens."""
    if not 0 <= n_t <= seq.total - seq.key_count:
        raise ValueError(f"n_t={n_t} outside [0, {seq.total - seq.key_count}]")
    return seq.indices[: seq.key_count + n_t].copy()


@dataclass(frozen=True)
class Bitstream:
    data: bytes
    bit_length: int

    def __post_init__(self):
        if self.bit_length < 0 or self.bit_length > 8 * len(self.data):
            raise FramingError("bit_length exceeds byte capacity")
        spare = 8 * len(self.data) - self.bit_length
        if spare >= 8:
            raise FramingError("too many padding bytes")
        if spare and self.data[-1] & ((1 << spare) - 1):
            raise FramingError("trailing pad bits must be zero")

    @classmethod
    def from_bits(cls, bits) -> "Bitstream":
        b = np.asarray(bits, dtype=np.uint8).ravel()
        if b.size and b.max() > 1:
            raise ValueError("bits must be 0 or 1")
        return cls(np.packbits(b).tobytes(), int(b.size))

    def to_bits(self) -> np.ndarray:
        return np.unpackbits(np.frombuffer(self.data, dtype=np.uint8))[: self.bit_length].astype(np.int8)

    def dump(self, path: str | PathLike) -> None:
        """Write raw MSB-first bytes plus a ``<path>.txt`` sidecar ``bits=<n>``."""
        path = Path(path)
        path.write_bytes(self.data)
        Path(str(path) + ".txt").write_text(f"bits={self.bit_length}\n")

    @classmethod
    def load(cls, path: str | PathLike) -> "Bitstream":
        path = Path(path)
        meta = Path(str(path) + ".txt").read_text().strip()
        if not meta.startswith("bits="):
            raise FramingError(f"{path}.txt: expected 'bits=<n>'")
        return cls(path.read_bytes(), int(meta[5:]))


def pack_tokens(tokens, b_token: int) -> Bitstream:
    t = np.asarray(tokens, dtype=np.int64).ravel()
    if t.size and (t.min() < 0 or t.max() >= (1 << b_token)):
        raise ValueError(f"token value does not fit in {b_token} bits")
    shifts = np.arange(b_token - 1, -1, -1)
    bits = (t[:, None] >> shifts) & 1
    return Bitstream.from_bits(bits.ravel())


def unpack_tokens(bs: Bitstream, b_token: int, count: int) -> np.ndarray:
    need = count * b_token
    if bs.bit_length < need:
        raise FramingError(f"bitstream holds {bs.bit_length} bits, {need} needed")
    bits = bs.to_bits()[:need].astype(np.int64).reshape(count, b_token)
    return bits @ (1 << np.arange(b_token - 1, -1, -1))
