"""Rate-1/3 parallel-concatenated turbo code with puncturing.

Constituent codes are 8-state recursive systematic convolutional encoders
(feedback 13, feedforward 15, octal), joined through a QPP interleaver.  The
mother codeword is laid out as::

    [systematic (L)] [parity 1 (L)] [parity 2 (L)] [tail 1 (6)] [tail 2 (6)]

with each tail interleaving (x, z) pairs over the three termination steps.
LLRs are positive when bit 0 is more likely.  Decoding is iterative
max-log-MAP with scaled extrinsic exchange.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from importlib import resources

import numba
import numpy as np

from .errors import ConfigError, FramingError

MEMORY = 3
N_STATES = 1 << MEMORY
TAIL_BITS = 4 * MEMORY
NEG = -1e30


def _read_fixture(name: str) -> list[list[str]]:
    text = resources.files("tokenlink.data").joinpath(name).read_text()
    rows = []
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            rows.append(line.split())
    return rows


@lru_cache(maxsize=None)
def qpp_table() -> dict[int, tuple[int, int]]:
    """Block length -> (f1, f2) from the shipped LTE table."""
    return {int(k): (int(f1), int(f2)) for k, f1, f2 in _read_fixture("qpp_lte.txt")}


def supported_lengths() -> list[int]:
    return sorted(qpp_table())


def padded_length(n_bits: int) -> int:
    """Smallest supported block length holding ``n_bits`` information bits."""
    for k in supported_lengths():
        if k >= n_bits:
            return k
    raise ConfigError(f"{n_bits} bits exceed the largest turbo block length")


def qpp_interleave(length: int, f1: int, f2: int) -> np.ndarray:
    """``pi(i) = (f1*i + f2*i^2) mod length``; raises unless it is a permutation."""
    if length < 1:
        raise ConfigError("interleaver length must be positive")
    i = np.arange(length, dtype=np.int64)
    perm = (f1 * i + (f2 * i % length) * i) % length
    if np.bincount(perm, minlength=length).max() != 1:
        raise ConfigError(f"(f1={f1}, f2={f2}) is not a permutation polynomial mod {length}")
    return perm


@lru_cache(maxsize=None)
def _interleaver(length: int) -> np.ndarray:
    try:
        f1, f2 = qpp_table()[length]
    except KeyError:
        raise ConfigError(f"unsupported turbo block length {length}") from None
    perm = qpp_interleave(length, f1, f2)
    perm.setflags(write=False)
    return perm


@dataclass(frozen=True)
class Trellis:
    """State machine of one RSC constituent, built from octal generators."""

    feedback: int = 0o13
    feedforward: int = 0o15
    next_state: np.ndarray = field(init=False, repr=False)
    parity: np.ndarray = field(init=False, repr=False)
    tail_input: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        for g in (self.feedback, self.feedforward):
            if not (1 << MEMORY) <= g < (1 << (MEMORY + 1)):
                raise ConfigError(f"generator {g:o} must have constraint length {MEMORY + 1}")
        ns = np.zeros((N_STATES, 2), dtype=np.int64)
        par = np.zeros((N_STATES, 2), dtype=np.int64)
        tail = np.zeros(N_STATES, dtype=np.int64)
        # state bit j (MSB first) holds the register delayed by j+1
        taps_fb = [(self.feedback >> (MEMORY - 1 - j)) & 1 for j in range(MEMORY)]
        taps_ff = [(self.feedforward >> (MEMORY - 1 - j)) & 1 for j in range(MEMORY)]
        ff0 = (self.feedforward >> MEMORY) & 1
        for s in range(N_STATES):
            reg = [(s >> (MEMORY - 1 - j)) & 1 for j in range(MEMORY)]
            fb = sum(t & r for t, r in zip(taps_fb, reg)) & 1
            tail[s] = fb
            for u in (0, 1):
                a = u ^ fb
                z = (ff0 & a) ^ (sum(t & r for t, r in zip(taps_ff, reg)) & 1)
                ns[s, u] = (a << (MEMORY - 1)) | (s >> 1)
                par[s, u] = z
        for name, arr in (("next_state", ns), ("parity", par), ("tail_input", tail)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)


@dataclass(frozen=True)
class TurboConfig:
    iterations: int = 6
    extrinsic_scale: float = 0.75
    llr_clip: float = 30.0
    trellis: Trellis = field(default_factory=Trellis)

    def __post_init__(self):
        if self.iterations < 1:
            raise ConfigError("at least one decoder iteration is required")


# --------------------------------------------------------------------------
# Encoding


@numba.njit(cache=True, nogil=True)
def _rsc_encode(bits, next_state, parity, tail_input):
    n = bits.shape[0]
    par = np.empty(n, dtype=np.int8)
    tail = np.empty(2 * 3, dtype=np.int8)
    s = 0
    for k in range(n):
        u = bits[k]
        par[k] = parity[s, u]
        s = next_state[s, u]
    for k in range(3):
        u = tail_input[s]
        tail[2 * k] = u
        tail[2 * k + 1] = parity[s, u]
        s = next_state[s, u]
    return par, tail, s


def rsc_encode(bits: np.ndarray, trellis: Trellis) -> tuple[np.ndarray, np.ndarray]:
    """Parity stream and the 6 interleaved (x, z) termination bits."""
    b = np.ascontiguousarray(bits, dtype=np.int8)
    par, tail, final = _rsc_encode(b, trellis.next_state, trellis.parity, trellis.tail_input)
    assert final == 0
    return par, tail


def turbo_encode(info: np.ndarray, cfg: TurboConfig | None = None) -> np.ndarray:
    """Encode ``L`` information bits (or a ``(B, L)`` batch) to ``3L + 12`` bits."""
    cfg = cfg or TurboConfig()
    x = np.asarray(info, dtype=np.int8)
    if x.ndim == 2:
        return np.stack([turbo_encode(row, cfg) for row in x])
    L = x.shape[0]
    perm = _interleaver(L)
    p1, t1 = rsc_encode(x, cfg.trellis)
    p2, t2 = rsc_encode(x[perm], cfg.trellis)
    return np.concatenate([x, p1, p2, t1, t2]).astype(np.int8)


def mother_length(L: int) -> int:
    return 3 * L + TAIL_BITS


def info_length(n_coded: int) -> int:
    L, rem = divmod(n_coded - TAIL_BITS, 3)
    if rem or L < 1:
        raise FramingError(f"{n_coded} is not a valid mother-code length")
    return L


# --------------------------------------------------------------------------
# Rate matching


@lru_cache(maxsize=None)
def puncture_patterns() -> dict[Fraction, tuple[np.ndarray, np.ndarray, bool]]:
    table = {}
    for rate, period, m1, m2, tail in _read_fixture("puncture_patterns.txt"):
        p = int(period)
        if len(m1) != p or len(m2) != p:
            raise ConfigError(f"pattern for rate {rate} does not match its period")
        table[Fraction(rate)] = (
            np.array([c == "1" for c in m1]),
            np.array([c == "1" for c in m2]),
            tail == "1",
        )
    return table


def supported_rates() -> list[Fraction]:
    return sorted(puncture_patterns())


def _pattern(r) -> tuple[np.ndarray, np.ndarray, bool]:
    key = Fraction(r).limit_denominator(64)
    try:
        return puncture_patterns()[key]
    except KeyError:
        raise ConfigError(f"unsupported code rate {r}; supported: {supported_rates()}") from None


@lru_cache(maxsize=None)
def _keep_mask(L: int, key: Fraction) -> np.ndarray:
    m1, m2, tail = _pattern(key)
    i = np.arange(L)
    keep = np.concatenate(
        [
            np.ones(L, dtype=bool),
            m1[i % m1.size],
            m2[i % m2.size],
            np.full(TAIL_BITS, tail),
        ]
    )
    keep.setflags(write=False)
    return keep


def puncture_mask(L: int, r) -> np.ndarray:
    """Boolean mask over the mother codeword; True = transmitted."""
    return _keep_mask(L, Fraction(r).limit_denominator(64))


def rate_matched_length(L: int, r) -> int:
    return int(puncture_mask(L, r).sum())


def rate_match(coded: np.ndarray, r) -> np.ndarray:
    c = np.asarray(coded)
    keep = puncture_mask(info_length(c.shape[-1]), r)
    return c[..., keep]


def rate_recover(llrs: np.ndarray, r, info_len: int) -> np.ndarray:
    """Re-insert punctured positions as zero-LLR erasures."""
    x = np.asarray(llrs, dtype=np.float64)
    keep = puncture_mask(info_len, r)
    if x.shape[-1] != keep.sum():
        raise FramingError(
            f"got {x.shape[-1]} LLRs, rate {r} with L={info_len} needs {int(keep.sum())}"
        )
    out = np.zeros(x.shape[:-1] + (keep.size,))
    out[..., keep] = x
    return out


# --------------------------------------------------------------------------
# Decoding


@numba.njit(cache=True, nogil=True)
def _bcjr(lsys, lpar, lapr, next_state, parity):
    """Max-log-MAP over a terminated trellis; returns APP LLRs of the inputs."""
    n = lsys.shape[0]
    S = next_state.shape[0]
    alpha = np.full((n + 1, S), NEG)
    beta = np.full((n + 1, S), NEG)
    alpha[0, 0] = 0.0
    beta[n, 0] = 0.0
    gamma = np.empty((n, S, 2))
    for k in range(n):
        lu = 0.5 * (lsys[k] + lapr[k])
        lp = 0.5 * lpar[k]
        for s in range(S):
            for u in range(2):
                gamma[k, s, u] = (lu if u == 0 else -lu) + (lp if parity[s, u] == 0 else -lp)
    for k in range(n):
        top = NEG
        for s in range(S):
            a = alpha[k, s]
            if a <= NEG:
                continue
            for u in range(2):
                t = next_state[s, u]
                m = a + gamma[k, s, u]
                if m > alpha[k + 1, t]:
                    alpha[k + 1, t] = m
        for s in range(S):
            if alpha[k + 1, s] > top:
                top = alpha[k + 1, s]
        for s in range(S):
            if alpha[k + 1, s] > NEG:
                alpha[k + 1, s] -= top
    for k in range(n - 1, -1, -1):
        top = NEG
        for s in range(S):
            best = NEG
            for u in range(2):
                b = beta[k + 1, next_state[s, u]]
                if b <= NEG:
                    continue
                m = b + gamma[k, s, u]
                if m > best:
                    best = m
            beta[k, s] = best
            if best > top:
                top = best
        for s in range(S):
            if beta[k, s] > NEG:
                beta[k, s] -= top
    app = np.empty(n)
    for k in range(n):
        m0 = NEG
        m1 = NEG
        for s in range(S):
            a = alpha[k, s]
            if a <= NEG:
                continue
            for u in range(2):
                b = beta[k + 1, next_state[s, u]]
                if b <= NEG:
                    continue
                m = a + gamma[k, s, u] + b
                if u == 0:
                    if m > m0:
                        m0 = m
                elif m > m1:
                    m1 = m
        app[k] = m0 - m1
    return app


@numba.njit(cache=True, nogil=True)
def _turbo_decode_block(llr, perm, next_state, parity, iterations, scale, clip):
    L = perm.shape[0]
    T = 3
    c = np.empty(llr.shape[0])
    for i in range(llr.shape[0]):
        c[i] = min(max(llr[i], -clip), clip)
    ls = c[:L]
    sys1 = np.empty(L + T)
    par1 = np.empty(L + T)
    sys2 = np.empty(L + T)
    par2 = np.empty(L + T)
    base = 3 * L
    for k in range(L):
        sys1[k] = ls[k]
        par1[k] = c[L + k]
        sys2[k] = ls[perm[k]]
        par2[k] = c[2 * L + k]
    for k in range(T):
        sys1[L + k] = c[base + 2 * k]
        par1[L + k] = c[base + 2 * k + 1]
        sys2[L + k] = c[base + 6 + 2 * k]
        par2[L + k] = c[base + 6 + 2 * k + 1]
    apr1 = np.zeros(L + T)
    apr2 = np.zeros(L + T)
    final = np.empty(L)
    for _ in range(iterations):
        app1 = _bcjr(sys1, par1, apr1, next_state, parity)
        for k in range(L):
            apr2[k] = scale * (app1[perm[k]] - sys1[perm[k]] - apr1[perm[k]])
        app2 = _bcjr(sys2, par2, apr2, next_state, parity)
        for k in range(L):
            apr1[perm[k]] = scale * (app2[k] - sys2[k] - apr2[k])
            final[perm[k]] = app2[k]
    out = np.empty(L, dtype=np.int8)
    for k in range(L):
        out[k] = 1 if final[k] < 0 else 0
    return out


def turbo_decode(llrs: np.ndarray, cfg: TurboConfig | None = None) -> np.ndarray:
    """Hard decisions on the information bits after ``cfg.iterations`` iterations.

    ``llrs`` has mother-code length ``3L + 12`` (use :func:`rate_recover`
    first for punctured input); a 2-D array decodes one block per row.
    """
    cfg = cfg or TurboConfig()
    x = np.asarray(llrs, dtype=np.float64)
    if x.ndim == 2:
        return np.stack([turbo_decode(row, cfg) for row in x])
    perm = _interleaver(info_length(x.shape[0]))
    t = cfg.trellis
    return _turbo_decode_block(
        np.ascontiguousarray(x), perm, t.next_state, t.parity,
        cfg.iterations, cfg.extrinsic_scale, cfg.llr_clip,
    )


def constituent_decode(
    sys_llr: np.ndarray, par_llr: np.ndarray, trellis: Trellis | None = None, apriori=None
) -> np.ndarray:
    """APP LLRs of one terminated RSC (inputs include the 3 tail steps)."""
    trellis = trellis or Trellis()
    s = np.ascontiguousarray(sys_llr, dtype=np.float64)
    p = np.ascontiguousarray(par_llr, dtype=np.float64)
    a = np.zeros_like(s) if apriori is None else np.ascontiguousarray(apriori, dtype=np.float64)
    return _bcjr(s, p, a, trellis.next_state, trellis.parity)
