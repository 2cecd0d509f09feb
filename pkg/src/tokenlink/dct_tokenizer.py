"""Deterministic block-DCT tokenizer with a frequency-ordered token hierarchy.

Pixels are shifted to ``[-0.5, 0.5]``, decorrelated into Y/Cb/Cr, and each
channel is split into ``block x block`` tiles transformed by an orthonormal
type-II DCT.  Every coefficient of the patch gets a global rank:

    (zig-zag index within its block, channel Y < Cb < Cr, block raster index)

The first ``total_tokens * coeffs_per_token`` ranked coefficients are kept and
chopped into groups of ``coeffs_per_token``; each group is vector-quantized to
one token.  Everything past the retained groups is dropped, so the earliest
tokens hold the lowest frequencies of the whole patch.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.fft import dctn, idctn

from .vq import Codebook, TokenSequence, quantize, sequence_latents

# JPEG / BT.601 full-range RGB -> YCbCr (rows: Y, Cb, Cr).
RGB_TO_YCC = np.array(
    [
        [0.299, 0.587, 0.114],
        [-0.168736, -0.331264, 0.5],
        [0.5, -0.418688, -0.081312],
    ]
)
YCC_TO_RGB = np.linalg.inv(RGB_TO_YCC)


@dataclass(frozen=True)
class DctTokenizerConfig:
    patch_height: int = 256
    patch_width: int = 256
    channels: int = 3
    block: int = 32
    coeffs_per_token: int = 4
    total_tokens: int = 256
    key_count: int = 16

    def __post_init__(self):
        if self.channels not in (1, 3):
            raise ValueError("channels must be 1 or 3")
        if self.block < 1 or self.patch_height % self.block or self.patch_width % self.block:
            raise ValueError("patch dimensions must be multiples of the block size")
        if self.total_tokens * self.coeffs_per_token > self.n_coefficients:
            raise ValueError("more retained coefficients requested than the patch has")
        if not 1 <= self.key_count < self.total_tokens:
            raise ValueError("need 1 <= key_count < total_tokens")

    @property
    def n_coefficients(self) -> int:
        return self.patch_height * self.patch_width * self.channels

    @property
    def grid(self) -> tuple[int, int]:
        return self.patch_height // self.block, self.patch_width // self.block

    @property
    def coeff_shape(self) -> tuple[int, ...]:
        """Layout of the coefficient array: (channel, block_row, block_col, u, v)."""
        by, bx = self.grid
        return (self.channels, by, bx, self.block, self.block)


def zigzag(n: int) -> list[tuple[int, int]]:
    """JPEG zig-zag scan of an ``n x n`` block as (row, col) pairs."""
    cells = [(r, c) for r in range(n) for c in range(n)]
    return sorted(cells, key=lambda rc: (rc[0] + rc[1], -rc[0] if (rc[0] + rc[1]) % 2 == 0 else rc[0]))


@lru_cache(maxsize=16)
def _order_cached(cfg: DctTokenizerConfig) -> np.ndarray:
    C, by, bx, b, _ = cfg.coeff_shape
    zz = zigzag(b)
    freq_rank = np.empty((b, b), dtype=np.int64)
    for k, (r, c) in enumerate(zz):
        freq_rank[r, c] = k
    ch, yy, xx, uu, vv = np.indices(cfg.coeff_shape).reshape(5, -1)
    raster = yy * bx + xx
    # lexsort sorts by the last key first
    order = np.lexsort((raster, ch, freq_rank[uu, vv]))
    order.setflags(write=False)
    return order


def importance_order(cfg: DctTokenizerConfig) -> np.ndarray:
    """Permutation of flat coefficient positions, most important first.

    Flat positions index ``np.zeros(cfg.coeff_shape).ravel()``.  The first
    ``total_tokens * coeffs_per_token`` entries are the retained coefficients.
    """
    return _order_cached(cfg)


def retained_groups(cfg: DctTokenizerConfig) -> np.ndarray:
    """``(total_tokens, coeffs_per_token)`` flat coefficient positions per token."""
    n = cfg.total_tokens * cfg.coeffs_per_token
    return importance_order(cfg)[:n].reshape(cfg.total_tokens, cfg.coeffs_per_token)


def _check_image(img: np.ndarray, cfg: DctTokenizerConfig) -> np.ndarray:
    x = np.asarray(img, dtype=np.float64)
    if x.ndim == 2 and cfg.channels == 1:
        x = x[:, :, None]
    expected = (cfg.patch_height, cfg.patch_width, cfg.channels)
    if x.shape != expected:
        raise ValueError(f"image shape {x.shape} does not match patch {expected}")
    return x


def image_to_coefficients(img: np.ndarray, cfg: DctTokenizerConfig) -> np.ndarray:
    x = _check_image(img, cfg) - 0.5
    if cfg.channels == 3:
        x = x @ RGB_TO_YCC.T
    C, by, bx, b, _ = cfg.coeff_shape
    blocks = x.reshape(by, b, bx, b, C).transpose(4, 0, 2, 1, 3)
    return dctn(blocks, axes=(-2, -1), norm="ortho")


def coefficients_to_image(coef: np.ndarray, cfg: DctTokenizerConfig) -> np.ndarray:
    C, by, bx, b, _ = cfg.coeff_shape
    blocks = idctn(coef.reshape(cfg.coeff_shape), axes=(-2, -1), norm="ortho")
    x = blocks.transpose(1, 3, 2, 4, 0).reshape(cfg.patch_height, cfg.patch_width, C)
    if C == 3:
        x = x @ YCC_TO_RGB.T
    x = np.clip(x + 0.5, 0.0, 1.0)
    return x if C == 3 else x[:, :, 0]


def encode_latents(img: np.ndarray, cfg: DctTokenizerConfig) -> np.ndarray:
    """Continuous ``(total_tokens, d)`` latents before quantization."""
    flat = image_to_coefficients(img, cfg).ravel()
    return flat[retained_groups(cfg)]


def decode_latents(latents: np.ndarray, cfg: DctTokenizerConfig) -> np.ndarray:
    lat = np.asarray(latents, dtype=np.float64)
    if lat.shape != (cfg.total_tokens, cfg.coeffs_per_token):
        raise ValueError(f"latents shape {lat.shape} does not match config")
    flat = np.zeros(cfg.n_coefficients)
    flat[retained_groups(cfg)] = lat
    return coefficients_to_image(flat, cfg)


def encode_image(img: np.ndarray, cfg: DctTokenizerConfig, cb: Codebook) -> TokenSequence:
    if cb.d != cfg.coeffs_per_token:
        raise ValueError(f"codebook d={cb.d} but config groups {cfg.coeffs_per_token} coefficients")
    tokens = quantize(encode_latents(img, cfg), cb)
    return TokenSequence(tokens, cfg.key_count)


def decode_image(seq: TokenSequence, cfg: DctTokenizerConfig, cb: Codebook) -> np.ndarray:
    if seq.total != cfg.total_tokens:
        raise ValueError(f"sequence has {seq.total} tokens, config expects {cfg.total_tokens}")
    return decode_latents(sequence_latents(seq, cb), cfg)


def tile(img: np.ndarray, cfg: DctTokenizerConfig) -> tuple[list[np.ndarray], tuple[int, int]]:
    """Split an image into patches in raster order.

    Sizes that are not a multiple of the patch are edge-padded; the original
    ``(H, W)`` is returned for :func:`untile`.
    """
    x = np.asarray(img, dtype=np.float64)
    H, W = x.shape[:2]
    ph, pw = cfg.patch_height, cfg.patch_width
    pad_h, pad_w = -H % ph, -W % pw
    if pad_h or pad_w:
        pad = [(0, pad_h), (0, pad_w)] + [(0, 0)] * (x.ndim - 2)
        x = np.pad(x, pad, mode="edge")
    tiles = [
        x[r : r + ph, c : c + pw]
        for r in range(0, x.shape[0], ph)
        for c in range(0, x.shape[1], pw)
    ]
    return tiles, (H, W)


def untile(tiles: list[np.ndarray], shape: tuple[int, int], cfg: DctTokenizerConfig) -> np.ndarray:
    H, W = shape
    ph, pw = cfg.patch_height, cfg.patch_width
    rows, cols = -(-H // ph), -(-W // pw)
    if len(tiles) != rows * cols:
        raise ValueError(f"expected {rows * cols} tiles, got {len(tiles)}")
    grid = [np.concatenate(tiles[r * cols : (r + 1) * cols], axis=1) for r in range(rows)]
    return np.concatenate(grid, axis=0)[:H, :W]


def training_vectors(images, cfg: DctTokenizerConfig, stride: int | None = None, flips: bool = False) -> np.ndarray:
    """Latent groups of every patch of every image, for codebook fitting.

    With ``stride`` set, patches are cut at every ``stride`` offset instead of
    tiling; ``flips`` adds horizontally mirrored copies.
    """
    out = []
    for img in images:
        img = np.asarray(img, dtype=np.float64)
        variants = [img, img[:, ::-1]] if flips else [img]
        for v in variants:
            if stride is None:
                patches, _ = tile(v, cfg)
            else:
                ph, pw = cfg.patch_height, cfg.patch_width
                patches = [
                    v[r : r + ph, c : c + pw]
                    for r in range(0, v.shape[0] - ph + 1, stride)
                    for c in range(0, v.shape[1] - pw + 1, stride)
                ]
            out.extend(encode_latents(p, cfg) for p in patches)
    return np.concatenate(out, axis=0)
