"""Multispace image channels: gradient magnitude, windowed GLCM energy, LBP.

A grayscale patch in [0,1] is re-expressed as three texture channels of the
same height and width, each again in [0,1]. Stacked they form the 3-channel
multispace image used as both network input and reconstruction target in
``mir`` mode. Borders are handled by replicate padding everywhere so the
channels keep the source shape.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SOBEL_MAX = 4.0 * np.sqrt(2.0)  # largest attainable magnitude for values in [0,1]

# clockwise from the top-left neighbour; first neighbour is the high bit
_LBP_OFFSETS = (
    (-1, -1), (-1, 0), (-1, 1), (0, 1),
    (1, 1), (1, 0), (1, -1), (0, -1),
)


def _as_gray(t) -> np.ndarray:
    arr = np.asarray(t, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[0] != 1:
        raise ValueError(f"expected a (1,H,W) grayscale tensor, got shape {arr.shape}")
    return arr


def gradient_channel(gray) -> np.ndarray:
    """Sobel gradient magnitude, normalized to [0,1].

    Magnitude sqrt(Gx^2 + Gy^2) of the 3x3 Sobel responses on the
    replicate-padded image, divided by the theoretical maximum 4*sqrt(2).
    """
    img = _as_gray(gray)[0]
    h, w = img.shape
    if h < 3 or w < 3:
        raise ValueError(f"gradient channel needs at least 3x3 pixels, got {h}x{w}")
    p = np.pad(img, 1, mode="edge")
    tl, t, tr = p[:-2, :-2], p[:-2, 1:-1], p[:-2, 2:]
    left, right = p[1:-1, :-2], p[1:-1, 2:]
    bl, b, br = p[2:, :-2], p[2:, 1:-1], p[2:, 2:]
    gx = (tr + 2.0 * right + br) - (tl + 2.0 * left + bl)
    gy = (bl + 2.0 * b + br) - (tl + 2.0 * t + tr)
    mag = np.sqrt(gx * gx + gy * gy) / SOBEL_MAX
    return mag[None]


def quantize_levels(gray, levels: int) -> np.ndarray:
    """Bin [0,1] values into integer levels via floor(g*levels), clamped."""
    img = np.asarray(gray, dtype=np.float64)
    if img.ndim == 3:
        img = _as_gray(img)[0]
    q = np.floor(img * levels).astype(np.int64)
    return np.clip(q, 0, levels - 1)


def glcm_energy(quantized, levels: int, offset=(0, 1)) -> float:
    """Energy (sum of squared normalized counts) of one block's co-occurrences.

    Pairs are (value, value-at-offset) for every position whose partner also
    lies inside the block.
    """
    q = np.asarray(quantized, dtype=np.int64)
    dy, dx = offset
    h, w = q.shape
    if h - abs(dy) < 1 or w - abs(dx) < 1:
        raise ValueError(f"offset {offset} does not fit inside a {h}x{w} block")
    y0, y1 = max(0, -dy), h - max(0, dy)
    x0, x1 = max(0, -dx), w - max(0, dx)
    a = q[y0:y1, x0:x1]
    b = q[y0 + dy:y1 + dy, x0 + dx:x1 + dx]
    codes = (a * levels + b).ravel()
    counts = np.bincount(codes, minlength=levels * levels).astype(np.float64)
    p = counts / counts.sum()
    return float((p * p).sum())


def glcm_window_statistic(gray, window: int = 5, levels: int = 8, offset=(0, 1)) -> np.ndarray:
    """Per-pixel GLCM energy over a sliding window, replicate-padded.

    The image is quantized into ``levels`` bins; around every pixel a
    ``window`` x ``window`` neighborhood contributes all co-occurrence pairs
    at ``offset`` that fit inside it. Output is the energy map in (0,1].
    """
    img = _as_gray(gray)
    dy, dx = int(offset[0]), int(offset[1])
    if window % 2 == 0 or window < 1:
        raise ValueError(f"window must be odd and positive, got {window}")
    if levels < 2:
        raise ValueError(f"levels must be at least 2, got {levels}")
    if (dy, dx) == (0, 0):
        raise ValueError("offset (0,0) pairs every pixel with itself")
    if abs(dy) >= window or abs(dx) >= window:
        raise ValueError(f"offset {offset} does not fit inside a {window}x{window} window")
    h, w = img.shape[1:]
    half = window // 2
    q = quantize_levels(img, levels)
    qp = np.pad(q, half, mode="edge")
    hp, wp = qp.shape

    y0, y1 = max(0, -dy), hp - max(0, dy)
    x0, x1 = max(0, -dx), wp - max(0, dx)
    a = qp[y0:y1, x0:x1]
    b = qp[y0 + dy:y1 + dy, x0 + dx:x1 + dx]
    codes = a * levels + b

    # per-pixel counts of each pair code over a (window-|dy|, window-|dx|)
    # box anchored at the pixel, via integral images
    bh, bw = window - abs(dy), window - abs(dx)
    total = float(bh * bw)
    energy = np.zeros((h, w))
    for code in np.unique(codes):
        ind = (codes == code).astype(np.int64)
        s = np.zeros((ind.shape[0] + 1, ind.shape[1] + 1), dtype=np.int64)
        s[1:, 1:] = ind.cumsum(axis=0).cumsum(axis=1)
        cnt = s[bh:bh + h, bw:bw + w] - s[:h, bw:bw + w] - s[bh:bh + h, :w] + s[:h, :w]
        frac = cnt.astype(np.float64) / total
        energy += frac * frac
    return energy[None]


def lbp_channel(gray) -> np.ndarray:
    """Classic 8-neighbor local binary pattern codes scaled to [0,1].

    Bit n is set when the n-th neighbor (clockwise from top-left, radius 1,
    replicate-padded) is >= the center; the top-left neighbor is the most
    significant bit. Codes in [0,255] are divided by 255.
    """
    img = _as_gray(gray)[0]
    h, w = img.shape
    if h < 3 or w < 3:
        raise ValueError(f"LBP needs at least 3x3 pixels, got {h}x{w}")
    p = np.pad(img, 1, mode="edge")
    code = np.zeros((h, w), dtype=np.int64)
    for n, (dy, dx) in enumerate(_LBP_OFFSETS):
        neighbor = p[1 + dy:1 + dy + h, 1 + dx:1 + dx + w]
        code |= (neighbor >= img).astype(np.int64) << (7 - n)
    return (code.astype(np.float64) / 255.0)[None]


@dataclass
class MultispaceImage:
    """The three derived channels of one grayscale patch, each (1,H,W) in [0,1]."""

    gradient: np.ndarray
    glcm: np.ndarray
    lbp: np.ndarray

    def __post_init__(self):
        shapes = {self.gradient.shape, self.glcm.shape, self.lbp.shape}
        if len(shapes) != 1:
            raise ValueError(f"channel shapes differ: {shapes}")
        for name, chan in (("gradient", self.gradient), ("glcm", self.glcm), ("lbp", self.lbp)):
            if chan.min() < 0.0 or chan.max() > 1.0:
                raise ValueError(f"{name} channel leaves [0,1]")

    @property
    def stacked(self) -> np.ndarray:
        """The channels as one (3,H,W) tensor: gradient, glcm, lbp."""
        return np.concatenate([self.gradient, self.glcm, self.lbp], axis=0)


def multispace_reconstruct(gray, glcm_window: int = 5, glcm_levels: int = 8,
                           glcm_offset=(0, 1)) -> MultispaceImage:
    """Build the 3-channel multispace image of a grayscale patch."""
    img = _as_gray(gray)
    return MultispaceImage(
        gradient=gradient_channel(img),
        glcm=glcm_window_statistic(img, glcm_window, glcm_levels, glcm_offset),
        lbp=lbp_channel(img),
    )
