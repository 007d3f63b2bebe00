"""Deterministic synthetic heatmap pairs: fragmented inputs, compact targets.

Each pair consists of a target map x1 (isotropic Gaussian blobs at sampled
centers, peak-normalized) and an input map x0 built by splitting every blob
into displaced sub-blobs and adding band-limited texture noise. Fragment
sub-blobs shrink their width by sqrt(n_fragments) and keep the parent
amplitude, which conserves total mass before noise.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import PlacementFailure
from .fields import ScalarField
from .rng import mix, substream

__all__ = ["SyntheticPairConfig", "gen_pair", "make_corpus"]


@dataclass(frozen=True)
class SyntheticPairConfig:
    width: int = 32
    height: int = 32
    n_targets: int = 1
    blob_sigma: float = 2.4
    n_fragments: int = 2
    fragment_scatter: float = 1.5
    noise_texture_scale: float = 8.0
    noise_amplitude: float = 0.06
    seed: int = 0

    def __post_init__(self):
        if self.width < 4 or self.height < 4:
            raise ValueError("grid must be at least 4x4")
        if self.n_targets not in (1, 2):
            raise ValueError("n_targets must be 1 or 2")
        if self.blob_sigma <= 0 or self.noise_texture_scale <= 0:
            raise ValueError("scales must be positive")
        if self.n_fragments < 1:
            raise ValueError("n_fragments must be at least 1")
        if self.fragment_scatter < 0 or self.noise_amplitude < 0:
            raise ValueError("scatter and noise amplitude must be non-negative")


def _gaussian(w: int, h: int, cx: float, cy: float, sigma: float, amp: float) -> np.ndarray:
    xs = np.arange(w)[None, :]
    ys = np.arange(h)[:, None]
    return amp * np.exp(-((xs - cx) ** 2 + (ys - cy) ** 2) / (2.0 * sigma**2))


def _sample_centers(rng: np.random.Generator, cfg: SyntheticPairConfig) -> list[tuple[float, float]]:
    # 3-sigma margin keeps truncated blob mass below one percent
    margin = 3.0 * cfg.blob_sigma
    lo_x, hi_x = margin, cfg.width - 1 - margin
    lo_y, hi_y = margin, cfg.height - 1 - margin
    min_sep = 4.0 * cfg.blob_sigma
    if hi_x <= lo_x or hi_y <= lo_y:
        raise PlacementFailure("grid too small for the requested blob size")
    for _ in range(1000):
        centers = [
            (rng.uniform(lo_x, hi_x), rng.uniform(lo_y, hi_y)) for _ in range(cfg.n_targets)
        ]
        ok = all(
            np.hypot(a[0] - b[0], a[1] - b[1]) >= min_sep
            for i, a in enumerate(centers)
            for b in centers[i + 1 :]
        )
        if ok:
            return centers
    raise PlacementFailure("could not place targets after 1000 attempts")


def _bilinear_upsample(coarse: np.ndarray, w: int, h: int, scale: float) -> np.ndarray:
    gy = np.arange(h) / scale
    gx = np.arange(w) / scale
    i0 = np.minimum(gy.astype(int), coarse.shape[0] - 1)
    j0 = np.minimum(gx.astype(int), coarse.shape[1] - 1)
    i1 = np.minimum(i0 + 1, coarse.shape[0] - 1)
    j1 = np.minimum(j0 + 1, coarse.shape[1] - 1)
    fy = (gy - i0)[:, None]
    fx = (gx - j0)[None, :]
    top = coarse[np.ix_(i0, j0)] * (1 - fx) + coarse[np.ix_(i0, j1)] * fx
    bot = coarse[np.ix_(i1, j0)] * (1 - fx) + coarse[np.ix_(i1, j1)] * fx
    return top * (1 - fy) + bot * fy


def _texture_noise(rng: np.random.Generator, cfg: SyntheticPairConfig) -> np.ndarray:
    ny = int(np.ceil(cfg.height / cfg.noise_texture_scale)) + 2
    nx = int(np.ceil(cfg.width / cfg.noise_texture_scale)) + 2
    coarse = rng.normal(0.0, 1.0, (ny, nx))
    return cfg.noise_amplitude * _bilinear_upsample(
        coarse, cfg.width, cfg.height, cfg.noise_texture_scale
    )


@dataclass(frozen=True)
class _PairParts:
    x0: ScalarField
    x1: ScalarField
    points: list[tuple[float, float]]
    x0_clean: np.ndarray  # fragment field before noise and clamping


def _gen_parts(cfg: SyntheticPairConfig) -> _PairParts:
    rng = substream(cfg.seed, 0)
    centers = _sample_centers(rng, cfg)

    target = np.zeros((cfg.height, cfg.width))
    for cx, cy in centers:
        target += _gaussian(cfg.width, cfg.height, cx, cy, cfg.blob_sigma, 1.0)
    raw_max = float(target.max())
    target /= raw_max

    # fragments shrink sigma by sqrt(n) and keep the (peak-normalized) parent
    # amplitude, so n fragments carry the parent blob's mass between them
    frag_sigma = cfg.blob_sigma / np.sqrt(cfg.n_fragments)
    frag_amp = 1.0 / raw_max
    frag_margin = 3.0 * frag_sigma
    clean = np.zeros((cfg.height, cfg.width))
    for cx, cy in centers:
        for _ in range(cfg.n_fragments):
            angle = rng.uniform(0.0, 2.0 * np.pi)
            radius = cfg.fragment_scatter * np.sqrt(rng.random())
            fx = np.clip(cx + radius * np.cos(angle), frag_margin, cfg.width - 1 - frag_margin)
            fy = np.clip(cy + radius * np.sin(angle), frag_margin, cfg.height - 1 - frag_margin)
            clean += _gaussian(cfg.width, cfg.height, fx, fy, frag_sigma, frag_amp)
    noise = _texture_noise(rng, cfg) if cfg.noise_amplitude > 0 else 0.0
    x0 = np.clip(clean + noise, 0.0, 1.0)
    return _PairParts(
        x0=ScalarField.from_array(x0),
        x1=ScalarField.from_array(target),
        points=centers,
        x0_clean=clean,
    )


def gen_pair(cfg: SyntheticPairConfig) -> tuple[ScalarField, ScalarField, list[tuple[float, float]]]:
    """Generate one (x0, x1) pair plus the true target centers as (x, y)."""
    parts = _gen_parts(cfg)
    return parts.x0, parts.x1, parts.points


def make_corpus(
    n: int, cfg: SyntheticPairConfig, seed: int
) -> list[tuple[ScalarField, ScalarField, list[tuple[float, float]]]]:
    """Generate n pairs on substreams mix(seed, i); reproducible elementwise."""
    return [gen_pair(replace(cfg, seed=mix(seed, i))) for i in range(n)]
