"""Independent reference implementations used as test oracles.

Everything here is deliberately brute force and shares no code with the
package internals it checks.
"""

from __future__ import annotations

import numpy as np

from affkit.fields import ScalarField


def brute_force_opposite_distance(mask: np.ndarray) -> np.ndarray:
    """O(n^2) nearest-opposite-pixel Euclidean distance."""
    h, w = mask.shape
    ones = np.argwhere(mask == 1)
    zeros = np.argwhere(mask == 0)
    out = np.zeros((h, w))
    for y in range(h):
        for x in range(w):
            targets = zeros if mask[y, x] == 1 else ones
            if targets.size == 0:
                out[y, x] = float(w + h)
            else:
                d = np.sqrt(((targets - (y, x)) ** 2).sum(axis=1))
                out[y, x] = d.min()
    return out


def brute_force_signed_distance(mask: np.ndarray) -> np.ndarray:
    """Positive inside, negative outside, by exhaustive search."""
    dist = brute_force_opposite_distance(mask)
    return np.where(mask == 1, dist, -dist)


def flood_fill_component_count(mask: np.ndarray, connectivity: int) -> int:
    """Count connected 1-regions with an explicit stack-based flood fill."""
    h, w = mask.shape
    seen = np.zeros((h, w), dtype=bool)
    if connectivity == 4:
        steps = [(-1, 0), (1, 0), (0, -1), (0, 1)]
    else:
        steps = [(dy, dx) for dy in (-1, 0, 1) for dx in (-1, 0, 1) if (dy, dx) != (0, 0)]
    count = 0
    for y in range(h):
        for x in range(w):
            if mask[y, x] != 1 or seen[y, x]:
                continue
            count += 1
            stack = [(y, x)]
            seen[y, x] = True
            while stack:
                cy, cx = stack.pop()
                for dy, dx in steps:
                    ny, nx = cy + dy, cx + dx
                    if 0 <= ny < h and 0 <= nx < w and mask[ny, nx] == 1 and not seen[ny, nx]:
                        seen[ny, nx] = True
                        stack.append((ny, nx))
    return count


def central_difference_grad(fn, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central finite differences of a scalar function over a flat array."""
    grad = np.zeros_like(x, dtype=float)
    for i in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp.flat[i] += h
        xm.flat[i] -= h
        grad.flat[i] = (fn(xp) - fn(xm)) / (2.0 * h)
    return grad


def max_relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6) -> float:
    """Elementwise |a - n| / max(|a|, |n|, floor), maximized."""
    a = np.asarray(analytic, dtype=float).ravel()
    n = np.asarray(numeric, dtype=float).ravel()
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float((np.abs(a - n) / denom).max())


def field_of(rng: np.random.Generator, w: int, h: int, lo: float = 0.0, hi: float = 1.0) -> ScalarField:
    return ScalarField.from_array(rng.uniform(lo, hi, (h, w)))
