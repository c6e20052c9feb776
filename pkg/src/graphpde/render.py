"""Nearest-node heatmaps written as binary PPM (P6) images.

Colormap: piecewise-linear through five anchors sampled from viridis,

    0.00 (68, 1, 84)   0.25 (59, 82, 139)   0.50 (33, 145, 140)
    0.75 (94, 201, 98) 1.00 (253, 231, 37)

Values are mapped to ``[0, 1]`` with ``(v - lo) / (hi - lo)`` and clipped;
when ``hi == lo`` every pixel takes the 0.00 color.
"""

import numpy as np
from scipy.spatial import cKDTree

CANVAS = 256
ANCHORS = np.array([0.0, 0.25, 0.5, 0.75, 1.0])
COLORS = np.array([[68, 1, 84], [59, 82, 139], [33, 145, 140], [94, 201, 98], [253, 231, 37]],
                  dtype=np.float64)


def colormap(unit):
    """RGB bytes for values in ``[0, 1]``; output shape ``unit.shape + (3,)``."""
    u = np.clip(np.asarray(unit, dtype=np.float64), 0.0, 1.0)
    rgb = np.stack([np.interp(u, ANCHORS, COLORS[:, c]) for c in range(3)], axis=-1)
    return np.rint(rgb).astype(np.uint8)


def pixel_owner(coords, domain, size=CANVAS):
    """Index of the nearest node for each pixel center; row 0 is the top edge."""
    x_lo, y_lo, x_hi, y_hi = domain
    centers = (np.arange(size) + 0.5) / size
    px = x_lo + (x_hi - x_lo) * centers
    py = y_hi - (y_hi - y_lo) * centers
    gx, gy = np.meshgrid(px, py)
    _, idx = cKDTree(coords).query(np.stack([gx.ravel(), gy.ravel()], axis=1))
    return idx.reshape(size, size)


def heatmap(values, owner, lo, hi):
    v = np.asarray(values, dtype=np.float64)[owner]
    unit = np.zeros_like(v) if hi <= lo else (v - lo) / (hi - lo)
    return colormap(unit)


def ppm_bytes(rgb):
    h, w, _ = rgb.shape
    return f"P6\n{w} {h}\n255\n".encode("ascii") + np.ascontiguousarray(rgb, dtype=np.uint8).tobytes()


def read_ppm(data):
    """Inverse of :func:`ppm_bytes` for the files written here."""
    magic, dims, maxval, rest = data.split(b"\n", 3)
    if magic != b"P6" or maxval != b"255":
        raise ValueError("not a binary 8-bit PPM")
    w, h = (int(s) for s in dims.split())
    return np.frombuffer(rest, dtype=np.uint8).reshape(h, w, 3)
