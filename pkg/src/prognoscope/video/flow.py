"""Dense optical flow by polynomial expansion, coarse to fine.

Each frame is locally modeled as a quadratic f(p) ~ p'Ap + b'p + c fitted
under a Gaussian applicability window (separable correlations solve the
weighted least squares in closed form). For two frames related by a
displacement d, the expansion coefficients satisfy A d = -(b2 - b1)/2;
the per-pixel 2x2 system is averaged over a smoothing window before
solving, and the estimate is refined over an image pyramid with warped
re-sampling at every iteration.

Flow vectors are (row, col) displacements in pixels per frame pair,
oriented so that frame2(p + d(p)) ~ frame1(p).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from ..errors import ConfigError, DataError
from .evid import RawVideo

POLY_N = 5          # expansion window size (odd)
POLY_SIGMA = 1.1    # Gaussian applicability sigma
ITERATIONS = 3      # refinement passes per pyramid level
_SOLVE_REG = 1e-9


@dataclass
class FlowField:
    """(T-1, H, W, 2) displacement vectors, one field per frame pair."""

    vectors: np.ndarray
    fps: float = 30.0

    @property
    def magnitude(self) -> np.ndarray:
        return np.sqrt((self.vectors ** 2).sum(axis=-1))


def _poly_basis(n: int, sigma: float):
    """Inverse normal matrix for the separable quadratic basis."""
    half = n // 2
    i = np.arange(-half, half + 1, dtype=np.float64)
    a = np.exp(-(i ** 2) / (2.0 * sigma ** 2))
    s0 = a.sum()
    s2 = (a * i ** 2).sum()
    s4 = (a * i ** 4).sum()
    # basis order: 1, r, c, r^2, c^2, rc
    g = np.zeros((6, 6))
    g[0, 0] = s0 * s0
    g[0, 3] = g[3, 0] = s2 * s0
    g[0, 4] = g[4, 0] = s2 * s0
    g[1, 1] = s2 * s0
    g[2, 2] = s2 * s0
    g[3, 3] = s4 * s0
    g[4, 4] = s4 * s0
    g[3, 4] = g[4, 3] = s2 * s2
    g[5, 5] = s2 * s2
    g_inv = np.linalg.inv(g)
    kern = {"g": a, "rg": i * a, "r2g": i ** 2 * a}
    return g_inv, kern


def _poly_expand(frame: np.ndarray, n: int = POLY_N, sigma: float = POLY_SIGMA):
    """Per-pixel quadratic coefficients: A (H,W,2,2), b (H,W,2)."""
    g_inv, k = _poly_basis(n, sigma)

    def corr(img, ky, kx):
        out = ndimage.correlate1d(img, ky, axis=0, mode="reflect")
        return ndimage.correlate1d(out, kx, axis=1, mode="reflect")

    m = np.stack([
        corr(frame, k["g"], k["g"]),      # <f>
        corr(frame, k["rg"], k["g"]),     # <r f>
        corr(frame, k["g"], k["rg"]),     # <c f>
        corr(frame, k["r2g"], k["g"]),    # <r^2 f>
        corr(frame, k["g"], k["r2g"]),    # <c^2 f>
        corr(frame, k["rg"], k["rg"]),    # <rc f>
    ], axis=-1)
    r = m @ g_inv.T
    b = r[..., 1:3]
    a = np.empty(frame.shape + (2, 2))
    a[..., 0, 0] = r[..., 3]
    a[..., 1, 1] = r[..., 4]
    a[..., 0, 1] = a[..., 1, 0] = 0.5 * r[..., 5]
    return a, b


def _warp(field: np.ndarray, flow: np.ndarray) -> np.ndarray:
    h, w = field.shape[:2]
    rows, cols = np.meshgrid(np.arange(h, dtype=np.float64),
                             np.arange(w, dtype=np.float64), indexing="ij")
    coords = np.array([rows + flow[..., 0], cols + flow[..., 1]])
    if field.ndim == 2:
        return ndimage.map_coordinates(field, coords, order=1, mode="nearest")
    out = np.empty_like(field)
    flat = field.reshape(h, w, -1)
    oflat = out.reshape(h, w, -1)
    for i in range(flat.shape[2]):
        oflat[..., i] = ndimage.map_coordinates(flat[..., i], coords, order=1, mode="nearest")
    return out


def _flow_step(a1, b1, a2, b2, flow, win: int) -> np.ndarray:
    """One refinement pass: warp frame-2 coefficients by the current flow,
    build the windowed normal equations, solve per pixel."""
    a2w = _warp(a2, flow)
    b2w = _warp(b2, flow)
    a = 0.5 * (a1 + a2w)
    # right-hand side for the TOTAL displacement, not the residual
    db = -0.5 * (b2w - b1) + np.einsum("...ij,...j->...i", a, flow)
    m11 = a[..., 0, 0] ** 2 + a[..., 0, 1] ** 2
    m12 = a[..., 0, 0] * a[..., 1, 0] + a[..., 0, 1] * a[..., 1, 1]
    m22 = a[..., 1, 0] ** 2 + a[..., 1, 1] ** 2
    h1 = a[..., 0, 0] * db[..., 0] + a[..., 0, 1] * db[..., 1]
    h2 = a[..., 1, 0] * db[..., 0] + a[..., 1, 1] * db[..., 1]
    size = (win, win)
    m11 = ndimage.uniform_filter(m11, size=size, mode="reflect")
    m12 = ndimage.uniform_filter(m12, size=size, mode="reflect")
    m22 = ndimage.uniform_filter(m22, size=size, mode="reflect")
    h1 = ndimage.uniform_filter(h1, size=size, mode="reflect")
    h2 = ndimage.uniform_filter(h2, size=size, mode="reflect")
    det = m11 * m22 - m12 * m12
    reg = _SOLVE_REG * (1.0 + m11 + m22)
    det = det + reg
    out = np.empty_like(flow)
    out[..., 0] = (m22 * h1 - m12 * h2) / det
    out[..., 1] = (m11 * h2 - m12 * h1) / det
    return out


def _downscale(img: np.ndarray, scale: float) -> np.ndarray:
    smoothed = ndimage.gaussian_filter(img, sigma=1.0 / scale * 0.5, mode="reflect")
    return ndimage.zoom(smoothed, scale, order=1, mode="nearest", grid_mode=False)


def _pair_flow(f1: np.ndarray, f2: np.ndarray, pyr_scale: float, levels: int,
               win: int, iterations: int) -> np.ndarray:
    min_side = max(win, POLY_N)
    pyramid = [(f1, f2)]
    for _ in range(levels - 1):
        p1, p2 = pyramid[-1]
        if min(p1.shape) * pyr_scale < min_side:
            break
        pyramid.append((_downscale(p1, pyr_scale), _downscale(p2, pyr_scale)))
    flow = np.zeros(pyramid[-1][0].shape + (2,), dtype=np.float64)
    for li in range(len(pyramid) - 1, -1, -1):
        p1, p2 = pyramid[li]
        if flow.shape[:2] != p1.shape:
            factor_r = p1.shape[0] / flow.shape[0]
            factor_c = p1.shape[1] / flow.shape[1]
            up = np.stack([
                ndimage.zoom(flow[..., 0], (factor_r, factor_c), order=1, mode="nearest"),
                ndimage.zoom(flow[..., 1], (factor_r, factor_c), order=1, mode="nearest"),
            ], axis=-1)
            up[..., 0] *= factor_r
            up[..., 1] *= factor_c
            flow = up
        a1, b1 = _poly_expand(p1)
        a2, b2 = _poly_expand(p2)
        for _ in range(iterations):
            flow = _flow_step(a1, b1, a2, b2, flow, win)
    return flow


def farneback_flow(video: RawVideo, pyr_scale: float = 0.5, levels: int = 3,
                   win: int = 5, iterations: int = ITERATIONS) -> FlowField:
    """Dense displacement for every consecutive frame pair of a video."""
    if not 0.0 < pyr_scale < 1.0:
        raise ConfigError("pyramid scale must lie in (0, 1)")
    if levels < 1 or win < 3:
        raise ConfigError("need levels >= 1 and window >= 3")
    frames = video.frames
    if frames.ndim != 3:
        raise DataError("optical flow expects single-channel video")
    t, h, w = frames.shape
    if t < 2:
        raise DataError("optical flow needs at least two frames")
    if min(h, w) < max(win, POLY_N):
        raise DataError(f"frames {h}x{w} are smaller than the {max(win, POLY_N)}-pixel window")
    scaled = frames.astype(np.float64) / 255.0
    out = np.empty((t - 1, h, w, 2), dtype=np.float64)
    for i in range(t - 1):
        out[i] = _pair_flow(scaled[i], scaled[i + 1], pyr_scale, levels, win, iterations)
    return FlowField(vectors=out, fps=video.fps)


def flow_to_color(flow: FlowField) -> RawVideo:
    """Hue encodes direction, brightness encodes magnitude (99th-percentile
    normalized); saturation is maximal."""
    from matplotlib.colors import hsv_to_rgb

    vec = flow.vectors
    mag = flow.magnitude
    p99 = np.percentile(mag, 99.0)
    value = np.clip(mag / p99, 0.0, 1.0) if p99 > 0 else np.zeros_like(mag)
    angle = np.arctan2(vec[..., 0], vec[..., 1])  # (row, col) -> direction
    hue = (angle % (2.0 * np.pi)) / (2.0 * np.pi)
    hsv = np.stack([hue, np.ones_like(hue), value], axis=-1)
    rgb = hsv_to_rgb(hsv)
    frames = np.clip(np.rint(rgb * 255.0), 0, 255).astype(np.uint8)
    return RawVideo(frames=frames, fps=flow.fps, view_tag="",
                    acquisition_id="flow", provenance=("flow_to_color",))
