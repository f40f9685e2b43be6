"""Compiled inner loops for convolution and max pooling.

All kernels are single-threaded and use a fixed iteration order, so results
are bitwise reproducible run to run. Arrays are channels-first; convolution
inputs arrive zero-padded by one voxel per spatial/temporal axis (kernel
size is fixed at 3, stride 1, "same" output dims).

The weight-gradient kernels carry limited fastmath flags ('reassoc',
'contract') so LLVM may vectorize their row reductions; the reduction
order is still frozen at compile time, preserving reproducibility.
"""
from __future__ import annotations

import numpy as np
from numba import njit

_WG_FASTMATH = {"reassoc", "contract"}


@njit(cache=True)
def conv3d_fwd(xp, w, b, y):
    # xp: (N, Ci, T+2, H+2, W+2), w: (Co, Ci, 3, 3, 3), y: (N, Co, T, H, W)
    N, Co, T, H, W = y.shape
    Ci = xp.shape[1]
    for n in range(N):
        for co in range(Co):
            for t in range(T):
                for h in range(H):
                    out = y[n, co, t, h]
                    bias = b[co]
                    for wi in range(W):
                        out[wi] = bias
                    for ci in range(Ci):
                        for dt in range(3):
                            for dh in range(3):
                                row = xp[n, ci, t + dt, h + dh]
                                w0 = w[co, ci, dt, dh, 0]
                                w1 = w[co, ci, dt, dh, 1]
                                w2 = w[co, ci, dt, dh, 2]
                                for wi in range(W):
                                    out[wi] += w0 * row[wi] + w1 * row[wi + 1] + w2 * row[wi + 2]


@njit(cache=True, fastmath=_WG_FASTMATH)
def conv3d_wgrad(xp, dy, dw, db):
    # dw: (Co, Ci, 3, 3, 3), db: (Co,); both zero-initialized by the caller.
    N, Co, T, H, W = dy.shape
    Ci = xp.shape[1]
    for n in range(N):
        for co in range(Co):
            bsum = 0.0
            for t in range(T):
                for h in range(H):
                    drow = dy[n, co, t, h]
                    for wi in range(W):
                        bsum += drow[wi]
            db[co] += bsum
            for ci in range(Ci):
                for dt in range(3):
                    for dh in range(3):
                        a0 = 0.0
                        a1 = 0.0
                        a2 = 0.0
                        for t in range(T):
                            for h in range(H):
                                row = xp[n, ci, t + dt, h + dh]
                                drow = dy[n, co, t, h]
                                for wi in range(W):
                                    d = drow[wi]
                                    a0 += row[wi] * d
                                    a1 += row[wi + 1] * d
                                    a2 += row[wi + 2] * d
                        dw[co, ci, dt, dh, 0] += a0
                        dw[co, ci, dt, dh, 1] += a1
                        dw[co, ci, dt, dh, 2] += a2


@njit(cache=True, fastmath=_WG_FASTMATH)
def conv3d_wgrad_wide(xp, dy, dw, db):
    # large-plane variant: W-wide same-dtype accumulators keep the inner
    # loop data-parallel (full-width SIMD, no scalar reduction chain)
    N, Co, T, H, W = dy.shape
    Ci = xp.shape[1]
    acc0 = np.empty(W, dtype=xp.dtype)
    acc1 = np.empty(W, dtype=xp.dtype)
    acc2 = np.empty(W, dtype=xp.dtype)
    zero = xp.dtype.type(0.0)
    for n in range(N):
        for co in range(Co):
            bsum = 0.0
            for t in range(T):
                for h in range(H):
                    drow = dy[n, co, t, h]
                    for wi in range(W):
                        bsum += drow[wi]
            db[co] += bsum
            for ci in range(Ci):
                for dt in range(3):
                    for dh in range(3):
                        for wi in range(W):
                            acc0[wi] = zero
                            acc1[wi] = zero
                            acc2[wi] = zero
                        for t in range(T):
                            for h in range(H):
                                row = xp[n, ci, t + dt, h + dh]
                                drow = dy[n, co, t, h]
                                for wi in range(W):
                                    d = drow[wi]
                                    acc0[wi] += row[wi] * d
                                    acc1[wi] += row[wi + 1] * d
                                    acc2[wi] += row[wi + 2] * d
                        s0 = 0.0
                        s1 = 0.0
                        s2 = 0.0
                        for wi in range(W):
                            s0 += acc0[wi]
                            s1 += acc1[wi]
                            s2 += acc2[wi]
                        dw[co, ci, dt, dh, 0] += s0
                        dw[co, ci, dt, dh, 1] += s1
                        dw[co, ci, dt, dh, 2] += s2


@njit(cache=True)
def conv2d_fwd(xp, w, b, y):
    # xp: (N, Ci, H+2, W+2), w: (Co, Ci, 3, 3), y: (N, Co, H, W)
    N, Co, H, W = y.shape
    Ci = xp.shape[1]
    for n in range(N):
        for co in range(Co):
            for h in range(H):
                out = y[n, co, h]
                bias = b[co]
                for wi in range(W):
                    out[wi] = bias
                for ci in range(Ci):
                    for dh in range(3):
                        row = xp[n, ci, h + dh]
                        w0 = w[co, ci, dh, 0]
                        w1 = w[co, ci, dh, 1]
                        w2 = w[co, ci, dh, 2]
                        for wi in range(W):
                            out[wi] += w0 * row[wi] + w1 * row[wi + 1] + w2 * row[wi + 2]


@njit(cache=True, fastmath=_WG_FASTMATH)
def conv2d_wgrad(xp, dy, dw, db):
    N, Co, H, W = dy.shape
    Ci = xp.shape[1]
    for n in range(N):
        for co in range(Co):
            bsum = 0.0
            for h in range(H):
                drow = dy[n, co, h]
                for wi in range(W):
                    bsum += drow[wi]
            db[co] += bsum
            for ci in range(Ci):
                for dh in range(3):
                    a0 = 0.0
                    a1 = 0.0
                    a2 = 0.0
                    for h in range(H):
                        row = xp[n, ci, h + dh]
                        drow = dy[n, co, h]
                        for wi in range(W):
                            d = drow[wi]
                            a0 += row[wi] * d
                            a1 += row[wi + 1] * d
                            a2 += row[wi + 2] * d
                    dw[co, ci, dh, 0] += a0
                    dw[co, ci, dh, 1] += a1
                    dw[co, ci, dh, 2] += a2


@njit(cache=True, fastmath=_WG_FASTMATH)
def bn_reduce(x3, out_sum, out_sumsq):
    # x3: (N, C, M) contiguous view; per-channel sum and sum of squares
    N, C, M = x3.shape
    for c in range(C):
        s = 0.0
        sq = 0.0
        for n in range(N):
            row = x3[n, c]
            for i in range(M):
                v = row[i]
                s += v
                sq += v * v
        out_sum[c] = s
        out_sumsq[c] = sq


@njit(cache=True)
def bn_normalize(x3, mean, inv_std, gamma, beta, y3, xhat3):
    N, C, M = x3.shape
    for n in range(N):
        for c in range(C):
            mu = mean[c]
            inv = inv_std[c]
            g = gamma[c]
            b = beta[c]
            xrow = x3[n, c]
            yrow = y3[n, c]
            hrow = xhat3[n, c]
            for i in range(M):
                h = (xrow[i] - mu) * inv
                hrow[i] = h
                yrow[i] = g * h + b


@njit(cache=True, fastmath=_WG_FASTMATH)
def bn_backward_reduce(dy3, xhat3, dgamma, dbeta):
    N, C, M = dy3.shape
    for c in range(C):
        dg = 0.0
        db = 0.0
        for n in range(N):
            drow = dy3[n, c]
            hrow = xhat3[n, c]
            for i in range(M):
                d = drow[i]
                dg += d * hrow[i]
                db += d
        dgamma[c] = dg
        dbeta[c] = db


@njit(cache=True)
def bn_backward_dx(dy3, xhat3, scale, dbeta_m, dgamma_m, dx3):
    # dx = scale[c] * (dy - dbeta/m - xhat * dgamma/m); scale = gamma*inv_std
    N, C, M = dy3.shape
    for n in range(N):
        for c in range(C):
            s = scale[c]
            bm = dbeta_m[c]
            gm = dgamma_m[c]
            drow = dy3[n, c]
            hrow = xhat3[n, c]
            orow = dx3[n, c]
            for i in range(M):
                orow[i] = s * (drow[i] - bm - hrow[i] * gm)


@njit(cache=True)
def maxpool3d_fwd(x, y, idx):
    # x: (N, C, T, H, W); y/idx: (N, C, To, Ho, Wo); window 3, stride 3.
    N, C, To, Ho, Wo = y.shape
    T, H, W = x.shape[2], x.shape[3], x.shape[4]
    for n in range(N):
        for c in range(C):
            for ot in range(To):
                for oh in range(Ho):
                    for ow in range(Wo):
                        best = x[n, c, ot * 3, oh * 3, ow * 3]
                        bi = (ot * 3) * H * W + (oh * 3) * W + ow * 3
                        for dt in range(3):
                            t = ot * 3 + dt
                            for dh in range(3):
                                h = oh * 3 + dh
                                for dw in range(3):
                                    wq = ow * 3 + dw
                                    v = x[n, c, t, h, wq]
                                    if v > best:
                                        best = v
                                        bi = t * H * W + h * W + wq
                        y[n, c, ot, oh, ow] = best
                        idx[n, c, ot, oh, ow] = bi


@njit(cache=True)
def maxpool3d_bwd(dy, idx, dx_flat):
    # dx_flat: (N, C, T*H*W) zero-initialized by the caller.
    N, C, To, Ho, Wo = dy.shape
    for n in range(N):
        for c in range(C):
            for ot in range(To):
                for oh in range(Ho):
                    for ow in range(Wo):
                        dx_flat[n, c, idx[n, c, ot, oh, ow]] += dy[n, c, ot, oh, ow]


@njit(cache=True)
def maxpool2d_fwd(x, y, idx):
    # x: (N, C, H, W); y/idx: (N, C, Ho, Wo); window 3, stride 3.
    N, C, Ho, Wo = y.shape
    H, W = x.shape[2], x.shape[3]
    for n in range(N):
        for c in range(C):
            for oh in range(Ho):
                for ow in range(Wo):
                    best = x[n, c, oh * 3, ow * 3]
                    bi = (oh * 3) * W + ow * 3
                    for dh in range(3):
                        h = oh * 3 + dh
                        for dw in range(3):
                            wq = ow * 3 + dw
                            v = x[n, c, h, wq]
                            if v > best:
                                best = v
                                bi = h * W + wq
                    y[n, c, oh, ow] = best
                    idx[n, c, oh, ow] = bi


@njit(cache=True)
def maxpool2d_bwd(dy, idx, dx_flat):
    N, C, Ho, Wo = dy.shape
    for n in range(N):
        for c in range(C):
            for oh in range(Ho):
                for ow in range(Wo):
                    dx_flat[n, c, idx[n, c, oh, ow]] += dy[n, c, oh, ow]
