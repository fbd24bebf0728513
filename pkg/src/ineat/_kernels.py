"""Compiled ray-march and interpolation kernels.

Forward projection and gradient scatter walk the identical midpoint
discretization of each ray, which makes the two an exact adjoint pair.
Scatter runs over a fixed NCHUNK-way pixel partition with one private
buffer per chunk, merged outside in chunk order, so results do not depend
on the worker count.

Dense-grid kernels index a zero-padded copy of the volume (one voxel of
padding per face); with sample positions confined to the extent every
stencil lands inside the padded array and the inner loops stay branch-free.

Octree kernels look up the leaf through a flat finest-grid index table.
Stencil corners that fall outside the leaf are fetched from the facing
leaf by clamped trilinear interpolation at the corner's world position;
when both leaves have equal depth that position is exactly the neighbor's
stored lattice point, so sampling is globally continuous (identical to a
dense grid). Across unequal-depth faces the fetch is an extrapolation of
the coarse side and the field may jump; that asymmetry is deliberate and
measured, not hidden.
"""

from __future__ import annotations

import numpy as np
from numba import njit, prange

NCHUNK = 8


@njit(inline="always")
def _tri_gather(pad, ix, iy, iz, fx, fy, fz):
    gx = 1.0 - fx
    gy = 1.0 - fy
    gz = 1.0 - fz
    x0, y0, z0 = ix + 1, iy + 1, iz + 1
    c00 = pad[x0, y0, z0] * gx + pad[x0 + 1, y0, z0] * fx
    c10 = pad[x0, y0 + 1, z0] * gx + pad[x0 + 1, y0 + 1, z0] * fx
    c01 = pad[x0, y0, z0 + 1] * gx + pad[x0 + 1, y0, z0 + 1] * fx
    c11 = pad[x0, y0 + 1, z0 + 1] * gx + pad[x0 + 1, y0 + 1, z0 + 1] * fx
    return (c00 * gy + c10 * fy) * gz + (c01 * gy + c11 * fy) * fz


@njit(inline="always")
def _tri_scatter(pad, ix, iy, iz, fx, fy, fz, w):
    gx = 1.0 - fx
    gy = 1.0 - fy
    gz = 1.0 - fz
    x0, y0, z0 = ix + 1, iy + 1, iz + 1
    pad[x0, y0, z0] += w * gx * gy * gz
    pad[x0 + 1, y0, z0] += w * fx * gy * gz
    pad[x0, y0 + 1, z0] += w * gx * fy * gz
    pad[x0 + 1, y0 + 1, z0] += w * fx * fy * gz
    pad[x0, y0, z0 + 1] += w * gx * gy * fz
    pad[x0 + 1, y0, z0 + 1] += w * fx * gy * fz
    pad[x0, y0 + 1, z0 + 1] += w * gx * fy * fz
    pad[x0 + 1, y0 + 1, z0 + 1] += w * fx * fy * fz


@njit(inline="always")
def _dense_sample(pad, nx, ny, nz, half, inv_vox, px, py, pz):
    if px < -half or px > half or py < -half or py > half or pz < -half or pz > half:
        return 0.0
    gx = (px + half) * inv_vox - 0.5
    gy = (py + half) * inv_vox - 0.5
    gz = (pz + half) * inv_vox - 0.5
    ix = int(np.floor(gx))
    iy = int(np.floor(gy))
    iz = int(np.floor(gz))
    return _tri_gather(pad, ix, iy, iz, gx - ix, gy - iy, gz - iz)


@njit(inline="always")
def _dense_scatter(pad, nx, ny, nz, half, inv_vox, px, py, pz, w):
    if px < -half or px > half or py < -half or py > half or pz < -half or pz > half:
        return
    gx = (px + half) * inv_vox - 0.5
    gy = (py + half) * inv_vox - 0.5
    gz = (pz + half) * inv_vox - 0.5
    ix = int(np.floor(gx))
    iy = int(np.floor(gy))
    iz = int(np.floor(gz))
    _tri_scatter(pad, ix, iy, iz, gx - ix, gy - iy, gz - iz, w)


@njit(parallel=True, cache=True)
def forward_dense(out, pad, nx, ny, nz, half, inv_vox,
                  org, dirs, t0, kcnt, step):
    for p in prange(out.size):
        k = kcnt[p]
        acc = 0.0
        if k > 0:
            t = t0[p] + 0.5 * step
            px = org[p, 0] + t * dirs[p, 0]
            py = org[p, 1] + t * dirs[p, 1]
            pz = org[p, 2] + t * dirs[p, 2]
            sx = dirs[p, 0] * step
            sy = dirs[p, 1] * step
            sz = dirs[p, 2] * step
            for _ in range(k):
                acc += _dense_sample(pad, nx, ny, nz, half, inv_vox, px, py, pz)
                px += sx
                py += sy
                pz += sz
        out[p] = acc * step


@njit(parallel=True, cache=True)
def scatter_dense(chunks, nx, ny, nz, half, inv_vox,
                  org, dirs, t0, kcnt, res, step):
    n = res.size
    for c in prange(NCHUNK):
        pad = chunks[c]
        for p in range(c * n // NCHUNK, (c + 1) * n // NCHUNK):
            k = kcnt[p]
            w = res[p] * step
            if k > 0 and w != 0.0:
                t = t0[p] + 0.5 * step
                px = org[p, 0] + t * dirs[p, 0]
                py = org[p, 1] + t * dirs[p, 1]
                pz = org[p, 2] + t * dirs[p, 2]
                sx = dirs[p, 0] * step
                sy = dirs[p, 1] * step
                sz = dirs[p, 2] * step
                for _ in range(k):
                    _dense_scatter(pad, nx, ny, nz, half, inv_vox, px, py, pz, w)
                    px += sx
                    py += sy
                    pz += sz


@njit(parallel=True, cache=True)
def sample_points_dense(vals, pad, nx, ny, nz, half, inv_vox, pts):
    for q in prange(vals.size):
        vals[q] = _dense_sample(pad, nx, ny, nz, half, inv_vox,
                                pts[q, 0], pts[q, 1], pts[q, 2])


@njit(cache=True)
def scatter_points_dense(pad, nx, ny, nz, half, inv_vox, pts, weights):
    for q in range(weights.size):
        _dense_scatter(pad, nx, ny, nz, half, inv_vox,
                       pts[q, 0], pts[q, 1], pts[q, 2], weights[q])


# ---------------------------------------------------------------------------
# octree


@njit(inline="always")
def _oct_cell(x, half, scale_b, bmax):
    # finest-grid cell along one axis; a point exactly on a shared face
    # belongs to the lower-index cell
    s = (x + half) * scale_b
    c = int(np.floor(s))
    if c == s and c > 0:
        c -= 1
    if c > bmax:
        c = bmax
    return c


@njit(inline="always")
def _leaf_clamped(payload, l, vres, lox, loy, loz, inv_h, px, py, pz):
    # trilinear inside leaf l with the stencil clamped to stored samples
    qx = (px - lox) * inv_h - 0.5
    qy = (py - loy) * inv_h - 0.5
    qz = (pz - loz) * inv_h - 0.5
    if qx < 0.0:
        qx = 0.0
    elif qx > vres - 1.0:
        qx = vres - 1.0
    if qy < 0.0:
        qy = 0.0
    elif qy > vres - 1.0:
        qy = vres - 1.0
    if qz < 0.0:
        qz = 0.0
    elif qz > vres - 1.0:
        qz = vres - 1.0
    jx = int(np.floor(qx))
    jy = int(np.floor(qy))
    jz = int(np.floor(qz))
    if jx > vres - 2:
        jx = vres - 2
    if jy > vres - 2:
        jy = vres - 2
    if jz > vres - 2:
        jz = vres - 2
    fx = qx - jx
    fy = qy - jy
    fz = qz - jz
    gx = 1.0 - fx
    gy = 1.0 - fy
    gz = 1.0 - fz
    c00 = payload[l, jx, jy, jz] * gx + payload[l, jx + 1, jy, jz] * fx
    c10 = payload[l, jx, jy + 1, jz] * gx + payload[l, jx + 1, jy + 1, jz] * fx
    c01 = payload[l, jx, jy, jz + 1] * gx + payload[l, jx + 1, jy, jz + 1] * fx
    c11 = payload[l, jx, jy + 1, jz + 1] * gx + payload[l, jx + 1, jy + 1, jz + 1] * fx
    return (c00 * gy + c10 * fy) * gz + (c01 * gy + c11 * fy) * fz


@njit(inline="always")
def _leaf_clamped_scatter(grad, l, vres, lox, loy, loz, inv_h, px, py, pz, w):
    qx = (px - lox) * inv_h - 0.5
    qy = (py - loy) * inv_h - 0.5
    qz = (pz - loz) * inv_h - 0.5
    if qx < 0.0:
        qx = 0.0
    elif qx > vres - 1.0:
        qx = vres - 1.0
    if qy < 0.0:
        qy = 0.0
    elif qy > vres - 1.0:
        qy = vres - 1.0
    if qz < 0.0:
        qz = 0.0
    elif qz > vres - 1.0:
        qz = vres - 1.0
    jx = int(np.floor(qx))
    jy = int(np.floor(qy))
    jz = int(np.floor(qz))
    if jx > vres - 2:
        jx = vres - 2
    if jy > vres - 2:
        jy = vres - 2
    if jz > vres - 2:
        jz = vres - 2
    fx = qx - jx
    fy = qy - jy
    fz = qz - jz
    gx = 1.0 - fx
    gy = 1.0 - fy
    gz = 1.0 - fz
    grad[l, jx, jy, jz] += w * gx * gy * gz
    grad[l, jx + 1, jy, jz] += w * fx * gy * gz
    grad[l, jx, jy + 1, jz] += w * gx * fy * gz
    grad[l, jx + 1, jy + 1, jz] += w * fx * fy * gz
    grad[l, jx, jy, jz + 1] += w * gx * gy * fz
    grad[l, jx + 1, jy, jz + 1] += w * fx * gy * fz
    grad[l, jx, jy + 1, jz + 1] += w * gx * fy * fz
    grad[l, jx + 1, jy + 1, jz + 1] += w * fx * fy * fz


@njit(inline="always")
def _corner_value(payload, block_of, lo_w, inv_h, vres, half, scale_b, bmax,
                  l, jx, jy, jz, wx, wy, wz):
    # one stencil corner of leaf l; out-of-leaf corners are read from the
    # leaf owning the corner's world position
    if 0 <= jx < vres and 0 <= jy < vres and 0 <= jz < vres:
        return payload[l, jx, jy, jz]
    if wx < -half or wx > half or wy < -half or wy > half or wz < -half or wz > half:
        return 0.0
    cx = _oct_cell(wx, half, scale_b, bmax)
    cy = _oct_cell(wy, half, scale_b, bmax)
    cz = _oct_cell(wz, half, scale_b, bmax)
    l2 = block_of[cx, cy, cz]
    if l2 < 0:
        return 0.0
    return _leaf_clamped(payload, l2, vres,
                         lo_w[l2, 0], lo_w[l2, 1], lo_w[l2, 2], inv_h[l2],
                         wx, wy, wz)


@njit(inline="always")
def _corner_scatter(grad, payload, block_of, lo_w, inv_h, vres, half, scale_b, bmax,
                    l, jx, jy, jz, wx, wy, wz, w):
    if 0 <= jx < vres and 0 <= jy < vres and 0 <= jz < vres:
        grad[l, jx, jy, jz] += w
        return
    if wx < -half or wx > half or wy < -half or wy > half or wz < -half or wz > half:
        return
    cx = _oct_cell(wx, half, scale_b, bmax)
    cy = _oct_cell(wy, half, scale_b, bmax)
    cz = _oct_cell(wz, half, scale_b, bmax)
    l2 = block_of[cx, cy, cz]
    if l2 < 0:
        return
    _leaf_clamped_scatter(grad, l2, vres,
                          lo_w[l2, 0], lo_w[l2, 1], lo_w[l2, 2], inv_h[l2],
                          wx, wy, wz, w)


@njit(inline="always")
def _oct_sample_in_leaf(payload, block_of, lo_w, inv_h, vres, half, scale_b, bmax,
                        l, px, py, pz):
    lox, loy, loz = lo_w[l, 0], lo_w[l, 1], lo_w[l, 2]
    ih = inv_h[l]
    h = 1.0 / ih
    qx = (px - lox) * ih - 0.5
    qy = (py - loy) * ih - 0.5
    qz = (pz - loz) * ih - 0.5
    jx = int(np.floor(qx))
    jy = int(np.floor(qy))
    jz = int(np.floor(qz))
    fx = qx - jx
    fy = qy - jy
    fz = qz - jz
    gx = 1.0 - fx
    gy = 1.0 - fy
    gz = 1.0 - fz
    acc = 0.0
    for dx in range(2):
        wgx = fx if dx == 1 else gx
        if wgx == 0.0:
            continue
        ax = jx + dx
        wx = lox + (ax + 0.5) * h
        for dy in range(2):
            wgy = fy if dy == 1 else gy
            if wgy == 0.0:
                continue
            ay = jy + dy
            wy = loy + (ay + 0.5) * h
            for dz in range(2):
                wgz = fz if dz == 1 else gz
                if wgz == 0.0:
                    continue
                az = jz + dz
                wz = loz + (az + 0.5) * h
                acc += wgx * wgy * wgz * _corner_value(
                    payload, block_of, lo_w, inv_h, vres, half, scale_b, bmax,
                    l, ax, ay, az, wx, wy, wz)
    return acc


@njit(inline="always")
def _oct_sample(payload, block_of, lo_w, inv_h, vres, half, scale_b, bmax,
                px, py, pz):
    if px < -half or px > half or py < -half or py > half or pz < -half or pz > half:
        return 0.0
    cx = _oct_cell(px, half, scale_b, bmax)
    cy = _oct_cell(py, half, scale_b, bmax)
    cz = _oct_cell(pz, half, scale_b, bmax)
    l = block_of[cx, cy, cz]
    if l < 0:
        return 0.0
    return _oct_sample_in_leaf(payload, block_of, lo_w, inv_h, vres, half,
                               scale_b, bmax, l, px, py, pz)


@njit(inline="always")
def _oct_scatter(grad, payload, block_of, lo_w, inv_h, vres, half, scale_b, bmax,
                 px, py, pz, w):
    if px < -half or px > half or py < -half or py > half or pz < -half or pz > half:
        return
    cx = _oct_cell(px, half, scale_b, bmax)
    cy = _oct_cell(py, half, scale_b, bmax)
    cz = _oct_cell(pz, half, scale_b, bmax)
    l = block_of[cx, cy, cz]
    if l < 0:
        return
    lox, loy, loz = lo_w[l, 0], lo_w[l, 1], lo_w[l, 2]
    ih = inv_h[l]
    h = 1.0 / ih
    qx = (px - lox) * ih - 0.5
    qy = (py - loy) * ih - 0.5
    qz = (pz - loz) * ih - 0.5
    jx = int(np.floor(qx))
    jy = int(np.floor(qy))
    jz = int(np.floor(qz))
    fx = qx - jx
    fy = qy - jy
    fz = qz - jz
    gx = 1.0 - fx
    gy = 1.0 - fy
    gz = 1.0 - fz
    for dx in range(2):
        wgx = fx if dx == 1 else gx
        if wgx == 0.0:
            continue
        ax = jx + dx
        wx = lox + (ax + 0.5) * h
        for dy in range(2):
            wgy = fy if dy == 1 else gy
            if wgy == 0.0:
                continue
            ay = jy + dy
            wy = loy + (ay + 0.5) * h
            for dz in range(2):
                wgz = fz if dz == 1 else gz
                if wgz == 0.0:
                    continue
                az = jz + dz
                wz = loz + (az + 0.5) * h
                _corner_scatter(grad, payload, block_of, lo_w, inv_h, vres,
                                half, scale_b, bmax, l, ax, ay, az,
                                wx, wy, wz, w * wgx * wgy * wgz)


@njit(parallel=True, cache=True)
def forward_oct(out, payload, block_of, lo_w, inv_h, vres, half, scale_b, bmax,
                org, dirs, t0, kcnt, step):
    for p in prange(out.size):
        k = kcnt[p]
        acc = 0.0
        if k > 0:
            t = t0[p] + 0.5 * step
            px = org[p, 0] + t * dirs[p, 0]
            py = org[p, 1] + t * dirs[p, 1]
            pz = org[p, 2] + t * dirs[p, 2]
            sx = dirs[p, 0] * step
            sy = dirs[p, 1] * step
            sz = dirs[p, 2] * step
            for _ in range(k):
                acc += _oct_sample(payload, block_of, lo_w, inv_h, vres, half,
                                   scale_b, bmax, px, py, pz)
                px += sx
                py += sy
                pz += sz
        out[p] = acc * step


@njit(parallel=True, cache=True)
def scatter_oct(chunks, payload, block_of, lo_w, inv_h, vres, half, scale_b, bmax,
                org, dirs, t0, kcnt, res, step):
    n = res.size
    for c in prange(NCHUNK):
        grad = chunks[c]
        for p in range(c * n // NCHUNK, (c + 1) * n // NCHUNK):
            k = kcnt[p]
            w = res[p] * step
            if k > 0 and w != 0.0:
                t = t0[p] + 0.5 * step
                px = org[p, 0] + t * dirs[p, 0]
                py = org[p, 1] + t * dirs[p, 1]
                pz = org[p, 2] + t * dirs[p, 2]
                sx = dirs[p, 0] * step
                sy = dirs[p, 1] * step
                sz = dirs[p, 2] * step
                for _ in range(k):
                    _oct_scatter(grad, payload, block_of, lo_w, inv_h, vres,
                                 half, scale_b, bmax, px, py, pz, w)
                    px += sx
                    py += sy
                    pz += sz


@njit(parallel=True, cache=True)
def sample_points_oct(vals, payload, block_of, lo_w, inv_h, vres, half, scale_b,
                      bmax, pts):
    for q in prange(vals.size):
        vals[q] = _oct_sample(payload, block_of, lo_w, inv_h, vres, half,
                              scale_b, bmax, pts[q, 0], pts[q, 1], pts[q, 2])


@njit(cache=True)
def scatter_points_oct(grad, payload, block_of, lo_w, inv_h, vres, half, scale_b,
                       bmax, pts, weights):
    for q in range(weights.size):
        _oct_scatter(grad, payload, block_of, lo_w, inv_h, vres, half, scale_b,
                     bmax, pts[q, 0], pts[q, 1], pts[q, 2], weights[q])


@njit(cache=True)
def sample_in_leaf_oct(vals, payload, block_of, lo_w, inv_h, vres, half, scale_b,
                       bmax, leaf_ids, pts):
    # one-sided interpolant of a chosen leaf, bypassing point ownership;
    # used to measure cross-face continuity
    for q in range(vals.size):
        vals[q] = _oct_sample_in_leaf(payload, block_of, lo_w, inv_h, vres, half,
                                      scale_b, bmax, leaf_ids[q],
                                      pts[q, 0], pts[q, 1], pts[q, 2])
