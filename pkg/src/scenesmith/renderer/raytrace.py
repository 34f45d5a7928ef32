"""Per-pixel kernels: primary rays, Lambertian shading with shadow rays, solo hit counting."""
from __future__ import annotations

import math

import numba as nb
import numpy as np

from .bvh import JIT, STACK_SIZE, trace

MAT_FLAT = 0
MAT_TEXTURE = 1
ADDR_CLAMP = 0
ADDR_REPEAT = 1
LIGHT_DIRECTIONAL = 0
LIGHT_POINT = 1


@nb.njit(**JIT)
def _texel(tex_data, off, w, h, mode, x, y, c):
    if mode == ADDR_REPEAT:
        x = x % w
        y = y % h
    else:
        x = min(max(x, 0), w - 1)
        y = min(max(y, 0), h - 1)
    return tex_data[off + y * w + x, c]


@nb.njit(**JIT)
def _albedo(mat, tri_uv, t, b1, b2, mat_kind, mat_color, mat_tex, tex_data, tex_off, tex_w, tex_h, tex_mode, out):
    if mat_kind[mat] == MAT_FLAT:
        for c in range(3):
            out[c] = mat_color[mat, c]
        return
    k = mat_tex[mat]
    b0 = 1.0 - b1 - b2
    u = b0 * tri_uv[t, 0, 0] + b1 * tri_uv[t, 1, 0] + b2 * tri_uv[t, 2, 0]
    v = b0 * tri_uv[t, 0, 1] + b1 * tri_uv[t, 1, 1] + b2 * tri_uv[t, 2, 1]
    w = tex_w[k]
    h = tex_h[k]
    mode = tex_mode[k]
    x = u * w - 0.5
    y = v * h - 0.5
    if mode == ADDR_CLAMP:
        x = min(max(x, 0.0), w - 1.0)
        y = min(max(y, 0.0), h - 1.0)
    x0 = math.floor(x)
    y0 = math.floor(y)
    fx = x - x0
    fy = y - y0
    ix = np.int64(x0)
    iy = np.int64(y0)
    off = tex_off[k]
    for c in range(3):
        a = _texel(tex_data, off, w, h, mode, ix, iy, c) * (1.0 - fx) + _texel(tex_data, off, w, h, mode, ix + 1, iy, c) * fx
        b = _texel(tex_data, off, w, h, mode, ix, iy + 1, c) * (1.0 - fx) + _texel(tex_data, off, w, h, mode, ix + 1, iy + 1, c) * fx
        out[c] = (a * (1.0 - fy) + b * fy) / 255.0


@nb.njit(**JIT)
def _shade(bvh_bmin, bvh_bmax, bvh_left, bvh_right, bvh_start, bvh_count, bvh_order, v0, e1, e2, stack,
           tri_uv, tri_mat, mat_kind, mat_color, mat_tex, tex_data, tex_off, tex_w, tex_h, tex_mode,
           light_kind, light_vec, light_lum, ambient, shadows,
           t, dist, b1, b2, ox, oy, oz, dx, dy, dz, albedo, out):
    _albedo(tri_mat[t], tri_uv, t, b1, b2, mat_kind, mat_color, mat_tex, tex_data, tex_off, tex_w, tex_h,
            tex_mode, albedo)
    nx = e1[t, 1] * e2[t, 2] - e1[t, 2] * e2[t, 1]
    ny = e1[t, 2] * e2[t, 0] - e1[t, 0] * e2[t, 2]
    nz = e1[t, 0] * e2[t, 1] - e1[t, 1] * e2[t, 0]
    nn = math.sqrt(nx * nx + ny * ny + nz * nz)
    nx /= nn
    ny /= nn
    nz /= nn
    if nx * dx + ny * dy + nz * dz > 0.0:
        nx = -nx
        ny = -ny
        nz = -nz
    px = ox + dist * dx
    py = oy + dist * dy
    pz = oz + dist * dz
    eps = 1e-6 * max(1.0, dist)
    sx = px + eps * nx
    sy = py + eps * ny
    sz = pz + eps * nz
    light = ambient
    for i in range(light_kind.shape[0]):
        if light_kind[i] == LIGHT_DIRECTIONAL:
            lx = light_vec[i, 0]
            ly = light_vec[i, 1]
            lz = light_vec[i, 2]
            lmax = np.inf
        else:
            lx = light_vec[i, 0] - px
            ly = light_vec[i, 1] - py
            lz = light_vec[i, 2] - pz
            lmax = math.sqrt(lx * lx + ly * ly + lz * lz)
            lx /= lmax
            ly /= lmax
            lz /= lmax
        ndl = nx * lx + ny * ly + nz * lz
        if ndl <= 0.0:
            continue
        if shadows:
            hit, _, _, _ = trace(bvh_bmin, bvh_bmax, bvh_left, bvh_right, bvh_start, bvh_count, bvh_order,
                                 v0, e1, e2, stack, sx, sy, sz, lx, ly, lz, 0.0, lmax, True)
            if hit >= 0:
                continue
        light += light_lum[i] * ndl
    for c in range(3):
        out[c] = albedo[c] * light


@nb.njit(parallel=True, **JIT)
def render_kernel(bvh_bmin, bvh_bmax, bvh_left, bvh_right, bvh_start, bvh_count, bvh_order, v0, e1, e2,
                  tri_uv, tri_mat, tri_inst, mat_kind, mat_color, mat_tex, tex_data, tex_off, tex_w, tex_h, tex_mode,
                  light_kind, light_vec, light_lum, ambient, shadows,
                  rot, center, fx, fy, cx, cy, spp_n, contrast, brightness,
                  rgb, inst, depth):
    height, width = inst.shape
    ox = center[0]
    oy = center[1]
    oz = center[2]
    for row in nb.prange(height):
        stack = np.empty(STACK_SIZE, np.int32)
        albedo = np.empty(3)
        col_rgb = np.empty(3)
        acc = np.empty(3)
        for col in range(width):
            for c in range(3):
                acc[c] = 0.0
            for s in range(spp_n * spp_n + (1 if spp_n > 1 else 0)):
                if s == spp_n * spp_n or spp_n == 1:
                    u = col + 0.5
                    v = row + 0.5
                    center_ray = True
                else:
                    u = col + (s % spp_n + 0.5) / spp_n
                    v = row + (s // spp_n + 0.5) / spp_n
                    center_ray = False
                cxr = (u - cx) / fx
                cyr = (v - cy) / fy
                dx = rot[0, 0] * cxr + rot[1, 0] * cyr + rot[2, 0]
                dy = rot[0, 1] * cxr + rot[1, 1] * cyr + rot[2, 1]
                dz = rot[0, 2] * cxr + rot[1, 2] * cyr + rot[2, 2]
                nrm = math.sqrt(dx * dx + dy * dy + dz * dz)
                dx /= nrm
                dy /= nrm
                dz /= nrm
                t, dist, b1, b2 = trace(bvh_bmin, bvh_bmax, bvh_left, bvh_right, bvh_start, bvh_count, bvh_order,
                                        v0, e1, e2, stack, ox, oy, oz, dx, dy, dz, 0.0, np.inf, False)
                if center_ray:
                    if t >= 0:
                        inst[row, col] = tri_inst[t]
                        depth[row, col] = dist
                    else:
                        inst[row, col] = 0
                        depth[row, col] = np.inf
                    if spp_n > 1:
                        continue
                if t >= 0:
                    _shade(bvh_bmin, bvh_bmax, bvh_left, bvh_right, bvh_start, bvh_count, bvh_order, v0, e1, e2,
                           stack, tri_uv, tri_mat, mat_kind, mat_color, mat_tex, tex_data, tex_off, tex_w, tex_h,
                           tex_mode, light_kind, light_vec, light_lum, ambient, shadows,
                           t, dist, b1, b2, ox, oy, oz, dx, dy, dz, albedo, col_rgb)
                    for c in range(3):
                        acc[c] += col_rgb[c]
            n = spp_n * spp_n
            for c in range(3):
                val = acc[c] / n
                val = (val - 0.5) * contrast + 0.5 + brightness
                val = min(max(val, 0.0), 1.0)
                rgb[row, col, c] = np.uint8(np.rint(val * 255.0))


@nb.njit(parallel=True, **JIT)
def count_hits_kernel(bvh_bmin, bvh_bmax, bvh_left, bvh_right, bvh_start, bvh_count, bvh_order, v0, e1, e2,
                      rot, center, fx, fy, cx, cy, x0, x1, y0, y1):
    """Number of pixel-centre rays in columns [x0, x1) and rows [y0, y1) hitting any triangle."""
    per_row = np.zeros(max(y1 - y0, 0), np.int64)
    ox = center[0]
    oy = center[1]
    oz = center[2]
    for r in nb.prange(y1 - y0):
        row = y0 + r
        stack = np.empty(STACK_SIZE, np.int32)
        n = 0
        for col in range(x0, x1):
            cxr = (col + 0.5 - cx) / fx
            cyr = (row + 0.5 - cy) / fy
            dx = rot[0, 0] * cxr + rot[1, 0] * cyr + rot[2, 0]
            dy = rot[0, 1] * cxr + rot[1, 1] * cyr + rot[2, 1]
            dz = rot[0, 2] * cxr + rot[1, 2] * cyr + rot[2, 2]
            nrm = math.sqrt(dx * dx + dy * dy + dz * dz)
            t, _, _, _ = trace(bvh_bmin, bvh_bmax, bvh_left, bvh_right, bvh_start, bvh_count, bvh_order,
                               v0, e1, e2, stack, ox, oy, oz, dx / nrm, dy / nrm, dz / nrm, 0.0, np.inf, True)
            if t >= 0:
                n += 1
        per_row[r] = n
    return per_row.sum()
