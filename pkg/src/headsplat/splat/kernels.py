"""Tile rasterization kernels: front-to-back compositing and its adjoint.

All four kernels run tile-parallel. A tile owns its pixels and its slice of
the binned pair list, so no two threads ever write the same element and the
output is bitwise reproducible for any thread count. The per-primitive
reductions (max weight, parameter gradients) happen outside in fixed order.

Compositing follows C = sum_i alpha_i T_i c_i + T bg with T the running
transmittance; a fragment that would push T below 1e-4 is dropped and the
pixel closes. Fragments with alpha < 1/255 are skipped. Alpha is clamped at
0.99, and clamped fragments get zero parameter gradient.
"""

from __future__ import annotations

import math

from numba import njit, prange

ALPHA_MAX = 0.99
ALPHA_MIN = 1.0 / 255.0
T_EPS = 1.0e-4


@njit(cache=True, parallel=True)
def forward_point(
    uv, radius, sigma, rgb, bg, tile_size, tiles_x, tiles_y, starts, ends, prim,
    image, alpha, final_t, last_pair, pair_max,
):
    height, width = image.shape[0], image.shape[1]
    for t in prange(tiles_x * tiles_y):
        ty, tx = divmod(t, tiles_x)
        s0, s1 = starts[t], ends[t]
        for i in range(ty * tile_size, min((ty + 1) * tile_size, height)):
            py = i + 0.5
            for j in range(tx * tile_size, min((tx + 1) * tile_size, width)):
                px = j + 0.5
                trans = 1.0
                last = -1
                for s in range(s0, s1):
                    p = prim[s]
                    dx = px - uv[p, 0]
                    dy = py - uv[p, 1]
                    r = radius[p]
                    k = 1.0 - (dx * dx + dy * dy) / (r * r)
                    a = sigma[p] * k
                    if a > ALPHA_MAX:
                        a = ALPHA_MAX
                    if a < ALPHA_MIN:
                        continue
                    nt = trans * (1.0 - a)
                    if nt < T_EPS:
                        break
                    w = trans * a
                    image[i, j, 0] += w * rgb[p, 0]
                    image[i, j, 1] += w * rgb[p, 1]
                    image[i, j, 2] += w * rgb[p, 2]
                    if w > pair_max[s]:
                        pair_max[s] = w
                    trans = nt
                    last = s
                image[i, j, 0] += trans * bg[0]
                image[i, j, 1] += trans * bg[1]
                image[i, j, 2] += trans * bg[2]
                alpha[i, j] = 1.0 - trans
                final_t[i, j] = trans
                last_pair[i, j] = last


@njit(cache=True, parallel=True)
def forward_gauss(
    uv, conic, sigma, rgb, bg, tile_size, tiles_x, tiles_y, starts, ends, prim,
    image, alpha, final_t, last_pair, pair_max,
):
    height, width = image.shape[0], image.shape[1]
    for t in prange(tiles_x * tiles_y):
        ty, tx = divmod(t, tiles_x)
        s0, s1 = starts[t], ends[t]
        for i in range(ty * tile_size, min((ty + 1) * tile_size, height)):
            py = i + 0.5
            for j in range(tx * tile_size, min((tx + 1) * tile_size, width)):
                px = j + 0.5
                trans = 1.0
                last = -1
                for s in range(s0, s1):
                    p = prim[s]
                    dx = px - uv[p, 0]
                    dy = py - uv[p, 1]
                    q = conic[p, 0] * dx * dx + 2.0 * conic[p, 1] * dx * dy + conic[p, 2] * dy * dy
                    if q < 0.0:
                        continue
                    a = sigma[p] * math.exp(-0.5 * q)
                    if a > ALPHA_MAX:
                        a = ALPHA_MAX
                    if a < ALPHA_MIN:
                        continue
                    nt = trans * (1.0 - a)
                    if nt < T_EPS:
                        break
                    w = trans * a
                    image[i, j, 0] += w * rgb[p, 0]
                    image[i, j, 1] += w * rgb[p, 1]
                    image[i, j, 2] += w * rgb[p, 2]
                    if w > pair_max[s]:
                        pair_max[s] = w
                    trans = nt
                    last = s
                image[i, j, 0] += trans * bg[0]
                image[i, j, 1] += trans * bg[1]
                image[i, j, 2] += trans * bg[2]
                alpha[i, j] = 1.0 - trans
                final_t[i, j] = trans
                last_pair[i, j] = last


@njit(cache=True, parallel=True)
def backward_point(
    uv, radius, sigma, rgb, bg, tile_size, tiles_x, tiles_y, starts, ends, prim,
    final_t, last_pair, grad_image, grad_alpha,
    pair_guv, pair_grad_radius, pair_gsigma, pair_grgb,
):
    height, width = grad_image.shape[0], grad_image.shape[1]
    for t in prange(tiles_x * tiles_y):
        ty, tx = divmod(t, tiles_x)
        s0 = starts[t]
        for i in range(ty * tile_size, min((ty + 1) * tile_size, height)):
            py = i + 0.5
            for j in range(tx * tile_size, min((tx + 1) * tile_size, width)):
                last = last_pair[i, j]
                if last < 0:
                    continue
                px = j + 0.5
                tfin = final_t[i, j]
                trans = tfin
                acc0 = tfin * bg[0]
                acc1 = tfin * bg[1]
                acc2 = tfin * bg[2]
                g0 = grad_image[i, j, 0]
                g1 = grad_image[i, j, 1]
                g2 = grad_image[i, j, 2]
                ga_pix = grad_alpha[i, j]
                for s in range(last, s0 - 1, -1):
                    p = prim[s]
                    dx = px - uv[p, 0]
                    dy = py - uv[p, 1]
                    r = radius[p]
                    d2 = dx * dx + dy * dy
                    k = 1.0 - d2 / (r * r)
                    raw = sigma[p] * k
                    a = raw
                    if a > ALPHA_MAX:
                        a = ALPHA_MAX
                    if a < ALPHA_MIN:
                        continue
                    t_i = trans / (1.0 - a)
                    w = a * t_i
                    pair_grgb[s, 0] += g0 * w
                    pair_grgb[s, 1] += g1 * w
                    pair_grgb[s, 2] += g2 * w
                    da = (
                        g0 * (t_i * rgb[p, 0] - acc0 / (1.0 - a))
                        + g1 * (t_i * rgb[p, 1] - acc1 / (1.0 - a))
                        + g2 * (t_i * rgb[p, 2] - acc2 / (1.0 - a))
                        + ga_pix * tfin / (1.0 - a)
                    )
                    if raw < ALPHA_MAX:
                        pair_gsigma[s] += da * k
                        dk = da * sigma[p]
                        dd2 = -dk / (r * r)
                        pair_guv[s, 0] += dd2 * (-2.0 * dx)
                        pair_guv[s, 1] += dd2 * (-2.0 * dy)
                        pair_grad_radius[s] += dk * 2.0 * d2 / (r * r * r)
                    acc0 += w * rgb[p, 0]
                    acc1 += w * rgb[p, 1]
                    acc2 += w * rgb[p, 2]
                    trans = t_i


@njit(cache=True, parallel=True)
def backward_gauss(
    uv, conic, sigma, rgb, bg, tile_size, tiles_x, tiles_y, starts, ends, prim,
    final_t, last_pair, grad_image, grad_alpha,
    pair_guv, pair_gconic, pair_gsigma, pair_grgb,
):
    height, width = grad_image.shape[0], grad_image.shape[1]
    for t in prange(tiles_x * tiles_y):
        ty, tx = divmod(t, tiles_x)
        s0 = starts[t]
        for i in range(ty * tile_size, min((ty + 1) * tile_size, height)):
            py = i + 0.5
            for j in range(tx * tile_size, min((tx + 1) * tile_size, width)):
                last = last_pair[i, j]
                if last < 0:
                    continue
                px = j + 0.5
                tfin = final_t[i, j]
                trans = tfin
                acc0 = tfin * bg[0]
                acc1 = tfin * bg[1]
                acc2 = tfin * bg[2]
                g0 = grad_image[i, j, 0]
                g1 = grad_image[i, j, 1]
                g2 = grad_image[i, j, 2]
                ga_pix = grad_alpha[i, j]
                for s in range(last, s0 - 1, -1):
                    p = prim[s]
                    dx = px - uv[p, 0]
                    dy = py - uv[p, 1]
                    ca = conic[p, 0]
                    cb = conic[p, 1]
                    cc = conic[p, 2]
                    q = ca * dx * dx + 2.0 * cb * dx * dy + cc * dy * dy
                    if q < 0.0:
                        continue
                    e = math.exp(-0.5 * q)
                    raw = sigma[p] * e
                    a = raw
                    if a > ALPHA_MAX:
                        a = ALPHA_MAX
                    if a < ALPHA_MIN:
                        continue
                    t_i = trans / (1.0 - a)
                    w = a * t_i
                    pair_grgb[s, 0] += g0 * w
                    pair_grgb[s, 1] += g1 * w
                    pair_grgb[s, 2] += g2 * w
                    da = (
                        g0 * (t_i * rgb[p, 0] - acc0 / (1.0 - a))
                        + g1 * (t_i * rgb[p, 1] - acc1 / (1.0 - a))
                        + g2 * (t_i * rgb[p, 2] - acc2 / (1.0 - a))
                        + ga_pix * tfin / (1.0 - a)
                    )
                    if raw < ALPHA_MAX:
                        pair_gsigma[s] += da * e
                        dq = -0.5 * da * raw
                        pair_guv[s, 0] += dq * (-(2.0 * ca * dx + 2.0 * cb * dy))
                        pair_guv[s, 1] += dq * (-(2.0 * cc * dy + 2.0 * cb * dx))
                        pair_gconic[s, 0] += dq * dx * dx
                        pair_gconic[s, 1] += dq * 2.0 * dx * dy
                        pair_gconic[s, 2] += dq * dy * dy
                    acc0 += w * rgb[p, 0]
                    acc1 += w * rgb[p, 1]
                    acc2 += w * rgb[p, 2]
                    trans = t_i
