"""Compiled inner loops for the deterministic gain quadrature.

Both integrands are even in the collision parameter, so callers pass the
upper-hemisphere nodes with doubled weights.  Each target velocity is reduced by one thread in a fixed order (inner sum
over sphere nodes, then a pairwise sum over the w nodes), so results do not
depend on how targets are split across workers.
"""

import math

import numpy as np
from numba import njit

# weight applied to k over the full omega sphere so that the k-representation
# reproduces the (1/p0) B dOmega dq/q0 form of the relativistic gain term
OMEGA_NORMALIZATION = 0.25

KIND_CLASSICAL = 0
KIND_REL_CONSTANT = 1
KIND_REL_MAXWELL = 2


@njit(cache=True, nogil=True, inline="always")
def _interp(dense, x, y, z, lo, inv_h, limit):
    sx = (x - lo) * inv_h + 1.0
    sy = (y - lo) * inv_h + 1.0
    sz = (z - lo) * inv_h + 1.0
    if not (sx >= 0.0 and sy >= 0.0 and sz >= 0.0 and sx < limit and sy < limit and sz < limit):
        return 0.0
    i = int(sx)
    j = int(sy)
    k = int(sz)
    fx = sx - i
    fy = sy - j
    fz = sz - k
    gx = 1.0 - fx
    gy = 1.0 - fy
    gz = 1.0 - fz
    c00 = dense[i, j, k] * gz + dense[i, j, k + 1] * fz
    c01 = dense[i, j + 1, k] * gz + dense[i, j + 1, k + 1] * fz
    c10 = dense[i + 1, j, k] * gz + dense[i + 1, j, k + 1] * fz
    c11 = dense[i + 1, j + 1, k] * gz + dense[i + 1, j + 1, k + 1] * fz
    return (c00 * gy + c01 * fy) * gx + (c10 * gy + c11 * fy) * fx


@njit(cache=True, nogil=True)
def _pairwise_sum(buf, n):
    if n == 0:
        return 0.0
    while n > 1:
        half = n // 2
        for i in range(half):
            buf[i] = buf[2 * i] + buf[2 * i + 1]
        if n % 2:
            buf[half] = buf[n - 1]
            n = half + 1
        else:
            n = half
    return buf[0]


@njit(cache=True, nogil=True)
def classical_gain(targets, wpts, nodes, nweights, dense, lo, inv_h, limit, supp2, scale, out):
    nt = targets.shape[0]
    nw = wpts.shape[0]
    nn = nodes.shape[0]
    rows = np.empty(nw)
    for it in range(nt):
        vx = targets[it, 0]
        vy = targets[it, 1]
        vz = targets[it, 2]
        for iw in range(nw):
            wx = wpts[iw, 0]
            wy = wpts[iw, 1]
            wz = wpts[iw, 2]
            ux = vx - wx
            uy = vy - wy
            uz = vz - wz
            acc = 0.0
            for kk in range(nn):
                nx = nodes[kk, 0]
                ny = nodes[kk, 1]
                nz = nodes[kk, 2]
                # n and -n give the same collision and exactly one of them has
                # t > 0; the doubled hemisphere weight is halved in the caller
                t = nx * ux + ny * uy + nz * uz
                ax = vx - t * nx
                ay = vy - t * ny
                az = vz - t * nz
                if ax * ax + ay * ay + az * az > supp2:
                    continue
                bx = wx + t * nx
                by = wy + t * ny
                bz = wz + t * nz
                if bx * bx + by * by + bz * bz > supp2:
                    continue
                fv = _interp(dense, ax, ay, az, lo, inv_h, limit)
                if fv == 0.0:
                    continue
                fw = _interp(dense, bx, by, bz, lo, inv_h, limit)
                acc += nweights[kk] * abs(t) * fv * fw
            rows[iw] = acc
        out[it] = _pairwise_sum(rows, nw) * scale


@njit(cache=True, nogil=True)
def _angular(theta, table_theta, table_F):
    return np.interp(theta, table_theta, table_F)


@njit(cache=True, nogil=True)
def relativistic_gain(
    targets, qpts, nodes, nweights, dense, lo, inv_h, limit, supp2, scale,
    kind, sigma0, table_theta, table_F, out,
):
    nt = targets.shape[0]
    nq = qpts.shape[0]
    nn = nodes.shape[0]
    rows = np.empty(nq)
    for it in range(nt):
        px = targets[it, 0]
        py = targets[it, 1]
        pz = targets[it, 2]
        p0 = math.sqrt(1.0 + px * px + py * py + pz * pz)
        for iq in range(nq):
            qx = qpts[iq, 0]
            qy = qpts[iq, 1]
            qz = qpts[iq, 2]
            q0 = math.sqrt(1.0 + qx * qx + qy * qy + qz * qz)
            e = p0 + q0
            sx = px + qx
            sy = py + qy
            sz = pz + qz
            s = e * e - (sx * sx + sy * sy + sz * sz)
            dx = qx / q0 - px / p0
            dy = qy / q0 - py / p0
            dz = qz / q0 - pz / p0
            # Minkowski square of p - q (nonpositive)
            mm = (p0 - q0) * (p0 - q0) - ((px - qx) ** 2 + (py - qy) ** 2 + (pz - qz) ** 2)
            acc = 0.0
            if -mm < 1e-28:
                rows[iq] = 0.0
                continue
            g = 0.5 * math.sqrt(-mm)
            for kk in range(nn):
                ox = nodes[kk, 0]
                oy = nodes[kk, 1]
                oz = nodes[kk, 2]
                c = ox * dx + oy * dy + oz * dz
                if c == 0.0:
                    continue
                wp = ox * sx + oy * sy + oz * sz
                den = e * e - wp * wp
                a = 2.0 * e * p0 * q0 * c / den
                ax = px + a * ox
                ay = py + a * oy
                az = pz + a * oz
                if ax * ax + ay * ay + az * az > supp2:
                    continue
                bx = qx - a * ox
                by = qy - a * oy
                bz = qz - a * oz
                if bx * bx + by * by + bz * bz > supp2:
                    continue
                fp = _interp(dense, ax, ay, az, lo, inv_h, limit)
                if fp == 0.0:
                    continue
                fq = _interp(dense, bx, by, bz, lo, inv_h, limit)
                if fq == 0.0:
                    continue
                if kind == KIND_REL_CONSTANT:
                    sigma = sigma0
                else:
                    ap0 = math.sqrt(1.0 + ax * ax + ay * ay + az * az)
                    bq0 = math.sqrt(1.0 + bx * bx + by * by + bz * bz)
                    cross = (p0 - q0) * (ap0 - bq0) - (
                        (px - qx) * (ax - bx) + (py - qy) * (ay - by) + (pz - qz) * (az - bz)
                    )
                    cs = 1.0 - 2.0 * cross / mm
                    if cs > 1.0:
                        cs = 1.0
                    elif cs < -1.0:
                        cs = -1.0
                    sigma = math.sqrt(1.0 + g * g) / g * _angular(math.acos(cs), table_theta, table_F)
                k = 4.0 * s * sigma * e * e * abs(c) / (den * den)
                acc += nweights[kk] * k * fp * fq
            rows[iq] = acc * OMEGA_NORMALIZATION
        out[it] = _pairwise_sum(rows, nq) * scale
