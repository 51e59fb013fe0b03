# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels.

Scalar mirrors of ``amtamper._kernels._pure``: same formulas, same evaluation
order, compiled with FP contraction disabled, so outputs are bit-identical to
the numpy backend.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport ceil, fabs, floor, sqrt

cnp.import_array()

cdef double T_EPS = 1e-9
cdef double BARY_EPS = 1e-9
cdef double DET_EPS = 1e-12


def ray_crossings(const double[:, ::1] vertices, const int[:, ::1] facets,
                  const double[:, ::1] origins, const double[::1] direction):
    cdef Py_ssize_t m = origins.shape[0]
    cdef Py_ssize_t nf = facets.shape[0]
    counts_arr = np.zeros(m, dtype=np.int64)
    suspect_arr = np.zeros(m, dtype=np.uint8)
    cdef cnp.int64_t[::1] counts = counts_arr
    cdef cnp.uint8_t[::1] suspect = suspect_arr
    if nf == 0 or m == 0:
        return counts_arr, suspect_arr

    cdef double dx = direction[0], dy = direction[1], dz = direction[2]
    cdef Py_ssize_t f, i
    cdef int ia, ib, ic
    cdef double ax, ay, az, e1x, e1y, e1z, e2x, e2y, e2z
    cdef double px, py, pz, det, nx, ny, nz, nscale, inv_det
    cdef double tx, ty, tz, u, qx, qy, qz, v, t
    cdef bint strict, loose

    with nogil:
        for f in range(nf):
            ia = facets[f, 0]
            ib = facets[f, 1]
            ic = facets[f, 2]
            ax = vertices[ia, 0]
            ay = vertices[ia, 1]
            az = vertices[ia, 2]
            e1x = vertices[ib, 0] - ax
            e1y = vertices[ib, 1] - ay
            e1z = vertices[ib, 2] - az
            e2x = vertices[ic, 0] - ax
            e2y = vertices[ic, 1] - ay
            e2z = vertices[ic, 2] - az

            px = dy * e2z - dz * e2y
            py = dz * e2x - dx * e2z
            pz = dx * e2y - dy * e2x
            det = e1x * px + e1y * py + e1z * pz

            nx = e1y * e2z - e1z * e2y
            ny = e1z * e2x - e1x * e2z
            nz = e1x * e2y - e1y * e2x
            nscale = sqrt(nx * nx + ny * ny + nz * nz)
            if fabs(det) <= DET_EPS * nscale:
                continue
            inv_det = 1.0 / det

            for i in range(m):
                tx = origins[i, 0] - ax
                ty = origins[i, 1] - ay
                tz = origins[i, 2] - az
                u = (tx * px + ty * py + tz * pz) * inv_det
                qx = ty * e1z - tz * e1y
                qy = tz * e1x - tx * e1z
                qz = tx * e1y - ty * e1x
                v = (qx * dx + qy * dy + qz * dz) * inv_det
                t = (qx * e2x + qy * e2y + qz * e2z) * inv_det

                strict = (u > BARY_EPS and v > BARY_EPS
                          and u + v < 1.0 - BARY_EPS and t > T_EPS)
                loose = (u > -BARY_EPS and v > -BARY_EPS
                         and u + v < 1.0 + BARY_EPS and t > -T_EPS)
                if strict:
                    counts[i] += 1
                elif loose:
                    suspect[i] = 1
    return counts_arr, suspect_arr


cdef inline double _point_segment_sq(double px, double py, double pz,
                                     double ax, double ay, double az,
                                     double bx, double by, double bz) nogil:
    cdef double abx = bx - ax
    cdef double aby = by - ay
    cdef double abz = bz - az
    cdef double ab2 = abx * abx + aby * aby + abz * abz
    cdef double t, cx, cy, cz
    if ab2 > 0.0:
        t = ((px - ax) * abx + (py - ay) * aby + (pz - az) * abz) / ab2
        if t < 0.0:
            t = 0.0
        elif t > 1.0:
            t = 1.0
    else:
        t = 0.0
    cx = px - (ax + t * abx)
    cy = py - (ay + t * aby)
    cz = pz - (az + t * abz)
    return cx * cx + cy * cy + cz * cz


def surface_distances(const double[:, ::1] vertices, const int[:, ::1] facets,
                      const double[:, ::1] points):
    cdef Py_ssize_t m = points.shape[0]
    cdef Py_ssize_t nf = facets.shape[0]
    best_arr = np.full(m, np.inf)
    cdef double[::1] best = best_arr
    if nf == 0 or m == 0:
        return np.sqrt(best_arr)

    cdef Py_ssize_t f, i
    cdef double ax, ay, az, bx, by, bz, cx, cy, cz
    cdef double abx, aby, abz, acx, acy, acz, crx, cry, crz, cr2
    cdef double px, py, pz, apx, apy, apz, bpx, bpy, bpz, cpx, cpy, cpz
    cdef double d1, d2_, d3, d4, d5, d6, vc, vb, va
    cdef double t_ab, t_ac, t_bc, denom, v_in, w_in
    cdef double qx, qy, qz, ddx, ddy, ddz, d2

    with nogil:
        for f in range(nf):
            ax = vertices[facets[f, 0], 0]
            ay = vertices[facets[f, 0], 1]
            az = vertices[facets[f, 0], 2]
            bx = vertices[facets[f, 1], 0]
            by = vertices[facets[f, 1], 1]
            bz = vertices[facets[f, 1], 2]
            cx = vertices[facets[f, 2], 0]
            cy = vertices[facets[f, 2], 1]
            cz = vertices[facets[f, 2], 2]

            abx = bx - ax
            aby = by - ay
            abz = bz - az
            acx = cx - ax
            acy = cy - ay
            acz = cz - az
            crx = aby * acz - abz * acy
            cry = abz * acx - abx * acz
            crz = abx * acy - aby * acx
            cr2 = crx * crx + cry * cry + crz * crz

            for i in range(m):
                px = points[i, 0]
                py = points[i, 1]
                pz = points[i, 2]

                if cr2 <= 0.0:
                    d2 = _point_segment_sq(px, py, pz, ax, ay, az, bx, by, bz)
                    t_ab = _point_segment_sq(px, py, pz, ax, ay, az, cx, cy, cz)
                    if t_ab < d2:
                        d2 = t_ab
                    t_ab = _point_segment_sq(px, py, pz, bx, by, bz, cx, cy, cz)
                    if t_ab < d2:
                        d2 = t_ab
                    if d2 < best[i]:
                        best[i] = d2
                    continue

                apx = px - ax
                apy = py - ay
                apz = pz - az
                d1 = abx * apx + aby * apy + abz * apz
                d2_ = acx * apx + acy * apy + acz * apz

                bpx = px - bx
                bpy = py - by
                bpz = pz - bz
                d3 = abx * bpx + aby * bpy + abz * bpz
                d4 = acx * bpx + acy * bpy + acz * bpz

                cpx = px - cx
                cpy = py - cy
                cpz = pz - cz
                d5 = abx * cpx + aby * cpy + abz * cpz
                d6 = acx * cpx + acy * cpy + acz * cpz

                vc = d1 * d4 - d3 * d2_
                vb = d5 * d2_ - d1 * d6
                va = d3 * d6 - d5 * d4

                if d1 <= 0.0 and d2_ <= 0.0:
                    qx = ax
                    qy = ay
                    qz = az
                elif d3 >= 0.0 and d4 <= d3:
                    qx = bx
                    qy = by
                    qz = bz
                elif vc <= 0.0 and d1 >= 0.0 and d3 <= 0.0:
                    t_ab = d1 / (d1 - d3)
                    qx = ax + t_ab * abx
                    qy = ay + t_ab * aby
                    qz = az + t_ab * abz
                elif d6 >= 0.0 and d5 <= d6:
                    qx = cx
                    qy = cy
                    qz = cz
                elif vb <= 0.0 and d2_ >= 0.0 and d6 <= 0.0:
                    t_ac = d2_ / (d2_ - d6)
                    qx = ax + t_ac * acx
                    qy = ay + t_ac * acy
                    qz = az + t_ac * acz
                elif va <= 0.0 and d4 - d3 >= 0.0 and d5 - d6 >= 0.0:
                    t_bc = (d4 - d3) / ((d4 - d3) + (d5 - d6))
                    qx = bx + t_bc * (cx - bx)
                    qy = by + t_bc * (cy - by)
                    qz = bz + t_bc * (cz - bz)
                else:
                    denom = 1.0 / (va + vb + vc)
                    v_in = vb * denom
                    w_in = vc * denom
                    qx = ax + abx * v_in + acx * w_in
                    qy = ay + aby * v_in + acy * w_in
                    qz = az + abz * v_in + acz * w_in

                ddx = px - qx
                ddy = py - qy
                ddz = pz - qz
                d2 = ddx * ddx + ddy * ddy + ddz * ddz
                if d2 < best[i]:
                    best[i] = d2
    return np.sqrt(best_arr)


def voxelize_segments(const double[:, ::1] starts, const double[:, ::1] ends,
                      const double[::1] origin, double resolution,
                      const cnp.int64_t[::1] dims, double radius,
                      double half_height, cnp.uint8_t[::1] bits):
    cdef Py_ssize_t n_seg = starts.shape[0]
    cdef long nx = dims[0], ny = dims[1], nz = dims[2]
    cdef double ox = origin[0], oy = origin[1], oz = origin[2]
    cdef double r2 = radius * radius
    cdef Py_ssize_t k
    cdef double x0, y0, z0, x1, y1, z1, sx, sy, sz, len2
    cdef double xmin, xmax, ymin, ymax, zmin, zmax
    cdef long lo_x, hi_x, lo_y, hi_y, lo_z, hi_z, ix, iy, iz
    cdef double cx, cy, cz, t, wx, wy, wz
    cdef long idx

    with nogil:
        for k in range(n_seg):
            x0 = starts[k, 0]
            y0 = starts[k, 1]
            z0 = starts[k, 2]
            x1 = ends[k, 0]
            y1 = ends[k, 1]
            z1 = ends[k, 2]
            xmin = x0 if x0 < x1 else x1
            xmax = x0 if x0 > x1 else x1
            ymin = y0 if y0 < y1 else y1
            ymax = y0 if y0 > y1 else y1
            zmin = z0 if z0 < z1 else z1
            zmax = z0 if z0 > z1 else z1

            lo_x = <long>floor((xmin - radius - ox) / resolution - 0.5)
            hi_x = <long>ceil((xmax + radius - ox) / resolution - 0.5)
            lo_y = <long>floor((ymin - radius - oy) / resolution - 0.5)
            hi_y = <long>ceil((ymax + radius - oy) / resolution - 0.5)
            lo_z = <long>floor((zmin - half_height - oz) / resolution - 0.5)
            hi_z = <long>ceil((zmax + half_height - oz) / resolution - 0.5)
            if lo_x < 0:
                lo_x = 0
            if hi_x > nx - 1:
                hi_x = nx - 1
            if lo_y < 0:
                lo_y = 0
            if hi_y > ny - 1:
                hi_y = ny - 1
            if lo_z < 0:
                lo_z = 0
            if hi_z > nz - 1:
                hi_z = nz - 1
            if lo_x > hi_x or lo_y > hi_y or lo_z > hi_z:
                continue

            sx = x1 - x0
            sy = y1 - y0
            sz = z1 - z0
            len2 = sx * sx + sy * sy

            for iz in range(lo_z, hi_z + 1):
                cz = oz + (iz + 0.5) * resolution
                for iy in range(lo_y, hi_y + 1):
                    cy = oy + (iy + 0.5) * resolution
                    for ix in range(lo_x, hi_x + 1):
                        cx = ox + (ix + 0.5) * resolution
                        if len2 > 0.0:
                            t = ((cx - x0) * sx + (cy - y0) * sy) / len2
                            if t < 0.0:
                                t = 0.0
                            elif t > 1.0:
                                t = 1.0
                        else:
                            t = 0.0
                        wx = cx - (x0 + t * sx)
                        wy = cy - (y0 + t * sy)
                        wz = cz - (z0 + t * sz)
                        if wx * wx + wy * wy <= r2 and fabs(wz) <= half_height:
                            idx = (iz * ny + iy) * nx + ix
                            bits[idx >> 3] |= <unsigned char>(1 << (idx & 7))
    return np.asarray(bits)
