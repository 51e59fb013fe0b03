"""Pure-numpy implementations of the hot kernels.

Every formula here is mirrored literally in the Cython backend (which is
compiled with FP contraction disabled); the two backends are required to
produce bit-identical outputs. Wrappers in ``amtamper._kernels`` coerce
arguments to the contiguous dtypes these functions assume:

    vertices  (nv, 3) float64   facets (nf, 3) int32
    origins   (m, 3)  float64   points (m, 3)  float64
"""

import numpy as np

# A hit closer than T_EPS mm to the ray origin, or within BARY_EPS of a
# triangle edge/vertex in barycentric units, is a graze: the crossing count
# cannot be trusted and the caller must retry with a jittered direction.
T_EPS = 1e-9
BARY_EPS = 1e-9
# Relative threshold below which the ray is treated as parallel to a facet.
DET_EPS = 1e-12


def ray_crossings(vertices, facets, origins, direction):
    """Count strict ray/triangle crossings per origin along one direction.

    Returns ``(counts, suspect)`` where ``suspect`` flags origins whose ray
    grazed an edge, a vertex, or the surface itself.
    """
    m = origins.shape[0]
    counts = np.zeros(m, dtype=np.int64)
    suspect = np.zeros(m, dtype=np.uint8)
    if facets.shape[0] == 0 or m == 0:
        return counts, suspect

    dx, dy, dz = direction
    ox = origins[:, 0]
    oy = origins[:, 1]
    oz = origins[:, 2]
    for f in range(facets.shape[0]):
        ax, ay, az = vertices[facets[f, 0]]
        e1x = vertices[facets[f, 1], 0] - ax
        e1y = vertices[facets[f, 1], 1] - ay
        e1z = vertices[facets[f, 1], 2] - az
        e2x = vertices[facets[f, 2], 0] - ax
        e2y = vertices[facets[f, 2], 1] - ay
        e2z = vertices[facets[f, 2], 2] - az

        # Moller-Trumbore with a shared direction and per-ray origins.
        px = dy * e2z - dz * e2y
        py = dz * e2x - dx * e2z
        pz = dx * e2y - dy * e2x
        det = e1x * px + e1y * py + e1z * pz

        nx = e1y * e2z - e1z * e2y
        ny = e1z * e2x - e1x * e2z
        nz = e1x * e2y - e1y * e2x
        nscale = np.sqrt(nx * nx + ny * ny + nz * nz)
        if abs(det) <= DET_EPS * nscale:
            # Parallel facet: it cannot produce a strict crossing, and rays
            # skimming it in-plane graze the edges of its neighbours, which
            # flags them suspect there.
            continue
        inv_det = 1.0 / det

        tx = ox - ax
        ty = oy - ay
        tz = oz - az
        u = (tx * px + ty * py + tz * pz) * inv_det
        qx = ty * e1z - tz * e1y
        qy = tz * e1x - tx * e1z
        qz = tx * e1y - ty * e1x
        v = (qx * dx + qy * dy + qz * dz) * inv_det
        t = (qx * e2x + qy * e2y + qz * e2z) * inv_det

        strict = (
            (u > BARY_EPS)
            & (v > BARY_EPS)
            & (u + v < 1.0 - BARY_EPS)
            & (t > T_EPS)
        )
        loose = (
            (u > -BARY_EPS)
            & (v > -BARY_EPS)
            & (u + v < 1.0 + BARY_EPS)
            & (t > -T_EPS)
        )
        counts += strict
        suspect |= (loose & ~strict).astype(np.uint8)
    return counts, suspect


def _point_segment_sq(px, py, pz, ax, ay, az, bx, by, bz):
    abx = bx - ax
    aby = by - ay
    abz = bz - az
    ab2 = abx * abx + aby * aby + abz * abz
    if ab2 > 0.0:
        t = ((px - ax) * abx + (py - ay) * aby + (pz - az) * abz) / ab2
        t = np.clip(t, 0.0, 1.0)
    else:
        t = 0.0
    cx = px - (ax + t * abx)
    cy = py - (ay + t * aby)
    cz = pz - (az + t * abz)
    return cx * cx + cy * cy + cz * cz


def surface_distances(vertices, facets, points):
    """Distance from each point to the nearest point of any facet."""
    m = points.shape[0]
    best = np.full(m, np.inf)
    if facets.shape[0] == 0 or m == 0:
        return np.sqrt(best)

    px = points[:, 0]
    py = points[:, 1]
    pz = points[:, 2]
    for f in range(facets.shape[0]):
        ax, ay, az = vertices[facets[f, 0]]
        bx, by, bz = vertices[facets[f, 1]]
        cx, cy, cz = vertices[facets[f, 2]]

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
        if cr2 <= 0.0:
            # Degenerate facet: reduce to its edges.
            d2 = _point_segment_sq(px, py, pz, ax, ay, az, bx, by, bz)
            d2 = np.minimum(d2, _point_segment_sq(px, py, pz, ax, ay, az, cx, cy, cz))
            d2 = np.minimum(d2, _point_segment_sq(px, py, pz, bx, by, bz, cx, cy, cz))
            np.minimum(best, d2, out=best)
            continue

        # Ericson's closest-point-on-triangle, regions evaluated in the same
        # order as the scalar version in the compiled backend.
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

        with np.errstate(divide="ignore", invalid="ignore"):
            t_ab = d1 / (d1 - d3)
            t_ac = d2_ / (d2_ - d6)
            t_bc = (d4 - d3) / ((d4 - d3) + (d5 - d6))
            denom = 1.0 / (va + vb + vc)
            v_in = vb * denom
            w_in = vc * denom

            conds = [
                (d1 <= 0.0) & (d2_ <= 0.0),
                (d3 >= 0.0) & (d4 <= d3),
                (vc <= 0.0) & (d1 >= 0.0) & (d3 <= 0.0),
                (d6 >= 0.0) & (d5 <= d6),
                (vb <= 0.0) & (d2_ >= 0.0) & (d6 <= 0.0),
                (va <= 0.0) & (d4 - d3 >= 0.0) & (d5 - d6 >= 0.0),
            ]
            qx_opts = [ax, bx, ax + t_ab * abx, cx, ax + t_ac * acx,
                       bx + t_bc * (cx - bx)]
            qy_opts = [ay, by, ay + t_ab * aby, cy, ay + t_ac * acy,
                       by + t_bc * (cy - by)]
            qz_opts = [az, bz, az + t_ab * abz, cz, az + t_ac * acz,
                       bz + t_bc * (cz - bz)]
            qx = np.select(conds, qx_opts, ax + abx * v_in + acx * w_in)
            qy = np.select(conds, qy_opts, ay + aby * v_in + acy * w_in)
            qz = np.select(conds, qz_opts, az + abz * v_in + acz * w_in)

        ddx = px - qx
        ddy = py - qy
        ddz = pz - qz
        d2 = ddx * ddx + ddy * ddy + ddz * ddz
        np.minimum(best, d2, out=best)
    return np.sqrt(best)


def voxelize_segments(starts, ends, origin, resolution, dims, radius, half_height, bits):
    """Rasterize path segments as XY-round, Z-slab capsules into a bitset.

    Cell (ix, iy, iz) maps to bit ``(iz*dims[1] + iy)*dims[0] + ix``; bit k of
    a byte is cell ``byte*8 + k``. ``bits`` is modified in place.
    """
    nx, ny, nz = int(dims[0]), int(dims[1]), int(dims[2])
    ox, oy, oz = origin
    r2 = radius * radius
    for k in range(starts.shape[0]):
        x0, y0, z0 = starts[k]
        x1, y1, z1 = ends[k]
        lo_x = max(int(np.floor((min(x0, x1) - radius - ox) / resolution - 0.5)), 0)
        hi_x = min(int(np.ceil((max(x0, x1) + radius - ox) / resolution - 0.5)), nx - 1)
        lo_y = max(int(np.floor((min(y0, y1) - radius - oy) / resolution - 0.5)), 0)
        hi_y = min(int(np.ceil((max(y0, y1) + radius - oy) / resolution - 0.5)), ny - 1)
        lo_z = max(int(np.floor((min(z0, z1) - half_height - oz) / resolution - 0.5)), 0)
        hi_z = min(int(np.ceil((max(z0, z1) + half_height - oz) / resolution - 0.5)), nz - 1)
        if lo_x > hi_x or lo_y > hi_y or lo_z > hi_z:
            continue

        sx = x1 - x0
        sy = y1 - y0
        sz = z1 - z0
        len2 = sx * sx + sy * sy

        ix = np.arange(lo_x, hi_x + 1)
        iy = np.arange(lo_y, hi_y + 1)
        iz = np.arange(lo_z, hi_z + 1)
        cx = ox + (ix + 0.5) * resolution
        cy = oy + (iy + 0.5) * resolution
        cz = oz + (iz + 0.5) * resolution

        cxg = cx[None, None, :]
        cyg = cy[None, :, None]
        czg = cz[:, None, None]
        if len2 > 0.0:
            t = ((cxg - x0) * sx + (cyg - y0) * sy) / len2
            t = np.clip(t, 0.0, 1.0)
        else:
            t = np.zeros((iz.size, iy.size, ix.size))
        wx = cxg - (x0 + t * sx)
        wy = cyg - (y0 + t * sy)
        wz = czg - (z0 + t * sz)
        mask = (wx * wx + wy * wy <= r2) & (np.abs(wz) <= half_height)
        if not mask.any():
            continue

        izz, iyy, ixx = np.nonzero(mask)
        idx = ((izz + lo_z) * ny + (iyy + lo_y)) * nx + (ixx + lo_x)
        np.bitwise_or.at(bits, idx >> 3, (1 << (idx & 7)).astype(np.uint8))
    return bits
