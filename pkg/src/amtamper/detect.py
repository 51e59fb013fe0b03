"""Tamper detection: compare candidate artifacts against references.

mesh_diff and gcode_diff are the inverses of the tampering operations: any
non-identity manipulation moves at least one report field away from zero.
Verdicts: "tampered" for intrinsic changes (volume, area, shells, extrusion,
temperatures, dwells, occupancy), "suspect" when only a rigid motion is
indicated (intrinsics equal, vertex data moved), "clean" otherwise.

monte_carlo_volume is the independent volume oracle: uniform sampling in
the bounding box with a fixed seed, so every reported volume claim can be
cross-checked without trusting the divergence-theorem arithmetic.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from . import _kernels, gcode, mesh
from .errors import GeometryError
from .gcode import GCodeProgram, Toolpath
from .mesh import DEFAULT_SEED, Aabb, TriangleMesh

REPORT_SCHEMA_VERSION = 1

VERDICT_CLEAN = "clean"
VERDICT_TAMPERED = "tampered"
VERDICT_SUSPECT = "suspect"

EXIT_CODES = {VERDICT_CLEAN: 0, VERDICT_TAMPERED: 2, VERDICT_SUSPECT: 3}

MIN_SURFACE_SAMPLES = 10_000


@dataclass(frozen=True)
class MeshTolerances:
    """Clean-verdict thresholds; relative ones scale with the reference."""

    volume_rel: float = 1e-6
    area_rel: float = 1e-6
    deviation_mm: float = 1e-6
    aabb_mm: float = 1e-6


@dataclass(frozen=True)
class MeshTamperReport:
    volume_delta: float
    surface_area_delta: float
    shell_count_delta: int
    new_void_shells: tuple[tuple[Aabb, float], ...]
    aabb_changed: bool
    rigid_motion_suspected: bool
    max_sampled_surface_deviation: float
    verdict: str

    def to_json_dict(self) -> dict:
        return {
            "schema_version": REPORT_SCHEMA_VERSION,
            "report": "mesh_diff",
            "volume_delta": self.volume_delta,
            "surface_area_delta": self.surface_area_delta,
            "shell_count_delta": self.shell_count_delta,
            "new_void_shells": [
                {"aabb": box.to_json_dict(), "volume": volume}
                for box, volume in self.new_void_shells
            ],
            "aabb_changed": self.aabb_changed,
            "rigid_motion_suspected": self.rigid_motion_suspected,
            "max_sampled_surface_deviation": self.max_sampled_surface_deviation,
            "verdict": self.verdict,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2, sort_keys=True) + "\n"


@dataclass(frozen=True)
class GcodeTamperReport:
    total_extrusion_delta: float
    per_layer_extrusion_delta: tuple[tuple[float, float], ...]  # (z, delta)
    temperature_diffs: tuple[dict, ...]
    feedrate_diff_count: int
    inserted_dwell_total_ms: float
    voxel_disagreement_fraction: float
    verdict: str

    def to_json_dict(self) -> dict:
        return {
            "schema_version": REPORT_SCHEMA_VERSION,
            "report": "gcode_diff",
            "total_extrusion_delta": self.total_extrusion_delta,
            "per_layer_extrusion_delta": [
                {"z": z, "delta": d} for z, d in self.per_layer_extrusion_delta
            ],
            "temperature_diffs": list(self.temperature_diffs),
            "feedrate_diff_count": self.feedrate_diff_count,
            "inserted_dwell_total_ms": self.inserted_dwell_total_ms,
            "voxel_disagreement_fraction": self.voxel_disagreement_fraction,
            "verdict": self.verdict,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2, sort_keys=True) + "\n"


@dataclass(frozen=True)
class VoxelDisagreement:
    differing_cells: int
    union_cells: int

    @property
    def fraction(self) -> float:
        if self.union_cells == 0:
            return 0.0
        return self.differing_cells / self.union_cells


def _require_watertight(m: TriangleMesh, label: str) -> None:
    report = mesh.check_watertight(m)
    if not report.is_watertight:
        raise GeometryError(
            f"{label} mesh is not watertight "
            f"(boundary={report.boundary_edge_count}, "
            f"non_manifold={report.non_manifold_edge_count}, "
            f"inconsistent={report.inconsistent_orientation_edge_count})"
        )


def sample_surface_points(
    m: TriangleMesh, n: int, seed: int = DEFAULT_SEED
) -> np.ndarray:
    """Area-weighted random points on the surface, deterministic by seed."""
    if n < 1:
        raise ValueError("need at least one sample")
    rng = np.random.default_rng([0xD1FF, seed])
    tri = m.vertices[m.facets]
    cross = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    areas = 0.5 * np.linalg.norm(cross, axis=1)
    total = areas.sum()
    if total <= 0.0:
        raise GeometryError("mesh has zero surface area")
    chosen = rng.choice(len(areas), size=n, p=areas / total)
    u = rng.random(n)
    v = rng.random(n)
    over = u + v > 1.0
    u[over] = 1.0 - u[over]
    v[over] = 1.0 - v[over]
    t = tri[chosen]
    return (
        t[:, 0]
        + u[:, None] * (t[:, 1] - t[:, 0])
        + v[:, None] * (t[:, 2] - t[:, 0])
    )


def _vertex_multisets_equal(a: TriangleMesh, b: TriangleMesh) -> bool:
    if a.vertices.shape != b.vertices.shape:
        return False
    # lexicographic row sort for a stable multiset comparison
    va = a.vertices[np.lexsort(a.vertices.T[::-1])]
    vb = b.vertices[np.lexsort(b.vertices.T[::-1])]
    return va.tobytes() == vb.tobytes()


def mesh_diff(
    reference: TriangleMesh,
    candidate: TriangleMesh,
    tolerances: MeshTolerances | None = None,
    samples: int = MIN_SURFACE_SAMPLES,
    seed: int = DEFAULT_SEED,
) -> MeshTamperReport:
    """Structured comparison of two watertight meshes.

    Surface deviation is measured from >= 10^4 seeded points on the
    reference surface to the candidate surface, so any shape change larger
    than the tolerance is caught even when volume happens to be preserved.
    """
    tol = tolerances or MeshTolerances()
    samples = max(samples, MIN_SURFACE_SAMPLES)
    _require_watertight(reference, "reference")
    _require_watertight(candidate, "candidate")

    vol_ref = mesh.signed_volume(reference)
    vol_cand = mesh.signed_volume(candidate)
    area_ref = mesh.surface_area(reference)
    area_cand = mesh.surface_area(candidate)
    volume_delta = vol_cand - vol_ref
    area_delta = area_cand - area_ref
    vol_tol = tol.volume_rel * max(abs(vol_ref), 1e-30)
    area_tol = tol.area_rel * max(abs(area_ref), 1e-30)

    shells_ref = mesh.decompose_shells(reference, seed=seed)
    shells_cand = mesh.decompose_shells(candidate, seed=seed)
    shell_count_delta = len(shells_cand) - len(shells_ref)

    ref_void_boxes = [
        _shell_aabb(reference, s) for s in shells_ref if s.classification == "void"
    ]
    new_voids = []
    for shell in shells_cand:
        if shell.classification != "void":
            continue
        box = _shell_aabb(candidate, shell)
        if not any(box.almost_equal(rb, tol.aabb_mm) for rb in ref_void_boxes):
            new_voids.append((box, shell.signed_volume))

    aabb_changed = not mesh.bounding_box(reference).almost_equal(
        mesh.bounding_box(candidate), tol.aabb_mm
    )
    rigid_motion_suspected = (
        abs(volume_delta) <= vol_tol
        and abs(area_delta) <= area_tol
        and not _vertex_multisets_equal(reference, candidate)
    )

    points = sample_surface_points(reference, samples, seed=seed)
    distances = _kernels.surface_distances(
        candidate.vertices, candidate.facets, points
    )
    deviation = float(distances.max())

    geometric_change = (
        abs(volume_delta) > vol_tol
        or abs(area_delta) > area_tol
        or shell_count_delta != 0
        or bool(new_voids)
    )
    if geometric_change:
        verdict = VERDICT_TAMPERED
    elif rigid_motion_suspected:
        verdict = VERDICT_SUSPECT
    elif deviation > tol.deviation_mm:
        verdict = VERDICT_TAMPERED
    else:
        verdict = VERDICT_CLEAN

    return MeshTamperReport(
        volume_delta=volume_delta,
        surface_area_delta=area_delta,
        shell_count_delta=shell_count_delta,
        new_void_shells=tuple(new_voids),
        aabb_changed=aabb_changed,
        rigid_motion_suspected=rigid_motion_suspected,
        max_sampled_surface_deviation=deviation,
        verdict=verdict,
    )


def _shell_aabb(m: TriangleMesh, shell) -> Aabb:
    verts = m.vertices[np.unique(m.facets[shell.facet_indices])]
    return Aabb(tuple(verts.min(axis=0)), tuple(verts.max(axis=0)))


def voxel_verify(
    reference: Toolpath,
    candidate: Toolpath,
    resolution: float = 0.5,
    bead_width: float = gcode.DEFAULT_BEAD_WIDTH,
    layer_height: float | None = None,
) -> VoxelDisagreement:
    """Occupancy comparison on a shared grid covering both toolpaths.

    Returns symmetric-difference cell count over occupied-union count;
    0.0 for identical geometry, 1.0 for disjoint toolpaths.
    """
    boxes = [tp.printing_aabb() for tp in (reference, candidate)]
    boxes = [b for b in boxes if b is not None]
    if not boxes:
        return VoxelDisagreement(0, 0)
    lo = np.min([b[0] for b in boxes], axis=0)
    hi = np.max([b[1] for b in boxes], axis=0)
    pad = bead_width
    origin = tuple(lo - pad)
    dims = tuple(
        max(1, math.ceil((h - l + 2.0 * pad) / resolution))
        for l, h in zip(lo, hi)
    )
    frame = (origin, dims)
    grid_ref = gcode.voxelize(
        reference, resolution, bead_width, layer_height, frame=frame
    )
    grid_cand = gcode.voxelize(
        candidate, resolution, bead_width, layer_height, frame=frame
    )
    xor_bits = np.bitwise_xor(grid_ref.bits, grid_cand.bits)
    or_bits = np.bitwise_or(grid_ref.bits, grid_cand.bits)
    n = grid_ref.n_cells
    differing = int(np.unpackbits(xor_bits, bitorder="little")[:n].sum())
    union = int(np.unpackbits(or_bits, bitorder="little")[:n].sum())
    return VoxelDisagreement(differing, union)


def _per_layer_totals(toolpath: Toolpath) -> dict[float, float]:
    try:
        index = gcode.index_layers(toolpath)
    except Exception:
        return {}
    stats = gcode.extrusion_stats(toolpath, index)
    return {
        layer.z: total for layer, total in zip(index.layers, stats.per_layer)
    }


def _event_dict(event) -> dict:
    return {"target": event.target, "value": event.value, "wait": event.wait}


def gcode_diff(
    reference: GCodeProgram,
    candidate: GCodeProgram,
    resolution: float = 0.5,
    bead_width: float = gcode.DEFAULT_BEAD_WIDTH,
    layer_height: float | None = None,
) -> GcodeTamperReport:
    """Field-by-field comparison of two programs' interpreter outputs.

    The occupancy comparison runs at ``min(resolution, layer height)``:
    coarser z cells would skip between bead slabs and miss whole layers.
    """
    tp_ref = gcode.interpret(reference)
    tp_cand = gcode.interpret(candidate)

    total_ref = sum(s.delta_e for s in tp_ref.segments)
    total_cand = sum(s.delta_e for s in tp_cand.segments)
    layers_ref = _per_layer_totals(tp_ref)
    layers_cand = _per_layer_totals(tp_cand)
    zs = sorted(set(layers_ref) | set(layers_cand))
    per_layer = tuple(
        (z, layers_cand.get(z, 0.0) - layers_ref.get(z, 0.0))
        for z in zs
        if layers_cand.get(z, 0.0) != layers_ref.get(z, 0.0)
    )

    temp_diffs = []
    ev_ref, ev_cand = tp_ref.temperature_events, tp_cand.temperature_events
    for i in range(max(len(ev_ref), len(ev_cand))):
        a = ev_ref[i] if i < len(ev_ref) else None
        b = ev_cand[i] if i < len(ev_cand) else None
        if (
            a is None
            or b is None
            or (a.target, a.value, a.wait) != (b.target, b.value, b.wait)
        ):
            temp_diffs.append(
                {
                    "position": i,
                    "reference": None if a is None else _event_dict(a),
                    "candidate": None if b is None else _event_dict(b),
                }
            )

    feedrate_diffs = abs(len(tp_ref.segments) - len(tp_cand.segments))
    for a, b in zip(tp_ref.segments, tp_cand.segments):
        if a.feedrate != b.feedrate:
            feedrate_diffs += 1

    dwell_delta = sum(d.milliseconds for d in tp_cand.dwells) - sum(
        d.milliseconds for d in tp_ref.dwells
    )

    height = layer_height
    if height is None:
        try:
            height = gcode.index_layers(tp_ref).layer_height_estimate
        except Exception:
            height = 0.0
    effective = resolution if height <= 0.0 else min(resolution, height)
    voxels = voxel_verify(tp_ref, tp_cand, effective, bead_width, layer_height)

    clean = (
        total_cand == total_ref
        and not per_layer
        and not temp_diffs
        and feedrate_diffs == 0
        and dwell_delta == 0.0
        and voxels.differing_cells == 0
    )
    return GcodeTamperReport(
        total_extrusion_delta=total_cand - total_ref,
        per_layer_extrusion_delta=per_layer,
        temperature_diffs=tuple(temp_diffs),
        feedrate_diff_count=feedrate_diffs,
        inserted_dwell_total_ms=dwell_delta,
        voxel_disagreement_fraction=voxels.fraction,
        verdict=VERDICT_CLEAN if clean else VERDICT_TAMPERED,
    )


def monte_carlo_volume(
    m: TriangleMesh, n: int, seed: int = DEFAULT_SEED
) -> tuple[float, float]:
    """Estimate enclosed volume by uniform sampling of the bounding box.

    Returns (estimate, standard error) where the error is the binomial
    sampling term V_box * sqrt(p(1-p)/n). Deterministic for a given seed.
    """
    if n < 1:
        raise ValueError("sample count must be >= 1")
    _require_watertight(m, "input")
    box = mesh.bounding_box(m)
    lo = np.asarray(box.min)
    extent = np.asarray(box.extent)
    v_box = float(np.prod(extent))
    rng = np.random.default_rng(seed)
    points = lo + rng.random((n, 3)) * extent
    inside = mesh.contains_points(m, points, seed=seed, validate=False)
    p = float(inside.mean())
    estimate = v_box * p
    stderr = v_box * math.sqrt(p * (1.0 - p) / n)
    return estimate, stderr
