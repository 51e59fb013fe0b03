"""Synthetic test fixtures: meshes and prints with analytically known facts.

Every mesh fixture is watertight by construction and every print fixture
interprets without error. Builders return the fixture together with a facts
dict (volume, area, per-layer extrusion, ...) computed at generation time,
so tests can assert against independently known values.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import gcode
from .errors import AmTamperError
from .gcode import GCodeLine, GCodeProgram, cmd, raw_line
from .mesh import TriangleMesh, make_box, merge

KINDS = ("cube", "slab", "prism", "multi-shell", "raster", "retraction")


@dataclass(frozen=True)
class FixtureSpec:
    """Parameters for one synthetic fixture.

    ``dimensions`` is kind-specific (see the builders); ``layers`` and
    ``lines_per_layer`` apply to print kinds only. ``origin`` shifts the
    fixture in space (XY only for prints).
    """

    kind: str
    dimensions: tuple[float, ...] = ()
    layers: int = 3
    lines_per_layer: int = 4
    origin: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise AmTamperError(f"unknown fixture kind {self.kind!r}")
        if any(d <= 0 for d in self.dimensions):
            raise AmTamperError("fixture dimensions must be positive")
        if self.layers < 1 or self.lines_per_layer < 1:
            raise AmTamperError("layer and line counts must be >= 1")


# print parameters shared by the print builders; values chosen to be exact
# in the canonical 5-decimal serialization
LINE_LENGTH = 8.0
LINE_SPACING = 0.5
LAYER_HEIGHT = 0.2
EXTRUSION_PER_LINE = 0.8
PRINT_FEEDRATE = 1500.0
TRAVEL_FEEDRATE = 3000.0
NOZZLE_C = 200.0
BED_C = 60.0
RETRACT_MM = 1.0


def make_mesh(spec: FixtureSpec) -> tuple[TriangleMesh, dict]:
    if spec.kind == "cube":
        (edge,) = spec.dimensions or (10.0,)
        return _box_fixture((edge, edge, edge), spec.origin)
    if spec.kind == "slab":
        dims = spec.dimensions or (10.0, 10.0, 1.0)
        if len(dims) != 3:
            raise AmTamperError("slab takes three dimensions")
        return _box_fixture(dims, spec.origin)
    if spec.kind == "prism":
        return _prism_fixture(spec)
    if spec.kind == "multi-shell":
        return _multi_shell_fixture(spec)
    raise AmTamperError(f"{spec.kind!r} is not a mesh fixture")


def make_print(spec: FixtureSpec) -> tuple[GCodeProgram, dict]:
    if spec.kind == "raster":
        return _raster_fixture(spec, retract=False)
    if spec.kind == "retraction":
        return _raster_fixture(spec, retract=True)
    raise AmTamperError(f"{spec.kind!r} is not a print fixture")


def _box_fixture(dims, origin) -> tuple[TriangleMesh, dict]:
    lo = np.asarray(origin, dtype=float)
    hi = lo + np.asarray(dims, dtype=float)
    mesh = make_box(lo, hi)
    x, y, z = (float(d) for d in dims)
    facts = {
        "volume": x * y * z,
        "area": 2.0 * (x * y + y * z + z * x),
        "aabb": (tuple(lo), tuple(hi)),
        "shells": 1,
        "voids": 0,
    }
    return mesh, facts


# dumbbell footprint on a 7x5 cell grid: two full pads joined by a one-cell
# neck; stands in for a thin joint between two massive regions
_PRISM_FOOTPRINT = [
    "##...##",
    "##...##",
    "#######",
    "##...##",
    "##...##",
]


def _prism_fixture(spec: FixtureSpec) -> tuple[TriangleMesh, dict]:
    cell, height = spec.dimensions or (2.0, 4.0)
    mask = np.array(
        [[ch == "#" for ch in row] for row in reversed(_PRISM_FOOTPRINT)],
        dtype=bool,
    ).T  # [ix, iy], row 0 of the picture at top
    mesh = _extrude_footprint(mask, cell, height, spec.origin)
    n_cells = int(mask.sum())
    perimeter = _perimeter_edges(mask)
    facts = {
        "volume": n_cells * cell * cell * height,
        "area": 2.0 * n_cells * cell * cell + perimeter * cell * height,
        "shells": 1,
        "voids": 0,
        "neck_cells": 3,
    }
    return mesh, facts


def _multi_shell_fixture(spec: FixtureSpec) -> tuple[TriangleMesh, dict]:
    outer, cavity, satellite = spec.dimensions or (10.0, 2.0, 3.0)
    if cavity >= outer:
        raise AmTamperError("cavity must be smaller than the outer cube")
    ox, oy, oz = spec.origin
    lo = np.array([ox, oy, oz])
    shell_outer = make_box(lo, lo + outer)
    mid = lo + outer / 2.0
    shell_cavity = make_box(mid - cavity / 2.0, mid + cavity / 2.0, inward=True)
    sat_lo = lo + np.array([outer + satellite, 0.0, 0.0])
    shell_sat = make_box(sat_lo, sat_lo + satellite)
    mesh = merge(shell_outer, shell_cavity, shell_sat)
    facts = {
        "volume": outer ** 3 - cavity ** 3 + satellite ** 3,
        "area": 6.0 * (outer ** 2 + cavity ** 2 + satellite ** 2),
        "shells": 3,
        "voids": 1,
        "cavity_center": tuple(mid),
    }
    return mesh, facts


def _perimeter_edges(mask: np.ndarray) -> int:
    nx, ny = mask.shape
    count = 0
    for ix in range(nx):
        for iy in range(ny):
            if not mask[ix, iy]:
                continue
            count += 0 if ix > 0 and mask[ix - 1, iy] else 1
            count += 0 if ix < nx - 1 and mask[ix + 1, iy] else 1
            count += 0 if iy > 0 and mask[ix, iy - 1] else 1
            count += 0 if iy < ny - 1 and mask[ix, iy + 1] else 1
    return count


def _extrude_footprint(mask, cell, height, origin) -> TriangleMesh:
    """Extrude a boolean cell grid into a watertight prism.

    Caps are emitted per cell and walls per exposed cell edge, so every
    vertex lies on the shared lattice and no T-junctions occur.
    """
    ox, oy, oz = origin
    nx, ny = mask.shape
    vertex_ids: dict[tuple[int, int, int], int] = {}
    vertices: list[tuple[float, float, float]] = []
    facets: list[tuple[int, int, int]] = []

    def vid(ix, iy, top) -> int:
        key = (ix, iy, top)
        if key not in vertex_ids:
            vertex_ids[key] = len(vertices)
            vertices.append(
                (ox + ix * cell, oy + iy * cell, oz + (height if top else 0.0))
            )
        return vertex_ids[key]

    for ix in range(nx):
        for iy in range(ny):
            if not mask[ix, iy]:
                continue
            b00 = vid(ix, iy, 0)
            b10 = vid(ix + 1, iy, 0)
            b01 = vid(ix, iy + 1, 0)
            b11 = vid(ix + 1, iy + 1, 0)
            t00 = vid(ix, iy, 1)
            t10 = vid(ix + 1, iy, 1)
            t01 = vid(ix, iy + 1, 1)
            t11 = vid(ix + 1, iy + 1, 1)
            facets += [(b00, b01, b10), (b10, b01, b11)]  # bottom, -Z
            facets += [(t00, t10, t01), (t10, t11, t01)]  # top, +Z
            if iy == 0 or not mask[ix, iy - 1]:  # south, -Y
                facets += [(b00, b10, t00), (b10, t10, t00)]
            if iy == ny - 1 or not mask[ix, iy + 1]:  # north, +Y
                facets += [(b01, t01, b11), (b11, t01, t11)]
            if ix == 0 or not mask[ix - 1, iy]:  # west, -X
                facets += [(b00, t00, b01), (b01, t00, t01)]
            if ix == nx - 1 or not mask[ix + 1, iy]:  # east, +X
                facets += [(b10, b11, t10), (b11, t11, t10)]

    return TriangleMesh(
        vertices=np.asarray(vertices, dtype=np.float64),
        facets=np.asarray(facets, dtype=np.int32),
    )


def _raster_fixture(spec: FixtureSpec, retract: bool) -> tuple[GCodeProgram, dict]:
    """Serpentine raster print, optionally with retract/unretract pairs.

    Per layer: one Z hop, then ``lines_per_layer`` X-direction lines with
    absolute E stepped by 0.8 mm per line. The retraction variant rebases E
    at each layer start (G92 E0) and pulls back 1 mm between lines.
    """
    ox, oy, _ = spec.origin
    lines: list[GCodeLine] = [
        raw_line(f"; fixture: {spec.kind} {spec.layers}x{spec.lines_per_layer}"),
        cmd("G21"),
        cmd("G90"),
        cmd("M82"),
        cmd("M104", S=NOZZLE_C),
        cmd("M140", S=BED_C),
        cmd("G28"),
        cmd("G92", E=0.0),
    ]
    for layer in range(spec.layers):
        z = round(LAYER_HEIGHT * (layer + 1), 5)
        lines.append(cmd("G0", Z=z, F=TRAVEL_FEEDRATE))
        if retract:
            lines.append(cmd("G92", E=0.0))
        e = 0.0 if retract else EXTRUSION_PER_LINE * spec.lines_per_layer * layer
        for j in range(spec.lines_per_layer):
            y = round(oy + LINE_SPACING * j, 5)
            x_from = ox if j % 2 == 0 else ox + LINE_LENGTH
            x_to = ox + LINE_LENGTH if j % 2 == 0 else ox
            lines.append(cmd("G0", X=x_from, Y=y, F=TRAVEL_FEEDRATE))
            e = round(e + EXTRUSION_PER_LINE, 5)
            lines.append(cmd("G1", X=x_to, E=e, F=PRINT_FEEDRATE))
            if retract and j + 1 < spec.lines_per_layer:
                lines.append(cmd("G1", E=round(e - RETRACT_MM, 5),
                                 F=TRAVEL_FEEDRATE))
                lines.append(cmd("G1", E=e, F=TRAVEL_FEEDRATE))
    program = GCodeProgram(tuple(lines))

    toolpath = gcode.interpret(program)
    index = gcode.index_layers(toolpath)
    stats = gcode.extrusion_stats(toolpath, index)
    facts = {
        "layers": spec.layers,
        "lines_per_layer": spec.lines_per_layer,
        "layer_zs": tuple(layer.z for layer in index.layers),
        "layer_height": LAYER_HEIGHT,
        "extrusion_total": stats.total,
        "extrusion_per_layer": stats.per_layer,
        "expected_per_layer": EXTRUSION_PER_LINE * spec.lines_per_layer,
        "retractions": len(toolpath.retractions),
        "bead_width": 0.5,
    }
    return program, facts
