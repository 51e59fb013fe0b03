"""Tampering operations on designs and toolpaths, with audit records.

Each operation returns the tampered artifact plus a :class:`DefectSpec`
describing what was done, classified along three axes: selectivity
(indiscriminate or selective), timing (static or dynamic), and directness.
All operations here are static file-level edits; dynamic (on-the-fly)
manipulation is represented in the classification but never executed.

Region-scoped G-code tampers guarantee that segments outside the region
interpret to bit-identical (start, end, deposition, feedrate) tuples. For
extrusion scaling under absolute E this requires care: edited lines are
re-emitted cumulatively and a single ``G92 E<original value>`` rebase is
inserted where the edit run ends, returning the E register to the exact
value the untouched suffix expects. Inputs whose E values need more than
five decimals can drift by one ulp at the rebase point; canonically
serialized programs round-trip exactly.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import __version__, gcode, mesh
from .errors import DefectError, GcodeError
from .gcode import GCodeLine, GCodeProgram, LineState, Toolpath, cmd
from .mesh import Aabb, TriangleMesh

SCHEMA_VERSION = 1

KINDS = (
    "void",
    "reorientation",
    "extrusion_scale",
    "temperature_tamper",
    "feedrate_scale",
    "layer_delay",
)


@dataclass(frozen=True)
class StrutSpec:
    """Internal supports bridging a void's two largest faces.

    Each strut is a square-section bar spanning the gap along its smallest
    extent. Cross-section defaults to 0.05 mm; count defaults to none.
    """

    count: int = 0
    cross_section: float = 0.05

    def __post_init__(self):
        if self.count < 0:
            raise DefectError("strut count must be >= 0")
        if self.count > 0 and self.cross_section <= 0.0:
            raise DefectError("strut cross-section must be positive")


@dataclass(frozen=True)
class VoidSpec:
    """An internal cavity: axis-aligned box of ``size`` centered at ``center``.

    ``clearance`` is the minimum distance the (dilated) box must keep from
    every existing surface. The 0.1 mm default gap follows the smallest
    extent that still defeats layer bonding without showing externally.
    """

    center: tuple[float, float, float]
    size: tuple[float, float, float] = (0.1, 0.1, 0.1)
    clearance: float = 0.2
    struts: StrutSpec = field(default_factory=StrutSpec)

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(v) for v in self.center))
        object.__setattr__(self, "size", tuple(float(v) for v in self.size))
        if len(self.center) != 3 or len(self.size) != 3:
            raise DefectError("void center and size must be 3-vectors")
        if any(s <= 0.0 for s in self.size):
            raise DefectError("void size must be positive in every axis")
        if self.clearance < 0.0:
            raise DefectError("clearance must be >= 0")


@dataclass(frozen=True)
class Region:
    """Spatial and/or layer scope of a manipulation."""

    aabb: Aabb | None = None
    layers: frozenset[int] | None = None

    def __post_init__(self):
        if self.layers is not None:
            object.__setattr__(self, "layers", frozenset(int(k) for k in self.layers))

    @property
    def is_empty(self) -> bool:
        return self.aabb is None and self.layers is None

    def to_json_dict(self) -> dict:
        return {
            "aabb": None if self.aabb is None else self.aabb.to_json_dict(),
            "layers": None if self.layers is None else sorted(self.layers),
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "Region":
        aabb = data.get("aabb")
        layers = data.get("layers")
        return cls(
            aabb=None if aabb is None else Aabb(aabb["min"], aabb["max"]),
            layers=None if layers is None else frozenset(layers),
        )


@dataclass(frozen=True)
class Characteristics:
    selectivity: str  # "indiscriminate" | "selective"
    timing: str       # "static" | "dynamic"
    directness: str   # "direct" | "indirect"

    def __post_init__(self):
        if self.selectivity not in ("indiscriminate", "selective"):
            raise DefectError(f"bad selectivity {self.selectivity!r}")
        if self.timing not in ("static", "dynamic"):
            raise DefectError(f"bad timing {self.timing!r}")
        if self.directness not in ("direct", "indirect"):
            raise DefectError(f"bad directness {self.directness!r}")

    def as_tuple(self) -> tuple[str, str, str]:
        return (self.selectivity, self.timing, self.directness)


@dataclass(frozen=True)
class DefectSpec:
    """Audit record accompanying every tampered output."""

    kind: str
    parameters: dict
    region: Region | None
    characteristics: Characteristics
    tool_version: str = __version__

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DefectError(f"unknown defect kind {self.kind!r}")

    def to_json_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "kind": self.kind,
            "parameters": self.parameters,
            "region": None if self.region is None else self.region.to_json_dict(),
            "characteristics": {
                "selectivity": self.characteristics.selectivity,
                "timing": self.characteristics.timing,
                "directness": self.characteristics.directness,
            },
            "tool_version": self.tool_version,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str | bytes) -> "DefectSpec":
        data = json.loads(text)
        version = data.get("schema_version")
        if version != SCHEMA_VERSION:
            raise DefectError(f"unsupported defect schema version {version!r}")
        region = data.get("region")
        chars = data["characteristics"]
        return cls(
            kind=data["kind"],
            parameters=dict(data["parameters"]),
            region=None if region is None else Region.from_json_dict(region),
            characteristics=Characteristics(
                chars["selectivity"], chars["timing"], chars["directness"]
            ),
            tool_version=data.get("tool_version", "unknown"),
        )


def classify_characteristics(defect: DefectSpec) -> Characteristics:
    """Derive the (selectivity, timing, directness) triple for a defect.

    Selective means a region is present and does not span the whole input.
    Everything this module does is a static file edit. Layer delays act
    through timing rather than content, hence indirect.
    """
    has_region = defect.region is not None and not defect.region.is_empty
    spans = bool(defect.parameters.get("region_spans_input", False))
    selectivity = "selective" if has_region and not spans else "indiscriminate"
    directness = "indirect" if defect.kind == "layer_delay" else "direct"
    return Characteristics(selectivity, "static", directness)


def _make_spec(kind: str, parameters: dict, region: Region | None) -> DefectSpec:
    probe = DefectSpec(
        kind=kind,
        parameters=parameters,
        region=region,
        characteristics=Characteristics("indiscriminate", "static", "direct"),
    )
    return DefectSpec(kind, parameters, region, classify_characteristics(probe))


# ---------------------------------------------------------------------------
# mesh manipulations


def inject_void(mesh_obj: TriangleMesh, void: VoidSpec) -> tuple[TriangleMesh, DefectSpec]:
    """Append an inward-wound box shell (a cavity) strictly inside the solid.

    The box dilated by the clearance must pass two checks: all 8 corners and
    the center lie in solid material, and no existing triangle intersects
    the dilated box. Volume drops by exactly the box volume minus any strut
    volume; surface area grows by the added shells' area.
    """
    report = mesh.check_watertight(mesh_obj)
    if not report.is_watertight:
        raise DefectError("cannot inject a void into a non-watertight mesh")

    center = np.asarray(void.center, dtype=float)
    half = np.asarray(void.size, dtype=float) / 2.0
    lo = center - half
    hi = center + half
    dlo = lo - void.clearance
    dhi = hi + void.clearance

    corners = np.array(
        [[dlo[0] if i & 1 == 0 else dhi[0],
          dlo[1] if i & 2 == 0 else dhi[1],
          dlo[2] if i & 4 == 0 else dhi[2]] for i in range(8)]
    )
    probes = np.vstack([corners, center[None, :]])
    inside = mesh.contains_points(mesh_obj, probes, validate=False)
    if not bool(inside.all()):
        raise DefectError(
            "void (with clearance) is not strictly inside solid material"
        )
    if _any_triangle_intersects_box(mesh_obj.vertices, mesh_obj.facets, dlo, dhi):
        raise DefectError("void (with clearance) intersects an existing surface")

    shells = [mesh.make_box(lo, hi, inward=True)]
    box_volume = float(np.prod(hi - lo))
    strut_volume = 0.0
    struts = void.struts
    if struts.count > 0:
        shells += _strut_shells(lo, hi, struts)
        axis = int(np.argmin(hi - lo))
        strut_volume = struts.count * struts.cross_section ** 2 * float(
            (hi - lo)[axis]
        )

    tampered = mesh.merge(mesh_obj, *shells)
    parameters = {
        "center": list(void.center),
        "size": list(void.size),
        "clearance": void.clearance,
        "strut_count": struts.count,
        "strut_cross_section": struts.cross_section if struts.count else None,
        "box_volume": box_volume,
        "strut_volume": strut_volume,
        "volume_delta": -(box_volume - strut_volume),
        "region_spans_input": False,
    }
    region = Region(aabb=Aabb(tuple(lo), tuple(hi)))
    return tampered, _make_spec("void", parameters, region)


def _strut_shells(lo, hi, struts: StrutSpec) -> list[TriangleMesh]:
    """Square-section bars spanning the void along its smallest extent."""
    size = hi - lo
    axis = int(np.argmin(size))
    t1, t2 = (i for i in range(3) if i != axis)
    if size[t1] < size[t2]:
        t1, t2 = t2, t1  # distribute struts along the longer transverse axis
    c = struts.cross_section
    if c >= size[t2] or c >= size[t1] / (struts.count + 1):
        raise DefectError(
            f"{struts.count} struts of cross-section {c} do not fit in the void"
        )
    shells = []
    mid2 = (lo[t2] + hi[t2]) / 2.0
    for k in range(struts.count):
        center1 = lo[t1] + size[t1] * (k + 1) / (struts.count + 1)
        s_lo = np.array(lo)
        s_hi = np.array(hi)
        s_lo[t1], s_hi[t1] = center1 - c / 2.0, center1 + c / 2.0
        s_lo[t2], s_hi[t2] = mid2 - c / 2.0, mid2 + c / 2.0
        shells.append(mesh.make_box(s_lo, s_hi))
    return shells


def _any_triangle_intersects_box(vertices, facets, lo, hi) -> bool:
    """Separating-axis triangle/box overlap, vectorized over facets.

    Touching counts as intersecting (separation requires a strict gap).
    """
    center = (np.asarray(lo) + np.asarray(hi)) / 2.0
    half = (np.asarray(hi) - np.asarray(lo)) / 2.0
    tri = vertices[facets] - center  # (F, 3, 3)

    # box-axis tests double as the cheap prefilter
    overlap = np.all(tri.min(axis=1) <= half, axis=1) & np.all(
        tri.max(axis=1) >= -half, axis=1
    )
    if not overlap.any():
        return False
    t = tri[overlap]
    separated = np.zeros(len(t), dtype=bool)

    edges = np.stack(
        [t[:, 1] - t[:, 0], t[:, 2] - t[:, 1], t[:, 0] - t[:, 2]], axis=1
    )
    eye = np.eye(3)
    for i in range(3):
        for ax in range(3):
            a = np.cross(eye[ax], edges[:, i])  # (F, 3)
            r = np.abs(a) @ half
            p = np.einsum("fvj,fj->fv", t, a)
            separated |= (p.min(axis=1) > r) | (p.max(axis=1) < -r)

    normal = np.cross(edges[:, 0], edges[:, 1])
    r = np.abs(normal) @ half
    s = np.einsum("fj,fj->f", t[:, 0], normal)
    separated |= (s > r) | (s < -r)
    return bool((~separated).any())


def reorient(mesh_obj: TriangleMesh, rotation) -> tuple[TriangleMesh, DefectSpec]:
    """Rotate the part about its bounding-box center.

    Changes the build direction while keeping the part in place; intrinsic
    volume and area are preserved. Recorded as a defect even for the
    identity rotation, since the event itself is the manipulation.
    """
    rotation = np.asarray(rotation, dtype=float)
    center = np.asarray(mesh.bounding_box(mesh_obj).center)
    translation = center - rotation @ center
    tampered = mesh.transform(mesh_obj, rotation, translation)
    parameters = {
        "rotation": [[float(v) for v in row] for row in rotation],
        "pivot": [float(v) for v in center],
        "region_spans_input": False,
    }
    return tampered, _make_spec("reorientation", parameters, None)


# ---------------------------------------------------------------------------
# G-code manipulations


def _interpret_with_trace(program: GCodeProgram) -> tuple[Toolpath, list[LineState]]:
    trace: list[LineState] = []
    toolpath = gcode.interpret(program, trace=trace)
    return toolpath, trace


def _segment_by_line(toolpath: Toolpath) -> dict[int, gcode.Segment]:
    return {seg.line_index: seg for seg in toolpath.segments}


def _layer_of_segment(index: gcode.LayerIndex | None, seg_pos: int) -> int | None:
    if index is None:
        return None
    for k, layer in enumerate(index.layers):
        if layer.segment_start <= seg_pos < layer.segment_stop:
            return k
    return None


def _in_region(region: Region, seg: gcode.Segment, layer: int | None) -> bool:
    if region.aabb is not None:
        midpoint = tuple((a + b) / 2.0 for a, b in zip(seg.start, seg.end))
        if not region.aabb.contains(midpoint):
            return False
    if region.layers is not None:
        if layer is None or layer not in region.layers:
            return False
    return True


def _require_region(region: Region | None) -> Region:
    if region is None or region.is_empty:
        raise DefectError("a region (AABB and/or layer set) is required")
    return region


def scale_extrusion(
    program: GCodeProgram, region: Region, factor: float
) -> tuple[GCodeProgram, DefectSpec]:
    """Scale deposition of printing moves whose midpoint lies in the region.

    A printing move's deposition (its advance past the span's high-water
    mark) is multiplied by ``factor``. Under absolute E the edited lines are
    re-emitted cumulatively and a ``G92 E<original>`` rebase closes each
    edit run, so every out-of-region move keeps bit-identical values.
    """
    region = _require_region(region)
    if not math.isfinite(factor) or factor < 0.0:
        raise DefectError("extrusion factor must be finite and >= 0")
    toolpath, trace = _interpret_with_trace(program)
    try:
        layer_index = gcode.index_layers(toolpath)
    except GcodeError:
        layer_index = None

    by_line = _segment_by_line(toolpath)
    edited_lines = {}
    touched_layers = set()
    for i, seg in enumerate(toolpath.segments):
        if not seg.is_printing:
            continue
        layer = _layer_of_segment(layer_index, i)
        if _in_region(region, seg, layer):
            edited_lines[seg.line_index] = seg
            if layer is not None:
                touched_layers.add(layer)

    printing_total = sum(1 for s in toolpath.segments if s.is_printing)
    spans_input = len(edited_lines) == printing_total and printing_total > 0
    parameters = {
        "factor": factor,
        "edited_moves": len(edited_lines),
        "edited_layers": sorted(touched_layers),
        "region_spans_input": spans_input,
    }
    spec = _make_spec("extrusion_scale", parameters, region)
    if factor == 1.0 or not edited_lines:
        return program, spec

    new_lines: list[GCodeLine] = []
    new_e = None        # rewritten stream's absolute E, mm (None = in sync)
    last_scale = 1.0
    for idx, line in enumerate(program.lines):
        state = trace[idx]
        last_scale = state.scale
        seg = by_line.get(idx)
        edited = idx in edited_lines

        if edited:
            if state.absolute_e:
                base = state.e_high if new_e is None else new_e
                target = base + factor * seg.delta_e
                new_lines.append(line.with_param("E", target / state.scale))
                new_e = target
            else:
                # fill any pending unretract, then deposit the scaled amount
                raw = (state.e_high - state.e) + factor * seg.delta_e
                new_lines.append(line.with_param("E", raw / state.scale))
            continue

        if new_e is not None:
            if line.command == "G92" and line.has_param("E"):
                new_e = None  # the program rebases both streams itself
            elif line.command in ("G0", "G1") and line.has_param("E"):
                # the original stream is at e == e_high here (the last edited
                # line was a printing move), so one rebase restores it
                new_lines.append(cmd("G92", E=state.e / state.scale))
                new_e = None
        new_lines.append(line)

    if new_e is not None:
        final = toolpath.final_state
        new_lines.append(cmd("G92", E=final.e / last_scale))
    return program.replace_lines(new_lines), spec


def tamper_temperature(
    program: GCodeProgram,
    target: str = "nozzle",
    set_to: float | None = None,
    offset: float | None = None,
) -> tuple[GCodeProgram, DefectSpec]:
    """Rewrite nozzle (M104/M109) or bed (M140/M190) temperature targets.

    Exactly one of ``set_to`` / ``offset`` must be given. Driving any
    target below 0 C is an error. A program without matching commands comes
    back unchanged, with the zero edit count recorded.
    """
    if target not in ("nozzle", "bed"):
        raise DefectError(f"unknown temperature target {target!r}")
    if (set_to is None) == (offset is None):
        raise DefectError("give exactly one of set_to or offset")
    if set_to is not None and set_to < 0.0:
        raise DefectError("temperature target must be >= 0 C")
    commands = ("M104", "M109") if target == "nozzle" else ("M140", "M190")

    edits = 0
    new_lines: list[GCodeLine] = []
    for number, line in enumerate(program.lines, start=1):
        if line.command in commands and line.param("S") is not None:
            old = line.param("S")
            new = set_to if set_to is not None else old + offset
            if new < 0.0:
                raise DefectError(
                    f"line {number}: offset {offset} drives temperature to "
                    f"{gcode.format_number(new)} C"
                )
            if new != old:
                line = line.with_param("S", new)
                edits += 1
        new_lines.append(line)

    parameters = {
        "target": target,
        "mode": "set" if set_to is not None else "offset",
        "value": set_to if set_to is not None else offset,
        "edits": edits,
        "region_spans_input": False,
    }
    spec = _make_spec("temperature_tamper", parameters, None)
    if edits == 0:
        return program, spec
    return program.replace_lines(new_lines), spec


def tamper_feedrate(
    program: GCodeProgram, region: Region, factor: float
) -> tuple[GCodeProgram, DefectSpec]:
    """Scale feedrate for motion inside the region.

    In-region motion lines get their F scaled (an explicit F is added where
    one is missing, so the whole region actually runs at the scaled speed).
    The first out-of-region motion line that would inherit a scaled modal F
    gets an explicit F restoring the original value, keeping out-of-region
    segments bit-identical.
    """
    region = _require_region(region)
    if not (math.isfinite(factor) and factor > 0.0):
        raise DefectError("feedrate factor must be finite and > 0")
    toolpath, trace = _interpret_with_trace(program)
    try:
        layer_index = gcode.index_layers(toolpath)
    except GcodeError:
        layer_index = None

    seg_pos = {seg.line_index: i for i, seg in enumerate(toolpath.segments)}
    in_region_lines = set()
    for i, seg in enumerate(toolpath.segments):
        layer = _layer_of_segment(layer_index, i)
        if _in_region(region, seg, layer):
            in_region_lines.add(seg.line_index)

    motion_total = len(toolpath.segments)
    spans_input = len(in_region_lines) == motion_total and motion_total > 0
    parameters = {
        "factor": factor,
        "edited_moves": len(in_region_lines),
        "region_spans_input": spans_input,
    }
    spec = _make_spec("feedrate_scale", parameters, region)
    if factor == 1.0 or not in_region_lines:
        return program, spec

    new_lines: list[GCodeLine] = []
    scaled_modal = False  # new stream's modal F differs from the original's
    for idx, line in enumerate(program.lines):
        state = trace[idx]
        if idx in in_region_lines:
            f = line.param("F")
            if f is not None:
                line = line.with_param("F", f * factor)
            else:
                # original modal feedrate applies here; pin the scaled value
                line = line.with_param("F", state.feedrate * factor / state.scale)
            scaled_modal = True
        elif idx in seg_pos and scaled_modal:
            if line.param("F") is None:
                seg = toolpath.segments[seg_pos[idx]]
                line = line.with_param("F", seg.feedrate / state.scale)
            scaled_modal = False
        new_lines.append(line)

    return program.replace_lines(new_lines), spec


def inject_layer_delays(
    program: GCodeProgram, delay_ms: float, selector="every"
) -> tuple[GCodeProgram, DefectSpec]:
    """Insert a ``G4 P<delay>`` dwell before selected layer starts.

    Layer 0 has no preceding boundary, so valid selections are layers
    1..n-1; ``"every"`` selects all of them (n-1 insertions for n layers).
    The toolpath geometry is untouched, only its timing changes.
    """
    if not (math.isfinite(delay_ms) and delay_ms > 0.0):
        raise DefectError("delay must be > 0 ms")
    toolpath, _ = _interpret_with_trace(program)
    layer_index = gcode.index_layers(toolpath)
    n = len(layer_index.layers)
    if n < 2:
        raise DefectError("layer delays need a program with at least 2 layers")

    if selector == "every":
        selected = list(range(1, n))
    else:
        selected = sorted({int(k) for k in selector})
        if not selected:
            raise DefectError("empty layer selection")
        for k in selected:
            if k == 0:
                raise DefectError("layer 0 has no boundary before it")
            if not (1 <= k < n):
                raise DefectError(f"layer {k} out of range (1..{n - 1})")

    insert_at = []
    for k in selected:
        layer = layer_index.layers[k]
        first_seg = toolpath.segments[layer.segment_start]
        insert_at.append(first_seg.line_index)

    new_lines = list(program.lines)
    for line_idx in sorted(insert_at, reverse=True):
        new_lines.insert(line_idx, cmd("G4", P=delay_ms))

    parameters = {
        "delay_ms": delay_ms,
        "selector": "every" if selector == "every" else selected,
        "insertions": len(insert_at),
        "region_spans_input": selector == "every",
    }
    region = Region(layers=frozenset(selected))
    spec = _make_spec("layer_delay", parameters, region)
    return program.replace_lines(new_lines), spec
