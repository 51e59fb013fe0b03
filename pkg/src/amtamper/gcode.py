"""Marlin-flavor G-code: parsing, canonical serialization, interpretation.

The structured dialect is G0 G1 G4 G20 G21 G28 G90 G91 G92 and M82 M83 M104
M109 M140 M190; every other line (comments, blank lines, unknown commands)
is kept as an opaque string and round-trips byte-identically. Parameters are
whitespace-separated words (letter + decimal); canonical output uses minimal
digits with at most five decimals.

Interpretation produces a :class:`Toolpath`: motion segments with deposited
filament per segment, dwells, temperature events, and retractions. Deposition
uses a per-span high-water mark on absolute E, so retract/unretract cycles
net to zero and the total over a G92-delimited span equals final minus
initial absolute E.
"""

from __future__ import annotations

import math
import re
import statistics
import struct
from dataclasses import dataclass, replace

import numpy as np

from . import _kernels
from .errors import GcodeError

RECOGNIZED = frozenset(
    {"G0", "G1", "G4", "G20", "G21", "G28", "G90", "G91", "G92",
     "M82", "M83", "M104", "M109", "M140", "M190"}
)

INCH_MM = 25.4
DEFAULT_BEAD_WIDTH = 0.5
DEFAULT_LAYER_HEIGHT = 0.2
DEFAULT_CELL_BUDGET = 2 ** 28

_ARC_RE = re.compile(r"^\s*[Gg]0*([23])(?![0-9.])")


def format_number(value: float) -> str:
    """Canonical numeric formatting: minimal digits, at most 5 decimals."""
    text = f"{value:.5f}".rstrip("0").rstrip(".")
    if text in ("-0", ""):
        return "0"
    return text


@dataclass(frozen=True)
class GCodeLine:
    """One program line: a structured command or an opaque string.

    ``command`` is ``None`` for opaque lines, whose ``raw`` text round-trips
    verbatim. Structured lines keep an ordered ``params`` tuple of
    ``(letter, value)`` pairs; a bare letter (e.g. ``G28 X``) has value None.
    """

    command: str | None
    params: tuple[tuple[str, float | None], ...] = ()
    comment: str | None = None
    raw: str | None = None

    def param(self, letter: str, default=None):
        for key, value in self.params:
            if key == letter:
                return value
        return default

    def has_param(self, letter: str) -> bool:
        return any(key == letter for key, _ in self.params)

    def with_param(self, letter: str, value: float | None) -> "GCodeLine":
        """Copy with one parameter replaced (or appended)."""
        if self.command is None:
            raise ValueError("cannot set parameters on an opaque line")
        out = []
        seen = False
        for key, old in self.params:
            if key == letter:
                out.append((key, value))
                seen = True
            else:
                out.append((key, old))
        if not seen:
            out.append((letter, value))
        return replace(self, params=tuple(out))

    def to_text(self) -> str:
        if self.command is None:
            return self.raw if self.raw is not None else ""
        words = [self.command]
        for letter, value in self.params:
            words.append(letter if value is None else f"{letter}{format_number(value)}")
        text = " ".join(words)
        if self.comment is not None:
            text += f" ;{self.comment}"
        return text


def cmd(command: str, comment: str | None = None, **params) -> GCodeLine:
    """Structured-line factory; keyword order becomes parameter order."""
    items = tuple(
        (letter.upper(), None if value is None else float(value))
        for letter, value in params.items()
    )
    return GCodeLine(command=command.upper(), params=items, comment=comment)


def raw_line(text: str) -> GCodeLine:
    return GCodeLine(command=None, raw=text)


@dataclass(frozen=True)
class GCodeProgram:
    lines: tuple[GCodeLine, ...]

    def __len__(self) -> int:
        return len(self.lines)

    def replace_lines(self, new_lines) -> "GCodeProgram":
        return GCodeProgram(tuple(new_lines))


def parse_gcode(text: str | bytes) -> GCodeProgram:
    """Parse G-code text into structured + opaque lines.

    LF and CRLF are both accepted (LF is emitted). A malformed parameter on
    a recognized command raises; anything unrecognized stays opaque.
    """
    if isinstance(text, (bytes, bytearray)):
        text = bytes(text).decode("utf-8", errors="replace")
    physical = text.split("\n")
    if physical and physical[-1] == "":
        physical.pop()
    lines = []
    for number, original in enumerate(physical, start=1):
        line = original[:-1] if original.endswith("\r") else original
        lines.append(_parse_line(line, number))
    return GCodeProgram(tuple(lines))


def _parse_line(line: str, number: int) -> GCodeLine:
    body, sep, comment_text = line.partition(";")
    comment = comment_text if sep else None
    words = body.split()
    if not words:
        return raw_line(line)
    head = words[0]
    letter = head[0].upper()
    if letter not in "GM" or not head[1:].isdigit():
        return raw_line(line)
    command = f"{letter}{int(head[1:])}"
    if command not in RECOGNIZED:
        return raw_line(line)

    params: list[tuple[str, float | None]] = []
    positions: dict[str, int] = {}
    for word in words[1:]:
        key = word[0].upper()
        if not key.isalpha():
            raise GcodeError(f"malformed parameter {word!r}", number)
        rest = word[1:]
        if rest:
            try:
                value = float(rest)
            except ValueError as exc:
                raise GcodeError(f"malformed parameter {word!r}", number) from exc
        else:
            value = None
        if key in positions:
            params[positions[key]] = (key, value)
        else:
            positions[key] = len(params)
            params.append((key, value))
    return GCodeLine(command=command, params=tuple(params), comment=comment)


def serialize(program: GCodeProgram) -> str:
    """Canonical text; ``serialize(parse_gcode(s))`` is a fixpoint."""
    lines = [line.to_text() for line in program.lines]
    return "\n".join(lines) + ("\n" if lines else "")


# ---------------------------------------------------------------------------
# interpretation


@dataclass
class MachineState:
    """Modal interpreter state.

    ``position`` is the last commanded XYZ in mm; ``established`` records
    whether any command has anchored it (G28, G92, or an absolute move).
    """

    position: tuple[float, float, float] = (0.0, 0.0, 0.0)
    established: bool = False
    e: float = 0.0
    feedrate: float = 0.0
    absolute_positioning: bool = True
    absolute_e: bool = True
    units_mm: bool = True
    nozzle_target: float = 0.0
    bed_target: float = 0.0


@dataclass(frozen=True)
class Segment:
    start: tuple[float, float, float]
    end: tuple[float, float, float]
    delta_e: float
    feedrate: float
    line_index: int

    @property
    def is_printing(self) -> bool:
        return self.delta_e > 0.0


@dataclass(frozen=True)
class Dwell:
    milliseconds: float
    line_index: int


@dataclass(frozen=True)
class TemperatureEvent:
    target: str  # "nozzle" | "bed"
    value: float
    wait: bool
    line_index: int


@dataclass(frozen=True)
class Retraction:
    amount: float  # mm of filament pulled back (positive)
    line_index: int


@dataclass(frozen=True)
class Toolpath:
    segments: tuple[Segment, ...]
    dwells: tuple[Dwell, ...]
    temperature_events: tuple[TemperatureEvent, ...]
    retractions: tuple[Retraction, ...]
    final_state: MachineState

    def printing_segments(self) -> tuple[Segment, ...]:
        return tuple(s for s in self.segments if s.is_printing)

    def printing_aabb(self):
        pts = [s.start for s in self.segments if s.is_printing]
        pts += [s.end for s in self.segments if s.is_printing]
        if not pts:
            return None
        arr = np.asarray(pts)
        return tuple(arr.min(axis=0)), tuple(arr.max(axis=0))


_TEMP_COMMANDS = {
    "M104": ("nozzle", False),
    "M109": ("nozzle", True),
    "M140": ("bed", False),
    "M190": ("bed", True),
}


@dataclass(frozen=True)
class LineState:
    """Modal snapshot taken just before a line executes.

    Program rewriters use this to edit E/F values without replaying the
    state machine themselves. ``e_high`` is the deposition high-water mark
    of the current G92 span.
    """

    scale: float          # file units -> mm multiplier
    absolute_e: bool
    e: float              # absolute E in mm
    e_high: float
    feedrate: float       # modal feedrate, mm/min


def interpret(
    program: GCodeProgram,
    defaults: MachineState | None = None,
    trace: list | None = None,
) -> Toolpath:
    """Run the program through the state machine and collect its effects.

    When ``trace`` is a list, one :class:`LineState` per program line is
    appended to it (aligned with ``program.lines``).
    """
    state = replace(defaults) if defaults is not None else MachineState()
    e_high = state.e
    segments: list[Segment] = []
    dwells: list[Dwell] = []
    temps: list[TemperatureEvent] = []
    retractions: list[Retraction] = []

    for index, line in enumerate(program.lines):
        number = index + 1
        if trace is not None:
            trace.append(
                LineState(
                    scale=1.0 if state.units_mm else INCH_MM,
                    absolute_e=state.absolute_e,
                    e=state.e,
                    e_high=e_high,
                    feedrate=state.feedrate,
                )
            )
        if line.command is None:
            if line.raw and _ARC_RE.match(line.raw):
                raise GcodeError("arc moves (G2/G3) are not supported", number)
            continue
        command = line.command
        scale = 1.0 if state.units_mm else INCH_MM

        if command in ("G0", "G1"):
            extrusion = line.param("E")
            feed = line.param("F")
            if feed is not None:
                state.feedrate = feed * scale

            axis_values = {}
            for axis in "XYZ":
                value = line.param(axis)
                if value is not None:
                    axis_values[axis] = value * scale

            start = state.position
            moved = bool(axis_values)
            if moved:
                if state.absolute_positioning:
                    target = tuple(
                        axis_values.get(axis, start[i])
                        for i, axis in enumerate("XYZ")
                    )
                    state.established = True
                else:
                    if not state.established:
                        raise GcodeError(
                            "relative motion before any position is established",
                            number,
                        )
                    target = tuple(
                        start[i] + axis_values.get(axis, 0.0)
                        for i, axis in enumerate("XYZ")
                    )
                state.position = target
            else:
                target = start

            deposited = 0.0
            if extrusion is not None:
                if state.absolute_e:
                    new_e = extrusion * scale
                else:
                    new_e = state.e + extrusion * scale
                delta = new_e - state.e
                if delta < 0.0:
                    retractions.append(Retraction(-delta, index))
                if new_e > e_high:
                    deposited = new_e - e_high
                    e_high = new_e
                state.e = new_e

            if moved or extrusion is not None:
                segments.append(
                    Segment(start, target, deposited, state.feedrate, index)
                )

        elif command == "G4":
            p = line.param("P")
            s = line.param("S")
            if p is not None:
                ms = p
            elif s is not None:
                ms = s * 1000.0
            else:
                ms = 0.0
            dwells.append(Dwell(ms, index))

        elif command == "G20":
            state.units_mm = False
        elif command == "G21":
            state.units_mm = True

        elif command == "G28":
            axes = [axis for axis in "XYZ" if line.has_param(axis)] or list("XYZ")
            state.position = tuple(
                0.0 if axis in axes else state.position[i]
                for i, axis in enumerate("XYZ")
            )
            state.established = True

        elif command == "G90":
            state.absolute_positioning = True
        elif command == "G91":
            state.absolute_positioning = False

        elif command == "G92":
            new_pos = list(state.position)
            touched_xyz = False
            for i, axis in enumerate("XYZ"):
                value = line.param(axis)
                if value is not None:
                    new_pos[i] = value * scale
                    touched_xyz = True
            if touched_xyz:
                state.position = tuple(new_pos)
                state.established = True
            e_value = line.param("E")
            if e_value is not None:
                state.e = e_value * scale
                e_high = state.e  # new deposition span

        elif command == "M82":
            state.absolute_e = True
        elif command == "M83":
            state.absolute_e = False

        elif command in _TEMP_COMMANDS:
            target, wait = _TEMP_COMMANDS[command]
            value = line.param("S")
            if value is None:
                continue
            if value < 0.0:
                raise GcodeError(
                    f"negative temperature target {format_number(value)}", number
                )
            if target == "nozzle":
                state.nozzle_target = value
            else:
                state.bed_target = value
            temps.append(TemperatureEvent(target, value, wait, index))

    return Toolpath(
        tuple(segments), tuple(dwells), tuple(temps), tuple(retractions), state
    )


# ---------------------------------------------------------------------------
# layers


@dataclass(frozen=True)
class Layer:
    z: float
    segment_start: int  # first segment index belonging to this layer
    segment_stop: int   # one past the last printing segment of the layer


@dataclass(frozen=True)
class LayerIndex:
    layers: tuple[Layer, ...]
    layer_height_estimate: float

    def __len__(self) -> int:
        return len(self.layers)


def index_layers(toolpath: Toolpath) -> LayerIndex:
    """Group printing moves by the distinct Z of their endpoints.

    Layers appear in order of first extrusion; Z must be strictly increasing
    across layers. The height estimate is the median of consecutive-Z deltas
    (0.0 for a single layer).
    """
    printing = [
        (i, seg) for i, seg in enumerate(toolpath.segments) if seg.is_printing
    ]
    if not printing:
        raise GcodeError("program contains no printing moves")
    layers: list[Layer] = []
    current_z = None
    start = stop = 0
    for i, seg in printing:
        z = seg.end[2]
        if current_z is None:
            current_z, start, stop = z, i, i + 1
        elif z == current_z:
            stop = i + 1
        else:
            if z < current_z:
                raise GcodeError(
                    f"printing layers out of order: z {format_number(z)} after "
                    f"{format_number(current_z)} (line {seg.line_index + 1})"
                )
            layers.append(Layer(current_z, start, stop))
            current_z, start, stop = z, i, i + 1
    layers.append(Layer(current_z, start, stop))
    if len(layers) > 1:
        deltas = [b.z - a.z for a, b in zip(layers, layers[1:])]
        estimate = float(statistics.median(deltas))
    else:
        estimate = 0.0
    return LayerIndex(tuple(layers), estimate)


@dataclass(frozen=True)
class ExtrusionStats:
    total: float
    per_layer: tuple[float, ...]


def extrusion_stats(toolpath: Toolpath, layer_index: LayerIndex | None = None) -> ExtrusionStats:
    """Deposited filament length, in total and per layer."""
    total = sum(seg.delta_e for seg in toolpath.segments)
    if layer_index is None:
        try:
            layer_index = index_layers(toolpath)
        except GcodeError:
            return ExtrusionStats(total, ())
    per_layer = tuple(
        sum(
            seg.delta_e
            for seg in toolpath.segments[layer.segment_start : layer.segment_stop]
        )
        for layer in layer_index.layers
    )
    return ExtrusionStats(total, per_layer)


# ---------------------------------------------------------------------------
# voxelization

GRID_MAGIC = b"AMTGRID1"


@dataclass(frozen=True, eq=False)
class OccupancyGrid:
    """Little-endian packed occupancy bitset over a regular grid.

    Cell (ix, iy, iz) is bit ``(iz*dims[1] + iy)*dims[0] + ix``; bit k of
    byte j is cell ``8*j + k``. Cell centers sit at
    ``origin + (index + 0.5) * resolution``.
    """

    origin: tuple[float, float, float]
    resolution: float
    dims: tuple[int, int, int]
    bits: np.ndarray

    def __post_init__(self):
        bits = np.ascontiguousarray(self.bits, dtype=np.uint8)
        expected = (self.n_cells + 7) // 8
        if len(bits) != expected:
            raise ValueError(f"bitset length {len(bits)}, expected {expected}")
        bits.setflags(write=False)
        object.__setattr__(self, "bits", bits)
        object.__setattr__(self, "origin", tuple(float(v) for v in self.origin))
        object.__setattr__(self, "dims", tuple(int(v) for v in self.dims))
        object.__setattr__(self, "resolution", float(self.resolution))

    @property
    def n_cells(self) -> int:
        return self.dims[0] * self.dims[1] * self.dims[2]

    def count_occupied(self) -> int:
        return int(np.unpackbits(self.bits, bitorder="little")[: self.n_cells].sum())

    def get(self, ix: int, iy: int, iz: int) -> bool:
        nx, ny, nz = self.dims
        if not (0 <= ix < nx and 0 <= iy < ny and 0 <= iz < nz):
            raise IndexError(f"cell ({ix}, {iy}, {iz}) outside {self.dims}")
        idx = (iz * ny + iy) * nx + ix
        return bool(self.bits[idx >> 3] & (1 << (idx & 7)))

    def occupied_cells(self) -> np.ndarray:
        """(n, 3) array of occupied (ix, iy, iz) indices."""
        flat = np.flatnonzero(
            np.unpackbits(self.bits, bitorder="little")[: self.n_cells]
        )
        nx, ny, _ = self.dims
        ix = flat % nx
        iy = (flat // nx) % ny
        iz = flat // (nx * ny)
        return np.stack([ix, iy, iz], axis=1)

    def same_frame(self, other: "OccupancyGrid") -> bool:
        return (
            self.dims == other.dims
            and self.origin == other.origin
            and self.resolution == other.resolution
        )

    def __eq__(self, other) -> bool:
        if not isinstance(other, OccupancyGrid):
            return NotImplemented
        return self.same_frame(other) and self.bits.tobytes() == other.bits.tobytes()

    def to_bytes(self) -> bytes:
        head = GRID_MAGIC + struct.pack(
            "<3I", *self.dims
        ) + struct.pack("<3d", *self.origin) + struct.pack("<d", self.resolution)
        return head + self.bits.tobytes()

    @classmethod
    def from_bytes(cls, data: bytes) -> "OccupancyGrid":
        if data[:8] != GRID_MAGIC:
            raise ValueError("not an occupancy grid (bad magic)")
        dims = struct.unpack_from("<3I", data, 8)
        origin = struct.unpack_from("<3d", data, 20)
        (resolution,) = struct.unpack_from("<d", data, 44)
        n_cells = dims[0] * dims[1] * dims[2]
        expected = (n_cells + 7) // 8
        bits = np.frombuffer(data, dtype=np.uint8, count=expected, offset=52)
        if len(data) != 52 + expected:
            raise ValueError("occupancy grid length mismatch")
        return cls(origin, resolution, dims, bits.copy())


def voxelize(
    toolpath: Toolpath,
    resolution: float = 0.5,
    bead_width: float = DEFAULT_BEAD_WIDTH,
    layer_height: float | None = None,
    cell_budget: int = DEFAULT_CELL_BUDGET,
    frame: tuple[tuple[float, float, float], tuple[int, int, int]] | None = None,
) -> OccupancyGrid:
    """Rasterize printing segments as capsules into an occupancy grid.

    Capsule cross-section is ``bead_width / 2`` in XY and ``layer_height``
    total in Z, centered on the path. The grid covers the printing AABB
    padded by one bead width unless an explicit ``frame`` (origin, dims) is
    given, e.g. to compare two toolpaths cell for cell.
    """
    if resolution <= 0.0:
        raise ValueError("resolution must be positive")
    if bead_width <= 0.0:
        raise ValueError("bead width must be positive")
    printing = [s for s in toolpath.segments if s.is_printing]

    if layer_height is None:
        layer_height = DEFAULT_LAYER_HEIGHT
        try:
            index = index_layers(toolpath)
        except GcodeError:
            index = None
        if index is not None and index.layer_height_estimate > 0.0:
            layer_height = index.layer_height_estimate
    if layer_height <= 0.0:
        raise ValueError("layer height must be positive")

    if frame is None:
        if not printing:
            return OccupancyGrid((0.0, 0.0, 0.0), resolution, (1, 1, 1),
                                 np.zeros(1, dtype=np.uint8))
        lo, hi = toolpath.printing_aabb()
        pad = bead_width
        origin = tuple(v - pad for v in lo)
        dims = tuple(
            max(1, math.ceil((h - l + 2.0 * pad) / resolution))
            for l, h in zip(lo, hi)
        )
    else:
        origin, dims = frame
        origin = tuple(float(v) for v in origin)
        dims = tuple(int(v) for v in dims)

    n_cells = dims[0] * dims[1] * dims[2]
    if n_cells > cell_budget:
        raise ValueError(
            f"voxel grid of {n_cells} cells exceeds the budget of {cell_budget}; "
            "use a coarser resolution or raise cell_budget"
        )

    bits = np.zeros((n_cells + 7) // 8, dtype=np.uint8)
    if printing:
        starts = np.array([s.start for s in printing])
        ends = np.array([s.end for s in printing])
        _kernels.voxelize_segments(
            starts, ends, np.asarray(origin), resolution,
            np.asarray(dims, dtype=np.int64), bead_width / 2.0,
            layer_height / 2.0, bits,
        )
    return OccupancyGrid(origin, resolution, dims, bits)
