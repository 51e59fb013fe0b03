"""Parser, serializer, interpreter, layers, and the occupancy grid."""

import numpy as np
import pytest

from amtamper import gcode
from amtamper.errors import GcodeError

from conftest import parse_text


# ---------------------------------------------------------------------------
# parsing


def test_parse_structured_line():
    program = parse_text("G1 X10 Y20 E0.5\n")
    line = program.lines[0]
    assert line.command == "G1"
    assert line.param("X") == 10.0
    assert line.param("Y") == 20.0
    assert line.param("E") == 0.5


def test_unrecognized_command_opaque():
    program = parse_text("M600\nT1\n")
    assert all(line.command is None for line in program.lines)
    assert gcode.serialize(program) == "M600\nT1\n"


def test_comment_preserved():
    program = parse_text("G1 X1 ; infill\n")
    line = program.lines[0]
    assert line.command == "G1"
    assert line.comment == " infill"
    assert gcode.serialize(program) == "G1 X1 ; infill\n"


def test_comment_only_line_opaque():
    program = parse_text("; header comment\n")
    assert program.lines[0].command is None
    assert gcode.serialize(program) == "; header comment\n"


def test_crlf_accepted_lf_emitted():
    program = parse_text("G90\r\nG1 X1 E1\r\n")
    assert gcode.serialize(program) == "G90\nG1 X1 E1\n"


def test_malformed_param_on_recognized_command():
    with pytest.raises(GcodeError, match="line 2"):
        parse_text("G90\nG1 Xfoo\n")


def test_compact_unspaced_line_stays_opaque():
    program = parse_text("G1X9\n")
    assert program.lines[0].command is None
    assert gcode.serialize(program) == "G1X9\n"


def test_duplicate_param_last_value_wins():
    program = parse_text("G1 X1 X7 E1\n")
    assert program.lines[0].param("X") == 7.0


def test_arc_commands_rejected_at_interpret():
    program = parse_text("G90\nG2 X1 Y1 I0.5 J0\n")
    with pytest.raises(GcodeError, match="arc"):
        gcode.interpret(program)


def test_arc_with_leading_zeros_rejected():
    program = parse_text("G02 X1 Y1 I0.5 J0\n")
    with pytest.raises(GcodeError, match="arc"):
        gcode.interpret(program)


def test_canonical_number_formatting():
    assert gcode.format_number(10.0) == "10"
    assert gcode.format_number(10.00000) == "10"
    assert gcode.format_number(0.123456789) == "0.12346"
    assert gcode.format_number(-0.0) == "0"
    assert gcode.format_number(-1.5) == "-1.5"


def test_serialize_parse_fixpoint():
    text = "G90\nM82\nG92 E0\nG1 X10.00000 E1 F1500\n; note\nM104 S200\n"
    once = gcode.serialize(parse_text(text))
    assert once == "G90\nM82\nG92 E0\nG1 X10 E1 F1500\n; note\nM104 S200\n"
    assert gcode.serialize(parse_text(once)) == once


# ---------------------------------------------------------------------------
# interpreter hand traces (frozen)


def test_trace_absolute_e_two_segments():
    program = parse_text("G90\nM82\nG92 E0\nG1 X10 E1\nG1 X20 E3\n")
    toolpath = gcode.interpret(program)
    deltas = [s.delta_e for s in toolpath.segments]
    assert deltas == [1.0, 2.0]


def test_trace_dwell_event():
    program = parse_text("G4 P500\n")
    toolpath = gcode.interpret(program)
    assert len(toolpath.segments) == 0
    assert [d.milliseconds for d in toolpath.dwells] == [500.0]


def test_trace_relative_e():
    program = parse_text("G90\nM83\nG28\nG1 X5 E0.4\nG1 X10 E0.4\n")
    toolpath = gcode.interpret(program)
    deltas = [s.delta_e for s in toolpath.segments]
    assert deltas == [0.4, 0.4]


def test_trace_g92_rebase_spans():
    program = parse_text(
        "G90\nM82\nG92 E0\n"
        "G1 X10 E5\n"      # span 1: deposit 5
        "G92 E0\n"         # rebase
        "G1 E-1\n"         # retract 1 (no deposit)
        "G1 E0\n"          # recover (no deposit: high-water)
        "G1 X20 E2\n"      # deposit 2
        "G92 E10\n"        # rebase up
        "G1 X30 E12\n"     # deposit 2
    )
    toolpath = gcode.interpret(program)
    deltas = [s.delta_e for s in toolpath.segments]
    assert deltas == [5.0, 0.0, 0.0, 2.0, 2.0]
    assert [r.amount for r in toolpath.retractions] == [1.0]
    assert sum(deltas) == 9.0


def test_trace_dwell_p_wins_over_s():
    program = parse_text("G4 P100 S9\nG4 S2\n")
    toolpath = gcode.interpret(program)
    assert [d.milliseconds for d in toolpath.dwells] == [100.0, 2000.0]


def test_trace_inch_units():
    program = parse_text("G20\nG90\nM82\nG92 E0\nG1 X1 E0.1 F60\n")
    toolpath = gcode.interpret(program)
    seg = toolpath.segments[0]
    assert seg.end == (25.4, 0.0, 0.0)
    assert seg.delta_e == pytest.approx(2.54)
    assert seg.feedrate == pytest.approx(1524.0)


def test_relative_motion_before_established_errors():
    program = parse_text("G91\nG1 X5\n")
    with pytest.raises(GcodeError, match="line 2"):
        gcode.interpret(program)


def test_absolute_motion_establishes_position():
    program = parse_text("G90\nG1 X5 Y5 Z1\nG91\nG1 X1\n")
    toolpath = gcode.interpret(program)
    assert toolpath.segments[-1].end == (6.0, 5.0, 1.0)


def test_g28_homes_named_axes():
    # homing re-anchors state without emitting a motion segment
    program = parse_text("G90\nG1 X5 Y6 Z7\nG28 X\n")
    toolpath = gcode.interpret(program)
    assert toolpath.final_state.position == (0.0, 6.0, 7.0)
    assert len(toolpath.segments) == 1


def test_g28_bare_homes_all():
    program = parse_text("G90\nG1 X5 Y6 Z7\nG28\n")
    toolpath = gcode.interpret(program)
    assert toolpath.final_state.position == (0.0, 0.0, 0.0)


def test_g90_g91_affect_xyz_only_m82_m83_e():
    # G91 relative XYZ while M82 keeps E absolute (E values 0 -> 1 -> 2)
    program = parse_text("G90\nM82\nG28\nG92 E0\nG91\nG1 X5 E1\nG1 X5 E2\n")
    toolpath = gcode.interpret(program)
    assert toolpath.segments[-1].end == (10.0, 0.0, 0.0)
    assert [s.delta_e for s in toolpath.segments] == [1.0, 1.0]


def test_temperature_events_and_waits():
    program = parse_text("M104 S200\nM140 S60\nM109 S210\nM190 S65\n")
    toolpath = gcode.interpret(program)
    events = [(e.target, e.value, e.wait) for e in toolpath.temperature_events]
    assert events == [
        ("nozzle", 200.0, False),
        ("bed", 60.0, False),
        ("nozzle", 210.0, True),
        ("bed", 65.0, True),
    ]


def test_negative_temperature_rejected():
    with pytest.raises(GcodeError):
        gcode.interpret(parse_text("M104 S-5\n"))


def test_temperature_without_s_is_noop():
    toolpath = gcode.interpret(parse_text("M104\n"))
    assert toolpath.temperature_events == ()


def test_interpreter_determinism(raster10):
    program, _ = raster10
    a = gcode.interpret(program)
    b = gcode.interpret(program)
    assert a == b


# ---------------------------------------------------------------------------
# layers


def test_index_layers_two_layer_program():
    program = parse_text(
        "G90\nM82\nG92 E0\n"
        "G0 Z0.2\nG1 X10 E1\n"
        "G0 Z0.4\nG1 X0 E2\n"
    )
    index = gcode.index_layers(gcode.interpret(program))
    assert [layer.z for layer in index.layers] == [0.2, 0.4]
    assert index.layer_height_estimate == pytest.approx(0.2)


def test_single_layer_estimate_zero():
    program = parse_text("G90\nM82\nG92 E0\nG0 Z0.2\nG1 X10 E1\n")
    index = gcode.index_layers(gcode.interpret(program))
    assert len(index.layers) == 1
    assert index.layer_height_estimate == 0.0


def test_z_hop_travel_does_not_create_layer():
    program = parse_text(
        "G90\nM82\nG92 E0\n"
        "G0 Z0.2\nG1 X10 E1\n"
        "G0 Z5\nG0 X0\nG0 Z0.2\nG1 X5 E2\n"
    )
    index = gcode.index_layers(gcode.interpret(program))
    assert [layer.z for layer in index.layers] == [0.2]


def test_no_printing_moves_errors():
    program = parse_text("G90\nG0 X5\n")
    with pytest.raises(GcodeError):
        gcode.index_layers(gcode.interpret(program))


def test_decreasing_z_errors():
    program = parse_text(
        "G90\nM82\nG92 E0\n"
        "G0 Z0.4\nG1 X10 E1\n"
        "G0 Z0.2\nG1 X0 E2\n"
    )
    with pytest.raises(GcodeError):
        gcode.index_layers(gcode.interpret(program))


def test_extrusion_stats_trace():
    program = parse_text("G90\nM82\nG92 E0\nG0 Z0.2\nG1 X10 E1\nG1 X20 E3\n")
    toolpath = gcode.interpret(program)
    stats = gcode.extrusion_stats(toolpath)
    assert stats.total == 3.0
    assert stats.per_layer == (3.0,)


def test_extrusion_stats_empty():
    stats = gcode.extrusion_stats(gcode.interpret(parse_text("G90\n")))
    assert stats.total == 0.0
    assert stats.per_layer == ()


def test_extrusion_stats_retraction_only():
    program = parse_text("G90\nM82\nG92 E0\nG1 E-2\nG1 E0\n")
    stats = gcode.extrusion_stats(gcode.interpret(program))
    assert stats.total == 0.0


def test_per_layer_conservation(raster10):
    program, facts = raster10
    stats = gcode.extrusion_stats(gcode.interpret(program))
    assert stats.total == pytest.approx(facts["extrusion_total"])
    assert list(stats.per_layer) == pytest.approx(list(facts["extrusion_per_layer"]))


# ---------------------------------------------------------------------------
# occupancy grid


def test_voxelize_empty_toolpath():
    grid = gcode.voxelize(gcode.interpret(parse_text("G90\n")))
    assert grid.count_occupied() == 0


def test_voxelize_single_segment_run():
    # 10 mm X-axis print, resolution 0.2, bead 0.5: about 50 cells along X
    program = parse_text("G90\nM82\nG92 E0\nG0 Z0.1\nG1 X10 E1\n")
    toolpath = gcode.interpret(program)
    grid = gcode.voxelize(
        toolpath, resolution=0.2, bead_width=0.5, layer_height=0.2
    )
    occupied = grid.occupied_cells()
    xs = sorted({c[0] for c in occupied})
    assert 48 <= len(xs) <= 56
    assert xs == list(range(xs[0], xs[0] + len(xs)))


def test_voxelize_deterministic(raster_small):
    program, _ = raster_small
    toolpath = gcode.interpret(program)
    a = gcode.voxelize(toolpath)
    b = gcode.voxelize(toolpath)
    assert a == b


def test_voxelize_monotone_under_segment_removal(raster_small):
    program, _ = raster_small
    toolpath = gcode.interpret(program)
    full = gcode.voxelize(toolpath)
    pruned_segments = tuple(toolpath.segments[: len(toolpath.segments) // 2])
    pruned = gcode.Toolpath(
        segments=pruned_segments,
        dwells=toolpath.dwells,
        temperature_events=toolpath.temperature_events,
        retractions=toolpath.retractions,
        final_state=toolpath.final_state,
    )
    sub = gcode.voxelize(pruned, frame=(full.origin, full.dims))
    full_bits = np.frombuffer(full.bits, dtype=np.uint8)
    sub_bits = np.frombuffer(sub.bits, dtype=np.uint8)
    assert np.array_equal(full_bits & sub_bits, sub_bits)


def test_voxelize_cell_budget():
    program = parse_text("G90\nM82\nG92 E0\nG0 Z0.1\nG1 X1000 E1\n")
    toolpath = gcode.interpret(program)
    with pytest.raises(ValueError):
        gcode.voxelize(toolpath, resolution=0.001)


def test_grid_codec_round_trip(raster_small):
    program, _ = raster_small
    grid = gcode.voxelize(gcode.interpret(program))
    data = grid.to_bytes()
    assert data[:8] == b"AMTGRID1"
    again = gcode.OccupancyGrid.from_bytes(data)
    assert again == grid
    assert again.to_bytes() == data


def test_grid_codec_rejects_bad_magic(raster_small):
    program, _ = raster_small
    data = gcode.voxelize(gcode.interpret(program)).to_bytes()
    with pytest.raises(ValueError):
        gcode.OccupancyGrid.from_bytes(b"XXXXXXXX" + data[8:])


def test_grid_codec_rejects_truncation(raster_small):
    program, _ = raster_small
    data = gcode.voxelize(gcode.interpret(program)).to_bytes()
    with pytest.raises(ValueError):
        gcode.OccupancyGrid.from_bytes(data[:-1])


def test_grid_get_and_frame(raster_small):
    program, _ = raster_small
    grid = gcode.voxelize(gcode.interpret(program))
    cells = grid.occupied_cells()
    assert len(cells) > 0
    ix, iy, iz = (int(v) for v in cells[0])
    assert grid.get(ix, iy, iz)
    assert grid.same_frame(grid)
