"""Property-based invariants across the codecs, geometry, and scoring."""


import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from amtamper import detect, gcode, mesh, risk

from conftest import parse_text

finite_coord = st.floats(
    min_value=-500.0, max_value=500.0, allow_nan=False, allow_infinity=False
)
box_lo = st.tuples(finite_coord, finite_coord, finite_coord)
positive_extent = st.floats(min_value=0.1, max_value=100.0)


@st.composite
def boxes(draw):
    lo = np.array(draw(box_lo))
    extent = np.array(
        [draw(positive_extent), draw(positive_extent), draw(positive_extent)]
    )
    return mesh.make_box(lo, lo + extent)


@st.composite
def grid_boxes(draw):
    """Boxes on a 0.125 grid with |coordinate| < 1000.

    Such coordinates have at most 6 significant decimal digits, so the ASCII
    codec's 6-significant-digit numbers represent them exactly and the
    ASCII/binary comparison tests the codecs rather than decimal truncation.
    """
    ticks = st.integers(min_value=-2000, max_value=2000)
    spans = st.integers(min_value=1, max_value=800)
    lo = np.array([draw(ticks), draw(ticks), draw(ticks)]) * 0.125
    extent = np.array([draw(spans), draw(spans), draw(spans)]) * 0.125
    return mesh.make_box(lo, lo + extent)


# ---------------------------------------------------------------------------
# STL codec round trips


@given(boxes())
@settings(max_examples=40, deadline=None)
def test_binary_round_trip_fixpoint(m):
    data = mesh.write_stl(m, fmt="binary")
    again = mesh.parse_stl(data)
    assert mesh.write_stl(again, fmt="binary") == data


@given(grid_boxes())
@settings(max_examples=40, deadline=None)
def test_ascii_binary_agree(m):
    from_ascii = mesh.parse_stl(mesh.write_stl(m, fmt="ascii"))
    from_binary = mesh.parse_stl(mesh.write_stl(m, fmt="binary"))
    assert from_ascii.n_facets == from_binary.n_facets
    va = mesh.signed_volume(from_ascii)
    vb = mesh.signed_volume(from_binary)
    assert va == pytest.approx(vb, rel=1e-6, abs=1e-6)


@given(boxes())
@settings(max_examples=30, deadline=None)
def test_box_volume_matches_extents(m):
    box = mesh.bounding_box(m)
    assert mesh.signed_volume(m) == pytest.approx(
        box.volume(), rel=1e-9, abs=1e-6
    )


# ---------------------------------------------------------------------------
# rigid-transform invariance


@given(
    boxes(),
    st.tuples(
        st.floats(min_value=-1, max_value=1),
        st.floats(min_value=-1, max_value=1),
        st.floats(min_value=-1, max_value=1),
    ).filter(lambda a: sum(x * x for x in a) > 1e-4),
    st.floats(min_value=-180.0, max_value=180.0),
)
@settings(max_examples=40, deadline=None)
def test_rotation_preserves_volume_and_area(m, axis, degrees):
    # the divergence-theorem sum cancels terms of coordinate-cubed magnitude,
    # so a small absolute slack is needed for geometry far from the origin
    r = mesh.rotation_about_axis(axis, degrees)
    moved = mesh.transform(m, r, translation=(1.0, -2.0, 3.0))
    assert mesh.signed_volume(moved) == pytest.approx(
        mesh.signed_volume(m), rel=1e-8, abs=1e-6
    )
    assert mesh.surface_area(moved) == pytest.approx(
        mesh.surface_area(m), rel=1e-8, abs=1e-8
    )


@given(boxes())
@settings(max_examples=20, deadline=None)
def test_watertight_boxes(m):
    assert mesh.check_watertight(m).is_watertight


# ---------------------------------------------------------------------------
# G-code canonicalization


gcode_number = st.floats(
    min_value=-9999.0, max_value=9999.0, allow_nan=False, allow_infinity=False
)


@given(gcode_number)
def test_format_number_round_trips_to_5_decimals(value):
    text = gcode.format_number(value)
    assert float(text) == pytest.approx(value, abs=5e-6)
    assert "e" not in text and "E" not in text
    assert text != "-0"


@given(st.lists(gcode_number, min_size=1, max_size=4))
def test_serialize_parse_fixpoint_generated_moves(values):
    lines = ["G90", "M82", "G92 E0"]
    for i, v in enumerate(values):
        lines.append(f"G1 X{gcode.format_number(v)} E{i + 1}")
    text = "\n".join(lines) + "\n"
    once = gcode.serialize(parse_text(text))
    assert gcode.serialize(parse_text(once)) == once


@given(st.lists(st.floats(min_value=0.01, max_value=5.0), min_size=1, max_size=6))
@settings(max_examples=40, deadline=None)
def test_extrusion_conservation(deltas):
    # absolute-E program: total deposited equals the final E value
    lines = ["G90", "M82", "G92 E0", "G0 Z0.2"]
    e = 0.0
    for i, d in enumerate(deltas):
        e += d
        lines.append(f"G1 X{i + 1} E{gcode.format_number(e)}")
    toolpath = gcode.interpret(parse_text("\n".join(lines) + "\n"))
    total = gcode.extrusion_stats(toolpath).total
    assert total == pytest.approx(
        float(gcode.format_number(e)), rel=1e-9, abs=1e-9
    )


@given(st.integers(min_value=1, max_value=5), st.integers(min_value=1, max_value=5))
@settings(max_examples=15, deadline=None)
def test_interpreter_deterministic(layers, lines):
    from amtamper import corpus

    program, _ = corpus.make_print(
        corpus.FixtureSpec("raster", layers=layers, lines_per_layer=lines)
    )
    assert gcode.interpret(program) == gcode.interpret(program)


# ---------------------------------------------------------------------------
# voxel monotonicity


@given(st.integers(min_value=2, max_value=4), st.integers(min_value=2, max_value=6))
@settings(max_examples=10, deadline=None)
def test_voxel_monotone(layers, lines):
    from amtamper import corpus

    program, _ = corpus.make_print(
        corpus.FixtureSpec("raster", layers=layers, lines_per_layer=lines)
    )
    toolpath = gcode.interpret(program)
    full = gcode.voxelize(toolpath)
    pruned = gcode.Toolpath(
        segments=toolpath.segments[: len(toolpath.segments) // 2],
        dwells=toolpath.dwells,
        temperature_events=toolpath.temperature_events,
        retractions=toolpath.retractions,
        final_state=toolpath.final_state,
    )
    sub = gcode.voxelize(pruned, frame=(full.origin, full.dims))
    full_bits = np.frombuffer(full.bits, dtype=np.uint8)
    sub_bits = np.frombuffer(sub.bits, dtype=np.uint8)
    assert np.array_equal(full_bits & sub_bits, sub_bits)
    assert sub.count_occupied() <= full.count_occupied()


# ---------------------------------------------------------------------------
# scoring properties


factor = st.integers(min_value=1, max_value=3)
factor_triples = st.tuples(factor, factor, factor)


@given(factor_triples)
def test_score_within_factor_range(factors):
    value = risk.score(factors)
    assert min(factors) <= value <= max(factors)


@given(factor_triples)
def test_score_permutation_invariant_under_equal_weights(factors):
    value = risk.score(factors)
    for perm in ((1, 0, 2), (2, 1, 0), (1, 2, 0)):
        shuffled = tuple(factors[i] for i in perm)
        assert risk.score(shuffled) == pytest.approx(value)


@given(factor_triples, factor_triples)
def test_score_monotone(a, b):
    if all(x <= y for x, y in zip(a, b)):
        assert risk.score(a) <= risk.score(b) + 1e-12


@given(
    factor_triples,
    st.tuples(
        st.floats(min_value=0.01, max_value=1.0),
        st.floats(min_value=0.01, max_value=1.0),
        st.floats(min_value=0.01, max_value=1.0),
    ),
)
def test_weighted_score_stays_in_range(factors, raw):
    total = sum(raw)
    weights = risk.Weights(tuple(w / total for w in raw))
    value = risk.score(factors, weights)
    assert min(factors) - 1e-9 <= value <= max(factors) + 1e-9


@given(st.floats(min_value=1.0, max_value=3.0))
def test_bucket_total(value):
    assert risk.bucket_of(value) in ("low", "medium", "high")


@given(st.floats(min_value=1.0, max_value=3.0))
def test_display_score_one_decimal(value):
    text = risk.display_score(value)
    float(text)
    assert len(text.split(".")[1]) == 1


# ---------------------------------------------------------------------------
# detection soundness (randomized identity comparisons)


@given(boxes())
@settings(max_examples=20, deadline=None)
def test_mesh_self_diff_always_clean(m):
    assert detect.mesh_diff(m, m).verdict == "clean"


@given(boxes())
@settings(max_examples=20, deadline=None)
def test_round_trip_diff_always_clean(m):
    again = mesh.parse_stl(mesh.write_stl(m))
    assert detect.mesh_diff(again, again).verdict == "clean"
