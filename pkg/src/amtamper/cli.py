"""Command-line interface: inspect, inject, diff/verify, risk, fixture.

Exit codes follow the verification contract everywhere: 0 clean/valid,
2 tampered/invalid, 3 suspect, 1 any error (including usage errors). All
randomness flows from --seed (default 42), so identical invocations on
identical inputs produce byte-identical output. JSON output is the stable
contract; text output is for humans and may change.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__, corpus, detect, gcode, mesh, risk, sabotage
from .errors import AmTamperError
from .mesh import DEFAULT_SEED, Aabb

STL_SUFFIXES = {".stl"}
GCODE_SUFFIXES = {".gcode", ".gco", ".g", ".nc"}

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_TAMPERED = 2
EXIT_SUSPECT = 3


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; our contract reserves 2 for
    'tampered', so usage errors are remapped to 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def _vec3(text: str) -> tuple[float, float, float]:
    parts = [p for p in text.replace(",", " ").split() if p]
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"expected three numbers, got {text!r}")
    return tuple(float(p) for p in parts)


def _size3(text: str) -> tuple[float, float, float]:
    parts = [p for p in text.replace(",", " ").split() if p]
    if len(parts) == 1:
        v = float(parts[0])
        return (v, v, v)
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"expected one or three numbers, got {text!r}")
    return tuple(float(p) for p in parts)


def _layer_selector(text: str):
    if text == "every":
        return "every"
    try:
        return {int(p) for p in text.replace(",", " ").split() if p}
    except ValueError as exc:
        raise argparse.ArgumentTypeError(
            f"expected 'every' or a layer list, got {text!r}"
        ) from exc


def _load_any(path: Path):
    """Return ("mesh", TriangleMesh) or ("gcode", GCodeProgram)."""
    data = path.read_bytes()
    suffix = path.suffix.lower()
    if suffix in STL_SUFFIXES:
        return "mesh", mesh.parse_stl(data)
    if suffix in GCODE_SUFFIXES:
        return "gcode", gcode.parse_gcode(data)
    try:
        return "mesh", mesh.parse_stl(data)
    except AmTamperError:
        return "gcode", gcode.parse_gcode(data)


def _emit(args, payload: dict, text: str) -> None:
    if args.format == "json":
        out = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    else:
        out = text
    if getattr(args, "out", None):
        Path(args.out).write_text(out)
    else:
        sys.stdout.write(out)


# ---------------------------------------------------------------------------
# inspect


def _inspect_mesh(m, args) -> tuple[dict, str]:
    report = mesh.check_watertight(m)
    box = mesh.bounding_box(m)
    payload = {
        "type": "mesh",
        "facets": m.n_facets,
        "vertices": int(len(m.vertices)),
        "volume": mesh.signed_volume(m),
        "surface_area": mesh.surface_area(m),
        "aabb": box.to_json_dict(),
        "watertight": report.to_json_dict(),
    }
    lines = [
        "type: mesh",
        f"facets: {m.n_facets}",
        f"vertices: {len(m.vertices)}",
        f"volume: {mesh.signed_volume(m):.6f}",
        f"surface area: {mesh.surface_area(m):.6f}",
        f"aabb: {box.min} .. {box.max}",
        f"watertight: {report.is_watertight}",
    ]
    if report.is_watertight:
        shells = mesh.decompose_shells(m, seed=args.seed)
        voids = sum(1 for s in shells if s.classification == "void")
        payload["shells"] = [s.to_json_dict() for s in shells]
        payload["shell_count"] = len(shells)
        payload["void_count"] = voids
        lines.append(f"shells: {len(shells)} ({voids} void)")
    else:
        lines.append(
            f"  boundary={report.boundary_edge_count} "
            f"non_manifold={report.non_manifold_edge_count} "
            f"inconsistent={report.inconsistent_orientation_edge_count}"
        )
    return payload, "\n".join(lines) + "\n"


def _inspect_gcode(program, args) -> tuple[dict, str]:
    toolpath = gcode.interpret(program)
    structured = sum(1 for l in program.lines if l.command is not None)
    stats = gcode.extrusion_stats(toolpath)
    payload = {
        "type": "gcode",
        "lines": len(program.lines),
        "structured_lines": structured,
        "opaque_lines": len(program.lines) - structured,
        "segments": len(toolpath.segments),
        "printing_moves": len(toolpath.printing_segments()),
        "extrusion_total": stats.total,
        "dwell_total_ms": sum(d.milliseconds for d in toolpath.dwells),
        "retractions": len(toolpath.retractions),
        "temperature_events": [
            {"target": e.target, "value": e.value, "wait": e.wait}
            for e in toolpath.temperature_events
        ],
    }
    lines = [
        "type: gcode",
        f"lines: {len(program.lines)} ({structured} structured)",
        f"segments: {len(toolpath.segments)} "
        f"({len(toolpath.printing_segments())} printing)",
        f"extrusion total: {stats.total:.6f}",
        f"dwell total: {payload['dwell_total_ms']:.1f} ms",
        f"retractions: {len(toolpath.retractions)}",
        f"temperature events: {len(toolpath.temperature_events)}",
    ]
    try:
        index = gcode.index_layers(toolpath)
        payload["layers"] = len(index.layers)
        payload["layer_height_estimate"] = index.layer_height_estimate
        payload["per_layer_extrusion"] = list(stats.per_layer)
        payload["layer_zs"] = [layer.z for layer in index.layers]
        lines.append(
            f"layers: {len(index.layers)} "
            f"(height estimate {index.layer_height_estimate:.4f})"
        )
    except AmTamperError:
        payload["layers"] = 0
        lines.append("layers: none (no printing moves)")
    return payload, "\n".join(lines) + "\n"


def _cmd_inspect(args) -> int:
    kind, obj = _load_any(Path(args.path))
    if kind == "mesh":
        payload, text = _inspect_mesh(obj, args)
    else:
        payload, text = _inspect_gcode(obj, args)
    _emit(args, payload, text)
    return EXIT_OK


# ---------------------------------------------------------------------------
# inject


def _default_out(path: Path) -> Path:
    return path.with_name(path.stem + ".tampered" + path.suffix)


def _gcode_region(args) -> sabotage.Region:
    aabb = None
    if args.region_min is not None or args.region_max is not None:
        if args.region_min is None or args.region_max is None:
            raise AmTamperError("give both --region-min and --region-max")
        aabb = Aabb(args.region_min, args.region_max)
    layers = None
    if args.layers is not None and args.layers != "every":
        layers = frozenset(args.layers)
    return sabotage.Region(aabb=aabb, layers=layers)


def _cmd_inject(args) -> int:
    path = Path(args.path)
    kind, obj = _load_any(path)
    chosen = [
        name
        for name, flag in (
            ("void", args.void),
            ("reorient", args.reorient),
            ("scale-extrusion", args.scale_extrusion is not None),
            ("temperature", args.temperature),
            ("feedrate", args.feedrate is not None),
            ("delay", args.delay is not None),
        )
        if flag
    ]
    if len(chosen) != 1:
        raise AmTamperError(
            "choose exactly one defect: --void, --reorient, --scale-extrusion, "
            "--temperature, --feedrate, or --delay"
        )
    defect = chosen[0]

    if defect in ("void", "reorient"):
        if kind != "mesh":
            raise AmTamperError(f"--{defect} needs an STL input")
        if defect == "void":
            if args.center is None:
                raise AmTamperError("--void needs --center")
            struts = sabotage.StrutSpec(
                count=args.struts, cross_section=args.strut_cross_section
            )
            void = sabotage.VoidSpec(
                center=args.center,
                size=args.size if args.size is not None else (0.1, 0.1, 0.1),
                clearance=args.clearance,
                struts=struts,
            )
            tampered, spec = sabotage.inject_void(obj, void)
        else:
            rotation = mesh.rotation_about_axis(args.axis, args.degrees)
            tampered, spec = sabotage.reorient(obj, rotation)
        out = Path(args.out) if args.out else _default_out(path)
        out.write_bytes(mesh.write_stl(tampered, fmt=args.stl_format))
    else:
        if kind != "gcode":
            raise AmTamperError(f"--{defect.replace('_', '-')} needs a G-code input")
        if defect == "scale-extrusion":
            tampered, spec = sabotage.scale_extrusion(
                obj, _gcode_region(args), args.scale_extrusion
            )
        elif defect == "temperature":
            tampered, spec = sabotage.tamper_temperature(
                obj, target=args.target, set_to=args.set, offset=args.offset
            )
        elif defect == "feedrate":
            tampered, spec = sabotage.tamper_feedrate(
                obj, _gcode_region(args), args.feedrate
            )
        else:
            selector = args.layers if args.layers is not None else "every"
            tampered, spec = sabotage.inject_layer_delays(
                obj, args.delay, selector
            )
        out = Path(args.out) if args.out else _default_out(path)
        out.write_text(gcode.serialize(tampered))

    sidecar = out.with_name(out.name + ".defect.json")
    sidecar.write_text(spec.to_json())
    sys.stdout.write(f"wrote {out}\nwrote {sidecar}\n")
    return EXIT_OK


# ---------------------------------------------------------------------------
# diff / verify


def _report_text(payload: dict) -> str:
    lines = []
    for key, value in payload.items():
        if key in ("schema_version", "report"):
            continue
        lines.append(f"{key}: {value}")
    return "\n".join(lines) + "\n"


def _cmd_diff(args) -> int:
    ref_kind, ref = _load_any(Path(args.reference))
    cand_kind, cand = _load_any(Path(args.candidate))
    if ref_kind != cand_kind:
        raise AmTamperError(
            f"cannot compare {ref_kind} against {cand_kind}; "
            "reference and candidate must be the same type"
        )
    if ref_kind == "mesh":
        tolerances = detect.MeshTolerances(
            volume_rel=args.tolerance,
            area_rel=args.tolerance,
            deviation_mm=args.tolerance,
            aabb_mm=args.tolerance,
        )
        report = detect.mesh_diff(
            ref, cand, tolerances, samples=args.samples, seed=args.seed
        )
    else:
        report = detect.gcode_diff(
            ref,
            cand,
            resolution=args.resolution,
            bead_width=args.bead_width,
        )
    payload = report.to_json_dict()
    _emit(args, payload, _report_text(payload))
    return detect.EXIT_CODES[report.verdict]


# ---------------------------------------------------------------------------
# risk


def _cmd_risk_score(args) -> int:
    weights = risk.Weights(args.weights) if args.weights else None
    value = risk.score(args.factors, weights)
    payload = {
        "factors": args.factors,
        "score": value,
        "display": risk.display_score(value),
    }
    _emit(args, payload, f"{risk.display_score(value)}\n")
    return EXIT_OK


def _load_manipulations(path: Path) -> list[tuple[str, float]]:
    data = json.loads(path.read_text())
    if isinstance(data, dict) and "manipulations" in data:
        data = data["manipulations"]
    if not isinstance(data, dict) or not data:
        raise AmTamperError(
            "manipulations file must map names to "
            "{am_proficiency, engineering_knowledge}"
        )
    out = []
    for name, raw in data.items():
        if not isinstance(raw, dict):
            raise AmTamperError(f"manipulation {name!r}: expected an object")
        try:
            assessment = risk.ManipulationAssessment(
                am_proficiency=raw["am_proficiency"],
                engineering_knowledge=raw["engineering_knowledge"],
            )
        except KeyError as exc:
            raise AmTamperError(
                f"manipulation {name!r}: missing factor {exc.args[0]!r}"
            ) from None
        out.append((name, risk.score_manipulation(assessment)))
    return out


def _cmd_risk_heatmap(args) -> int:
    catalog = risk.builtin_catalog()
    vectors = [
        (vector_id, risk.score_vector(assessment))
        for vector_id, assessment in sorted(catalog.vector_assessments.items())
    ]
    if args.manipulations is None:
        raise AmTamperError(
            "no built-in manipulation assessments exist; "
            "supply --manipulations FILE"
        )
    manipulations = _load_manipulations(Path(args.manipulations))
    hm = risk.heat_map(vectors, manipulations, combiner=args.combiner)
    if args.format == "csv":
        out = hm.to_csv()
    elif args.format == "json":
        out = hm.to_json()
    else:
        out = hm.to_text()
    if args.out:
        Path(args.out).write_text(out)
    else:
        sys.stdout.write(out)
    return EXIT_OK


def _cmd_risk_validate(args) -> int:
    taxonomy = risk.load_taxonomy()
    chain = risk.AttackChain(
        goal=args.goal,
        influence=args.influence,
        influenced_element=args.influenced_element,
        compromised_element=args.element,
        attack_vector=args.vector,
    )
    violations = risk.validate_chain(chain, taxonomy)
    payload = {"valid": not violations, "violations": violations}
    if violations:
        text = "invalid chain:\n" + "".join(f"  - {v}\n" for v in violations)
    else:
        text = "chain is valid\n"
    _emit(args, payload, text)
    return EXIT_OK if not violations else EXIT_TAMPERED


def _cmd_risk_catalog(args) -> int:
    catalog = risk.builtin_catalog()
    findings = risk.catalog_check(catalog)
    payload = {"vectors": findings}
    lines = []
    for f in findings:
        flags = []
        if not f["matches_equal_weights"]:
            flags.append("differs from equal-weight recomputation")
        if not f["reachable_under_any_weights"]:
            flags.append("unreachable under any normalized weights")
        note = f" [{'; '.join(flags)}]" if flags else ""
        lines.append(
            f"{f['vector']}: factors {tuple(f['factors'])} "
            f"listed {f['listed_score']} "
            f"recomputed {f['equal_weight_display']}{note}"
        )
    _emit(args, payload, "\n".join(lines) + "\n")
    return EXIT_OK


# ---------------------------------------------------------------------------
# fixture


def _cmd_fixture(args) -> int:
    spec = corpus.FixtureSpec(
        kind=args.kind,
        dimensions=tuple(args.dimensions or ()),
        layers=args.layers,
        lines_per_layer=args.lines,
    )
    out = Path(args.out)
    if args.kind in ("raster", "retraction"):
        program, facts = corpus.make_print(spec)
        out.write_text(gcode.serialize(program))
    else:
        fixture_mesh, facts = corpus.make_mesh(spec)
        out.write_bytes(mesh.write_stl(fixture_mesh, fmt=args.stl_format))
    facts = {k: _jsonable(v) for k, v in facts.items()}
    sys.stdout.write(json.dumps(facts, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def _jsonable(value):
    if isinstance(value, tuple):
        return [_jsonable(v) for v in value]
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    return value


# ---------------------------------------------------------------------------
# parser


def _add_common(parser, out=True):
    parser.add_argument("--seed", type=int, default=DEFAULT_SEED,
                        help="seed for all randomized internals (default 42)")
    parser.add_argument("--format", choices=("json", "text"), default="text",
                        help="report format (default text)")
    if out:
        parser.add_argument("--out", help="write output to a file instead of stdout")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="amtamper",
        description="Inspect, tamper with, and verify 3D-printing artifacts.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("inspect", help="summarize an STL or G-code file")
    p.add_argument("path")
    _add_common(p)
    p.set_defaults(handler=_cmd_inspect)

    p = sub.add_parser("inject", help="apply one defect, write file + sidecar")
    p.add_argument("path")
    p.add_argument("--void", action="store_true", help="insert an internal cavity")
    p.add_argument("--center", type=_vec3, help="void center, e.g. 0.5,0.5,0.5")
    p.add_argument("--size", type=_size3, help="void size (one or three numbers)")
    p.add_argument("--clearance", type=float, default=0.2,
                   help="minimum distance from existing surfaces (default 0.2)")
    p.add_argument("--struts", type=int, default=0,
                   help="number of internal support struts (default 0)")
    p.add_argument("--strut-cross-section", type=float, default=0.05,
                   help="strut cross-section in mm (default 0.05)")
    p.add_argument("--reorient", action="store_true",
                   help="rotate the part about its bounding-box center")
    p.add_argument("--axis", type=_vec3, default=(0.0, 0.0, 1.0),
                   help="rotation axis (default 0,0,1)")
    p.add_argument("--degrees", type=float, default=90.0,
                   help="rotation angle (default 90)")
    p.add_argument("--scale-extrusion", type=float, metavar="FACTOR",
                   help="scale in-region deposition by FACTOR")
    p.add_argument("--temperature", action="store_true",
                   help="rewrite temperature targets")
    p.add_argument("--target", choices=("nozzle", "bed"), default="nozzle")
    p.add_argument("--set", type=float, help="set temperature to this value")
    p.add_argument("--offset", type=float, help="shift temperature by this delta")
    p.add_argument("--feedrate", type=float, metavar="FACTOR",
                   help="scale in-region feedrates by FACTOR")
    p.add_argument("--delay", type=float, metavar="MS",
                   help="insert G4 dwells at layer boundaries")
    p.add_argument("--layers", type=_layer_selector,
                   help="layer selection: 'every' or e.g. 1,3,5")
    p.add_argument("--region-min", type=_vec3, help="region AABB corner")
    p.add_argument("--region-max", type=_vec3, help="region AABB corner")
    p.add_argument("--stl-format", choices=("binary", "ascii"), default="binary")
    p.add_argument("--out", help="output path (default <input>.tampered<ext>)")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.set_defaults(handler=_cmd_inject)

    for name, help_text in (
        ("diff", "compare a candidate against a reference"),
        ("verify", "alias of diff"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("reference")
        p.add_argument("candidate")
        p.add_argument("--tolerance", type=float, default=1e-6,
                       help="clean-verdict tolerance (default 1e-6)")
        p.add_argument("--resolution", type=float, default=0.5,
                       help="voxel resolution in mm (default 0.5)")
        p.add_argument("--bead-width", type=float, default=0.5,
                       help="extrusion bead width in mm (default 0.5)")
        p.add_argument("--samples", type=int, default=detect.MIN_SURFACE_SAMPLES,
                       help="surface deviation sample count (default 10000)")
        _add_common(p)
        p.set_defaults(handler=_cmd_diff)

    p = sub.add_parser("risk", help="difficulty scoring and taxonomy tools")
    risk_sub = p.add_subparsers(dest="risk_command", required=True)

    p = risk_sub.add_parser("score", help="score a factor list")
    p.add_argument("factors", type=int, nargs="+")
    p.add_argument("--weights", type=float, nargs="+",
                   help="per-factor weights summing to 1 (default equal)")
    _add_common(p)
    p.set_defaults(handler=_cmd_risk_score)

    p = risk_sub.add_parser("heatmap", help="vector x manipulation heat map")
    p.add_argument("--builtin", action="store_true",
                   help="use the built-in attack-vector catalog (default)")
    p.add_argument("--manipulations", help="JSON file of manipulation assessments")
    p.add_argument("--combiner", choices=sorted(risk.COMBINERS), default="mean")
    p.add_argument("--format", choices=("text", "json", "csv"), default="text")
    p.add_argument("--out", help="write output to a file instead of stdout")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.set_defaults(handler=_cmd_risk_heatmap)

    p = risk_sub.add_parser("validate", help="validate an attack chain")
    p.add_argument("--goal", required=True)
    p.add_argument("--influence", required=True)
    p.add_argument("--influenced-element", required=True)
    p.add_argument("--element", required=True, help="compromised element id")
    p.add_argument("--vector", required=True, help="attack vector id")
    _add_common(p)
    p.set_defaults(handler=_cmd_risk_validate)

    p = risk_sub.add_parser("catalog", help="show the built-in vector catalog")
    _add_common(p)
    p.set_defaults(handler=_cmd_risk_catalog)

    p = sub.add_parser("fixture", help="generate a synthetic test fixture")
    p.add_argument("kind", choices=corpus.KINDS)
    p.add_argument("--dimensions", type=float, nargs="+",
                   help="kind-specific dimensions")
    p.add_argument("--layers", type=int, default=3)
    p.add_argument("--lines", type=int, default=4)
    p.add_argument("--stl-format", choices=("binary", "ascii"), default="binary")
    p.add_argument("--out", required=True)
    p.set_defaults(handler=_cmd_fixture)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_ERROR
    try:
        return args.handler(args)
    except AmTamperError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
