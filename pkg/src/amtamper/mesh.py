"""Triangle meshes, the STL codec, and the geometric queries built on them.

Coordinates are millimeters. Files carry 32-bit floats; everything in memory
is float64, so values read from disk are preserved exactly and internal
operations run at full precision. Stored facet normals are ignored on input
and recomputed from the vertex winding on output: winding is the only
orientation truth this module trusts.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import GeometryError, StlError

DEFAULT_SEED = 42
MAX_RAY_RETRIES = 16
# Never parallel to an axis-aligned plane, which is most of the geometry
# this tool sees (boxes, raster paths, injected voids).
PRIMARY_RAY_DIRECTION = np.array([1.0, 2.0, 3.0]) / math.sqrt(14.0)

_BINARY_RECORD = np.dtype(
    [("normal", "<f4", (3,)), ("verts", "<f4", (3, 3)), ("attr", "<u2")]
)


@dataclass(frozen=True)
class Aabb:
    """Axis-aligned bounding box with inclusive bounds."""

    min: tuple[float, float, float]
    max: tuple[float, float, float]

    def __post_init__(self):
        object.__setattr__(self, "min", tuple(float(v) for v in self.min))
        object.__setattr__(self, "max", tuple(float(v) for v in self.max))
        if len(self.min) != 3 or len(self.max) != 3:
            raise ValueError("Aabb bounds must be 3-vectors")
        if any(a > b for a, b in zip(self.min, self.max)):
            raise ValueError(f"inverted Aabb: {self.min} > {self.max}")

    @property
    def extent(self) -> tuple[float, float, float]:
        return tuple(b - a for a, b in zip(self.min, self.max))

    @property
    def center(self) -> tuple[float, float, float]:
        return tuple((a + b) / 2.0 for a, b in zip(self.min, self.max))

    def volume(self) -> float:
        e = self.extent
        return e[0] * e[1] * e[2]

    def contains(self, point) -> bool:
        return all(a <= p <= b for a, p, b in zip(self.min, point, self.max))

    def contains_box(self, other: "Aabb") -> bool:
        return self.contains(other.min) and self.contains(other.max)

    def dilated(self, margin: float) -> "Aabb":
        return Aabb(
            tuple(a - margin for a in self.min),
            tuple(b + margin for b in self.max),
        )

    def union(self, other: "Aabb") -> "Aabb":
        return Aabb(
            tuple(min(a, b) for a, b in zip(self.min, other.min)),
            tuple(max(a, b) for a, b in zip(self.max, other.max)),
        )

    def almost_equal(self, other: "Aabb", tol: float) -> bool:
        return all(
            abs(a - b) <= tol for a, b in zip(self.min + self.max, other.min + other.max)
        )

    def to_json_dict(self) -> dict:
        return {"min": list(self.min), "max": list(self.max)}


@dataclass(frozen=True, eq=False)
class TriangleMesh:
    """Indexed triangle soup: float64 vertices, int32 facet index triples.

    ``header`` holds the 80 opaque bytes of a binary STL source and is empty
    for ASCII input or programmatic construction.
    """

    vertices: np.ndarray
    facets: np.ndarray
    header: bytes = b""

    def __post_init__(self):
        v = np.array(self.vertices, dtype=np.float64, copy=True).reshape(-1, 3)
        f = np.array(self.facets, dtype=np.int32, copy=True).reshape(-1, 3)
        if f.size:
            if f.min() < 0 or f.max() >= len(v):
                raise ValueError("facet index out of range")
            if (
                (f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 0] == f[:, 2])
            ).any():
                raise ValueError("facet references a repeated vertex index")
        v.setflags(write=False)
        f.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "facets", f)
        object.__setattr__(self, "header", bytes(self.header))

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_facets(self) -> int:
        return len(self.facets)

    def facet_corners(self) -> np.ndarray:
        """(n_facets, 3, 3) corner coordinates."""
        return self.vertices[self.facets]

    def __eq__(self, other) -> bool:
        if not isinstance(other, TriangleMesh):
            return NotImplemented
        # Bit-level equality: NaNs compare equal to themselves, -0.0 != 0.0.
        return (
            self.header == other.header
            and self.facets.shape == other.facets.shape
            and self.vertices.shape == other.vertices.shape
            and self.facets.tobytes() == other.facets.tobytes()
            and self.vertices.tobytes() == other.vertices.tobytes()
        )

    def __hash__(self):
        return hash((self.header, self.vertices.tobytes(), self.facets.tobytes()))


@dataclass(frozen=True)
class WatertightReport:
    is_watertight: bool
    boundary_edge_count: int
    non_manifold_edge_count: int
    inconsistent_orientation_edge_count: int

    def to_json_dict(self) -> dict:
        return {
            "is_watertight": self.is_watertight,
            "boundary_edge_count": self.boundary_edge_count,
            "non_manifold_edge_count": self.non_manifold_edge_count,
            "inconsistent_orientation_edge_count": self.inconsistent_orientation_edge_count,
        }


@dataclass(frozen=True)
class Shell:
    """One edge-connected component of a watertight mesh."""

    facet_indices: np.ndarray
    signed_volume: float
    nesting_depth: int
    classification: str  # "solid" | "void"

    def to_json_dict(self) -> dict:
        return {
            "facet_count": int(len(self.facet_indices)),
            "signed_volume": self.signed_volume,
            "nesting_depth": self.nesting_depth,
            "classification": self.classification,
        }


# ---------------------------------------------------------------------------
# construction helpers


def make_box(lo, hi, inward: bool = False) -> TriangleMesh:
    """Axis-aligned 12-facet box between corners ``lo`` and ``hi``.

    Outward winding by default; ``inward=True`` flips every facet so the box
    reads as a cavity (negative signed volume).
    """
    lo = tuple(float(v) for v in lo)
    hi = tuple(float(v) for v in hi)
    if any(a >= b for a, b in zip(lo, hi)):
        raise ValueError(f"degenerate box: {lo} .. {hi}")
    x0, y0, z0 = lo
    x1, y1, z1 = hi
    vertices = np.array(
        [
            [x0, y0, z0],
            [x1, y0, z0],
            [x0, y1, z0],
            [x1, y1, z0],
            [x0, y0, z1],
            [x1, y0, z1],
            [x0, y1, z1],
            [x1, y1, z1],
        ]
    )
    facets = np.array(
        [
            [0, 2, 1], [1, 2, 3],  # -z
            [4, 5, 6], [5, 7, 6],  # +z
            [0, 1, 4], [1, 5, 4],  # -y
            [2, 6, 3], [3, 6, 7],  # +y
            [0, 4, 2], [2, 4, 6],  # -x
            [1, 3, 5], [3, 7, 5],  # +x
        ],
        dtype=np.int32,
    )
    if inward:
        facets = facets[:, [0, 2, 1]]
    return TriangleMesh(vertices, facets)


def flip(mesh: TriangleMesh) -> TriangleMesh:
    """Reverse the winding of every facet."""
    return TriangleMesh(mesh.vertices, mesh.facets[:, [0, 2, 1]], mesh.header)


def merge(*meshes: TriangleMesh) -> TriangleMesh:
    """Concatenate meshes into one; the first mesh's header is kept."""
    if not meshes:
        raise ValueError("merge needs at least one mesh")
    vertices = []
    facets = []
    offset = 0
    for m in meshes:
        vertices.append(m.vertices)
        facets.append(m.facets.astype(np.int64) + offset)
        offset += m.n_vertices
    return TriangleMesh(
        np.concatenate(vertices), np.concatenate(facets), meshes[0].header
    )


# ---------------------------------------------------------------------------
# STL codec


def parse_stl(data: bytes) -> TriangleMesh:
    """Decode ASCII or binary STL bytes.

    A file is ASCII only when it starts with ``solid`` *and* the whole body
    parses under the solid/facet/outer-loop grammar; otherwise it is read as
    binary (legal binary files may start with "solid" in the header).
    """
    if not isinstance(data, (bytes, bytearray, memoryview)):
        raise TypeError("parse_stl expects bytes")
    data = bytes(data)
    ascii_error = None
    if data[:5].lower() == b"solid":
        try:
            return _parse_ascii(data)
        except StlError as exc:
            ascii_error = exc
    try:
        return _parse_binary(data)
    except StlError as exc:
        if ascii_error is not None:
            raise StlError(
                f"not parseable as ASCII ({ascii_error}) nor as binary ({exc})"
            ) from exc
        raise


def _dedup_vertices(raw32: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Merge bit-identical float32 vertices, keeping first-occurrence order."""
    n = len(raw32)
    if n == 0:
        return np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int32)
    flat = np.ascontiguousarray(raw32, dtype="<f4")
    keys = flat.view([("x", "<f4"), ("y", "<f4"), ("z", "<f4")]).reshape(-1)
    # np.unique on the raw bit patterns: NaNs stay distinct only from other
    # bit patterns, exactly the "bit equality" the codec promises.
    bits = keys.view(np.dtype((np.void, 12)))
    _, first, inverse = np.unique(bits, return_index=True, return_inverse=True)
    order = np.argsort(first, kind="stable")
    rank = np.empty(len(first), dtype=np.int64)
    rank[order] = np.arange(len(first))
    vertices = flat[np.sort(first)].astype(np.float64)
    facets = rank[inverse].reshape(-1, 3)
    if facets.size and (
        (facets[:, 0] == facets[:, 1])
        | (facets[:, 1] == facets[:, 2])
        | (facets[:, 0] == facets[:, 2])
    ).any():
        raise StlError("degenerate facet: repeated vertex within one triangle")
    return vertices, facets.astype(np.int32)


def _parse_binary(data: bytes) -> TriangleMesh:
    if len(data) < 84:
        raise StlError(f"binary STL needs at least 84 bytes, got {len(data)}")
    header = data[:80]
    (count,) = struct.unpack_from("<I", data, 80)
    body = data[84:]
    expected = 50 * count
    if len(body) < expected:
        raise StlError(
            f"truncated body: header declares {count} triangles "
            f"({expected} bytes), found {len(body)}"
        )
    if len(body) > expected:
        raise StlError(
            f"triangle count mismatch: header declares {count} triangles, "
            f"{len(body) - expected} trailing bytes remain"
        )
    records = np.frombuffer(body, dtype=_BINARY_RECORD, count=count)
    raw = records["verts"].reshape(-1, 3)
    vertices, facets = _dedup_vertices(raw)
    return TriangleMesh(vertices, facets, header)


def _parse_ascii(data: bytes) -> TriangleMesh:
    try:
        text = data.decode("ascii")
    except UnicodeDecodeError as exc:
        raise StlError(f"non-ASCII byte in ASCII STL: {exc}") from exc

    tokens: list[tuple[str, int]] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        for tok in line.split():
            tokens.append((tok, lineno))
    pos = 0

    def peek() -> str | None:
        return tokens[pos][0].lower() if pos < len(tokens) else None

    def take(expected: str | None = None) -> str:
        nonlocal pos
        if pos >= len(tokens):
            raise StlError(f"unexpected end of file, expected {expected!r}")
        tok, lineno = tokens[pos]
        if expected is not None and tok.lower() != expected:
            raise StlError(f"line {lineno}: expected {expected!r}, got {tok!r}")
        pos += 1
        return tok

    def take_float() -> float:
        nonlocal pos
        if pos >= len(tokens):
            raise StlError("unexpected end of file, expected a number")
        tok, lineno = tokens[pos]
        try:
            value = float(tok)
        except ValueError as exc:
            raise StlError(f"line {lineno}: malformed number {tok!r}") from exc
        pos += 1
        return value

    take("solid")
    # Optional name: free tokens up to the first "facet"/"endsolid" keyword.
    while peek() not in ("facet", "endsolid", None):
        take()

    triples: list[list[float]] = []
    while True:
        kw = peek()
        if kw == "endsolid":
            break
        take("facet")
        take("normal")
        take_float(), take_float(), take_float()  # stored normal: ignored
        take("outer")
        take("loop")
        for _ in range(3):
            take("vertex")
            triples.append([take_float(), take_float(), take_float()])
        take("endloop")
        take("endfacet")
    take("endsolid")
    while pos < len(tokens):  # trailing name tokens after endsolid
        take()

    raw = np.asarray(triples, dtype=np.float64).reshape(-1, 3).astype("<f4")
    vertices, facets = _dedup_vertices(raw)
    return TriangleMesh(vertices, facets, b"")


def facet_normals(mesh: TriangleMesh) -> np.ndarray:
    """Unit normals recomputed from winding; zero vector for zero-area facets."""
    corners = mesh.facet_corners()
    raw = np.cross(corners[:, 1] - corners[:, 0], corners[:, 2] - corners[:, 0])
    norms = np.linalg.norm(raw, axis=1)
    out = np.zeros_like(raw)
    ok = norms > 0.0
    out[ok] = raw[ok] / norms[ok, None]
    return out


def write_stl(mesh: TriangleMesh, fmt: str = "binary") -> bytes:
    """Serialize a mesh; ``fmt`` is ``"binary"`` or ``"ascii"``."""
    if fmt == "binary":
        return _write_binary(mesh)
    if fmt == "ascii":
        return _write_ascii(mesh)
    raise ValueError(f"unknown STL format {fmt!r}")


def _write_binary(mesh: TriangleMesh) -> bytes:
    header = mesh.header[:80].ljust(80, b"\0")
    records = np.zeros(mesh.n_facets, dtype=_BINARY_RECORD)
    records["normal"] = facet_normals(mesh).astype("<f4")
    records["verts"] = mesh.facet_corners().astype("<f4")
    return header + struct.pack("<I", mesh.n_facets) + records.tobytes()


def _fmt6(value: float) -> str:
    # 6 significant digits; normalize -0 away.
    return f"{value + 0.0:.6g}"


def _write_ascii(mesh: TriangleMesh) -> bytes:
    normals = facet_normals(mesh)
    corners = mesh.facet_corners()
    out = ["solid amtamper"]
    for f in range(mesh.n_facets):
        n = normals[f]
        out.append(f"  facet normal {_fmt6(n[0])} {_fmt6(n[1])} {_fmt6(n[2])}")
        out.append("    outer loop")
        for v in corners[f]:
            out.append(f"      vertex {_fmt6(v[0])} {_fmt6(v[1])} {_fmt6(v[2])}")
        out.append("    endloop")
        out.append("  endfacet")
    out.append("endsolid amtamper")
    out.append("")
    return "\n".join(out).encode("ascii")


# ---------------------------------------------------------------------------
# measures


def signed_volume(mesh: TriangleMesh) -> float:
    """Divergence-theorem volume; negative for inward-wound shells."""
    corners = mesh.facet_corners()
    if not len(corners):
        return 0.0
    cross = np.cross(corners[:, 1], corners[:, 2])
    return float(np.einsum("ij,ij->i", corners[:, 0], cross).sum() / 6.0)


def surface_area(mesh: TriangleMesh) -> float:
    corners = mesh.facet_corners()
    if not len(corners):
        return 0.0
    cross = np.cross(corners[:, 1] - corners[:, 0], corners[:, 2] - corners[:, 0])
    return float(np.linalg.norm(cross, axis=1).sum() / 2.0)


def bounding_box(mesh: TriangleMesh) -> Aabb:
    if mesh.n_vertices == 0:
        raise GeometryError("empty mesh has no bounding box")
    used = mesh.vertices[np.unique(mesh.facets)] if mesh.n_facets else mesh.vertices
    return Aabb(tuple(used.min(axis=0)), tuple(used.max(axis=0)))


# ---------------------------------------------------------------------------
# topology


def _edge_census(facets: np.ndarray, n_vertices: int):
    f = facets.astype(np.int64)
    edges = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
    lo = edges.min(axis=1)
    hi = edges.max(axis=1)
    forward = edges[:, 0] < edges[:, 1]
    key = lo * n_vertices + hi
    uniq, inverse, total = np.unique(key, return_inverse=True, return_counts=True)
    fwd = np.bincount(inverse[forward], minlength=len(uniq))
    return uniq, inverse, total, fwd


def check_watertight(mesh: TriangleMesh) -> WatertightReport:
    """Census of directed edges.

    Watertight means every undirected edge is used exactly twice, once in
    each direction: consistent outward orientation with no boundary and no
    non-manifold fans.
    """
    if mesh.n_facets == 0:
        return WatertightReport(True, 0, 0, 0)
    _, _, total, fwd = _edge_census(mesh.facets, mesh.n_vertices)
    boundary = int((total == 1).sum())
    non_manifold = int((total > 2).sum())
    inconsistent = int(((total == 2) & ((fwd == 0) | (fwd == 2))).sum())
    return WatertightReport(
        boundary == 0 and non_manifold == 0 and inconsistent == 0,
        boundary,
        non_manifold,
        inconsistent,
    )


def _require_watertight(mesh: TriangleMesh, op: str):
    report = check_watertight(mesh)
    if not report.is_watertight:
        raise GeometryError(
            f"{op} requires a watertight mesh "
            f"(boundary={report.boundary_edge_count}, "
            f"non_manifold={report.non_manifold_edge_count}, "
            f"inconsistent={report.inconsistent_orientation_edge_count})"
        )


class _UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, a: int) -> int:
        root = a
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[a] != root:
            self.parent[a], a = root, self.parent[a]
        return root

    def union(self, a: int, b: int):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[max(ra, rb)] = min(ra, rb)


def _facet_components(mesh: TriangleMesh) -> list[np.ndarray]:
    """Edge-connected facet components, ordered by smallest facet index."""
    m = mesh.n_facets
    _, inverse, total, _ = _edge_census(mesh.facets, mesh.n_vertices)
    facet_of_edge = np.tile(np.arange(m), 3)
    order = np.argsort(inverse, kind="stable")
    uf = _UnionFind(m)
    pos = 0
    for count in total:
        group = facet_of_edge[order[pos : pos + count]]
        for other in group[1:]:
            uf.union(int(group[0]), int(other))
        pos += count
    roots = np.array([uf.find(i) for i in range(m)])
    components = []
    for root in np.unique(roots):
        components.append(np.flatnonzero(roots == root))
    components.sort(key=lambda idx: int(idx[0]))
    return components


def _robust_crossing_counts(vertices, facets, origins, seed) -> np.ndarray:
    """Crossing parity counts with deterministic jittered-direction retries."""
    origins = np.ascontiguousarray(origins, dtype=np.float64).reshape(-1, 3)
    m = len(origins)
    counts = np.zeros(m, dtype=np.int64)
    pending = np.arange(m)
    direction = PRIMARY_RAY_DIRECTION
    rng = np.random.default_rng([0x5EED, int(seed) & 0xFFFFFFFF])
    for _ in range(MAX_RAY_RETRIES + 1):
        c, s = _kernels.ray_crossings(vertices, facets, origins[pending], direction)
        good = s == 0
        counts[pending[good]] = c[good]
        pending = pending[~good]
        if pending.size == 0:
            return counts
        vec = rng.normal(size=3)
        norm = np.linalg.norm(vec)
        while norm < 1e-12:  # pragma: no cover - astronomically unlikely
            vec = rng.normal(size=3)
            norm = np.linalg.norm(vec)
        direction = vec / norm
    raise GeometryError(
        f"ray casting stayed degenerate for {pending.size} point(s) after "
        f"{MAX_RAY_RETRIES} jittered retries; points may lie on the surface"
    )


def contains_points(
    mesh: TriangleMesh, points, seed: int = DEFAULT_SEED, validate: bool = True
) -> np.ndarray:
    """Vectorized containment: odd crossing parity over all facets = inside.

    Void shells are counted by the same parity rule, so cavity interiors
    report as outside the material.
    """
    if validate:
        _require_watertight(mesh, "point containment")
    counts = _robust_crossing_counts(mesh.vertices, mesh.facets, points, seed)
    return counts % 2 == 1


def point_containment(mesh: TriangleMesh, point, seed: int = DEFAULT_SEED) -> bool:
    """True when ``point`` lies in solid material.

    The point must not sit on the surface itself (within ~1e-9 mm): such
    points exhaust the jittered retries and raise GeometryError rather than
    being classified.
    """
    return bool(contains_points(mesh, [point], seed=seed)[0])


def decompose_shells(mesh: TriangleMesh, seed: int = DEFAULT_SEED) -> list[Shell]:
    """Split a watertight mesh into shells and classify solids vs voids.

    Nesting depth counts how many *other* shells contain a representative
    point of the shell; odd depth marks a void. Shells are assumed disjoint
    (the watertight precondition's intent); interpenetrating shells are
    undefined behavior.
    """
    _require_watertight(mesh, "shell decomposition")
    components = _facet_components(mesh)
    corners = mesh.facet_corners()
    shells = []
    for comp in components:
        sub = TriangleMesh(mesh.vertices, mesh.facets[comp])
        volume = signed_volume(sub)
        depth = 0
        for other in components:
            if other is comp:
                continue
            other_facets = mesh.facets[other]
            parity = None
            # A facet centroid can lie exactly on another shell (flush
            # cavities, strut end caps); try further facets before giving up.
            for fi in comp[:64]:
                centroid = corners[fi].mean(axis=0)
                try:
                    counts = _robust_crossing_counts(
                        mesh.vertices, other_facets, centroid[None, :], seed
                    )
                except GeometryError:
                    continue
                parity = int(counts[0]) % 2
                break
            if parity is None:
                raise GeometryError(
                    "could not find a representative point clear of other shells"
                )
            depth += parity
        shells.append(
            Shell(
                facet_indices=comp,
                signed_volume=volume,
                nesting_depth=depth,
                classification="void" if depth % 2 == 1 else "solid",
            )
        )
    return shells


# ---------------------------------------------------------------------------
# rigid motion


def rotation_about_axis(axis, degrees: float) -> np.ndarray:
    """Rodrigues rotation matrix about an arbitrary axis."""
    axis = np.asarray(axis, dtype=np.float64)
    norm = np.linalg.norm(axis)
    if norm == 0.0:
        raise ValueError("rotation axis must be non-zero")
    x, y, z = axis / norm
    theta = math.radians(degrees)
    c, s = math.cos(theta), math.sin(theta)
    k = np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])
    return np.eye(3) + s * k + (1.0 - c) * (k @ k)


def _validate_rotation(rotation: np.ndarray, tol: float = 1e-9):
    if rotation.shape != (3, 3):
        raise GeometryError("rotation must be a 3x3 matrix")
    if np.abs(rotation @ rotation.T - np.eye(3)).max() > tol:
        raise GeometryError("rotation matrix is not orthonormal (tol 1e-9)")
    if abs(np.linalg.det(rotation) - 1.0) > tol:
        raise GeometryError("rotation matrix determinant must be +1 (tol 1e-9)")


def transform(mesh: TriangleMesh, rotation, translation=(0.0, 0.0, 0.0)) -> TriangleMesh:
    """Apply the rigid motion ``x -> R x + t``; fails on non-rigid matrices."""
    rotation = np.asarray(rotation, dtype=np.float64)
    translation = np.asarray(translation, dtype=np.float64).reshape(3)
    _validate_rotation(rotation)
    vertices = mesh.vertices @ rotation.T + translation
    return TriangleMesh(vertices, mesh.facets, mesh.header)
