"""Labeled shape ingestion, normalization, sampling, and synthetic generation.

Meshes carry one integer part label per face (the supervision granularity of
the ingestion path); point clouds carry per-point labels inherited from the
faces they were sampled on. All types are immutable after construction and
all operations are pure given a seed.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .isosurface import marching_cubes

__all__ = [
    "LabeledPointCloud",
    "LabeledMesh",
    "Normalization",
    "Sphere",
    "Box",
    "Cylinder",
    "SyntheticShapeSpec",
    "PlyParseError",
    "UnlabeledMeshError",
    "load_labeled_mesh",
    "save_labeled_mesh",
    "sample_surface",
    "normalize",
    "generate_synthetic",
]

_UNIT_TOL = 1e-6


def _frozen_array(x, dtype, shape_tail=None) -> np.ndarray:
    arr = np.ascontiguousarray(x, dtype=dtype)
    if shape_tail is not None and arr.shape[1:] != shape_tail:
        raise ValueError(f"expected trailing shape {shape_tail}, got {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class LabeledPointCloud:
    """Surface points with unit normals and integer part labels in [0, K)."""

    points: np.ndarray
    normals: np.ndarray
    labels: np.ndarray
    num_parts: int

    def __post_init__(self):
        object.__setattr__(self, "points", _frozen_array(self.points, np.float64, (3,)))
        object.__setattr__(self, "normals", _frozen_array(self.normals, np.float64, (3,)))
        object.__setattr__(self, "labels", _frozen_array(self.labels, np.int64))
        if not (len(self.points) == len(self.normals) == len(self.labels)):
            raise ValueError("points, normals and labels must have equal length")
        if self.num_parts < 1:
            raise ValueError("num_parts must be >= 1")
        if len(self.points):
            norms = np.linalg.norm(self.normals, axis=1)
            if np.abs(norms - 1.0).max() > _UNIT_TOL:
                raise ValueError("normals must be unit length")
            if self.labels.min() < 0 or self.labels.max() >= self.num_parts:
                raise ValueError("labels must lie in [0, num_parts)")

    def __len__(self) -> int:
        return len(self.points)


@dataclass(frozen=True)
class LabeledMesh:
    """Triangle mesh with one part label per face (optional vertex labels)."""

    vertices: np.ndarray
    faces: np.ndarray
    face_labels: np.ndarray
    vertex_labels: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "vertices", _frozen_array(self.vertices, np.float64, (3,)))
        object.__setattr__(self, "faces", _frozen_array(self.faces, np.int64, (3,)))
        object.__setattr__(self, "face_labels", _frozen_array(self.face_labels, np.int64))
        if self.vertex_labels is not None:
            object.__setattr__(self, "vertex_labels", _frozen_array(self.vertex_labels, np.int64))
            if len(self.vertex_labels) != len(self.vertices):
                raise ValueError("vertex_labels length must match vertices")
        if len(self.face_labels) != len(self.faces):
            raise ValueError("face_labels length must match faces")
        if len(self.faces) and (self.faces.min() < 0 or self.faces.max() >= len(self.vertices)):
            raise ValueError("face indices out of range")
        if len(self.face_labels) and self.face_labels.min() < 0:
            raise ValueError("face labels must be non-negative")

    @property
    def num_parts(self) -> int:
        """K, inferred as max label + 1."""
        return int(self.face_labels.max()) + 1 if len(self.face_labels) else 0

    def face_normals(self) -> np.ndarray:
        """Unit normals; zero vector for degenerate faces."""
        tri = self.vertices[self.faces]
        n = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
        lens = np.linalg.norm(n, axis=1, keepdims=True)
        return np.divide(n, lens, out=np.zeros_like(n), where=lens > 0)

    def face_areas(self) -> np.ndarray:
        tri = self.vertices[self.faces]
        return 0.5 * np.linalg.norm(np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]), axis=1)


@dataclass(frozen=True)
class Normalization:
    """Invertible map world -> training volume: (x - center) * scale."""

    center: np.ndarray
    scale: float

    def __post_init__(self):
        object.__setattr__(self, "center", _frozen_array(self.center, np.float64))
        if self.center.shape != (3,):
            raise ValueError("center must be a 3-vector")
        if not self.scale > 0:
            raise ValueError("scale must be positive")

    def apply(self, points: np.ndarray) -> np.ndarray:
        return (np.asarray(points, dtype=np.float64) - self.center) * self.scale

    def invert(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points, dtype=np.float64) / self.scale + self.center

    def to_dict(self) -> dict:
        return {"center": self.center.tolist(), "scale": float(self.scale)}

    @classmethod
    def from_dict(cls, d: dict) -> "Normalization":
        return cls(center=np.asarray(d["center"], dtype=np.float64), scale=float(d["scale"]))


def normalize(cloud: LabeledPointCloud) -> tuple[LabeledPointCloud, Normalization]:
    """Center at the bounding-box centroid and scale so max |coordinate| = 0.9.

    Leaves headroom inside the [-1, 1]^3 query volume. Normals are unchanged.
    """
    if len(cloud) == 0:
        raise ValueError("cannot normalize an empty cloud")
    lo = cloud.points.min(axis=0)
    hi = cloud.points.max(axis=0)
    center = 0.5 * (lo + hi)
    extent = np.abs(cloud.points - center).max()
    if extent == 0.0:
        raise ValueError("cloud has zero extent")
    norm = Normalization(center=center, scale=0.9 / extent)
    out = LabeledPointCloud(
        points=norm.apply(cloud.points),
        normals=cloud.normals,
        labels=cloud.labels,
        num_parts=cloud.num_parts,
    )
    return out, norm


# ---------------------------------------------------------------------------
# Surface sampling
# ---------------------------------------------------------------------------


def sample_surface(mesh: LabeledMesh, n: int, seed: int) -> LabeledPointCloud:
    """Draw ``n`` area-uniform surface samples carrying face labels and normals."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if len(mesh.faces) == 0:
        raise ValueError("mesh has no faces")
    areas = mesh.face_areas()
    total = areas.sum()
    if total <= 0.0:
        raise ValueError("all faces are degenerate")
    rng = np.random.default_rng(seed)
    chosen = rng.choice(len(mesh.faces), size=n, p=areas / total)
    r = rng.random((n, 2))
    flip = r.sum(axis=1) > 1.0
    r[flip] = 1.0 - r[flip]
    tri = mesh.vertices[mesh.faces[chosen]]
    points = tri[:, 0] + r[:, :1] * (tri[:, 1] - tri[:, 0]) + r[:, 1:] * (tri[:, 2] - tri[:, 0])
    normals = mesh.face_normals()[chosen]
    return LabeledPointCloud(
        points=points,
        normals=normals,
        labels=mesh.face_labels[chosen],
        num_parts=max(mesh.num_parts, 1),
    )


# ---------------------------------------------------------------------------
# Synthetic labeled shapes
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Sphere:
    center: tuple
    radius: float

    def sdf(self, p: np.ndarray) -> np.ndarray:
        return np.linalg.norm(p - np.asarray(self.center), axis=-1) - self.radius

    def bounds(self):
        c = np.asarray(self.center, dtype=np.float64)
        return c - self.radius, c + self.radius

    def validate(self):
        if not self.radius > 0:
            raise ValueError("sphere radius must be positive")


@dataclass(frozen=True)
class Box:
    center: tuple
    half_sizes: tuple

    def sdf(self, p: np.ndarray) -> np.ndarray:
        q = np.abs(p - np.asarray(self.center)) - np.asarray(self.half_sizes)
        outside = np.linalg.norm(np.maximum(q, 0.0), axis=-1)
        inside = np.minimum(q.max(axis=-1), 0.0)
        return outside + inside

    def bounds(self):
        c = np.asarray(self.center, dtype=np.float64)
        h = np.asarray(self.half_sizes, dtype=np.float64)
        return c - h, c + h

    def validate(self):
        if not np.all(np.asarray(self.half_sizes) > 0):
            raise ValueError("box half_sizes must be positive")


@dataclass(frozen=True)
class Cylinder:
    """Capped cylinder around ``axis`` through ``center``."""

    center: tuple
    radius: float
    half_height: float
    axis: tuple = (0.0, 0.0, 1.0)

    def sdf(self, p: np.ndarray) -> np.ndarray:
        a = np.asarray(self.axis, dtype=np.float64)
        a = a / np.linalg.norm(a)
        rel = p - np.asarray(self.center)
        y = rel @ a
        radial = np.linalg.norm(rel - np.multiply.outer(y, a), axis=-1)
        d = np.stack([radial - self.radius, np.abs(y) - self.half_height], axis=-1)
        outside = np.linalg.norm(np.maximum(d, 0.0), axis=-1)
        inside = np.minimum(d.max(axis=-1), 0.0)
        return outside + inside

    def bounds(self):
        c = np.asarray(self.center, dtype=np.float64)
        r = self.radius + self.half_height  # loose, axis-independent
        return c - r, c + r

    def validate(self):
        if not (self.radius > 0 and self.half_height > 0):
            raise ValueError("cylinder radius and half_height must be positive")
        if np.linalg.norm(np.asarray(self.axis, dtype=np.float64)) == 0:
            raise ValueError("cylinder axis must be nonzero")


_PRIMITIVE_KINDS = {"sphere": Sphere, "box": Box, "cylinder": Cylinder}


@dataclass(frozen=True)
class SyntheticShapeSpec:
    """A union of labeled primitives; labels default to primitive order."""

    primitives: tuple
    labels: tuple = field(default=())

    def __post_init__(self):
        if len(self.primitives) == 0:
            raise ValueError("at least one primitive required")
        labels = self.labels if self.labels else tuple(range(len(self.primitives)))
        if len(labels) != len(self.primitives):
            raise ValueError("one label per primitive required")
        if any(int(l) < 0 for l in labels):
            raise ValueError("labels must be non-negative")
        object.__setattr__(self, "labels", tuple(int(l) for l in labels))
        object.__setattr__(self, "primitives", tuple(self.primitives))
        for prim in self.primitives:
            prim.validate()

    def sdf(self, p: np.ndarray) -> np.ndarray:
        return np.min(self.per_primitive_sdf(p), axis=-1)

    def per_primitive_sdf(self, p: np.ndarray) -> np.ndarray:
        return np.stack([prim.sdf(p) for prim in self.primitives], axis=-1)

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticShapeSpec":
        prims = []
        labels = []
        entries = d.get("primitives")
        if not entries:
            raise ValueError("shape spec needs a non-empty 'primitives' list")
        for i, entry in enumerate(entries):
            entry = dict(entry)
            kind = entry.pop("kind", None)
            if kind not in _PRIMITIVE_KINDS:
                raise ValueError(f"unknown primitive kind: {kind!r}")
            labels.append(int(entry.pop("label", i)))
            try:
                prims.append(_PRIMITIVE_KINDS[kind](**entry))
            except TypeError as exc:
                raise ValueError(f"bad parameters for {kind}: {exc}") from exc
        return cls(primitives=tuple(prims), labels=tuple(labels))


def generate_synthetic(spec: SyntheticShapeSpec, resolution: int, seed: int = 0) -> LabeledMesh:
    """Triangulate the union of the spec's primitives on a ``resolution``^3 grid.

    Each face is labeled by the primitive whose SDF is smallest at the face
    centroid (ties go to the lowest primitive index). ``seed`` is accepted for
    interface symmetry; generation is fully deterministic.
    """
    if resolution < 2:
        raise ValueError("resolution must be >= 2")
    los, his = zip(*(prim.bounds() for prim in spec.primitives))
    lo = np.min(los, axis=0)
    hi = np.max(his, axis=0)
    pad = 0.05 * float(np.max(hi - lo))
    lo = lo - pad
    hi = hi + pad

    axes = [np.linspace(lo[a], hi[a], resolution) for a in range(3)]
    total = resolution**3
    values = np.empty(total, dtype=np.float64)
    chunk = 1 << 18
    for start in range(0, total, chunk):
        flat = np.arange(start, min(start + chunk, total))
        i, j, k = np.unravel_index(flat, (resolution,) * 3)
        pts = np.column_stack([axes[0][i], axes[1][j], axes[2][k]])
        values[flat] = spec.sdf(pts)
    values = values.reshape((resolution,) * 3)

    verts_idx, faces = marching_cubes(values, level=0.0)
    if len(faces) == 0:
        raise ValueError("spec produced no surface inside its bounds")
    spacing = (hi - lo) / (resolution - 1)
    vertices = lo + verts_idx * spacing

    centroids = vertices[faces].mean(axis=1)
    owner = np.argmin(spec.per_primitive_sdf(centroids), axis=-1)
    face_labels = np.asarray(spec.labels, dtype=np.int64)[owner]
    return LabeledMesh(vertices=vertices, faces=faces, face_labels=face_labels)


# ---------------------------------------------------------------------------
# PLY / OBJ input and output
# ---------------------------------------------------------------------------


class PlyParseError(ValueError):
    """Malformed PLY content; carries the byte offset of the failure."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class UnlabeledMeshError(ValueError):
    """The mesh file carries no per-face label channel."""


_PLY_SCALARS = {
    "char": "i1", "int8": "i1",
    "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2",
    "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4",
    "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4",
    "double": "f8", "float64": "f8",
}


def save_labeled_mesh(mesh: LabeledMesh, path, binary: bool = True, comments=()) -> None:
    """Write a PLY with double-precision vertices and an int face ``label``.

    Output bytes are a deterministic function of the mesh and comments.
    """
    path = Path(path)
    has_vlabels = mesh.vertex_labels is not None
    header = ["ply"]
    header.append("format binary_little_endian 1.0" if binary else "format ascii 1.0")
    for c in comments:
        if "\n" in c:
            raise ValueError("comments must be single-line")
        header.append(f"comment {c}")
    header.append(f"element vertex {len(mesh.vertices)}")
    header += ["property double x", "property double y", "property double z"]
    if has_vlabels:
        header.append("property int label")
    header.append(f"element face {len(mesh.faces)}")
    header.append("property list uchar int vertex_indices")
    header.append("property int label")
    header.append("end_header")

    buf = io.BytesIO()
    buf.write(("\n".join(header) + "\n").encode("ascii"))
    if binary:
        if has_vlabels:
            vdt = np.dtype([("xyz", "<f8", (3,)), ("label", "<i4")])
            varr = np.empty(len(mesh.vertices), dtype=vdt)
            varr["xyz"] = mesh.vertices
            varr["label"] = mesh.vertex_labels
        else:
            varr = mesh.vertices.astype("<f8")
        buf.write(varr.tobytes())
        fdt = np.dtype([("n", "u1"), ("idx", "<i4", (3,)), ("label", "<i4")])
        farr = np.empty(len(mesh.faces), dtype=fdt)
        farr["n"] = 3
        farr["idx"] = mesh.faces
        farr["label"] = mesh.face_labels
        buf.write(farr.tobytes())
    else:
        for i, v in enumerate(mesh.vertices):
            # repr of Python floats is shortest-roundtrip, keeping ASCII exact
            line = f"{float(v[0])!r} {float(v[1])!r} {float(v[2])!r}"
            if has_vlabels:
                line += f" {int(mesh.vertex_labels[i])}"
            buf.write((line + "\n").encode("ascii"))
        for f, lab in zip(mesh.faces, mesh.face_labels):
            buf.write(f"3 {f[0]} {f[1]} {f[2]} {int(lab)}\n".encode("ascii"))
    path.write_bytes(buf.getvalue())


def _parse_ply_header(data: bytes):
    if not data.startswith(b"ply"):
        raise PlyParseError("not a PLY file (missing 'ply' magic)", 0)
    end = data.find(b"end_header\n")
    if end < 0:
        raise PlyParseError("missing end_header", len(data))
    body_start = end + len(b"end_header\n")
    text = data[:end].decode("ascii", errors="replace")
    fmt = None
    elements = []  # (name, count, [(prop_name, kind)]) kind: dtype str or ("list", cnt, item)
    offset = 0
    for line in text.split("\n"):
        stripped = line.strip()
        tok = stripped.split()
        if not tok or tok[0] in ("ply", "comment", "obj_info"):
            offset += len(line) + 1
            continue
        if tok[0] == "format":
            if len(tok) < 2 or tok[1] not in ("ascii", "binary_little_endian"):
                raise PlyParseError(f"unsupported format {stripped!r}", offset)
            fmt = tok[1]
        elif tok[0] == "element":
            if len(tok) != 3:
                raise PlyParseError(f"bad element line {stripped!r}", offset)
            try:
                elements.append([tok[1], int(tok[2]), []])
            except ValueError:
                raise PlyParseError(f"bad element count in {stripped!r}", offset) from None
        elif tok[0] == "property":
            if not elements:
                raise PlyParseError("property before any element", offset)
            if tok[1] == "list":
                if len(tok) != 5 or tok[2] not in _PLY_SCALARS or tok[3] not in _PLY_SCALARS:
                    raise PlyParseError(f"bad list property {stripped!r}", offset)
                elements[-1][2].append((tok[4], ("list", _PLY_SCALARS[tok[2]], _PLY_SCALARS[tok[3]])))
            else:
                if len(tok) != 3 or tok[1] not in _PLY_SCALARS:
                    raise PlyParseError(f"unsupported property {stripped!r}", offset)
                elements[-1][2].append((tok[2], _PLY_SCALARS[tok[1]]))
        else:
            raise PlyParseError(f"unrecognized header line {stripped!r}", offset)
        offset += len(line) + 1
    if fmt is None:
        raise PlyParseError("missing format line", 0)
    return fmt, elements, body_start


def _read_ply(data: bytes) -> LabeledMesh:
    fmt, elements, pos = _parse_ply_header(data)
    names = [e[0] for e in elements]
    if "vertex" not in names or "face" not in names:
        raise PlyParseError("PLY must contain vertex and face elements", 0)

    columns = {}
    if fmt == "ascii":
        text = data[pos:].decode("ascii", errors="replace").split("\n")
        row = 0
        for name, count, props in elements:
            parsed = {p: [] for p, _ in props}
            for _ in range(count):
                if row >= len(text):
                    raise PlyParseError(f"unexpected end of data in element {name}", len(data))
                tok = text[row].split()
                row += 1
                i = 0
                for pname, kind in props:
                    try:
                        if isinstance(kind, tuple):
                            cnt = int(tok[i])
                            vals = [float(t) for t in tok[i + 1 : i + 1 + cnt]]
                            if len(vals) != cnt:
                                raise IndexError
                            i += 1 + cnt
                            parsed[pname].append(vals)
                        else:
                            parsed[pname].append(float(tok[i]))
                            i += 1
                    except (ValueError, IndexError):
                        raise PlyParseError(
                            f"bad {name} row {len(parsed[pname])}", pos
                        ) from None
            columns[name] = parsed
    else:
        for name, count, props in elements:
            fixed = all(not isinstance(k, tuple) for _, k in props)
            if fixed:
                dt = np.dtype([(p, "<" + k) for p, k in props])
                nbytes = dt.itemsize * count
                if pos + nbytes > len(data):
                    raise PlyParseError(f"truncated element {name}", pos)
                arr = np.frombuffer(data, dtype=dt, count=count, offset=pos)
                columns[name] = {p: arr[p] for p, _ in props}
                pos += nbytes
            else:
                parsed = {p: [] for p, _ in props}
                for _ in range(count):
                    for pname, kind in props:
                        if isinstance(kind, tuple):
                            _, cnt_t, item_t = kind
                            cnt_size = np.dtype(cnt_t).itemsize
                            if pos + cnt_size > len(data):
                                raise PlyParseError(f"truncated list count in {name}", pos)
                            cnt = int(np.frombuffer(data, dtype="<" + cnt_t, count=1, offset=pos)[0])
                            pos += cnt_size
                            item_size = np.dtype(item_t).itemsize
                            if pos + cnt * item_size > len(data):
                                raise PlyParseError(f"truncated list items in {name}", pos)
                            vals = np.frombuffer(data, dtype="<" + item_t, count=cnt, offset=pos)
                            pos += cnt * item_size
                            parsed[pname].append(vals.tolist())
                        else:
                            size = np.dtype(kind).itemsize
                            if pos + size > len(data):
                                raise PlyParseError(f"truncated scalar in {name}", pos)
                            parsed[pname].append(
                                float(np.frombuffer(data, dtype="<" + kind, count=1, offset=pos)[0])
                            )
                            pos += size
                columns[name] = parsed

    vcols = columns["vertex"]
    for req in ("x", "y", "z"):
        if req not in vcols:
            raise PlyParseError(f"vertex element lacks property {req}", 0)
    vertices = np.stack(
        [np.asarray(vcols["x"], np.float64), np.asarray(vcols["y"], np.float64),
         np.asarray(vcols["z"], np.float64)],
        axis=1,
    )
    vertex_labels = None
    if "label" in vcols:
        vertex_labels = np.asarray(vcols["label"], np.int64)

    fcols = columns["face"]
    idx_key = "vertex_indices" if "vertex_indices" in fcols else "vertex_index"
    if idx_key not in fcols:
        raise PlyParseError("face element lacks vertex_indices", 0)
    raw_faces = fcols[idx_key]
    face_list = [list(map(int, f)) for f in raw_faces]
    if any(len(f) != 3 for f in face_list):
        raise PlyParseError("only triangle faces are supported", 0)
    faces = np.asarray(face_list, dtype=np.int64).reshape(-1, 3)
    if "label" not in fcols:
        raise UnlabeledMeshError("mesh has no per-face 'label' property")
    face_labels = np.asarray(fcols["label"], np.int64)
    return LabeledMesh(vertices=vertices, faces=faces, face_labels=face_labels,
                       vertex_labels=vertex_labels)


def _read_obj(path: Path) -> LabeledMesh:
    vertices = []
    faces = []
    for raw in path.read_text().split("\n"):
        tok = raw.split()
        if not tok:
            continue
        if tok[0] == "v":
            vertices.append([float(t) for t in tok[1:4]])
        elif tok[0] == "f":
            idx = [int(t.split("/")[0]) - 1 for t in tok[1:]]
            if len(idx) != 3:
                raise ValueError(f"{path}: only triangle faces are supported")
            faces.append(idx)
    sidecar = Path(str(path) + ".labels")
    if not sidecar.exists():
        raise UnlabeledMeshError(
            f"OBJ has no label channel; expected sidecar {sidecar.name}"
        )
    face_labels = np.array(
        [int(line) for line in sidecar.read_text().split() if line.strip()],
        dtype=np.int64,
    )
    return LabeledMesh(
        vertices=np.asarray(vertices, dtype=np.float64).reshape(-1, 3),
        faces=np.asarray(faces, dtype=np.int64).reshape(-1, 3),
        face_labels=face_labels,
    )


def load_labeled_mesh(path) -> LabeledMesh:
    """Load a labeled mesh from PLY (face ``label`` property) or OBJ + sidecar."""
    path = Path(path)
    if path.suffix.lower() == ".obj":
        return _read_obj(path)
    return _read_ply(path.read_bytes())


def read_ply_comments(path) -> list[str]:
    """Comment lines from a PLY header (used for embedded provenance)."""
    data = Path(path).read_bytes()
    end = data.find(b"end_header\n")
    if end < 0:
        return []
    out = []
    for line in data[:end].decode("ascii", errors="replace").split("\n"):
        if line.startswith("comment "):
            out.append(line[len("comment "):])
    return out
