import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.stats import chisquare

from sdfseg.shape_data import (
    Box,
    Cylinder,
    LabeledMesh,
    LabeledPointCloud,
    Normalization,
    PlyParseError,
    Sphere,
    SyntheticShapeSpec,
    UnlabeledMeshError,
    generate_synthetic,
    load_labeled_mesh,
    normalize,
    sample_surface,
    save_labeled_mesh,
)


def _random_mesh(rng, n_vertices=12, n_faces=8, num_parts=3) -> LabeledMesh:
    vertices = rng.standard_normal((n_vertices, 3))
    faces = np.array([
        rng.choice(n_vertices, size=3, replace=False) for _ in range(n_faces)
    ])
    return LabeledMesh(
        vertices=vertices,
        faces=faces,
        face_labels=rng.integers(0, num_parts, n_faces),
    )


def _unit_square(label=0, z=0.0):
    vertices = np.array([[0, 0, z], [1, 0, z], [1, 1, z], [0, 1, z]], dtype=np.float64)
    faces = np.array([[0, 1, 2], [0, 2, 3]])
    return vertices, faces, np.full(2, label)


# ---------------------------------------------------------------------------
# PLY / OBJ round trips
# ---------------------------------------------------------------------------


def test_single_triangle_ply(tmp_path):
    mesh = LabeledMesh(
        vertices=np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0]]),
        faces=np.array([[0, 1, 2]]),
        face_labels=np.array([0]),
    )
    path = tmp_path / "tri.ply"
    save_labeled_mesh(mesh, path)
    loaded = load_labeled_mesh(path)
    assert len(loaded.faces) == 1
    assert loaded.num_parts == 1


def test_sparse_labels_preserved(tmp_path):
    mesh = LabeledMesh(
        vertices=np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]]),
        faces=np.array([[0, 1, 2], [0, 1, 3]]),
        face_labels=np.array([0, 2]),  # no label 1 anywhere
    )
    path = tmp_path / "sparse.ply"
    save_labeled_mesh(mesh, path)
    loaded = load_labeled_mesh(path)
    assert loaded.num_parts == 3
    np.testing.assert_array_equal(loaded.face_labels, [0, 2])


@pytest.mark.parametrize("binary", [True, False])
def test_roundtrip_random_meshes(tmp_path, binary):
    rng = np.random.default_rng(5)
    for trial in range(5):
        mesh = _random_mesh(rng)
        path = tmp_path / f"m{trial}_{binary}.ply"
        save_labeled_mesh(mesh, path, binary=binary)
        loaded = load_labeled_mesh(path)
        # bit-faithful for 64-bit coordinates, exact for labels
        np.testing.assert_array_equal(loaded.vertices, mesh.vertices)
        np.testing.assert_array_equal(loaded.faces, mesh.faces)
        np.testing.assert_array_equal(loaded.face_labels, mesh.face_labels)


def test_roundtrip_with_vertex_labels(tmp_path):
    rng = np.random.default_rng(6)
    mesh = _random_mesh(rng)
    mesh = LabeledMesh(
        vertices=mesh.vertices, faces=mesh.faces, face_labels=mesh.face_labels,
        vertex_labels=rng.integers(0, 3, len(mesh.vertices)),
    )
    path = tmp_path / "vl.ply"
    save_labeled_mesh(mesh, path)
    loaded = load_labeled_mesh(path)
    np.testing.assert_array_equal(loaded.vertex_labels, mesh.vertex_labels)


def test_write_is_deterministic(tmp_path):
    rng = np.random.default_rng(7)
    mesh = _random_mesh(rng)
    p1, p2 = tmp_path / "a.ply", tmp_path / "b.ply"
    save_labeled_mesh(mesh, p1, comments=["hello"])
    save_labeled_mesh(mesh, p2, comments=["hello"])
    assert p1.read_bytes() == p2.read_bytes()


def test_ascii_ply_parses():
    mesh_src = (
        "ply\nformat ascii 1.0\n"
        "element vertex 3\nproperty double x\nproperty double y\nproperty double z\n"
        "element face 1\nproperty list uchar int vertex_indices\nproperty int label\n"
        "end_header\n"
        "0 0 0\n1 0 0\n0 1 0\n"
        "3 0 1 2 4\n"
    )
    from sdfseg.shape_data import _read_ply

    mesh = _read_ply(mesh_src.encode("ascii"))
    assert mesh.num_parts == 5
    np.testing.assert_array_equal(mesh.faces, [[0, 1, 2]])


def test_malformed_ply_names_byte_offset(tmp_path):
    path = tmp_path / "bad.ply"
    path.write_bytes(b"ply\nformat ascii 1.0\nelement vertex nope\nend_header\n")
    with pytest.raises(PlyParseError, match="byte offset"):
        load_labeled_mesh(path)


def test_truncated_binary_ply(tmp_path):
    rng = np.random.default_rng(8)
    mesh = _random_mesh(rng)
    path = tmp_path / "trunc.ply"
    save_labeled_mesh(mesh, path)
    data = path.read_bytes()
    path.write_bytes(data[: len(data) - 7])
    with pytest.raises(PlyParseError, match="byte offset"):
        load_labeled_mesh(path)


def test_unlabeled_ply_rejected(tmp_path):
    path = tmp_path / "nolabel.ply"
    path.write_bytes(
        b"ply\nformat ascii 1.0\n"
        b"element vertex 3\nproperty double x\nproperty double y\nproperty double z\n"
        b"element face 1\nproperty list uchar int vertex_indices\n"
        b"end_header\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n"
    )
    with pytest.raises(UnlabeledMeshError):
        load_labeled_mesh(path)


def test_obj_with_sidecar(tmp_path):
    obj = tmp_path / "shape.obj"
    obj.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n")
    with pytest.raises(UnlabeledMeshError):
        load_labeled_mesh(obj)
    (tmp_path / "shape.obj.labels").write_text("2\n")
    mesh = load_labeled_mesh(obj)
    assert mesh.num_parts == 3
    np.testing.assert_array_equal(mesh.face_labels, [2])


# ---------------------------------------------------------------------------
# Surface sampling
# ---------------------------------------------------------------------------


def test_sample_unit_square_labels_and_normals():
    v, f, lab = _unit_square(label=0)
    mesh = LabeledMesh(vertices=v, faces=f, face_labels=lab)
    cloud = sample_surface(mesh, 1000, seed=0)
    assert np.all(cloud.labels == 0)
    np.testing.assert_allclose(cloud.normals, np.tile([0.0, 0.0, 1.0], (1000, 1)))
    assert cloud.points[:, 2].max() == 0.0


def test_sample_area_weighting_two_squares():
    v0, f0, l0 = _unit_square(label=0, z=0.0)
    v1, f1, l1 = _unit_square(label=1, z=1.0)
    mesh = LabeledMesh(
        vertices=np.concatenate([v0, v1]),
        faces=np.concatenate([f0, f1 + 4]),
        face_labels=np.concatenate([l0, l1]),
    )
    cloud = sample_surface(mesh, 10000, seed=3)
    frac0 = (cloud.labels == 0).mean()
    assert abs(frac0 - 0.5) < 0.02  # binomial bound at n=10000


def test_sample_exact_count():
    v, f, lab = _unit_square()
    mesh = LabeledMesh(vertices=v, faces=f, face_labels=lab)
    assert len(sample_surface(mesh, 30000, seed=0)) == 30000


def test_sample_histogram_matches_area_fractions():
    # one face of area 0.5 (label 0) vs two of total area 1.0 (label 1)
    v = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0],
                  [0, 0, 2], [1, 0, 2], [1, 1, 2], [0, 1, 2]], dtype=np.float64)
    f = np.array([[0, 1, 2], [3, 4, 5], [3, 5, 6]])
    mesh = LabeledMesh(vertices=v, faces=f, face_labels=np.array([0, 1, 1]))
    cloud = sample_surface(mesh, 100000, seed=11)
    observed = np.bincount(cloud.labels, minlength=2)
    expected = np.array([1 / 3, 2 / 3]) * 100000
    assert chisquare(observed, expected).pvalue > 0.01


def test_sample_deterministic():
    v, f, lab = _unit_square()
    mesh = LabeledMesh(vertices=v, faces=f, face_labels=lab)
    a = sample_surface(mesh, 100, seed=9)
    b = sample_surface(mesh, 100, seed=9)
    np.testing.assert_array_equal(a.points, b.points)


def test_sample_degenerate_mesh_errors():
    v = np.array([[0.0, 0, 0], [0, 0, 0], [0, 0, 0]])
    mesh = LabeledMesh(vertices=v, faces=np.array([[0, 1, 2]]), face_labels=np.array([0]))
    with pytest.raises(ValueError, match="degenerate"):
        sample_surface(mesh, 10, seed=0)


# ---------------------------------------------------------------------------
# Normalization
# ---------------------------------------------------------------------------


def _cloud_from_points(points):
    n = len(points)
    normals = np.tile([0.0, 0.0, 1.0], (n, 1))
    return LabeledPointCloud(points=points, normals=normals,
                             labels=np.zeros(n, dtype=int), num_parts=1)


def test_normalize_identity_fixed_point():
    pts = np.array([[0.9, 0, 0], [-0.9, 0, 0], [0, 0.5, 0], [0, -0.5, 0]])
    out, norm = normalize(_cloud_from_points(pts))
    np.testing.assert_allclose(norm.center, [0, 0, 0.0], atol=1e-15)
    assert norm.scale == pytest.approx(1.0)
    np.testing.assert_allclose(out.points, pts, atol=1e-15)


def test_normalize_two_point_example():
    out, norm = normalize(_cloud_from_points(np.array([[0.0, 0, 0], [2.0, 0, 0]])))
    np.testing.assert_allclose(norm.center, [1.0, 0, 0])
    assert norm.scale == pytest.approx(0.9)
    np.testing.assert_allclose(out.points, [[-0.9, 0, 0], [0.9, 0, 0]])


def test_normalize_zero_extent_errors():
    with pytest.raises(ValueError, match="zero extent"):
        normalize(_cloud_from_points(np.zeros((4, 3))))


def test_normalize_leaves_normals_alone(rng):
    nrm = rng.standard_normal((50, 3))
    nrm /= np.linalg.norm(nrm, axis=1, keepdims=True)
    cloud = LabeledPointCloud(points=rng.uniform(-5, 5, (50, 3)) + 7.0, normals=nrm,
                              labels=np.zeros(50, dtype=int), num_parts=1)
    out, _ = normalize(cloud)
    np.testing.assert_array_equal(out.normals, cloud.normals)
    assert np.abs(out.points).max() == pytest.approx(0.9)


@settings(max_examples=30, deadline=None)
@given(st.integers(min_value=0, max_value=2**31 - 1))
def test_normalize_roundtrip_property(seed):
    rng = np.random.default_rng(seed)
    pts = rng.uniform(-100, 100, (rng.integers(2, 40), 3))
    if np.abs(pts - 0.5 * (pts.min(0) + pts.max(0))).max() == 0:
        return
    out, norm = normalize(_cloud_from_points(pts))
    back = norm.invert(out.points)
    scale = np.abs(pts).max()
    assert np.abs(back - pts).max() < 1e-9 * max(scale, 1.0)


def test_normalization_serialization_roundtrip():
    norm = Normalization(center=np.array([1.0, -2.0, 3.0]), scale=0.37)
    again = Normalization.from_dict(norm.to_dict())
    np.testing.assert_array_equal(again.center, norm.center)
    assert again.scale == norm.scale


# ---------------------------------------------------------------------------
# Synthetic generation
# ---------------------------------------------------------------------------


def test_synthetic_single_sphere():
    spec = SyntheticShapeSpec(primitives=(Sphere(center=(0, 0, 0), radius=1.0),))
    mesh = generate_synthetic(spec, resolution=48)
    assert np.all(mesh.face_labels == 0)
    radii = np.linalg.norm(mesh.vertices, axis=1)
    assert np.abs(radii - 1.0).max() < 2.0 / 48


def test_synthetic_disjoint_union_components_and_labels():
    spec = SyntheticShapeSpec(primitives=(
        Sphere(center=(0, 0, 0), radius=0.5),
        Box(center=(3.0, 0, 0), half_sizes=(0.4, 0.4, 0.4)),
    ))
    mesh = generate_synthetic(spec, resolution=64)
    assert set(np.unique(mesh.face_labels)) == {0, 1}
    edges = np.concatenate([mesh.faces[:, [0, 1]], mesh.faces[:, [1, 2]], mesh.faces[:, [2, 0]]])
    n = len(mesh.vertices)
    adj = coo_matrix((np.ones(len(edges)), (edges[:, 0], edges[:, 1])), shape=(n, n))
    n_components, _ = connected_components(adj, directed=False)
    assert n_components == 2


def test_synthetic_capsule_label_boundary_near_bisector():
    sphere = Sphere(center=(0.0, 0.0, 0.3), radius=0.4)
    cyl = Cylinder(center=(0.0, 0.0, -0.3), radius=0.3, half_height=0.5)
    spec = SyntheticShapeSpec(primitives=(sphere, cyl))
    mesh = generate_synthetic(spec, resolution=96)
    assert set(np.unique(mesh.face_labels)) == {0, 1}

    centroids = mesh.vertices[mesh.faces].mean(axis=1)
    # labeling must be exactly nearest-primitive at the centroid
    d = np.stack([sphere.sdf(centroids), cyl.sdf(centroids)], axis=1)
    np.testing.assert_array_equal(mesh.face_labels, np.argmin(d, axis=1))

    # faces adjacent across the label boundary: the analytic bisector
    # |d_sphere - d_cyl| = 0 must pass within one face diameter (both SDFs
    # are 1-Lipschitz, so |d0 - d1| <= 2 * distance to the bisector)
    tri = mesh.vertices[mesh.faces]
    diam = np.linalg.norm(tri - np.roll(tri, 1, axis=1), axis=2).max(axis=1)
    edges = {}
    boundary_faces = set()
    for fi, face in enumerate(mesh.faces):
        for a, b in ((0, 1), (1, 2), (2, 0)):
            key = tuple(sorted((face[a], face[b])))
            if key in edges:
                fj = edges[key]
                if mesh.face_labels[fi] != mesh.face_labels[fj]:
                    boundary_faces.update((fi, fj))
            else:
                edges[key] = fi
    assert boundary_faces, "expected a label boundary on an overlapping union"
    for fi in boundary_faces:
        gap = abs(d[fi, 0] - d[fi, 1])
        assert gap <= 2.0 * 2.0 * diam[fi] + 1e-12


def test_synthetic_empty_spec_errors():
    # a 2-point-per-axis grid only samples the padded corners, all outside
    spec = SyntheticShapeSpec(primitives=(Sphere(center=(0, 0, 0), radius=1.0),))
    with pytest.raises(ValueError, match="no surface"):
        generate_synthetic(spec, resolution=2)


def test_spec_validation():
    with pytest.raises(ValueError):
        SyntheticShapeSpec(primitives=())
    with pytest.raises(ValueError):
        SyntheticShapeSpec(primitives=(Sphere(center=(0, 0, 0), radius=-1.0),))
    with pytest.raises(ValueError, match="unknown primitive"):
        SyntheticShapeSpec.from_dict({"primitives": [{"kind": "torus"}]})


def test_spec_from_dict_defaults_labels_to_order():
    spec = SyntheticShapeSpec.from_dict({
        "primitives": [
            {"kind": "sphere", "center": [0, 0, 0], "radius": 1.0},
            {"kind": "box", "center": [2, 0, 0], "half_sizes": [0.5, 0.5, 0.5]},
        ]
    })
    assert spec.labels == (0, 1)


def test_cloud_invariants_enforced():
    with pytest.raises(ValueError, match="unit length"):
        LabeledPointCloud(points=np.zeros((2, 3)), normals=np.ones((2, 3)),
                          labels=np.zeros(2, dtype=int), num_parts=1)
    with pytest.raises(ValueError, match="equal length"):
        LabeledPointCloud(points=np.zeros((2, 3)),
                          normals=np.tile([0, 0, 1.0], (3, 1)),
                          labels=np.zeros(2, dtype=int), num_parts=1)
    with pytest.raises(ValueError, match=r"\[0, num_parts\)"):
        LabeledPointCloud(points=np.zeros((2, 3)),
                          normals=np.tile([0, 0, 1.0], (2, 1)),
                          labels=np.array([0, 5]), num_parts=2)


def test_mesh_invariants_enforced():
    with pytest.raises(ValueError, match="out of range"):
        LabeledMesh(vertices=np.zeros((2, 3)), faces=np.array([[0, 1, 2]]),
                    face_labels=np.array([0]))
    with pytest.raises(ValueError, match="face_labels"):
        LabeledMesh(vertices=np.zeros((3, 3)), faces=np.array([[0, 1, 2]]),
                    face_labels=np.array([0, 1]))
