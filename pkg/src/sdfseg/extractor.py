"""Isosurface extraction with label evaluation.

Marching cubes runs at the zero level set over the fixed normalized volume
[-1, 1]^3; SDF queries are chunked to bound memory. Extracted vertices are
mapped back to world coordinates through the training normalization, the
segmentation head is evaluated at the *normalized* vertex positions, and
each face takes the majority label of its three vertices.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import field_net
from .field_net import FieldNetwork
from .isosurface import marching_cubes
from .shape_data import LabeledMesh, Normalization

__all__ = ["GridSpec", "extract_mesh", "extract_isosurface", "majority_label"]

# Chunks below this size would fall into a different BLAS kernel path and
# break bitwise chunk-size invariance; chunking is a memory knob only.
_MIN_CHUNK = 1024


@dataclass(frozen=True)
class GridSpec:
    """Sampling lattice over [-1, 1]^3: ``resolution`` points per axis."""

    resolution: int = 256
    chunk_size: int = 65536

    def __post_init__(self):
        if self.resolution < 2:
            raise ValueError("resolution must be >= 2")
        if self.chunk_size < 1:
            raise ValueError("chunk_size must be >= 1")

    @property
    def spacing(self) -> float:
        return 2.0 / (self.resolution - 1)

    def axis(self) -> np.ndarray:
        return np.linspace(-1.0, 1.0, self.resolution)


def _chunked(fn, points: np.ndarray, chunk_size: int) -> np.ndarray:
    chunk = max(int(chunk_size), _MIN_CHUNK)
    out = [fn(points[i : i + chunk]) for i in range(0, len(points), chunk)]
    return np.concatenate(out, axis=0)


def evaluate_grid(sdf_fn, grid: GridSpec) -> np.ndarray:
    """Sample ``sdf_fn`` on the lattice, chunked; returns (R, R, R) values."""
    r = grid.resolution
    ax = grid.axis()
    chunk = max(int(grid.chunk_size), _MIN_CHUNK)
    values = np.empty(r * r * r, dtype=np.float64)
    for start in range(0, values.size, chunk):
        stop = min(start + chunk, values.size)
        flat = np.arange(start, stop)
        i, j, k = np.unravel_index(flat, (r, r, r))
        pts = np.column_stack([ax[i], ax[j], ax[k]])
        values[start:stop] = np.asarray(sdf_fn(pts), dtype=np.float64).reshape(-1)
    return values.reshape(r, r, r)


def extract_isosurface(sdf_fn, grid: GridSpec):
    """Zero level set of an arbitrary field over [-1, 1]^3.

    Returns (vertices, faces) in normalized coordinates, 64-bit.
    """
    values = evaluate_grid(sdf_fn, grid)
    verts_idx, faces = marching_cubes(values, level=0.0)
    vertices = -1.0 + verts_idx * grid.spacing
    return vertices, faces


def majority_label(l1: int, l2: int, l3: int) -> int:
    """Majority of three labels; all-distinct ties take the first vertex."""
    if l2 == l3:
        return int(l2)
    return int(l1)


def _face_majority(vertex_labels: np.ndarray, faces: np.ndarray) -> np.ndarray:
    tri = vertex_labels[faces]
    return np.where(tri[:, 1] == tri[:, 2], tri[:, 1], tri[:, 0])


def extract_mesh(net: FieldNetwork, grid: GridSpec, norm: Normalization) -> LabeledMesh:
    """Extract the labeled zero level set of a trained network.

    Label evaluation uses the inference forward path (no dropout), so
    repeated extraction is deterministic. A field with no sign change yields
    an empty mesh and a warning rather than an error.
    """
    vertices_n, faces = extract_isosurface(net.sdf, grid)
    if len(faces) == 0:
        warnings.warn("field has no zero crossing inside the grid; returning empty mesh")
        return LabeledMesh(
            vertices=np.zeros((0, 3)),
            faces=np.zeros((0, 3), dtype=np.int64),
            face_labels=np.zeros(0, dtype=np.int64),
            vertex_labels=np.zeros(0, dtype=np.int64),
        )
    logits = _chunked(lambda p: field_net.forward(net, p).logits, vertices_n, grid.chunk_size)
    vertex_labels = np.argmax(logits, axis=1).astype(np.int64)
    face_labels = _face_majority(vertex_labels, faces)
    return LabeledMesh(
        vertices=norm.invert(vertices_n),
        faces=faces,
        face_labels=face_labels,
        vertex_labels=vertex_labels,
    )
