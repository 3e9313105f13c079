"""Per-iteration training batches: manifold, off-surface, shell, eikonal sets.

Batches are pure functions of (cloud, config, seed). The near-surface shell
offsets manifold points along their normals by a signed distance drawn from
+-[shell_min, shell_max]; each shell point carries a right-handed orthonormal
tangent frame rotated by a fresh uniform angle, so curvature terms see every
in-plane orientation over the course of training.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .shape_data import LabeledPointCloud

__all__ = ["SamplerConfig", "SampleBatch", "TangentFrame", "make_batch", "tangent_frame"]


@dataclass(frozen=True)
class SamplerConfig:
    n_manifold: int = 20000
    n_nonmanifold: int = 20000
    n_shell: int = 20000
    shell_min: float = 1e-3
    shell_max: float = 1e-2
    with_replacement: bool = True
    domain_halfwidth: float = 1.0

    def __post_init__(self):
        if self.n_manifold < 1 or self.n_nonmanifold < 1 or self.n_shell < 1:
            raise ValueError("sample counts must be >= 1")
        if not (0 < self.shell_min < self.shell_max):
            raise ValueError("need 0 < shell_min < shell_max")
        if self.domain_halfwidth <= 0:
            raise ValueError("domain_halfwidth must be positive")


@dataclass(frozen=True)
class TangentFrame:
    """Right-handed orthonormal frame (u, v, n) at a surface point."""

    n: np.ndarray
    u: np.ndarray
    v: np.ndarray


@dataclass(frozen=True)
class SampleBatch:
    manifold_points: np.ndarray     # (n_man, 3)
    manifold_normals: np.ndarray    # (n_man, 3)
    manifold_labels: np.ndarray     # (n_man,)
    nonmanifold_points: np.ndarray  # (n_non, 3)
    shell_points: np.ndarray        # (n_shell, 3)
    shell_normals: np.ndarray       # (n_shell, 3)
    shell_u: np.ndarray             # (n_shell, 3)
    shell_v: np.ndarray             # (n_shell, 3)
    shell_source: np.ndarray        # (n_shell,) cloud indices the shell grew from
    eikonal_points: np.ndarray      # (n_man + n_non, 3)


def _base_frame(normals: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic frame: u is the unit tangent-plane projection of the
    coordinate axis least aligned with n (first axis on ties); v = n x u."""
    n = np.atleast_2d(normals)
    axis = np.argmin(np.abs(n), axis=1)
    a = np.zeros_like(n)
    a[np.arange(len(n)), axis] = 1.0
    u = a - n * (n * a).sum(axis=1, keepdims=True)
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    v = np.cross(n, u)
    return u, v


def tangent_frame(n: np.ndarray, angle: float) -> TangentFrame:
    """Base frame at unit normal ``n`` rotated by ``angle`` about ``n``."""
    n = np.asarray(n, dtype=np.float64)
    norm = np.linalg.norm(n)
    if norm < 1e-12:
        raise ValueError("zero normal")
    if abs(norm - 1.0) > 1e-6:
        raise ValueError("normal must be unit length")
    u0, v0 = _base_frame(n)
    u0, v0 = u0[0], v0[0]
    c, s = np.cos(angle), np.sin(angle)
    return TangentFrame(n=n, u=c * u0 + s * v0, v=c * v0 - s * u0)


def make_batch(cloud: LabeledPointCloud, config: SamplerConfig, seed: int) -> SampleBatch:
    """Draw one training batch; deterministic for fixed (cloud, config, seed)."""
    if len(cloud) == 0:
        raise ValueError("cannot sample from an empty cloud")
    if not config.with_replacement and config.n_manifold > len(cloud):
        raise ValueError(
            f"n_manifold={config.n_manifold} exceeds cloud size {len(cloud)} "
            "without replacement"
        )
    rng = np.random.default_rng(seed)

    man_idx = rng.choice(len(cloud), size=config.n_manifold, replace=config.with_replacement)
    man_pts = cloud.points[man_idx]
    man_nrm = cloud.normals[man_idx]
    man_lab = cloud.labels[man_idx]

    hw = config.domain_halfwidth
    non_pts = rng.uniform(-hw, hw, size=(config.n_nonmanifold, 3))

    shell_idx = rng.choice(len(cloud), size=config.n_shell, replace=True)
    src_pts = cloud.points[shell_idx]
    src_nrm = cloud.normals[shell_idx]
    delta = rng.uniform(config.shell_min, config.shell_max, size=(config.n_shell, 1))
    sign = np.where(rng.random((config.n_shell, 1)) < 0.5, -1.0, 1.0)
    shell_pts = src_pts + sign * delta * src_nrm

    u0, v0 = _base_frame(src_nrm)
    angle = rng.uniform(0.0, 2.0 * np.pi, size=(config.n_shell, 1))
    c, s = np.cos(angle), np.sin(angle)
    shell_u = c * u0 + s * v0
    shell_v = c * v0 - s * u0

    return SampleBatch(
        manifold_points=man_pts,
        manifold_normals=man_nrm,
        manifold_labels=man_lab,
        nonmanifold_points=non_pts,
        shell_points=shell_pts,
        shell_normals=src_nrm,
        shell_u=shell_u,
        shell_v=shell_v,
        shell_source=shell_idx,
        eikonal_points=np.concatenate([man_pts, non_pts], axis=0),
    )
