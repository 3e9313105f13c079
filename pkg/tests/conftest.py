import numpy as np
import pytest

from sdfseg.shape_data import LabeledPointCloud


class PlaneField:
    """f(x) = n . x + d"""

    def __init__(self, normal, offset):
        self.normal = np.asarray(normal, dtype=np.float64)
        self.normal /= np.linalg.norm(self.normal)
        self.offset = float(offset)

    def sdf(self, p):
        return np.atleast_2d(p) @ self.normal + self.offset

    def sdf_gradient(self, p):
        p = np.atleast_2d(p)
        return np.broadcast_to(self.normal, (len(p), 3)).copy()

    def shell_point(self, rng, delta_lo=1e-3, delta_hi=1e-2):
        base = rng.uniform(-1.0, 1.0, 3)
        on_plane = base - self.sdf(base)[0] * self.normal
        return on_plane + rng.uniform(delta_lo, delta_hi) * self.normal


class SphereField:
    """f(x) = |x - c| - r"""

    def __init__(self, radius, center=(0.0, 0.0, 0.0)):
        self.radius = float(radius)
        self.center = np.asarray(center, dtype=np.float64)

    def sdf(self, p):
        return np.linalg.norm(np.atleast_2d(p) - self.center, axis=1) - self.radius

    def sdf_gradient(self, p):
        rel = np.atleast_2d(p) - self.center
        return rel / np.linalg.norm(rel, axis=1, keepdims=True)


class CylinderField:
    """Infinite cylinder around the z axis: f(x) = sqrt(x^2 + y^2) - r"""

    def __init__(self, radius):
        self.radius = float(radius)

    def sdf(self, p):
        p = np.atleast_2d(p)
        return np.sqrt(p[:, 0] ** 2 + p[:, 1] ** 2) - self.radius

    def sdf_gradient(self, p):
        p = np.atleast_2d(p)
        rho = np.sqrt(p[:, 0] ** 2 + p[:, 1] ** 2)[:, None]
        g = np.zeros_like(p)
        g[:, :2] = p[:, :2] / rho
        return g


def random_cloud(n: int, num_parts: int, seed: int, extent: float = 0.8) -> LabeledPointCloud:
    rng = np.random.default_rng(seed)
    normals = rng.standard_normal((n, 3))
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    return LabeledPointCloud(
        points=rng.uniform(-extent, extent, (n, 3)),
        normals=normals,
        labels=rng.integers(0, num_parts, n),
        num_parts=num_parts,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
