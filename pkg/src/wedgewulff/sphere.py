"""Small helpers for unit spheres in R^2 and R^3."""

import numpy as np


def sphere_grid(dim, count):
    """Quasi-uniform deterministic points on the unit sphere of R^dim."""
    if dim == 2:
        t = 2 * np.pi * (np.arange(count) + 0.5) / count
        return np.stack([np.cos(t), np.sin(t)], axis=-1)
    if dim == 3:
        i = np.arange(count) + 0.5
        z = 1 - 2 * i / count
        rho = np.sqrt(1 - z * z)
        phi = np.pi * (1 + 5**0.5) * i
        return np.stack([rho * np.cos(phi), rho * np.sin(phi), z], axis=-1)
    raise ValueError(f"unsupported dimension {dim}")


def random_unit(rng, dim, count):
    v = rng.standard_normal((count, dim))
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def tangent_basis(xi):
    """Orthonormal basis of the tangent space at each unit ``xi``.

    Returns an array of shape (..., d, d-1) whose columns span xi^perp.
    """
    xi = np.asarray(xi, dtype=float)
    d = xi.shape[-1]
    if d == 2:
        return np.stack([-xi[..., 1], xi[..., 0]], axis=-1)[..., None]
    # pick the coordinate axis least aligned with xi
    idx = np.argmin(np.abs(xi), axis=-1)
    helper = np.zeros_like(xi)
    np.put_along_axis(helper, idx[..., None], 1.0, axis=-1)
    e1 = helper - np.sum(helper * xi, axis=-1, keepdims=True) * xi
    e1 /= np.linalg.norm(e1, axis=-1, keepdims=True)
    e2 = np.cross(xi, e1)
    return np.stack([e1, e2], axis=-1)


def normalize(v):
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v, axis=-1, keepdims=True)
