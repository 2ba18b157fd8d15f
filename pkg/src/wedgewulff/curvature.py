"""Anisotropic shape operators, higher mean curvatures and the parallel flow."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from math import comb

import numpy as np

from .errors import BoundaryEscape, ComplexEigenvalues, ImmersionLost
from .sphere import tangent_basis
from .surfaces import FlowedPatch, PLANE_TAGS

SYMMETRY_TOL = 1e-6


@dataclass
class CurvatureData:
    """Per-node curvature quantities; arrays are indexed by node first."""

    u: np.ndarray
    x: np.ndarray
    normal: np.ndarray
    basis: np.ndarray  # (N, d, n) orthonormal tangent frame
    shape: np.ndarray  # classical dnu in the frame, (N, n, n)
    aniso_form: np.ndarray  # A^F(nu) in the frame
    kappa: np.ndarray  # (N, n) sorted anisotropic principal curvatures
    area_element: np.ndarray

    @property
    def n(self):
        return self.kappa.shape[1]

    @property
    def anisotropic_shape(self):
        return self.aniso_form @ self.shape

    @property
    def H(self):
        return higher_mean_curvatures(self.kappa)

    @property
    def mean(self):
        return self.kappa.mean(axis=1)

    @property
    def umbilicity(self):
        return np.max(np.abs(self.kappa - self.mean[:, None]), axis=1)


def elementary_symmetric(kappa):
    """e_0..e_n of the last axis, via the coefficients of prod(1 + t kappa_i)."""
    kappa = np.atleast_2d(kappa)
    coeffs = np.zeros(kappa.shape[:-1] + (kappa.shape[-1] + 1,))
    coeffs[..., 0] = 1.0
    for j in range(kappa.shape[-1]):
        shifted = np.zeros_like(coeffs)
        shifted[..., 1:] = coeffs[..., :-1] * kappa[..., j : j + 1]
        coeffs = coeffs + shifted
    return coeffs


def higher_mean_curvatures(kappa):
    """H_r = e_r(kappa) / C(n, r) for r = 0..n (H_0 = 1)."""
    kappa = np.asarray(kappa, dtype=float)
    single = kappa.ndim == 1
    e = elementary_symmetric(kappa)
    n = kappa.shape[-1]
    H = e / np.array([comb(n, r) for r in range(n + 1)])
    return H[0] if single else H


def anisotropic_shape(norm, patch, U=None, level=0) -> CurvatureData:
    """Anisotropic principal curvatures at the given nodes (default: quadrature nodes).

    The operator A^F(nu) o dnu is similar to L^T dnu L with A^F = L L^T, so the
    eigenvalues come from a symmetric problem and are real by construction.
    """
    if U is None:
        U, _ = patch.nodes(level)
    s = patch.sample(U)
    E = tangent_basis(s.normal)
    Et = np.swapaxes(E, -1, -2)
    W = Et @ s.dnormal @ np.linalg.pinv(s.jac) @ E
    scale = np.max(np.abs(W), axis=(-1, -2)) + 1.0
    asym = np.max(np.abs(W - np.swapaxes(W, -1, -2)), axis=(-1, -2))
    if np.any(asym > SYMMETRY_TOL * scale):
        j = int(np.argmax(asym / scale))
        raise ComplexEigenvalues(
            f"shape operator not self-adjoint at u = {U[j]} (asymmetry {asym[j]:.2e})"
        )
    W = 0.5 * (W + np.swapaxes(W, -1, -2))
    A = Et @ norm.hessian(s.normal) @ E
    L = np.linalg.cholesky(A)
    kappa = np.linalg.eigvalsh(np.swapaxes(L, -1, -2) @ W @ L)
    return CurvatureData(U, s.x, s.normal, E, W, A, kappa, s.area_element)


def shape_cross_check(norm, patch, U, step=1e-4):
    """Max |A^F o dnu - d(Phi o nu)| along the coordinate directions (FD oracle)."""
    s = patch.sample(U)
    predicted = norm.hessian(s.normal) @ s.dnormal
    worst = 0.0
    for j in range(patch.n):
        h = step * (patch.hi[j] - patch.lo[j])
        e = np.zeros(patch.n)
        e[j] = h

        def phi(V):
            return norm.gradient(patch.normal_at(V))

        d1 = (phi(U + e) - phi(U - e)) / (2 * h)
        d2 = (phi(U + 2 * e) - phi(U - 2 * e)) / (4 * h)
        fd = (4 * d1 - d2) / 3
        worst = max(worst, float(np.max(np.abs(fd - predicted[..., j]))))
    return worst


def flowed_mean_curvature(kappa, t):
    """H^F of psi_t from P'(t)/P(t): returns (raw ratio, mean-normalized value)."""
    kappa = np.asarray(kappa, dtype=float)
    raw = np.sum(kappa / (1 + t * kappa), axis=-1)
    return raw, raw / kappa.shape[-1]


def parallel_flow(norm, patch, t, k=None, level=0, kappa=None, check_boundary=True):
    """The hypersurface psi_t(Sigma) with psi_t(x) = x + t (Phi(nu) - k).

    Only capillary data matching k keeps the boundary on the wedge;
    ``check_boundary=False`` skips that test for non-capillary input.
    """
    k = np.zeros(patch.dim) if k is None else np.asarray(k, dtype=float)
    if t == 0:
        return patch
    if kappa is None:
        kappa = anisotropic_shape(norm, patch, level=level).kappa
    factor = 1 + t * kappa
    if np.any(factor <= 0):
        raise ImmersionLost(f"1 + t*kappa reaches {factor.min():.3e} <= 0")
    flowed = FlowedPatch(patch, norm, t, k)
    if check_boundary and any(tag in PLANE_TAGS for tag in patch.edges.values()):
        try:
            flowed.check_boundary(level)
        except BoundaryEscape as exc:
            raise BoundaryEscape(f"{exc}; the vector k does not match the capillary data") from None
    return flowed


def flow_jacobians(kappa, t, direction="outward", normF=1.0):
    """Tangential Jacobian prod(1 + t kappa) of psi_t, or F(nu) prod(1 - t kappa) for zeta."""
    kappa = np.asarray(kappa, dtype=float)
    if direction == "outward":
        return np.prod(1 + t * kappa, axis=-1)
    if direction == "inward":
        return np.asarray(normF) * np.prod(1 - t * kappa, axis=-1)
    raise ValueError(f"unknown direction {direction!r}")


def write_curvature_csv(cd: CurvatureData, fh):
    n = cd.n
    writer = csv.writer(fh, lineterminator="\n")
    header = ["node"] + [f"u{j}" for j in range(cd.u.shape[1])]
    header += [f"kappa{i + 1}" for i in range(n)] + [f"H{r}" for r in range(n + 1)]
    writer.writerow(header)
    H = cd.H
    for j in range(len(cd.u)):
        row = [j] + [repr(float(v)) for v in cd.u[j]]
        row += [repr(float(v)) for v in cd.kappa[j]] + [repr(float(v)) for v in H[j]]
        writer.writerow(row)
