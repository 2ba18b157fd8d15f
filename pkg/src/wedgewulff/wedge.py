"""The classical wedge {<x, n_i> < 0, i = 1, 2}, its boundary strata and frames."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import KVectorNotFound, OptimizerNotConverged, TangencyError
from .norms import NormSpec

STRATUM_TOL = 1e-9
FRAME_TOL = 1e-10


class Stratum(str, Enum):
    INTERIOR = "interior"
    P1 = "P1"
    P2 = "P2"
    L = "L"
    OUTSIDE = "outside"


@dataclass(frozen=True)
class Wedge:
    n1: np.ndarray
    n2: np.ndarray

    def __post_init__(self):
        n1 = np.asarray(self.n1, dtype=float)
        n2 = np.asarray(self.n2, dtype=float)
        object.__setattr__(self, "n1", n1)
        object.__setattr__(self, "n2", n2)
        if n1.shape != n2.shape or n1.shape[0] not in (2, 3):
            raise ValueError("wedge normals must be vectors of equal dimension 2 or 3")
        for v in (n1, n2):
            if abs(np.linalg.norm(v) - 1) > 1e-12:
                raise ValueError("wedge normals must be unit vectors")
        if abs(n1 @ n2) >= 1 - 1e-9:
            raise ValueError("wedge normals must be linearly independent")

    @property
    def dim(self):
        return self.n1.shape[0]

    @property
    def normals(self):
        return np.stack([self.n1, self.n2])

    def normal(self, i):
        return self.n1 if i == 1 else self.n2

    def edge_direction(self):
        """Unit vector along L (R^3 only); L = {0} in the plane."""
        if self.dim == 2:
            return None
        e = np.cross(self.n1, self.n2)
        return e / np.linalg.norm(e)

    def contains(self, x, tol=0.0):
        """Membership in the closed wedge (with slack ``tol``)."""
        x = np.asarray(x, dtype=float)
        return np.all(x @ self.normals.T <= tol, axis=-1)

    def to_dict(self):
        return {"n1": self.n1.tolist(), "n2": self.n2.tolist()}

    @classmethod
    def from_dict(cls, data):
        return cls(np.asarray(data["n1"], float), np.asarray(data["n2"], float))

    @classmethod
    def from_angle(cls, opening, dim=3):
        """Wedge whose two faces meet at interior angle ``opening`` along the x3-axis."""
        n1 = np.zeros(dim)
        n1[0] = 1.0
        n2 = np.zeros(dim)
        n2[0] = -np.cos(opening)
        n2[1] = np.sin(opening)
        return cls(n1, n2)


def classify_point(w: Wedge, x, tol=STRATUM_TOL):
    a, b = np.asarray(x, dtype=float) @ w.n1, np.asarray(x, dtype=float) @ w.n2
    if a < -tol and b < -tol:
        return Stratum.INTERIOR
    if abs(a) <= tol and abs(b) <= tol:
        return Stratum.L
    if abs(a) <= tol and b < -tol:
        return Stratum.P1
    if abs(b) <= tol and a < -tol:
        return Stratum.P2
    return Stratum.OUTSIDE


@dataclass
class BoundaryFrame:
    nu: np.ndarray
    mu: dict
    m: dict
    tau: dict
    l: Optional[np.ndarray] = None


def _unit(v, what):
    n = np.linalg.norm(v)
    if n < 1e-9:
        raise TangencyError(f"{what}: transversality fails, frame is not unique")
    return v / n


def _transversal(w, nu, i):
    ni = w.normal(i)
    if np.linalg.norm(np.cross(nu, ni) if len(nu) == 3 else nu[0] * ni[1] - nu[1] * ni[0]) < 1e-9:
        raise TangencyError(f"nu and n{i} are linearly dependent")


def boundary_frame(w: Wedge, nu, stratum) -> BoundaryFrame:
    """Frame vectors at a boundary point with outward unit normal ``nu``.

    On P_i: mu_i and m_i from span{nu, n_i}.  On L (R^3): additionally tau_1,
    tau_2 and l from span{nu, n_1, n_2}.
    """
    nu = np.asarray(nu, dtype=float)
    stratum = Stratum(stratum)
    if stratum in (Stratum.P1, Stratum.P2):
        planes = [1 if stratum == Stratum.P1 else 2]
    elif stratum == Stratum.L:
        planes = [1, 2]
    else:
        raise ValueError(f"no boundary frame at a {stratum.value} point")
    mu, m, tau = {}, {}, {}
    for i in planes:
        _transversal(w, nu, i)
        ni = w.normal(i)
        mu[i] = _unit(ni - (ni @ nu) * nu, "mu")
        m[i] = -_unit(nu - (nu @ ni) * ni, "m")
    frame = BoundaryFrame(nu=nu, mu=mu, m=m, tau=tau)
    if stratum == Stratum.L:
        if w.dim == 2:
            raise TangencyError("L is a point in the plane; no corner frame exists")
        basis = np.stack([nu, w.n1, w.n2])
        if abs(np.linalg.det(basis)) < 1e-9:
            raise TangencyError("nu, n1, n2 are linearly dependent at an L point")
        for i in (1, 2):
            ni, nj = w.normal(i), w.normal(3 - i)
            q, _ = np.linalg.qr(np.stack([nu, ni], axis=1))
            t = nj - q @ (q.T @ nj)
            tau[i] = _unit(t, "tau")
        q, _ = np.linalg.qr(np.stack([w.n1, w.n2], axis=1))
        frame.l = -_unit(nu - q @ (q.T @ nu), "l")
    return frame


def frame_residuals(w: Wedge, frame: BoundaryFrame):
    """Largest violation of the orthogonality/sign characterization (0 if exact)."""
    nu = frame.nu
    worst = 0.0
    for i, mu in frame.mu.items():
        ni = w.normal(i)
        worst = max(worst, abs(mu @ nu), max(0.0, -(mu @ ni)), abs(np.linalg.norm(mu) - 1))
    for i, m in frame.m.items():
        ni = w.normal(i)
        worst = max(worst, abs(m @ ni), max(0.0, m @ nu), abs(np.linalg.norm(m) - 1))
    for i, t in frame.tau.items():
        ni, nj = w.normal(i), w.normal(3 - i)
        worst = max(worst, abs(t @ nu), abs(t @ ni), max(0.0, -(t @ nj)))
    if frame.l is not None:
        l = frame.l
        worst = max(worst, abs(l @ w.n1), abs(l @ w.n2), max(0.0, l @ nu))
    return worst


def transversality_check(norm: NormSpec, w: Wedge, omega0) -> bool:
    """True iff omega0^i lies in (-F(-n_i), F(n_i)) for i = 1, 2."""
    for i, om in zip((1, 2), omega0):
        ni = w.normal(i)
        lo, hi = -float(norm.value(-ni)), float(norm.value(ni))
        if not lo < om < hi:
            return False
    return True


def affine_k(w: Wedge, omega0):
    """Minimum-norm solution of <k, n_i> = omega0^i and a basis of the free directions."""
    N = w.normals
    k_p = np.linalg.lstsq(N, np.asarray(omega0, dtype=float), rcond=None)[0]
    free = None
    if w.dim == 3:
        free = w.edge_direction()[:, None]
    return k_p, free


def solve_k_vector(norm: NormSpec, w: Wedge, omega0):
    """Vector k with <k, n_i> = omega0^i minimizing F°(k) over that affine set.

    Raises ``KVectorNotFound`` (carrying the minimum) when min F° >= 1.
    """
    omega0 = np.asarray(omega0, dtype=float)
    if not np.any(omega0):
        return np.zeros(w.dim)
    dual = norm.dual()
    k_p, free = affine_k(w, omega0)
    if free is None:
        k, val = k_p, float(dual(k_p))
    else:
        e = free[:, 0]
        scale = 1.0 + np.linalg.norm(k_p)

        def f(z):
            return float(dual(k_p + z * e))

        # F° is convex along the line; bracket the minimum then refine
        res = minimize_scalar(f, bracket=(-scale, 0.0, scale), tol=1e-12)
        if not res.success:
            raise OptimizerNotConverged(f"line minimization failed: {res.message}")
        k, val = k_p + res.x * e, float(res.fun)
    k = k - np.linalg.lstsq(w.normals, w.normals @ k - omega0, rcond=None)[0]
    if val >= 1 - 1e-9:
        raise KVectorNotFound(f"min F°(k) = {val:.6g} >= 1", min_dual=val)
    return k
