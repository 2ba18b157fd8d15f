"""Parametric hypersurface patches: truncated Wulff shapes and their deformations.

A patch is a chart ``u -> X(u)`` from a parameter box into R^{n+1} (n = 1, 2)
together with tensor Gauss-Legendre quadrature.  Wulff-type patches are
parameterized through the unit normal: ``X = y + r * Phi(xi(u))`` where
``xi(u)`` is a chart of the spherical region whose image lies in the closed
wedge.  Edge tags record which parameter edges land on P1, P2 or L.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .errors import (
    BoundaryEscape,
    ChartFailure,
    EmptyIntersection,
    ImmersionLost,
    OpenSurface,
    UntaggedEdge,
    WettedRegionUnbounded,
)
from .norms import NormSpec
from .sphere import tangent_basis
from .wedge import Wedge

BOUNDARY_TOL = 1e-9
RANK_TOL = 1e-8
CONST_TOL = 1e-9

PLANE_TAGS = ("P1", "P2")
CLOSING_TAGS = ("L", "pole", "periodic")


# -- quadrature --------------------------------------------------------------------


@dataclass(frozen=True)
class QuadratureSpec:
    order: int = 8
    cells: tuple = (2, 2)

    def refined(self, level):
        return replace(self, cells=tuple(c * 2**level for c in self.cells))

    def to_dict(self):
        return {"order": self.order, "cells": list(self.cells)}


def gauss_1d(lo, hi, order, cells):
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(lo, hi, cells + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


def fsum(values):
    """Exactly rounded sum; totals do not depend on node ordering."""
    return math.fsum(np.asarray(values, dtype=float).ravel())


# -- spherical charts -------------------------------------------------------------


def _bisect(func, lo, hi, iters=60):
    """Vectorized bisection for increasing ``func`` with func(lo) < 0 < func(hi)."""
    lo = np.array(lo, dtype=float)
    hi = np.array(hi, dtype=float)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        neg = func(mid) < 0
        lo = np.where(neg, mid, lo)
        hi = np.where(neg, hi, mid)
    return 0.5 * (lo + hi)


class _LevelCurve:
    """The curve {xi in S^2 : <Phi(xi), n> = omega}, parameterized by azimuth about n.

    Along every great semicircle from -n to n the function <Phi, n> increases
    strictly, so each azimuth meets the curve exactly once.
    """

    def __init__(self, norm, n, omega):
        self.norm = norm
        self.n = n
        self.omega = omega
        basis = tangent_basis(n)
        self.a, self.b = basis[:, 0], basis[:, 1]

    def _dirs(self, alpha):
        ca, sa = np.cos(alpha)[..., None], np.sin(alpha)[..., None]
        return ca * self.a + sa * self.b, -sa * self.a + ca * self.b

    def _xi(self, alpha, s):
        w, _ = self._dirs(alpha)
        return -np.cos(s)[..., None] * self.n + np.sin(s)[..., None] * w

    def solve(self, alpha):
        alpha = np.asarray(alpha, dtype=float)
        w, _ = self._dirs(alpha)

        def q(s):
            return self.norm.gradient(self._xi(alpha, s)) @ self.n - self.omega

        # a few bisection steps bracket the root, then safeguarded Newton
        lo = np.zeros(alpha.shape)
        hi = lo + np.pi
        for _ in range(10):
            mid = 0.5 * (lo + hi)
            neg = q(mid) < 0
            lo = np.where(neg, mid, lo)
            hi = np.where(neg, hi, mid)
        s = 0.5 * (lo + hi)
        for _ in range(12):
            xi = self._xi(alpha, s)
            val = self.norm.gradient(xi) @ self.n - self.omega
            neg = val < 0
            lo = np.where(neg, s, lo)
            hi = np.where(neg, hi, s)
            d_s = np.sin(s)[..., None] * self.n + np.cos(s)[..., None] * w
            slope = np.sum((self.norm.hessian(xi) @ self.n) * d_s, -1)
            step = s - val / np.where(slope > 0, slope, np.inf)
            inside = (step >= lo) & (step <= hi)
            new = np.where(inside, step, 0.5 * (lo + hi))
            if np.max(np.abs(new - s)) < 1e-15:
                s = new
                break
            s = new
        return s

    def point(self, alpha):
        alpha = np.asarray(alpha, dtype=float)
        s = self.solve(alpha)
        w, dw = self._dirs(alpha)
        xi = -np.cos(s)[..., None] * self.n + np.sin(s)[..., None] * w
        d_alpha = np.sin(s)[..., None] * dw
        d_s = np.sin(s)[..., None] * self.n + np.cos(s)[..., None] * w
        hn = self.norm.hessian(xi) @ self.n
        ds_dalpha = -np.sum(hn * d_alpha, -1) / np.sum(hn * d_s, -1)
        return xi, d_alpha + ds_dalpha[..., None] * d_s


class SphereChart:
    """Map from a parameter box to a region of the unit sphere."""

    lo: np.ndarray
    hi: np.ndarray
    edges: dict
    orientation: float = 1.0

    def eval(self, U):
        """Return ``(xi, xi_U)`` with shapes (N, d) and (N, d, n)."""
        raise NotImplementedError

    @property
    def n(self):
        return len(self.lo)


class ClosedSphereChart(SphereChart):
    """Polar coordinates (theta, phi) on S^2 about a rotated axis."""

    def __init__(self, rotation=None):
        self.rotation = np.eye(3) if rotation is None else np.asarray(rotation, float)
        self.lo = np.array([0.0, 0.0])
        self.hi = np.array([np.pi, 2 * np.pi])
        self.edges = {"u0": "pole", "u1": "pole", "v0": "periodic", "v1": "periodic"}
        self.orientation = 1.0 if np.linalg.det(self.rotation) > 0 else -1.0

    def eval(self, U):
        th, ph = U[:, 0], U[:, 1]
        st, ct, sp, cp = np.sin(th), np.cos(th), np.sin(ph), np.cos(ph)
        xi = np.stack([st * cp, st * sp, ct], -1)
        d_th = np.stack([ct * cp, ct * sp, -st], -1)
        d_ph = np.stack([-st * sp, st * cp, np.zeros_like(st)], -1)
        R = self.rotation
        return xi @ R.T, np.stack([d_th @ R.T, d_ph @ R.T], -1)


class CircleChart(SphereChart):
    """Angle parameter on the whole unit circle."""

    def __init__(self):
        self.lo = np.array([0.0])
        self.hi = np.array([2 * np.pi])
        self.edges = {"u0": "periodic", "u1": "periodic"}

    def eval(self, U):
        t = U[:, 0]
        xi = np.stack([np.cos(t), np.sin(t)], -1)
        return xi, np.stack([-np.sin(t), np.cos(t)], -1)[..., None]


class ArcChart(CircleChart):
    """Angle parameter on an arc [t0, t1] of the unit circle."""

    def __init__(self, t0, t1, tag0, tag1):
        self.lo = np.array([t0])
        self.hi = np.array([t1])
        self.edges = {"u0": tag0, "u1": tag1}


class WedgeRegionChart(SphereChart):
    """Region {<Phi(xi), n_i> <= omega_i, i = 1, 2} of S^2 with two corners.

    ``u`` runs from one corner to the other along both level curves and ``v``
    interpolates between the curve on P1 (v = 0) and the curve on P2 (v = 1).
    The edges u = 0 and u = 1 collapse onto the corner points on L.
    """

    def __init__(self, norm, wedge, omegas, samples=256):
        self.curves = [_LevelCurve(norm, wedge.normal(i), omegas[i - 1]) for i in (1, 2)]
        grid = np.linspace(0, 2 * np.pi, samples, endpoint=False)
        arcs = []
        for i in (0, 1):
            curve, other = self.curves[i], self.curves[1 - i]

            def h(alpha, curve=curve, other=other):
                xi, _ = curve.point(alpha)
                return norm.gradient(xi) @ other.n - other.omega

            vals = h(grid)
            sign = vals > 0
            flips = np.nonzero(sign != np.roll(sign, -1))[0]
            if len(flips) != 2:
                raise ChartFailure(
                    f"level curve on P{i + 1} meets the other face {len(flips)} times; "
                    "only two-corner truncations are supported"
                )
            roots = []
            for j in flips:
                a0, a1 = grid[j], grid[j] + 2 * np.pi / samples
                inc = vals[j] < 0
                f = (lambda t, h=h: h(t)) if inc else (lambda t, h=h: -h(t))
                roots.append(float(_bisect(f, np.array(a0), np.array(a1), iters=60)))
            a, b = sorted(r % (2 * np.pi) for r in roots)
            if h(np.array(0.5 * (a + b))) < 0:
                arcs.append([a, b])
            else:
                arcs.append([b, a + 2 * np.pi])
        c1 = [self.curves[0].point(np.array(t))[0] for t in arcs[0]]
        c2 = [self.curves[1].point(np.array(t))[0] for t in arcs[1]]
        if np.linalg.norm(c1[0] - c2[0]) < np.linalg.norm(c1[0] - c2[1]):
            match = max(np.linalg.norm(c1[0] - c2[0]), np.linalg.norm(c1[1] - c2[1]))
        else:
            arcs[1] = arcs[1][::-1]
            match = max(np.linalg.norm(c1[0] - c2[1]), np.linalg.norm(c1[1] - c2[0]))
        if match > 1e-8:
            raise ChartFailure(f"corner points of the two level curves disagree by {match:.2e}")
        self.arcs = np.array(arcs)
        self.corners = np.stack(c1)
        self.lo = np.array([0.0, 0.0])
        self.hi = np.array([1.0, 1.0])
        self.edges = {"u0": "L", "u1": "L", "v0": "P1", "v1": "P2"}
        xi, dxi = self.eval(np.array([[0.5, 0.5]]))
        self.orientation = float(np.sign(np.linalg.det(np.concatenate([xi[:, :, None], dxi], -1))[0]))

    def eval(self, U):
        u, v = U[:, 0], U[:, 1]
        spans = self.arcs[:, 1] - self.arcs[:, 0]
        g1, d1 = self.curves[0].point(self.arcs[0, 0] + u * spans[0])
        g2, d2 = self.curves[1].point(self.arcs[1, 0] + u * spans[1])
        p = (1 - v)[:, None] * g1 + v[:, None] * g2
        norm_p = np.linalg.norm(p, axis=-1, keepdims=True)
        xi = p / norm_p
        dp_du = (1 - v)[:, None] * d1 * spans[0] + v[:, None] * d2 * spans[1]
        dp_dv = g2 - g1

        def proj(w):
            return (w - np.sum(w * xi, -1, keepdims=True) * xi) / norm_p

        return xi, np.stack([proj(dp_du), proj(dp_dv)], -1)


def _arc_chart(norm, wedge, omegas, samples=2048):
    t = np.linspace(0, 2 * np.pi, samples, endpoint=False)
    xi = np.stack([np.cos(t), np.sin(t)], -1)
    grad = norm.gradient(xi)
    g = np.stack([grad @ wedge.n1 - omegas[0], grad @ wedge.n2 - omegas[1]], -1)
    inside = np.max(g, -1) <= 0
    if inside.all():
        return CircleChart()
    if not inside.any():
        raise EmptyIntersection("the Wulff shape does not meet the wedge")
    flips = np.nonzero(inside != np.roll(inside, -1))[0]
    if len(flips) != 2:
        raise ChartFailure("the truncated region is not a single arc")
    ends = {}
    for j in flips:
        t0, t1 = t[j], t[j] + 2 * np.pi / samples
        entering = not inside[j]
        # the active face is the one whose constraint changes sign across the cell
        gj = g[j]
        gn = g[(j + 1) % samples]
        i = int(np.argmax(np.where(entering, gj, gn)))

        def f(s, i=i, entering=entering):
            val = norm.gradient(np.stack([np.cos(s), np.sin(s)], -1)) @ wedge.normal(i + 1) - omegas[i]
            return -val if entering else val

        root = float(_bisect(f, np.array(t0), np.array(t1)))
        ends["start" if entering else "end"] = (root, f"P{i + 1}")
    t0, tag0 = ends["start"]
    t1, tag1 = ends["end"]
    if t1 <= t0:
        t1 += 2 * np.pi
    if tag0 == tag1:
        raise ChartFailure("the curve touches only one face; corner-free truncations are unsupported")
    return ArcChart(t0, t1, tag0, tag1)


def wedge_sphere_chart(norm, wedge, center, radius):
    """Chart of {xi : center + radius * Phi(xi) in the closed wedge}."""
    omegas = [-(center @ wedge.normal(i)) / radius for i in (1, 2)]
    touched = []
    for i, om in zip((1, 2), omegas):
        ni = wedge.normal(i)
        if om <= -norm.value(-ni):
            raise EmptyIntersection(f"the Wulff shape lies outside the half-space of n{i}")
        touched.append(om < norm.value(ni))
    if wedge.dim == 2:
        return _arc_chart(norm, wedge, omegas)
    if not any(touched):
        return ClosedSphereChart()
    if not all(touched):
        raise ChartFailure("the Wulff shape meets only one face; corner-free truncations are unsupported")
    return WedgeRegionChart(norm, wedge, omegas)


# -- patches -----------------------------------------------------------------------


@dataclass
class SurfaceSample:
    u: np.ndarray
    x: np.ndarray
    jac: np.ndarray
    normal: np.ndarray
    dnormal: Optional[np.ndarray] = None

    @property
    def area_element(self):
        g = np.swapaxes(self.jac, -1, -2) @ self.jac
        return np.sqrt(np.linalg.det(g))


def _raw_normal(jac):
    if jac.shape[-1] == 1:
        t = jac[..., 0]
        return np.stack([t[..., 1], -t[..., 0]], -1)
    return np.cross(jac[..., 0], jac[..., 1])


class Patch:
    """Base class for a parametric hypersurface piece."""

    kind = "patch"

    def __init__(self, dim, lo, hi, edges, quadrature, orientation, reference_point, wedge=None):
        self.dim = dim
        self.lo = np.asarray(lo, dtype=float)
        self.hi = np.asarray(hi, dtype=float)
        self.edges = dict(edges)
        self.quadrature = quadrature
        self.orientation = orientation
        self.reference_point = np.asarray(reference_point, dtype=float)
        self.wedge = wedge
        self.fd_step = 1e-4

    @property
    def n(self):
        return self.dim - 1

    # subclasses provide the chart and, if known, the normal derivative
    def _chart(self, U):
        raise NotImplementedError

    def _analytic_normal(self, U):
        return None

    def normal_at(self, U):
        _, jac = self._chart(U)
        raw = _raw_normal(jac) * self.orientation
        return raw / np.linalg.norm(raw, axis=-1, keepdims=True)

    def _fd_normal_jacobian(self, U):
        cols = []
        for j in range(self.n):
            h = self.fd_step * (self.hi[j] - self.lo[j])
            e = np.zeros(self.n)
            e[j] = 1.0
            d1 = (self.normal_at(U + h * e) - self.normal_at(U - h * e)) / (2 * h)
            d2 = (self.normal_at(U + 2 * h * e) - self.normal_at(U - 2 * h * e)) / (4 * h)
            cols.append((4 * d1 - d2) / 3)
        return np.stack(cols, -1)

    def sample(self, U, derivatives=True):
        U = np.atleast_2d(np.asarray(U, dtype=float))
        # patches are immutable, so repeated requests on the same nodes are cached
        key = (U.tobytes(), U.shape, derivatives)
        cache = self.__dict__.setdefault("_sample_cache", {})
        if key in cache:
            return cache[key]
        if not derivatives and (U.tobytes(), U.shape, True) in cache:
            return cache[(U.tobytes(), U.shape, True)]
        out = self._sample(U, derivatives)
        if len(cache) >= 16:
            cache.pop(next(iter(cache)))
        cache[key] = out
        return out

    def _sample(self, U, derivatives):
        x, jac = self._chart(U)
        analytic = self._analytic_normal(U)
        if analytic is not None:
            normal, dnormal = analytic
        else:
            raw = _raw_normal(jac) * self.orientation
            normal = raw / np.linalg.norm(raw, axis=-1, keepdims=True)
            dnormal = self._fd_normal_jacobian(U) if derivatives else None
        return SurfaceSample(U, x, jac, normal, dnormal)

    # -- quadrature ------------------------------------------------------------

    def nodes(self, level=0, quadrature=None):
        q = (quadrature or self.quadrature).refined(level)
        axes = [gauss_1d(self.lo[j], self.hi[j], q.order, q.cells[j]) for j in range(self.n)]
        if self.n == 1:
            return axes[0][0][:, None], axes[0][1]
        (a, wa), (b, wb) = axes
        U = np.stack(np.meshgrid(a, b, indexing="ij"), -1).reshape(-1, 2)
        w = np.outer(wa, wb).ravel()
        return U, w

    def edge_nodes(self, edge, level=0):
        """Nodes on a parameter edge and their 1-D weights (unit weight for n = 1)."""
        axis, side = edge[0], int(edge[1])
        j = 0 if axis == "u" else 1
        fixed = self.hi[j] if side else self.lo[j]
        if self.n == 1:
            return np.array([[fixed]]), np.array([1.0])
        q = self.quadrature.refined(level)
        other = 1 - j
        t, w = gauss_1d(self.lo[other], self.hi[other], q.order, q.cells[other])
        U = np.empty((len(t), 2))
        U[:, j] = fixed
        U[:, other] = t
        return U, w

    def edges_tagged(self, tag):
        return [e for e, t in self.edges.items() if t == tag]

    def integrate(self, func, level=0):
        """Integral of ``func(sample)`` over the patch with respect to area."""
        U, w = self.nodes(level)
        s = self.sample(U)
        return fsum(func(s) * s.area_element * w)

    # -- invariants ------------------------------------------------------------

    def check_immersion(self, level=0):
        U, _ = self.nodes(level)
        _, jac = self._chart(U)
        sv = np.linalg.svd(jac, compute_uv=False)[:, -1]
        if sv.min() <= RANK_TOL:
            raise ImmersionLost(f"smallest singular value {sv.min():.3e} at u = {U[np.argmin(sv)]}")
        return float(sv.min())

    def check_orientation(self, level=0):
        U, _ = self.nodes(level)
        s = self.sample(U, derivatives=False)
        out = np.sum((s.x - self.reference_point) * s.normal, -1)
        return bool(np.all(out > 0))

    def check_boundary(self, level=0, tol=BOUNDARY_TOL):
        """Max |<X, n_i>| over nodes of every edge tagged P_i.

        Edges tagged L collapse to corner points where derived normals are
        undefined; they are the limits of the P_i edges and need no extra test.
        """
        worst = 0.0
        for edge, tag in self.edges.items():
            if tag not in PLANE_TAGS:
                continue
            U, _ = self.edge_nodes(edge, level)
            x = self.sample(U, derivatives=False).x
            for i in [int(tag[1])]:
                worst = max(worst, float(np.max(np.abs(x @ self.wedge.normal(i)))))
        if worst > tol:
            raise BoundaryEscape(f"tagged edge leaves the wedge boundary by {worst:.3e}")
        return worst


class WulffPatch(Patch):
    """Truncated Wulff shape W_r(y) intersected with the closed wedge."""

    kind = "wulff"

    def __init__(self, norm, wedge, center, radius, chart, quadrature):
        super().__init__(
            wedge.dim, chart.lo, chart.hi, chart.edges, quadrature, chart.orientation, center, wedge
        )
        self.norm = norm
        self.center = np.asarray(center, dtype=float)
        self.radius = float(radius)
        self.chart = chart

    @property
    def omegas(self):
        return np.array([-(self.center @ self.wedge.normal(i)) / self.radius for i in (1, 2)])

    def sphere(self, U):
        return self.chart.eval(U)

    def _chart(self, U):
        xi, dxi = self.chart.eval(U)
        x = self.center + self.radius * self.norm.gradient(xi)
        jac = self.radius * (self.norm.hessian(xi) @ dxi)
        return x, jac

    def _analytic_normal(self, U):
        return self.chart.eval(U)

    def contains(self, z):
        z = np.asarray(z, dtype=float)
        inside = self.wedge.contains(z)
        rho = self.norm.dual()(z - self.center)
        return inside & (rho < self.radius)


def wulff_patch(norm, wedge, center, radius, quadrature=None):
    center = np.asarray(center, dtype=float)
    if radius <= 0:
        raise EmptyIntersection("radius must be positive")
    chart = wedge_sphere_chart(norm, wedge, center, radius)
    if quadrature is None:
        quadrature = QuadratureSpec(8, (2,) * chart.n)
    patch = WulffPatch(norm, wedge, center, radius, chart, quadrature)
    patch.check_immersion()
    return patch


# -- bumps and deformations ---------------------------------------------------------


class SphereBump:
    """Smooth function on the unit sphere used to deform Wulff-type patches.

    ``edge``  : prod_i h_i(xi)^order * exp(kappa <xi, axis>), where
                h_i = max(0, omega_i - <Phi(xi), n_i>) vanishes on the level
                curve of face i; ``order`` 2 keeps boundary and capillary data,
                ``order`` 1 tilts the surface along the boundary.
    ``axial`` : <xi, axis>^2.
    ``waist`` : <xi, axis>^2 - 1.
    Values are scaled so that max |bump| over the region is 1.
    """

    def __init__(self, base, profile="edge", order=2, axis=None, kappa=0.0):
        self.norm = base.norm
        self.wedge = base.wedge
        self.omegas = base.omegas
        self.profile = profile
        self.order = order
        self.kappa = kappa
        dim = base.dim
        self.axis = np.asarray(axis if axis is not None else np.eye(dim)[-1], dtype=float)
        self.axis = self.axis / np.linalg.norm(self.axis)
        self.faces = [
            i for i in (1, 2) if self.omegas[i - 1] < self.norm.value(self.wedge.normal(i))
        ]
        self.scale = 1.0
        U, _ = base.nodes(1)
        xi, _ = base.sphere(U)
        peak = np.max(np.abs(self.value(xi)))
        if peak == 0:
            raise ValueError("bump vanishes identically on the patch")
        self.scale = 1.0 / peak

    def to_dict(self):
        return {
            "profile": self.profile,
            "order": self.order,
            "axis": self.axis.tolist(),
            "kappa": self.kappa,
        }

    def _h(self, xi, i, clip=True):
        h = self.omegas[i - 1] - self.norm.gradient(xi) @ self.wedge.normal(i)
        return np.maximum(0.0, h) if clip else h

    def value(self, xi, clip=True):
        """Bump values; ``clip=False`` gives the polynomial extension past the boundary."""
        xi = np.asarray(xi, dtype=float)
        if self.profile == "edge":
            out = np.exp(self.kappa * (xi @ self.axis))
            for i in self.faces:
                out = out * self._h(xi, i, clip) ** self.order
        elif self.profile == "axial":
            out = (xi @ self.axis) ** 2
        elif self.profile == "waist":
            out = (xi @ self.axis) ** 2 - 1.0
        else:
            raise ValueError(f"unknown bump profile {self.profile!r}")
        return self.scale * out

    def gradient(self, xi):
        """Tangential gradient on the sphere, shape (..., d)."""
        xi = np.asarray(xi, dtype=float)
        c = xi @ self.axis
        da = self.axis - c[..., None] * xi
        if self.profile == "edge":
            e = np.exp(self.kappa * c)
            hs = [self._h(xi, i) for i in self.faces]
            grads = [
                np.where(
                    (h > 0)[..., None], -(self.norm.hessian(xi) @ self.wedge.normal(i)), 0.0
                )
                for h, i in zip(hs, self.faces)
            ]
            prod = np.ones_like(c)
            for h in hs:
                prod = prod * h**self.order
            out = self.kappa * (e * prod)[..., None] * da
            for j, (h, g) in enumerate(zip(hs, grads)):
                others = np.ones_like(c)
                for k2, h2 in enumerate(hs):
                    if k2 != j:
                        others = others * h2**self.order
                out = out + (e * others * self.order * h ** (self.order - 1))[..., None] * g
        elif self.profile in ("axial", "waist"):
            out = (2 * c)[..., None] * da
        else:
            raise ValueError(f"unknown bump profile {self.profile!r}")
        return self.scale * out

    def pullback(self, base):
        """``U -> (b, b_U)`` for a Wulff-type base patch."""

        def func(U):
            xi, dxi = base.sphere(U)
            g = self.gradient(xi)
            return self.value(xi), np.einsum("nd,ndk->nk", g, dxi)

        return func


class RadialGraphPatch(Patch):
    """X = y + (r + eps * bump(xi)) * Phi(xi): a deformation along the anisotropic normal.

    Over a Wulff base this is the graph of an anisotropic radius, so the
    enclosed region has the exact membership test F°(z - y) < r + eps*bump.
    """

    kind = "perturbed"

    def __init__(self, base: WulffPatch, bump: SphereBump, eps):
        super().__init__(
            base.dim, base.lo, base.hi, base.edges, base.quadrature, base.orientation,
            base.center, base.wedge,
        )
        self.base = base
        self.norm = base.norm
        self.center = base.center
        self.radius = base.radius
        self.bump = bump
        self.eps = float(eps)

    def sphere(self, U):
        return self.base.sphere(U)

    @property
    def omegas(self):
        return self.base.omegas

    def _chart(self, U):
        xi, dxi = self.base.sphere(U)
        rho = self.radius + self.eps * self.bump.value(xi)
        drho = self.eps * np.einsum("nd,ndk->nk", self.bump.gradient(xi), dxi)
        phi = self.norm.gradient(xi)
        x = self.center + rho[:, None] * phi
        jac = phi[:, :, None] * drho[:, None, :] + rho[:, None, None] * (
            self.norm.hessian(xi) @ dxi
        )
        return x, jac

    def contains(self, z):
        z = np.asarray(z, dtype=float)
        rho, xi = self.norm.dual().solve(z - self.center)
        return self.wedge.contains(z) & (rho < self.radius + self.eps * self.bump.value(xi))


class NormalOffsetPatch(Patch):
    """X + eps * b(u) * nu(u) for a scalar field b on the parameter box."""

    kind = "offset"

    def __init__(self, base: Patch, bump: Callable, eps):
        super().__init__(
            base.dim, base.lo, base.hi, base.edges, base.quadrature, base.orientation,
            base.reference_point, base.wedge,
        )
        self.base = base
        self.bump = bump
        self.eps = float(eps)
        self.norm = getattr(base, "norm", None)
        if hasattr(base, "sphere"):
            self.sphere = base.sphere

    def _chart(self, U):
        s = self.base.sample(U)
        b, db = self.bump(U)
        x = s.x + self.eps * b[:, None] * s.normal
        jac = s.jac + self.eps * (
            s.normal[:, :, None] * db[:, None, :] + b[:, None, None] * s.dnormal
        )
        return x, jac


class FlowedPatch(Patch):
    """Parallel hypersurface psi_t(x) = x + t (Phi(nu(x)) - k)."""

    kind = "flowed"

    def __init__(self, base: Patch, norm, t, k):
        super().__init__(
            base.dim, base.lo, base.hi, base.edges, base.quadrature, base.orientation,
            base.reference_point, base.wedge,
        )
        self.base = base
        self.norm = norm
        self.t = float(t)
        self.k = np.asarray(k, dtype=float)
        if hasattr(base, "sphere"):
            self.sphere = base.sphere

    def _chart(self, U):
        s = self.base.sample(U)
        x = s.x + self.t * (self.norm.gradient(s.normal) - self.k)
        jac = s.jac + self.t * (self.norm.hessian(s.normal) @ s.dnormal)
        return x, jac


def _check_deformation(patch, base, level=0):
    U, _ = patch.nodes(level)
    _, jac = patch._chart(U)
    sv = np.linalg.svd(jac, compute_uv=False)[:, -1]
    if sv.min() <= RANK_TOL:
        raise ImmersionLost(f"smallest singular value {sv.min():.3e}")
    raw = _raw_normal(jac) * patch.orientation
    ref = base.sample(U, derivatives=False).normal
    if np.any(np.sum(raw * ref, -1) <= 0):
        raise ImmersionLost("deformation folds the patch (normal reverses)")
    if isinstance(patch, NormalOffsetPatch):
        # X + eps b nu has tangential part dX (I + eps b W); a focal crossing
        # (some 1 + eps b kappa_i <= 0) can keep the area element positive when
        # an even number of factors flip, so test the eigenvalues themselves
        s = base.sample(U)
        b, _ = patch.bump(U)
        W = np.linalg.pinv(s.jac) @ s.dnormal
        factors = np.linalg.eigvals(np.eye(patch.n) + patch.eps * b[:, None, None] * W).real
        if factors.min() <= 0:
            raise ImmersionLost(f"normal offset passes a focal point (1 + eps b kappa = {factors.min():.3e})")


def perturb(patch, bump, eps, along="normal"):
    """Deform ``patch`` by ``eps * bump``.

    ``along="normal"`` moves along the unit normal (any patch, bump a
    ``SphereBump`` or a callable ``U -> (b, b_U)``).  ``along="anisotropic"``
    moves a Wulff patch along Phi(nu), keeping an exact membership test.
    """
    if eps == 0:
        return patch
    if along == "anisotropic":
        if not isinstance(patch, WulffPatch):
            raise TypeError("anisotropic deformation needs a Wulff base patch")
        out = RadialGraphPatch(patch, bump, eps)
        U, _ = patch.nodes(1)
        xi, _ = patch.sphere(U)
        if np.any(patch.radius + eps * bump.value(xi) <= 0):
            raise ImmersionLost("anisotropic radius becomes non-positive")
    elif along == "normal":
        func = bump.pullback(patch) if isinstance(bump, SphereBump) else bump
        out = NormalOffsetPatch(patch, func, eps)
    else:
        raise ValueError(f"unknown deformation direction {along!r}")
    _check_deformation(out, patch)
    _check_deformation(out, patch, level=1)
    return out


# -- measurements ------------------------------------------------------------------


@dataclass
class CapillaryAngle:
    face: int
    u: np.ndarray
    values: np.ndarray
    constant: bool
    nonpositive: bool
    below_target: Optional[bool] = None

    @property
    def spread(self):
        return float(np.ptp(self.values))


def capillary_angle(patch, norm, face, level=0, omega0=None, tol=CONST_TOL):
    """omega^i(x) = <Phi(nu), n_i> at the boundary nodes of the edges on P_i."""
    edges = patch.edges_tagged(f"P{face}")
    if not edges:
        raise UntaggedEdge(f"no edge of the patch lies on P{face}")
    Us, vals = [], []
    for e in edges:
        U, _ = patch.edge_nodes(e, level)
        s = patch.sample(U, derivatives=False)
        Us.append(U)
        vals.append(norm.gradient(s.normal) @ patch.wedge.normal(face))
    values = np.concatenate(vals)
    below = None if omega0 is None else bool(np.all(values <= omega0 + tol))
    return CapillaryAngle(
        face,
        np.concatenate(Us),
        values,
        constant=bool(np.ptp(values) <= tol),
        nonpositive=bool(np.all(values <= tol)),
        below_target=below,
    )


def surface_area(patch, level=0, weight=None):
    if weight is None:
        return patch.integrate(lambda s: np.ones(len(s.x)), level)
    return patch.integrate(weight, level)


def _require_closed_boundary(patch):
    for edge, tag in patch.edges.items():
        if tag not in PLANE_TAGS + CLOSING_TAGS:
            raise OpenSurface(f"edge {edge} is not tagged ({tag!r})")
    if any(t in PLANE_TAGS for t in patch.edges.values()):
        patch.check_boundary()


def enclosed_volume(patch, wedge=None, level=0):
    """|Omega| = (1/(n+1)) * integral of <x, nu>; wetted faces carry no flux."""
    _require_closed_boundary(patch)
    return patch.integrate(lambda s: np.sum(s.x * s.normal, -1), level) / patch.dim


def wetted_area(patch, face, level=0):
    """Area (length for n = 1) of the part of P_i enclosed by the boundary curve and L."""
    edges = patch.edges_tagged(f"P{face}")
    if not edges:
        return 0.0
    w = patch.wedge
    total = 0.0
    for e in edges:
        if patch.n == 1:
            U, _ = patch.edge_nodes(e, level)
            total += float(np.linalg.norm(patch.sample(U, derivatives=False).x))
            continue
        # the region is closed by L, which passes through the origin, so the
        # planar area is (1/2) * |integral of x cross x_t| along the curve
        closing = [patch.edges.get(("u" if e[0] == "v" else "v") + s) for s in "01"]
        if any(c != "L" for c in closing):
            raise WettedRegionUnbounded(f"boundary curve on P{face} does not close against L")
        U, wt = patch.edge_nodes(e, level)
        s = patch.sample(U, derivatives=False)
        j = 0 if e[0] == "v" else 1
        tangent = s.jac[:, :, j]
        cross = np.cross(s.x, tangent) @ w.normal(face)
        total += abs(0.5 * fsum(cross * wt))
    return total
