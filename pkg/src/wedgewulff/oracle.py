"""Independent brute-force oracles for curves in a planar sector and Monte-Carlo volumes.

Nothing here reuses the chart, quadrature or dual machinery of the main path.
A planar norm enters only through its values f(theta) = F(cos theta, sin theta);
every derivative is a Richardson-extrapolated central difference and every
integral is adaptive Simpson.  Curves are polar graphs about a centre c.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

SIMPSON_TOL = 1e-12
# second differences of double-precision data carry about this much error
FD_NOISE = 2e-9


def _central(g, x, h):
    return (g(x + h) - g(x - h)) / (2 * h)


def _second(g, x, h, g0):
    return (g(x + h) - 2 * g0 + g(x - h)) / h**2


def _rich_d1(g, x, h):
    """Two Richardson steps on the central difference: O(h^6)."""
    d = [_central(g, x, s * h) for s in (1, 2, 4)]
    return (64 * d[0] - 20 * d[1] + d[2]) / 45


def _rich_d2(g, x, h):
    g0 = g(x)
    d = [_second(g, x, s * h, g0) for s in (1, 2, 4)]
    return (64 * d[0] - 20 * d[1] + d[2]) / 45


def adaptive_simpson(func, a, b, tol=SIMPSON_TOL, noise=0.0, max_depth=40):
    """Adaptive Simpson rule with Richardson correction; ``func`` is vectorized.

    Intervals are refined breadth-first so every level is one batched call.
    ``noise`` is the pointwise accuracy of ``func``: a panel whose correction
    is already below noise * width cannot be improved by splitting it.
    """
    m = 0.5 * (a + b)
    fa, fm, fb = func(np.array([a, m, b]))
    work = [(a, b, fa, fm, fb, (b - a) / 6 * (fa + 4 * fm + fb), tol)]
    parts = []
    for _ in range(max_depth):
        if not work:
            break
        arr = np.array([(w[0], w[1]) for w in work])
        mids = 0.5 * (arr[:, 0] + arr[:, 1])
        lm = 0.5 * (arr[:, 0] + mids)
        rm = 0.5 * (mids + arr[:, 1])
        vals = func(np.concatenate([lm, rm]))
        flm, frm = vals[: len(work)], vals[len(work) :]
        nxt = []
        for j, (lo, hi, f0, f1, f2, whole, eps) in enumerate(work):
            mid = mids[j]
            left = (mid - lo) / 6 * (f0 + 4 * flm[j] + f1)
            right = (hi - mid) / 6 * (f1 + 4 * frm[j] + f2)
            delta = left + right - whole
            if abs(delta) <= 15 * eps or abs(delta) <= noise * (hi - lo):
                parts.append(left + right + delta / 15)
            else:
                nxt.append((lo, mid, f0, flm[j], f1, left, eps / 2))
                nxt.append((mid, hi, f1, frm[j], f2, right, eps / 2))
        work = nxt
    if work:
        raise RuntimeError("adaptive Simpson did not reach its tolerance")
    return math.fsum(parts)


class PlanarNorm:
    """A norm on S^1 known only through f(theta); derivatives by finite differences."""

    def __init__(self, value: Callable, h=4e-3):
        self._value = value
        self.h = h

    def f(self, theta):
        theta = np.asarray(theta, dtype=float)
        return self._value(np.stack([np.cos(theta), np.sin(theta)], -1))

    def df(self, theta):
        return _rich_d1(self.f, np.asarray(theta, float), self.h)

    def aniso(self, theta):
        """A^F = f'' + f."""
        theta = np.asarray(theta, float)
        return _rich_d2(self.f, theta, self.h) + self.f(theta)

    def phi(self, theta):
        """Cahn-Hoffman point f e_theta + f' e_theta^perp."""
        theta = np.asarray(theta, float)
        f, d = self.f(theta), self.df(theta)
        c, s = np.cos(theta), np.sin(theta)
        return np.stack([f * c - d * s, f * s + d * c], -1)

    def normal_angle(self, direction):
        """Angle theta with Phi(theta) pointing along ``direction`` (the dual maximizer)."""
        direction = np.atleast_1d(np.asarray(direction, float))
        # Phi is an orientation-preserving diffeomorphism of the circle: bracket on a grid
        if not hasattr(self, "_grid"):
            grid = np.linspace(0, 2 * np.pi, 721)
            pts = self.phi(grid)
            self._grid = (grid, np.unwrap(np.arctan2(pts[:, 1], pts[:, 0])))
        grid, ang = self._grid
        base = ang[0]
        target = base + np.mod(direction - base, 2 * np.pi)
        idx = np.clip(np.searchsorted(ang, target) - 1, 0, len(grid) - 2)
        lo, hi = grid[idx], grid[idx + 1]

        def offset(t):
            p = self.phi(t)
            a = np.arctan2(p[..., 1], p[..., 0])
            return np.mod(a - target + np.pi, 2 * np.pi) - np.pi

        for _ in range(60):
            mid = 0.5 * (lo + hi)
            neg = offset(mid) < 0
            lo = np.where(neg, mid, lo)
            hi = np.where(neg, hi, mid)
        return 0.5 * (lo + hi)

    def dual_unit(self, direction):
        """F°(cos a, sin a) = <e_a, xi*> / f(theta*)."""
        th = self.normal_angle(direction)
        return np.cos(np.asarray(direction) - th) / self.f(th)

    def dual(self, x):
        x = np.atleast_2d(np.asarray(x, float))
        r = np.linalg.norm(x, axis=-1)
        return r * self.dual_unit(np.arctan2(x[:, 1], x[:, 0]))


@dataclass
class CurveScenario:
    """Polar graph X(a) = c + rho(a) (cos a, sin a) in the sector {<x, n_i> < 0}.

    ``rho(a) = (r + eps * bump(xi*(a))) / F°(e_a)``, which is the anisotropic
    radial graph over the Wulff shape W_r(c); ``bump`` is a function of the
    unit normal direction xi (a 2-vector) and may be ``None``.
    """

    norm: PlanarNorm
    n1: np.ndarray
    n2: np.ndarray
    center: np.ndarray
    radius: float
    k: np.ndarray
    bump: Optional[Callable] = None
    eps: float = 0.0
    h: float = 5e-3

    def __post_init__(self):
        self.n1 = np.asarray(self.n1, float)
        self.n2 = np.asarray(self.n2, float)
        self.center = np.asarray(self.center, float)
        self.k = np.asarray(self.k, float)
        self.a0, self.a1 = self._endpoints()

    def rho(self, a):
        a = np.asarray(a, float)
        base = self.radius
        if self.bump is not None and self.eps:
            th = self.norm.normal_angle(a)
            base = base + self.eps * self.bump(np.stack([np.cos(th), np.sin(th)], -1))
        return base / self.norm.dual_unit(a)

    def point(self, a):
        a = np.asarray(a, float)
        rho = self.rho(a)
        return self.center + rho[..., None] * np.stack([np.cos(a), np.sin(a)], -1)

    def _endpoints(self):
        a = np.linspace(0, 2 * np.pi, 1441)[:-1]
        x = self.point(a)
        g = np.maximum(x @ self.n1, x @ self.n2)
        inside = g < 0
        flips = np.nonzero(inside != np.roll(inside, -1))[0]
        if len(flips) != 2:
            raise ValueError("the curve must cross the sector boundary exactly twice")
        ends = {}
        for j in flips:
            lo, hi = a[j], a[j] + (a[1] - a[0])
            entering = not inside[j]
            for _ in range(70):
                mid = 0.5 * (lo + hi)
                xm = self.point(np.array([mid]))[0]
                gm = max(xm @ self.n1, xm @ self.n2)
                if (gm < 0) == entering:
                    hi = mid
                else:
                    lo = mid
            ends["start" if entering else "end"] = 0.5 * (lo + hi)
        a0, a1 = ends["start"], ends["end"]
        if a1 <= a0:
            a1 += 2 * np.pi
        return a0, a1

    # -- local geometry by finite differences -----------------------------------

    def local(self, a):
        a = np.asarray(a, float)
        rho = self.rho(a)
        d1 = _rich_d1(self.rho, a, self.h)
        d2 = _rich_d2(self.rho, a, self.h)
        er = np.stack([np.cos(a), np.sin(a)], -1)
        ea = np.stack([-np.sin(a), np.cos(a)], -1)
        tangent = d1[..., None] * er + rho[..., None] * ea
        speed = np.linalg.norm(tangent, axis=-1)
        nu = np.stack([tangent[..., 1], -tangent[..., 0]], -1) / speed[..., None]
        kappa = (rho**2 + 2 * d1**2 - rho * d2) / speed**3
        theta = np.arctan2(nu[..., 1], nu[..., 0])
        kappa_f = self.norm.aniso(theta) * kappa
        x = self.center + rho[..., None] * er
        return x, nu, theta, kappa_f, speed

    def integrate(self, integrand):
        def g(a):
            x, nu, theta, kf, speed = self.local(a)
            return integrand(x, nu, theta, kf) * speed

        return adaptive_simpson(g, self.a0, self.a1, noise=FD_NOISE)

    def omegas(self):
        """Capillary angles <Phi(nu), n_i> at the two endpoints, keyed by face."""
        out = {}
        for a in (self.a0, self.a1):
            x, nu, theta, _, _ = self.local(np.array([a]))
            face = 1 if abs(x[0] @ self.n1) < abs(x[0] @ self.n2) else 2
            out[face] = float(self.norm.phi(theta)[0] @ (self.n1 if face == 1 else self.n2))
        return out


def curve_length(cs: CurveScenario):
    return cs.integrate(lambda x, nu, th, kf: np.ones_like(th))


def curve_anisotropic_length(cs: CurveScenario):
    return cs.integrate(lambda x, nu, th, kf: cs.norm.f(th))


def curve_area(cs: CurveScenario):
    """|Omega| = (1/2) integral <x, nu> ds; the two rays through the apex carry no flux."""
    return 0.5 * cs.integrate(lambda x, nu, th, kf: np.sum(x * nu, -1))


def curve_minkowski(cs: CurveScenario):
    """(lhs, rhs, residual) for integral (F(nu) - <k, nu>) = integral kappa^F <x, nu>."""
    lhs = cs.integrate(lambda x, nu, th, kf: cs.norm.f(th) - nu @ cs.k)
    rhs = cs.integrate(lambda x, nu, th, kf: kf * np.sum(x * nu, -1))
    return lhs, rhs, abs(lhs - rhs)


def curve_hk(cs: CurveScenario):
    """(lhs, rhs, gap) with lhs = integral (F(nu) - <nu, k>) / kappa^F and rhs = 2 |Omega|."""
    lhs = cs.integrate(lambda x, nu, th, kf: (cs.norm.f(th) - nu @ cs.k) / kf)
    rhs = 2 * curve_area(cs)
    return lhs, rhs, lhs - rhs


def curve_member(cs: CurveScenario, table=2**16):
    """Membership oracle for the region enclosed by the curve and the sector.

    rho is tabulated once on a periodic grid of ``table`` angles and linearly
    interpolated; the interpolation error is far below Monte-Carlo noise.
    """
    grid = np.linspace(-np.pi, np.pi, table + 1)
    rho = cs.rho(grid)

    def member(z):
        z = np.atleast_2d(z)
        inside = (z @ cs.n1 < 0) & (z @ cs.n2 < 0)
        rel = z - cs.center
        a = np.arctan2(rel[:, 1], rel[:, 0])
        out = np.zeros(len(z), dtype=bool)
        idx = np.nonzero(inside)[0]
        if len(idx):
            out[idx] = np.linalg.norm(rel[idx], axis=-1) < np.interp(a[idx], grid, rho)
        return out

    return member


def mc_volume(member, lo, hi, samples=10**7, seed=0, shards=10):
    """Point-counting estimate of |{z in box : member(z)}| with its standard error.

    Each shard draws from its own child seed, so the result does not depend on
    how shards are scheduled.
    """
    lo = np.asarray(lo, float)
    hi = np.asarray(hi, float)
    box = float(np.prod(hi - lo))
    children = np.random.SeedSequence(seed).spawn(shards)
    per = [samples // shards + (1 if j < samples % shards else 0) for j in range(shards)]
    hits = 0
    for child, count in zip(children, per):
        rng = np.random.default_rng(child)
        done = 0
        while done < count:
            m = min(1_000_000, count - done)
            z = lo + (hi - lo) * rng.random((m, len(lo)))
            hits += int(np.count_nonzero(member(z)))
            done += m
    p = hits / samples
    return box * p, box * math.sqrt(max(p * (1 - p), 0.0) / samples)
