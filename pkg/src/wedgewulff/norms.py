"""Minkowski norms on the unit sphere, their Cahn-Hoffman maps and duals.

Every norm is handled through its positive one-homogeneous extension
``F~`` to R^{n+1}.  For a unit vector ``xi`` the Cahn-Hoffman map is the
Euclidean gradient ``DF~(xi)`` and the spherical form ``A^F = Hess F + F*sigma``
is the restriction of ``D^2 F~(xi)`` to the tangent plane ``xi^perp``.

All methods are vectorized over leading axes: inputs have shape ``(..., d)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import (
    DerivativeFailure,
    MaximizerNotConverged,
    NonUnitInput,
    NotAdmissibleShift,
    PositivityViolation,
    ZeroVector,
)
from .sphere import random_unit, sphere_grid, tangent_basis

UNIT_TOL = 1e-12
POSITIVITY_TOL = 1e-8
DUALITY_TOL_CLOSED = 1e-8
DUALITY_TOL_NUMERICAL = 1e-6


@dataclass(frozen=True)
class ClosedForm:
    def to_dict(self):
        return {"kind": "closed_form"}


@dataclass(frozen=True)
class FiniteDifference:
    """Central differences with Richardson extrapolation.

    ``hessian_step`` is larger than ``step`` because second derivatives are
    taken as differences of (possibly already differenced) gradients.
    """

    step: float = 1e-5
    hessian_step: float = 1e-3
    richardson: int = 1

    def to_dict(self):
        return {
            "kind": "finite_difference",
            "step": self.step,
            "hessian_step": self.hessian_step,
            "richardson": self.richardson,
        }


def derivative_mode_from_dict(data):
    if data is None:
        return None
    kind = data.get("kind", "closed_form")
    if kind == "closed_form":
        return ClosedForm()
    if kind == "finite_difference":
        return FiniteDifference(
            step=float(data.get("step", 1e-5)),
            hessian_step=float(data.get("hessian_step", 1e-3)),
            richardson=int(data.get("richardson", 1)),
        )
    raise ValueError(f"unknown derivative mode {kind!r}")


def _richardson_diff(func, x, step, levels):
    """Richardson-extrapolated central difference of ``func`` at ``x``.

    ``func`` maps (..., d) -> (..., m); returns (..., m, d) with entry
    [i, j] = d func_i / d x_j.
    """
    x = np.asarray(x, dtype=float)
    d = x.shape[-1]
    cols = []
    for j in range(d):
        e = np.zeros(d)
        e[j] = 1.0
        table = []
        for lev in range(levels + 1):
            h = step * 2.0 ** (levels - lev)
            table.append((func(x + h * e) - func(x - h * e)) / (2 * h))
        # table[0] uses the largest step; eliminate h^2, h^4, ... terms
        for order in range(1, levels + 1):
            factor = 4.0**order
            table = [
                (factor * table[i + 1] - table[i]) / (factor - 1)
                for i in range(len(table) - 1)
            ]
        cols.append(table[0])
    return np.stack(cols, axis=-1)


class NormSpec:
    """A Minkowski norm F on S^n, n = dim - 1.

    Subclasses implement ``_value`` (the one-homogeneous extension) and,
    when available, closed-form ``_gradient``/``_hessian``.
    """

    family = "abstract"
    has_closed_form = False

    def __init__(self, dim, derivative_mode=None, certify=True):
        if dim not in (2, 3):
            raise ValueError("only R^2 and R^3 are supported")
        self.dim = dim
        if derivative_mode is None:
            derivative_mode = ClosedForm() if self.has_closed_form else FiniteDifference()
        if isinstance(derivative_mode, ClosedForm) and not self.has_closed_form:
            raise ValueError(f"{self.family} norms have no closed-form derivatives")
        self.derivative_mode = derivative_mode
        self._dual = None
        if certify:
            self.certify()

    # -- extension and derivatives -------------------------------------------------

    def _value(self, x):
        raise NotImplementedError

    def _gradient(self, x):
        raise NotImplementedError

    def _hessian(self, x):
        raise NotImplementedError

    def _quadratic_dual(self):
        """Matrix M with F°(x)^2 = x^T M x, when the dual is of that form."""
        return None

    def value(self, x):
        """One-homogeneous extension F~(x) for nonzero x."""
        return self._value(np.asarray(x, dtype=float))

    def evaluate(self, xi):
        xi = np.asarray(xi, dtype=float)
        dev = np.abs(np.linalg.norm(xi, axis=-1) - 1.0)
        if np.any(dev > UNIT_TOL):
            raise NonUnitInput(f"|xi| deviates from 1 by {dev.max():.3e}")
        val = self._value(xi)
        if np.any(val <= 0):
            raise PositivityViolation("F(xi) <= 0", xi=xi, value=np.min(val))
        return val

    def gradient(self, x):
        """Euclidean gradient DF~(x); equals the Cahn-Hoffman map on S^n."""
        x = np.asarray(x, dtype=float)
        mode = self.derivative_mode
        if isinstance(mode, ClosedForm):
            return self._gradient(x)
        grad = _richardson_diff(lambda y: self._value(y)[..., None], x, mode.step, mode.richardson)[
            ..., 0, :
        ]
        if mode.richardson > 0:
            coarse = _richardson_diff(
                lambda y: self._value(y)[..., None], x, 2 * mode.step, 0
            )[..., 0, :]
            scale = 1.0 + np.abs(grad)
            if np.any(np.abs(grad - coarse) > 1e-3 * scale):
                raise DerivativeFailure("finite-difference gradient did not settle")
        return grad

    def hessian(self, x):
        """Euclidean Hessian D^2 F~(x); annihilates x by homogeneity."""
        x = np.asarray(x, dtype=float)
        mode = self.derivative_mode
        if isinstance(mode, ClosedForm):
            return self._hessian(x)
        hess = _richardson_diff(self.gradient, x, mode.hessian_step, mode.richardson)
        return 0.5 * (hess + np.swapaxes(hess, -1, -2))

    def cahn_hoffman(self, xi):
        return self.gradient(xi)

    def sphere_hessian_form(self, xi, check=True):
        """A^F(xi) in an orthonormal tangent basis.

        Returns ``(form, basis)`` with ``form`` of shape (..., n, n) and
        ``basis`` of shape (..., d, n).
        """
        xi = np.asarray(xi, dtype=float)
        basis = tangent_basis(xi)
        form = np.swapaxes(basis, -1, -2) @ self.hessian(xi) @ basis
        form = 0.5 * (form + np.swapaxes(form, -1, -2))
        if check:
            eig = np.linalg.eigvalsh(form)[..., 0]
            if np.any(eig <= POSITIVITY_TOL):
                bad = np.unravel_index(np.argmin(eig), eig.shape) if eig.ndim else ()
                raise PositivityViolation(
                    f"A^F not positive definite: smallest eigenvalue {np.min(eig):.3e}",
                    xi=xi[bad] if eig.ndim else xi,
                    value=float(np.min(eig)),
                )
        return form, basis

    # -- certification -----------------------------------------------------------

    def certify(self, count=None):
        """Dense sphere sweep: F > 0 and A^F > POSITIVITY_TOL everywhere sampled."""
        count = count or (720 if self.dim == 2 else 2000)
        grid = sphere_grid(self.dim, count)
        vals = self._value(grid)
        if np.any(vals <= 0):
            i = int(np.argmin(vals))
            raise PositivityViolation(
                f"{self.family}: F <= 0 at {grid[i]}", xi=grid[i], value=float(vals[i])
            )
        form, _ = self.sphere_hessian_form(grid, check=False)
        eig = np.linalg.eigvalsh(form)[:, 0]
        i = int(np.argmin(eig))
        if eig[i] <= POSITIVITY_TOL:
            raise PositivityViolation(
                f"{self.family}: smallest eigenvalue of A^F is {eig[i]:.3e} at {grid[i]}",
                xi=grid[i],
                value=float(eig[i]),
            )
        self.min_form_eigenvalue = float(eig[i])

    # -- dual ----------------------------------------------------------------------

    def dual(self, mode=None, settings=None):
        if mode is None and settings is None:
            if self._dual is None:
                self._dual = DualNorm(self)
            return self._dual
        return DualNorm(self, mode=mode, settings=settings)

    # -- serialization -------------------------------------------------------------

    def params(self):
        return {}

    def to_dict(self):
        return {
            "family": self.family,
            "dim": self.dim,
            "params": self.params(),
            "derivative_mode": self.derivative_mode.to_dict(),
        }

    def __repr__(self):
        return f"{type(self).__name__}(dim={self.dim}, params={self.params()})"


class Isotropic(NormSpec):
    family = "isotropic"
    has_closed_form = True

    def _value(self, x):
        return np.linalg.norm(x, axis=-1)

    def _gradient(self, x):
        return x / np.linalg.norm(x, axis=-1, keepdims=True)

    def _hessian(self, x):
        r = np.linalg.norm(x, axis=-1)[..., None, None]
        xh = x[..., :, None] / r
        return (np.eye(x.shape[-1]) - xh * np.swapaxes(xh, -1, -2)) / r

    def _quadratic_dual(self):
        return np.eye(self.dim)


class Ellipsoidal(NormSpec):
    """F(xi) = sqrt(xi^T A xi); the Wulff shape is the ellipsoid x^T A^-1 x = 1."""

    family = "ellipsoidal"
    has_closed_form = True

    def __init__(self, A, derivative_mode=None, certify=True):
        A = np.asarray(A, dtype=float)
        if A.shape[0] != A.shape[1] or not np.allclose(A, A.T, atol=1e-14):
            raise ValueError("A must be a symmetric matrix")
        if np.linalg.eigvalsh(A)[0] <= 0:
            raise PositivityViolation("A must be positive definite")
        self.A = A
        self.A_inv = np.linalg.inv(A)
        super().__init__(A.shape[0], derivative_mode, certify)

    def _value(self, x):
        return np.sqrt(np.einsum("...i,ij,...j->...", x, self.A, x))

    def _gradient(self, x):
        return (x @ self.A) / self._value(x)[..., None]

    def _hessian(self, x):
        f = self._value(x)[..., None, None]
        ax = (x @ self.A)[..., :, None]
        return self.A / f - ax * np.swapaxes(ax, -1, -2) / f**3

    def _quadratic_dual(self):
        return self.A_inv

    def params(self):
        return {"A": self.A.tolist()}


class SuperquadricBlend(NormSpec):
    """F(xi) = (1 - eps)|xi| + eps * (sum xi_i^4)^(1/4), eps in (0, 1)."""

    family = "superquadric_blend"
    has_closed_form = True

    def __init__(self, eps, dim=3, derivative_mode=None, certify=True):
        if not 0 < eps < 1:
            raise ValueError("eps must lie in (0, 1)")
        self.eps = float(eps)
        super().__init__(dim, derivative_mode, certify)

    def _value(self, x):
        q = np.sum(x**4, axis=-1)
        return (1 - self.eps) * np.linalg.norm(x, axis=-1) + self.eps * q**0.25

    def _gradient(self, x):
        r = np.linalg.norm(x, axis=-1, keepdims=True)
        q = np.sum(x**4, axis=-1, keepdims=True)
        return (1 - self.eps) * x / r + self.eps * x**3 / q**0.75

    def _hessian(self, x):
        d = x.shape[-1]
        r = np.linalg.norm(x, axis=-1)[..., None, None]
        xh = x[..., :, None] / r
        iso = (np.eye(d) - xh * np.swapaxes(xh, -1, -2)) / r
        q = np.sum(x**4, axis=-1)[..., None, None]
        x3 = (x**3)[..., :, None]
        quartic = 3 * (x[..., :, None] ** 2 * np.eye(d)) / q**0.75 - 3 * x3 * np.swapaxes(
            x3, -1, -2
        ) / q**1.75
        return (1 - self.eps) * iso + self.eps * quartic

    def params(self):
        return {"eps": self.eps}


class Custom(NormSpec):
    """User-supplied F on the sphere; every derivative is taken numerically."""

    family = "custom"

    def __init__(self, func: Callable, dim=3, derivative_mode=None, certify=True):
        self.func = func
        super().__init__(dim, derivative_mode, certify)

    def _value(self, x):
        r = np.linalg.norm(x, axis=-1)
        return r * np.asarray(self.func(x / r[..., None]), dtype=float)

    def to_dict(self):
        raise TypeError("custom norms carry a Python callable and cannot be serialized")


class Shifted(NormSpec):
    """F(xi) - <k, xi> for a base norm F; ``Shifted(Isotropic(d), k0)`` is |xi| - <k0, xi>."""

    family = "shifted"

    def __init__(self, base: NormSpec, k, derivative_mode=None, certify=True):
        self.base = base
        self.k = np.asarray(k, dtype=float)
        self.has_closed_form = isinstance(base.derivative_mode, ClosedForm)
        if derivative_mode is None:
            derivative_mode = base.derivative_mode
        super().__init__(base.dim, derivative_mode, certify)

    def _value(self, x):
        return self.base.value(x) - x @ self.k

    def _gradient(self, x):
        return self.base.gradient(x) - self.k

    def _hessian(self, x):
        return self.base.hessian(x)

    def params(self):
        out = {"k0": self.k.tolist()}
        if not isinstance(self.base, Isotropic):
            out["base"] = self.base.to_dict()
        return out


def shift_norm(norm: NormSpec, k) -> NormSpec:
    """The shifted norm F(xi) - <xi, k>; requires F°(k) < 1."""
    k = np.asarray(k, dtype=float)
    if not np.any(k):
        return norm
    dual_k = float(norm.dual()(k))
    if dual_k >= 1:
        raise NotAdmissibleShift(f"F°(k) = {dual_k:.6g} >= 1")
    if isinstance(norm, Shifted):
        return Shifted(norm.base, norm.k + k)
    return Shifted(norm, k)


def norm_from_dict(data) -> NormSpec:
    family = data["family"]
    params = data.get("params", {})
    mode = derivative_mode_from_dict(data.get("derivative_mode"))
    dim = int(data.get("dim", 3))
    if family == "isotropic":
        return Isotropic(dim, mode)
    if family == "ellipsoidal":
        return Ellipsoidal(params["A"], mode)
    if family == "superquadric_blend":
        return SuperquadricBlend(params["eps"], dim, mode)
    if family == "shifted":
        base = norm_from_dict(params["base"]) if "base" in params else None
        k0 = np.asarray(params["k0"], dtype=float)
        if base is None:
            base = Isotropic(len(k0), mode)
        return Shifted(base, k0, mode)
    if family == "custom":
        raise ValueError("custom norms are only available through the Python API")
    raise ValueError(f"unknown norm family {family!r}")


# -- dual norm -------------------------------------------------------------------


@dataclass(frozen=True)
class SupSettings:
    """Inner maximization settings for the numerical dual."""

    random_starts: int = 20
    grid_size: Optional[int] = None
    ascent_steps: int = 5
    max_newton: int = 30
    sup_tol: float = 1e-9
    seed: int = 0
    chunk: int = 4096


class DualNorm:
    """F°(x) = sup { <x, xi> / F(xi) : xi in S^n }.

    ``solve`` returns the value together with the unit maximizer ``xi*``;
    the gradient of F° is ``xi* / F(xi*)`` and ``x = F°(x) Phi(xi*)``.
    """

    def __init__(self, source: NormSpec, mode=None, settings: SupSettings = None):
        self.source = source
        closed = self._closed_available()
        if mode is None:
            mode = "closed_form" if closed else "numerical"
        if mode == "closed_form" and not closed:
            raise ValueError(f"no closed-form dual for {source.family}")
        self.mode = mode
        self.settings = settings or SupSettings()
        self._seeds = None

    @property
    def tolerance(self):
        return DUALITY_TOL_CLOSED if self.mode == "closed_form" else DUALITY_TOL_NUMERICAL

    def _closed_available(self):
        src = self.source
        if src._quadratic_dual() is not None:
            return True
        return isinstance(src, Shifted) and src.base._quadratic_dual() is not None

    def __call__(self, x):
        return self.solve(x)[0]

    def gradient(self, x):
        _, xi = self.solve(x)
        return xi / self.source.value(xi)[..., None]

    def solve(self, x, seeding="full"):
        x = np.asarray(x, dtype=float)
        r = np.linalg.norm(x, axis=-1)
        if np.any(r == 0):
            raise ZeroVector("F° is evaluated at the zero vector")
        if self.mode == "closed_form":
            return self._solve_closed(x)
        flat = x.reshape(-1, x.shape[-1])
        values = np.empty(flat.shape[0])
        maxim = np.empty_like(flat)
        step = self.settings.chunk
        for i in range(0, flat.shape[0], step):
            values[i : i + step], maxim[i : i + step] = self._solve_numerical(
                flat[i : i + step], seeding
            )
        return values.reshape(x.shape[:-1]), maxim.reshape(x.shape)

    def _solve_closed(self, x):
        src = self.source
        M = src._quadratic_dual()
        if M is not None:
            mx = x @ M
            val = np.sqrt(np.sum(mx * x, axis=-1))
            xi = mx / np.linalg.norm(mx, axis=-1, keepdims=True)
            return val, xi
        # shifted quadratic: x / F°bar(x) + k lies on the base unit Wulff shape
        M = src.base._quadratic_dual()
        k = src.k
        a = np.einsum("...i,ij,...j->...", x, M, x)
        b = x @ (M @ k)
        c = k @ M @ k - 1.0
        if c >= 0:
            raise NotAdmissibleShift("shift vector lies outside the unit Wulff shape")
        s = (-b + np.sqrt(b * b - a * c)) / a
        p = s[..., None] * x + k
        mp = p @ M
        xi = mp / np.linalg.norm(mp, axis=-1, keepdims=True)
        return 1.0 / s, xi

    def _seed_set(self):
        if self._seeds is None:
            st = self.settings
            d = self.source.dim
            count = st.grid_size or (360 if d == 2 else 2000)
            rng = np.random.default_rng(st.seed)
            seeds = np.concatenate(
                [sphere_grid(d, count), random_unit(rng, d, st.random_starts)]
            )
            self._seeds = (seeds, self.source.value(seeds))
        return self._seeds

    def _solve_numerical(self, x, seeding):
        src = self.source
        st = self.settings
        m, d = x.shape
        xh = x / np.linalg.norm(x, axis=-1, keepdims=True)
        if seeding == "full":
            seeds, fseeds = self._seed_set()
            ratios = (xh @ seeds.T) / fseeds
            best = np.argmax(ratios, axis=1)
            xi = seeds[best].copy()
            # the radial direction also competes as a start
            better = 1.0 / src.value(xh) > ratios[np.arange(m), best]
            xi[better] = xh[better]
        else:
            xi = xh.copy()

        def objective(v):
            return np.sum(xh * v, axis=-1) / src.value(v)

        # projected-gradient ascent on the sphere
        for _ in range(st.ascent_steps):
            f = src.value(xi)
            g = xh / f[:, None] - (np.sum(xh * xi, -1) / f**2)[:, None] * src.gradient(xi)
            g -= np.sum(g * xi, -1, keepdims=True) * xi
            cur = objective(xi)
            step = 0.5 * np.ones(m)
            for _ in range(6):
                trial = xi + step[:, None] * g
                trial /= np.linalg.norm(trial, axis=-1, keepdims=True)
                ok = objective(trial) > cur
                if ok.all():
                    break
                step = np.where(ok, step, 0.5 * step)
            ok = objective(trial) > cur
            xi[ok] = trial[ok]

        # Newton polish on  xh - lam * DF(v) = 0,  F(v) = 1
        v = xi / src.value(xi)[:, None]
        lam = np.sum(xh * v, axis=-1)
        eye_pad = np.zeros((m, d + 1, d + 1))
        for _ in range(st.max_newton):
            grad = src.gradient(v)
            res = np.concatenate([xh - lam[:, None] * grad, (src.value(v) - 1)[:, None]], -1)
            if np.max(np.abs(res)) < 1e-14:
                break
            jac = eye_pad.copy()
            jac[:, :d, :d] = -lam[:, None, None] * src.hessian(v)
            jac[:, :d, d] = -grad
            jac[:, d, :d] = grad
            delta = np.linalg.solve(jac, -res[..., None])[..., 0]
            v_new = v + delta[:, :d]
            lam_new = lam + delta[:, d]
            # reject steps that leave the cone where v stays a sensible direction
            bad = np.sum(v_new * v, -1) <= 0
            v_new[bad] = v[bad]
            lam_new[bad] = lam[bad]
            v, lam = v_new, lam_new
        xi = v / np.linalg.norm(v, axis=-1, keepdims=True)
        val = objective(xi)
        resid = np.linalg.norm(xh - val[:, None] * src.gradient(xi), axis=-1)
        worst = int(np.argmax(resid))
        if resid[worst] > st.sup_tol:
            raise MaximizerNotConverged(
                f"dual sup not converged: stationarity residual {resid[worst]:.3e}",
                best_value=float(val[worst]),
                residual=float(resid[worst]),
            )
        return val * np.linalg.norm(x, axis=-1), xi


def dual_eval(dual: DualNorm, x):
    return dual(x)
