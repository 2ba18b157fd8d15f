import io
from itertools import combinations
from math import comb

import numpy as np
import pytest

from conftest import built
from wedgewulff.curvature import (
    anisotropic_shape,
    elementary_symmetric,
    flow_jacobians,
    flowed_mean_curvature,
    higher_mean_curvatures,
    parallel_flow,
    shape_cross_check,
    write_curvature_csv,
)
from wedgewulff.errors import BoundaryEscape, ImmersionLost
from wedgewulff.norms import Isotropic, Shifted
from wedgewulff.surfaces import wulff_patch
from wedgewulff.wedge import Wedge

E1, E2, E3 = np.eye(3)
RIGHT = Wedge(E1, E2)
WULFF = ["quarter_sphere", "ellipsoidal_free", "blend_free", "ellipsoidal_capillary", "blend_capillary",
         "closed_ellipsoid", "ellipse_arc_capillary", "blend_arc"]


def test_sphere_curvatures():
    patch = wulff_patch(Isotropic(3), RIGHT, np.zeros(3), 2.5)
    cd = anisotropic_shape(Isotropic(3), patch, level=1)
    assert np.abs(cd.kappa - 1 / 2.5).max() < 1e-12


@pytest.mark.parametrize("name", WULFF)
def test_wulff_curvatures_are_reciprocal_radius(name):
    sc = built(name)
    cd = anisotropic_shape(sc.norm, sc.patch, level=1)
    assert np.abs(cd.kappa - 1 / sc.patch.radius).max() <= 1e-7


def test_shifted_norm_on_translated_sphere():
    k0 = np.array([0.3, 0.0, 0.0])
    F = Shifted(Isotropic(3), k0)
    patch = wulff_patch(F, RIGHT, np.zeros(3), 1.0)
    cd = anisotropic_shape(F, patch, level=1)
    assert np.abs(cd.kappa - 1).max() < 1e-12


@pytest.mark.parametrize("name", ["blend_capillary", "perturbed_capillary", "perturbed_free"])
def test_shape_operator_against_fd_of_anisotropic_normal(name):
    sc = built(name)
    U, _ = sc.patch.nodes(0)
    assert shape_cross_check(sc.norm, sc.patch, U) < 1e-7


def test_higher_mean_curvatures_hand_values():
    assert np.allclose(higher_mean_curvatures([1.0, 3.0]), [1.0, 2.0, 3.0], atol=1e-15)
    r = 0.7
    assert np.allclose(higher_mean_curvatures([1 / r] * 2), [1.0, 1 / r, 1 / r**2])


def test_polynomial_identity(rng):
    for n in (1, 2, 3):
        kappa = rng.uniform(-2, 3, (50, n))
        H = higher_mean_curvatures(kappa)
        for row, h in zip(kappa, H):
            # coefficients of prod(1 + t kappa_i), lowest degree first
            expected = np.polynomial.polynomial.polyfromroots(-1 / row) * np.prod(row)
            coeffs = [comb(n, i) * h[i] for i in range(n + 1)]
            assert np.allclose(coeffs, expected, atol=1e-10)
            # and e_r as an explicit sum over subsets
            for r in range(n + 1):
                e_r = sum(np.prod(c) for c in combinations(row, r)) if r else 1.0
                assert elementary_symmetric(row)[0, r] == pytest.approx(e_r, abs=1e-12)


def test_mean_is_arithmetic_mean():
    sc = built("perturbed_capillary")
    cd = anisotropic_shape(sc.norm, sc.patch, level=0)
    assert np.allclose(cd.H[:, 1], cd.kappa.mean(1), atol=1e-14)


def test_maclaurin_chain(rng):
    kappa = rng.uniform(0.01, 5, (1000, 2))
    H = higher_mean_curvatures(kappa)
    assert np.all(H[:, 1] >= np.sqrt(H[:, 2]) - 1e-14)
    sc = built("perturbed_free")
    H = anisotropic_shape(sc.norm, sc.patch, level=1).H
    assert np.all(H[:, 1] >= np.sqrt(H[:, 2]) - 1e-14)


def test_am_gm_step():
    sc = built("perturbed_capillary")
    cd = anisotropic_shape(sc.norm, sc.patch, level=1)
    for frac in np.linspace(0.05, 1.0, 20):
        t = frac / cd.kappa.max(1)
        lhs = np.prod(1 - t[:, None] * cd.kappa, 1)
        rhs = (1 - t * cd.mean) ** cd.n
        assert np.all(lhs <= rhs + 1e-14)


# -- parallel flow --------------------------------------------------------------------


def test_zero_time_is_identity():
    sc = built("ellipsoidal_free")
    assert parallel_flow(sc.norm, sc.patch, 0.0) is sc.patch


@pytest.mark.parametrize("t", [-0.3, 0.2, 0.5])
def test_free_wulff_flow_grows_radius(t):
    sc = built("ellipsoidal_free")
    patch = sc.patch
    flowed = parallel_flow(sc.norm, patch, t)
    U, _ = patch.nodes(1)
    x = flowed.sample(U, derivatives=False).x
    assert np.abs(sc.norm.dual()(x - patch.center) - (patch.radius + t)).max() < 1e-12


@pytest.mark.parametrize("name", ["perturbed_capillary", "blend_capillary", "perturbed_arc"])
def test_flow_law_and_normals(name):
    sc = built(name)
    patch = sc.patch
    U, _ = patch.nodes(1)
    assert len(U) >= 100 or patch.n == 1
    cd = anisotropic_shape(sc.norm, patch, U)
    for t in (-0.3, -0.1, 0.1, 0.3):
        flowed = parallel_flow(sc.norm, patch, t, sc.k, kappa=cd.kappa)
        cdt = anisotropic_shape(sc.norm, flowed, U)
        assert np.abs(cdt.kappa - cd.kappa / (1 + t * cd.kappa)).max() <= 1e-6
        assert np.abs(cdt.normal - cd.normal).max() <= 1e-8
        # H^F(t) from P'/P agrees with the recomputed mean curvature
        raw, mean = flowed_mean_curvature(cd.kappa, t)
        assert np.allclose(raw, cd.n * mean)
        assert np.abs(mean - cdt.mean).max() <= 1e-6
        # the tangential Jacobian is the ratio of area elements
        assert np.abs(cdt.area_element / cd.area_element - flow_jacobians(cd.kappa, t)).max() <= 1e-6


def test_flow_outside_window():
    sc = built("quarter_sphere")
    with pytest.raises(ImmersionLost):
        parallel_flow(sc.norm, sc.patch, -1.0)


def test_flow_with_wrong_k_escapes():
    sc = built("isotropic_capillary")
    with pytest.raises(BoundaryEscape):
        parallel_flow(sc.norm, sc.patch, 0.2, np.zeros(3))


def test_flow_jacobians():
    kappa = np.ones((5, 2))
    assert np.allclose(flow_jacobians(kappa, 0.0), 1.0)
    for t in (0.1, 0.5, 0.9):
        assert np.allclose(flow_jacobians(kappa, t, "inward", 1.0), (1 - t) ** 2)
    with pytest.raises(ValueError):
        flow_jacobians(kappa, 0.1, "sideways")


def test_zeta_jacobian_against_fd():
    # zeta(x, t) = x - t Phi(nu(x)); its (n+1)-volume element is F(nu) prod(1 - t kappa) dA dt
    sc = built("perturbed_capillary")
    patch, norm = sc.patch, sc.norm
    U, _ = patch.nodes(0)
    U = U[::7]
    cd = anisotropic_shape(norm, patch, U)
    t = 0.2

    def zeta(V, s):
        smp = patch.sample(V)
        return smp.x - s * norm.gradient(smp.normal)

    h = 1e-5
    cols = []
    for j in range(2):
        e = np.zeros(2)
        e[j] = h
        cols.append((zeta(U + e, t) - zeta(U - e, t)) / (2 * h))
    cols.append((zeta(U, t + h) - zeta(U, t - h)) / (2 * h))
    J = np.abs(np.linalg.det(np.stack(cols, -1)))
    predicted = flow_jacobians(cd.kappa, t, "inward", norm.value(cd.normal)) * cd.area_element
    assert np.abs(J - predicted).max() < 1e-6


def test_curvature_csv():
    sc = built("quarter_sphere")
    cd = anisotropic_shape(sc.norm, sc.patch, level=0)
    buf = io.StringIO()
    write_curvature_csv(cd, buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "node,u0,u1,kappa1,kappa2,H0,H1,H2"
    assert len(lines) == len(cd.u) + 1
