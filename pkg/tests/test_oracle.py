import numpy as np
import pytest

from conftest import built
from wedgewulff import oracle
from wedgewulff.suites import _curve_scenario, run_suite
from wedgewulff.verify import Verdict

N1, N2 = np.array([1.0, 0.0]), np.array([0.0, 1.0])


def euclid(p):
    return np.linalg.norm(p, axis=-1)


def quarter_circle(radius=1.0):
    return oracle.CurveScenario(oracle.PlanarNorm(euclid), N1, N2, np.zeros(2), radius, np.zeros(2))


@pytest.mark.parametrize(
    "func, a, b, exact",
    [
        (np.sin, 0.0, np.pi, 2.0),
        (np.exp, -1.0, 2.0, np.exp(2) - np.exp(-1)),
        (lambda x: 1 / (1 + x**2), -3.0, 3.0, 2 * np.arctan(3.0)),
        (lambda x: 1 / (1e-2 + x**2), -1.0, 1.0, 20 * np.arctan(10.0)),
    ],
)
def test_adaptive_simpson(func, a, b, exact):
    assert oracle.adaptive_simpson(func, a, b) == pytest.approx(exact, abs=1e-10)


def test_adaptive_simpson_reports_failure():
    # an endpoint singularity cannot meet 1e-12 within the depth limit
    with pytest.raises(RuntimeError):
        oracle.adaptive_simpson(lambda x: 1 / np.sqrt(x + 1e-300), 0.0, 1.0, max_depth=20)


def test_planar_norm_derivatives():
    A = np.array([[2.0, 0.3], [0.3, 0.7]])
    pn = oracle.PlanarNorm(lambda p: np.sqrt(np.einsum("...i,ij,...j->...", p, A, p)))
    th = np.linspace(0, 2 * np.pi, 37)
    xi = np.stack([np.cos(th), np.sin(th)], -1)
    f = np.sqrt(np.einsum("...i,ij,...j->...", xi, A, xi))
    # Phi of a quadratic norm is A xi / F(xi), and its dual is sqrt(x A^{-1} x)
    assert np.abs(pn.phi(th) - (xi @ A) / f[:, None]).max() < 1e-9
    x = np.array([[0.4, -1.3], [-2.0, 0.1]])
    assert np.allclose(pn.dual(x), np.sqrt(np.einsum("...i,ij,...j->...", x, np.linalg.inv(A), x)), atol=1e-10)


def test_quarter_circle_quantities():
    cs = quarter_circle()
    assert cs.a1 - cs.a0 == pytest.approx(np.pi / 2, abs=1e-12)
    assert oracle.curve_length(cs) == pytest.approx(np.pi / 2, abs=1e-11)
    assert oracle.curve_area(cs) == pytest.approx(np.pi / 4, abs=1e-11)
    lhs, rhs, res = oracle.curve_minkowski(cs)
    assert lhs == pytest.approx(np.pi / 2, abs=1e-11) and res < 1e-11
    lhs, rhs, gap = oracle.curve_hk(cs)
    # equality case: integral of 1/kappa is pi/2 = 2 * (pi/4)
    assert lhs == pytest.approx(np.pi / 2, abs=1e-10)
    assert abs(gap) < 1e-10
    assert all(abs(v) < 1e-10 for v in cs.omegas().values())


@pytest.mark.parametrize("name", ["ellipse_arc_capillary", "blend_arc", "shifted_arc"])
def test_minkowski_and_hk_equality_on_wulff_arcs(name):
    cs = _curve_scenario(built(name))
    assert oracle.curve_minkowski(cs)[2] < 1e-10
    lhs, rhs, gap = oracle.curve_hk(cs)
    assert abs(gap) < 1e-9 * max(1.0, rhs)


def test_capillary_arc_angles():
    sc = built("ellipse_arc_capillary")
    omegas = _curve_scenario(sc).omegas()
    assert omegas[1] == pytest.approx(sc.omega0[0], abs=1e-9)
    assert omegas[2] == pytest.approx(sc.omega0[1], abs=1e-9)


@pytest.mark.parametrize("name", ["perturbed_arc", "perturbed_blend_arc"])
def test_hk_gap_on_perturbed_arcs(name):
    cs = _curve_scenario(built(name))
    lhs, rhs, gap = oracle.curve_hk(cs)
    assert gap > 1e-3 * rhs
    assert oracle.curve_minkowski(cs)[2] < 1e-9


def test_curve_member_area():
    cs = quarter_circle()
    est, err = oracle.mc_volume(oracle.curve_member(cs), [-1.05, -1.05], [0.05, 0.05], samples=4 * 10**5, seed=3)
    assert abs(est - np.pi / 4) <= 3 * err


def test_mc_volume_quarter_ball():
    def ball(z):
        return (np.sum(z * z, -1) < 1) & (z[:, 0] < 0) & (z[:, 1] < 0)

    est, err = oracle.mc_volume(ball, [-1, -1, -1], [0, 0, 1], samples=10**6, seed=7)
    assert abs(est - np.pi / 3) <= 3 * err


def test_mc_volume_empty_and_full():
    est, err = oracle.mc_volume(lambda z: np.zeros(len(z), bool), [0, 0], [1, 1], samples=1000)
    assert est == 0.0 and err == 0.0
    est, err = oracle.mc_volume(lambda z: np.ones(len(z), bool), [0, 0, 0], [2, 3, 4], samples=1000)
    assert est == pytest.approx(24.0) and err == 0.0


def test_mc_volume_is_reproducible():
    def ball(z):
        return np.sum(z * z, -1) < 1

    a = oracle.mc_volume(ball, [-1, -1], [1, 1], samples=12345, seed=11)
    b = oracle.mc_volume(ball, [-1, -1], [1, 1], samples=12345, seed=11)
    c = oracle.mc_volume(ball, [-1, -1], [1, 1], samples=12345, seed=12)
    assert a == b and a != c


@pytest.mark.parametrize("name", ["quarter_circle", "ellipse_arc_capillary", "perturbed_arc", "shifted_arc"])
def test_oracle_agrees_with_main_path(name):
    sc = built(name)
    rep = run_suite(sc, "oracle")
    curves = [r for r in rep.records if r.name.startswith("curve_")]
    assert len(curves) >= 8
    for rec in curves:
        assert rec.verdict == Verdict.PASS, rec.name
        assert rec.relative <= 1e-9
    assert rep.record("mc_volume").verdict == Verdict.PASS
