import numpy as np
import pytest

from conftest import built
from wedgewulff.errors import CapillarySignViolation, NotConstantCurvature, NotMeanConvex
from wedgewulff.norms import Ellipsoidal, Isotropic, SuperquadricBlend
from wedgewulff.surfaces import SphereBump, perturb, wulff_patch
from wedgewulff.verify import (
    CheckRecord,
    Report,
    Verdict,
    VerificationScenario,
    alexandrov_pipeline,
    convergence_record,
    coverage_check,
    elliptic_point_search,
    energy,
    first_variation_check,
    fit_wulff,
    flow_check,
    flux_vanishing_check,
    hk_check,
    minkowski_residual,
    monotonicity_check,
    reduction_check,
    touching_newton,
    wulff_fit,
)
from wedgewulff.wedge import Wedge

E1, E2, E3 = np.eye(3)
RIGHT = Wedge(E1, E2)


def quarter_with(omega0):
    patch = wulff_patch(Isotropic(3), RIGHT, np.zeros(3), 1.0)
    return VerificationScenario("q", Isotropic(3), RIGHT, patch, omega0=omega0)


# -- reports ----------------------------------------------------------------------------


def test_convergence_record_rules():
    good = convergence_record("x", [(0, 1.0, 1.001), (1, 1.0, 1.0 + 1e-5), (2, 1.0, 1.0 + 1e-8)], 1e-7)
    assert good.verdict == Verdict.PASS
    assert good.rate == pytest.approx(np.log2(1e3), rel=1e-4)
    growing = convergence_record("x", [(0, 1.0, 1.0 + 1e-9), (1, 1.0, 1.0 + 5e-8)], 1e-7)
    assert growing.verdict == Verdict.FAIL
    floor = convergence_record("x", [(0, 1.0, 1.0), (1, 1.0, 1.0 + 1e-16)], 1e-7)
    assert floor.verdict == Verdict.PASS and floor.rate == "at floor"
    loose = convergence_record("x", [(0, 1.0, 1.1), (1, 1.0, 1.01)], 1e-7)
    assert loose.verdict == Verdict.FAIL


def test_report_pass_semantics():
    rep = Report("s")
    rep.add(CheckRecord("a", Verdict.PASS))
    rep.add(CheckRecord("b", Verdict.FAIL, expected=Verdict.FAIL))
    assert rep.passed()
    rep.add(CheckRecord("c", Verdict.INCONCLUSIVE))
    assert rep.passed() and not rep.passed(strict=True)
    rep.add(CheckRecord("d", Verdict.FAIL))
    assert not rep.passed()


def test_scenario_rejects_inconsistent_k():
    patch = wulff_patch(Isotropic(3), RIGHT, np.zeros(3), 1.0)
    with pytest.raises(ValueError):
        VerificationScenario("q", Isotropic(3), RIGHT, patch, omega0=(0.0, 0.0), k=np.array([0.1, 0.0, 0.0]))


# -- energy and first variation ----------------------------------------------------------


def test_energy_free_quarter_sphere():
    assert energy(quarter_with((0.0, 0.0)), level=2) == pytest.approx(np.pi, abs=1e-10)


def test_energy_with_wetting():
    # the wetted regions of the quarter sphere are half-disks of area pi/2
    assert energy(quarter_with((-0.5, -0.5)), level=2) == pytest.approx(np.pi - np.pi / 2, abs=1e-10)


def test_energy_scales_with_radius():
    sc = quarter_with((0.0, 0.0))
    big = wulff_patch(Isotropic(3), RIGHT, np.zeros(3), 2.0)
    assert energy(sc, 2, big) == pytest.approx(4 * energy(sc, 2), rel=1e-12)


def test_first_variation_on_wulff_patch():
    sc = built("ellipsoidal_capillary")
    rec = first_variation_check(sc).record("first_variation")
    assert rec.relative <= 1e-5
    # for a Wulff patch the interior term is n / r times the integral of phi
    assert rec.rhs == pytest.approx(rec.lhs, rel=1e-5)


def test_first_variation_zero_field():
    sc = built("quarter_sphere")

    def zero(U):
        return np.zeros(len(U)), np.zeros_like(U)

    rec = first_variation_check(sc, phi=zero).record("first_variation")
    assert rec.lhs == 0.0 and rec.rhs == 0.0


def test_first_variation_on_perturbed_patch():
    rec = first_variation_check(built("perturbed_capillary")).record("first_variation")
    assert rec.verdict == Verdict.PASS and rec.relative <= 1e-4


# -- Minkowski and flux -------------------------------------------------------------------


def test_minkowski_quarter_sphere():
    rec = minkowski_residual(built("quarter_sphere"), 1, (0, 1, 2))
    assert rec.lhs == pytest.approx(np.pi, abs=1e-10)
    assert rec.residual < 1e-8


@pytest.mark.parametrize("r", [1, 2])
def test_minkowski_capillary_ellipsoid(r):
    rec = minkowski_residual(built("ellipsoidal_capillary"), r, (0, 1, 2))
    assert rec.verdict == Verdict.PASS
    assert rec.relative < 1e-7
    assert rec.rate == "at floor" or rec.rate >= 2


def test_minkowski_order_range():
    with pytest.raises(ValueError):
        minkowski_residual(built("quarter_circle"), 2)


def test_minkowski_inconclusive_without_capillary_data():
    rec = minkowski_residual(built("tilted_free"), 1, (0, 1))
    assert rec.verdict == Verdict.INCONCLUSIVE
    assert rec.detail["error"] == "CapillaryViolation"


@pytest.mark.parametrize("name", ["ellipsoidal_capillary", "blend_capillary", "quarter_sphere", "perturbed_capillary"])
def test_flux_vanishes(name):
    rec = flux_vanishing_check(built(name))
    assert rec.verdict == Verdict.PASS
    assert rec.residual < 1e-9


def test_flux_nonzero_on_tilted_edge():
    rec = flux_vanishing_check(built("tilted_free"))
    assert rec.verdict == Verdict.FAIL and rec.residual > 1e-3


# -- Heintze-Karcher -----------------------------------------------------------------------


def test_hk_quarter_ball_closed_form():
    rep = hk_check(built("quarter_sphere"), (0, 1, 2))
    rec = rep.record("hk_inequality")
    assert rec.lhs == pytest.approx(np.pi, abs=1e-8)
    assert rec.rhs == pytest.approx(np.pi, abs=1e-8)
    assert rep.record("hk_equality").detail["equality"]


def test_hk_capillary_ellipsoid_equality():
    rep = hk_check(built("ellipsoidal_capillary"))
    assert abs(rep.record("hk_inequality").relative) < 1e-7
    assert rep.record("hk_classification").verdict == Verdict.PASS


@pytest.mark.parametrize("name", ["perturbed_free", "perturbed_capillary", "waisted_ellipsoid"])
def test_hk_strict_on_perturbed(name):
    sc = built(name)
    rep = hk_check(sc)
    rec = rep.record("hk_inequality")
    assert rec.residual > 10 * sc.tol("gap")
    assert rec.relative >= 1e-3
    assert not rep.record("hk_equality").detail["equality"]


def test_hk_not_mean_convex():
    base = wulff_patch(Isotropic(3), RIGHT, np.zeros(3), 1.0)
    patch = perturb(base, SphereBump(base, "edge", 2), -0.5, along="anisotropic")
    sc = VerificationScenario("dent", Isotropic(3), RIGHT, patch)
    with pytest.raises(NotMeanConvex) as info:
        hk_check(sc)
    assert len(info.value.nodes) > 0


def test_hk_sign_violation():
    with pytest.raises(CapillarySignViolation):
        hk_check(built("tilted_free"))


def test_reduction():
    for name in ("ellipsoidal_capillary", "perturbed_capillary", "isotropic_capillary"):
        rec = reduction_check(built(name))
        assert rec.verdict == Verdict.PASS
        assert rec.residual <= 1e-10


# -- flow ---------------------------------------------------------------------------------


def test_flow_check_capillary():
    rep = flow_check(built("blend_capillary"))
    laws = [r for r in rep.records if r.name.startswith("flow_law")]
    angles = [r for r in rep.records if r.name.startswith("flow_angle")]
    assert len(laws) == 4 and len(angles) == 4
    assert all(r.verdict == Verdict.PASS for r in rep.records)
    assert all(r.detail["nodes"] >= 100 for r in laws)


def test_flow_check_non_capillary_notes():
    rep = flow_check(built("dented_free"))
    assert rep.notes
    assert not [r for r in rep.records if r.name.startswith("flow_angle")]


# -- monotonicity ----------------------------------------------------------------------


def test_isotropic_monotone_profile():
    rep = monotonicity_check(Isotropic(3), trials=50)
    assert rep.verdict == Verdict.PASS


@pytest.mark.parametrize("norm", [Ellipsoidal(np.diag([1.5, 1.0, 0.6])), SuperquadricBlend(0.3), SuperquadricBlend(0.2, dim=2)])
def test_monotonicity(norm):
    rep = monotonicity_check(norm, trials=1000)
    assert rep.record("monotone").residual == 0
    assert rep.record("derivative_formula").residual <= 1e-6


# -- touching Wulff shapes -----------------------------------------------------------------


def test_sphere_touching_point_is_radial():
    c = np.array([-3.0, -3.0, 0.0])
    patch = wulff_patch(Isotropic(3), RIGHT, c, 1.5)
    y = c + np.array([0.2, -0.1, 0.3])
    U, _ = patch.nodes(1)
    X = patch.sample(U, derivatives=False).x
    j = int(np.argmin(np.linalg.norm(X - y, axis=-1)))
    Us, ts, done = touching_newton(patch, Isotropic(3), y[None], U[j : j + 1], np.array([1.0]))
    assert done[0]
    d = y - c
    assert ts[0] == pytest.approx(1.5 - np.linalg.norm(d), abs=1e-12)
    x_star = patch.sample(Us, derivatives=False).x[0]
    assert np.allclose(x_star, c + 1.5 * d / np.linalg.norm(d), atol=1e-12)


@pytest.mark.parametrize("name", ["quarter_sphere", "perturbed_free", "dented_free", "ellipsoidal_capillary"])
def test_coverage(name):
    rec = coverage_check(built(name), samples=300, seed=1)
    assert rec.detail["covered_fraction"] == 1.0
    assert rec.detail["boundary_events"] == 0


@pytest.mark.parametrize("name", ["quarter_sphere", "perturbed_free", "waisted_ellipsoid", "perturbed_capillary"])
def test_elliptic_point(name):
    rec = elliptic_point_search(built(name))
    assert rec.lhs >= rec.rhs - 1e-6


def test_elliptic_point_on_sphere():
    rec = elliptic_point_search(built("quarter_sphere"))
    assert rec.lhs == pytest.approx(1.0, abs=1e-12)
    assert rec.rhs == pytest.approx(1.0, abs=1e-12)


# -- Wulff fit and the rigidity chain ------------------------------------------------------


def test_wulff_fit_round_trip():
    sc = built("ellipsoidal_capillary")
    fit = fit_wulff(sc.norm, sc.patch)
    assert fit.rms < 1e-9
    assert np.allclose(fit.center, sc.patch.center, atol=1e-8)
    assert fit.radius == pytest.approx(sc.patch.radius, abs=1e-8)
    assert wulff_fit(sc).verdict == Verdict.PASS


def test_wulff_fit_rejects_perturbed():
    rec = wulff_fit(built("perturbed_capillary"))
    assert rec.verdict == Verdict.FAIL and rec.residual > 1e-3


@pytest.mark.parametrize("r", [1, 2])
def test_alexandrov_on_wulff(r):
    rep = alexandrov_pipeline(built("blend_capillary"), r)
    assert all(rec.verdict == Verdict.PASS for rec in rep.records)
    for rec in rep.records:
        if rec.name.startswith("chain"):
            assert rec.relative >= -1e-7
    assert rep.record("wulff_fit").residual <= 1e-9


def test_alexandrov_rejects_perturbed():
    with pytest.raises(NotConstantCurvature) as info:
        alexandrov_pipeline(built("perturbed_free"), 1)
    assert info.value.spread > 1e-3
