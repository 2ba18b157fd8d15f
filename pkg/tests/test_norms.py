import numpy as np
import pytest
from scipy.optimize import minimize

from wedgewulff.errors import (
    NonUnitInput,
    NotAdmissibleShift,
    PositivityViolation,
    ZeroVector,
)
from wedgewulff.norms import (
    Custom,
    Ellipsoidal,
    FiniteDifference,
    Isotropic,
    Shifted,
    SuperquadricBlend,
    dual_eval,
    norm_from_dict,
    shift_norm,
)
from wedgewulff.sphere import random_unit, sphere_grid
from wedgewulff.verify import verify_duality

ELLIP = np.diag([1.5, 1.0, 0.6])


def fd_gradient(f, x, h=1e-5):
    """Plain central differences of the extension; independent of the package."""
    out = np.empty_like(x)
    for j in range(x.shape[-1]):
        e = np.zeros(x.shape[-1])
        e[j] = h
        out[..., j] = (f(x + e) - f(x - e)) / (2 * h)
    return out


def brute_dual(norm, x):
    """sup <x, xi> / F(xi) by a dense grid followed by a local polish."""
    grid = sphere_grid(norm.dim, 200_000 if norm.dim == 3 else 20_000)
    ratio = grid @ x / norm.value(grid)
    start = grid[np.argmax(ratio)]

    def neg(v):
        return -(v @ x) / norm.value(v)

    res = minimize(neg, start, method="Nelder-Mead", options={"xatol": 1e-13, "fatol": 1e-15, "maxiter": 20000})
    return -res.fun


# -- evaluate ----------------------------------------------------------------------


def test_isotropic_value_on_pole():
    assert Isotropic(3).evaluate([0.0, 0.0, 1.0]) == pytest.approx(1.0, abs=1e-15)


def test_shifted_value():
    F = Shifted(Isotropic(3), [0.3, 0.0, 0.0])
    assert F.evaluate([1.0, 0.0, 0.0]) == pytest.approx(0.7, abs=1e-15)


def test_ellipsoidal_value_matches_quadratic_form():
    F = Ellipsoidal(np.diag([4.0, 1.0, 1.0]))
    assert F.evaluate([1.0, 0.0, 0.0]) == pytest.approx(2.0, abs=1e-15)


def test_evaluate_rejects_non_unit_input():
    with pytest.raises(NonUnitInput):
        Isotropic(3).evaluate([1.0, 1e-3, 0.0])


def test_custom_norm_positivity_violation():
    with pytest.raises(PositivityViolation):
        Custom(lambda xi: xi[..., 0], dim=2)


def test_one_homogeneity(rng):
    for F in (Isotropic(3), Ellipsoidal(ELLIP), SuperquadricBlend(0.3)):
        x = rng.standard_normal((50, 3))
        lam = rng.uniform(0.1, 5.0, (50,))
        assert np.allclose(F.value(lam[:, None] * x), lam * F.value(x), rtol=1e-13)


# -- Cahn-Hoffman map ----------------------------------------------------------------


def test_isotropic_cahn_hoffman_is_identity(rng):
    xi = random_unit(rng, 3, 100)
    assert np.allclose(Isotropic(3).cahn_hoffman(xi), xi, atol=1e-15)


def test_shifted_cahn_hoffman_against_fd(rng):
    k0 = np.array([0.3, 0.0, 0.0])
    F = Shifted(Isotropic(3), k0)
    xi = random_unit(rng, 3, 100)
    phi = F.cahn_hoffman(xi)
    assert np.allclose(phi, xi - k0, atol=1e-14)
    assert np.abs(phi - fd_gradient(F.value, xi)).max() < 1e-9


def test_ellipsoidal_cahn_hoffman_against_fd(rng):
    F = Ellipsoidal(ELLIP)
    xi = random_unit(rng, 3, 100)
    closed = (xi @ ELLIP) / np.sqrt(np.einsum("ni,ij,nj->n", xi, ELLIP, xi))[:, None]
    assert np.allclose(F.cahn_hoffman(xi), closed, atol=1e-14)
    assert np.abs(F.cahn_hoffman(xi) - fd_gradient(F.value, xi)).max() < 1e-9


def test_blend_closed_form_derivatives_against_fd(rng):
    F = SuperquadricBlend(0.3)
    x = random_unit(rng, 3, 50)
    assert np.abs(F.gradient(x) - fd_gradient(F.value, x)).max() < 1e-9
    H = F.hessian(x)
    fdH = np.stack([fd_gradient(lambda y: F.gradient(y)[..., j], x) for j in range(3)], -2)
    assert np.abs(H - fdH).max() < 1e-7


def test_finite_difference_mode_matches_closed_form(rng):
    closed = SuperquadricBlend(0.2, dim=3)
    fd = SuperquadricBlend(0.2, dim=3, derivative_mode=FiniteDifference())
    x = random_unit(rng, 3, 50)
    assert np.abs(fd.gradient(x) - closed.gradient(x)).max() < 1e-9
    assert np.abs(fd.hessian(x) - closed.hessian(x)).max() < 1e-5


def test_fd_gradient_error_decays_at_second_order(rng):
    F = Ellipsoidal(ELLIP)
    x = random_unit(rng, 3, 20)
    exact = F.gradient(x)
    errs = []
    for h in (4e-2, 2e-2, 1e-2):
        fd = FiniteDifference(step=h, richardson=0)
        G = Ellipsoidal(ELLIP, derivative_mode=fd)
        errs.append(np.abs(G.gradient(x) - exact).max())
    rates = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(rates > 1.9)


# -- spherical Hessian form ----------------------------------------------------------------


def test_isotropic_form_is_identity(rng):
    form, _ = Isotropic(3).sphere_hessian_form(random_unit(rng, 3, 30))
    assert np.allclose(form, np.eye(2), atol=1e-14)


def test_shifted_form_is_identity(rng):
    F = Shifted(Isotropic(3), [0.3, 0.0, 0.0])
    xi = random_unit(rng, 3, 30)
    form, basis = F.sphere_hessian_form(xi)
    assert np.allclose(form, np.eye(2), atol=1e-14)
    # the same form from finite differences of the gradient
    fdH = np.stack([fd_gradient(lambda y: F.gradient(y)[..., j], xi) for j in range(3)], -2)
    fd_form = np.swapaxes(basis, -1, -2) @ fdH @ basis
    assert np.abs(fd_form - np.eye(2)).max() < 1e-8


def test_blend_form_positive_on_dense_grid():
    F = SuperquadricBlend(0.2)
    form, _ = F.sphere_hessian_form(sphere_grid(3, 10_000))
    assert np.allclose(form, np.swapaxes(form, -1, -2), atol=1e-10)
    assert np.linalg.eigvalsh(form)[:, 0].min() > 0


def test_degenerate_form_reported_at_axis():
    # the l^4 norm loses strict convexity exactly at the coordinate axes
    F = Custom(lambda xi: np.sum(xi**4, -1) ** 0.25, dim=3, certify=False)
    with pytest.raises(PositivityViolation) as info:
        F.sphere_hessian_form(np.array([1.0, 0.0, 0.0]))
    assert info.value.value < 1e-6


# -- dual ----------------------------------------------------------------------------


def test_isotropic_dual():
    assert dual_eval(Isotropic(3).dual(), np.array([0.0, 2.0, 0.0])) == pytest.approx(2.0, abs=1e-15)


def test_ellipsoidal_dual_closed_form(rng):
    F = Ellipsoidal(ELLIP)
    x = rng.standard_normal((20, 3))
    expected = np.sqrt(np.einsum("ni,ij,nj->n", x, np.linalg.inv(ELLIP), x))
    assert np.allclose(F.dual()(x), expected, rtol=1e-14)
    assert brute_dual(F, x[0]) == pytest.approx(expected[0], rel=1e-9)


def test_shifted_dual_against_brute_force():
    F = Shifted(Isotropic(3), [0.3, 0.0, 0.0])
    value = dual_eval(F.dual(), np.array([1.0, 0.0, 0.0]))
    assert value == pytest.approx(1 / 0.7, rel=1e-12)
    assert brute_dual(F, np.array([1.0, 0.0, 0.0])) == pytest.approx(1 / 0.7, rel=1e-9)


def test_numerical_dual_against_brute_force(rng):
    F = SuperquadricBlend(0.3)
    dual = F.dual()
    assert dual.mode == "numerical"
    for x in rng.standard_normal((3, 3)):
        assert dual(x) == pytest.approx(brute_dual(F, x), rel=1e-9)


def test_numerical_dual_agrees_with_closed_form(rng):
    F = Ellipsoidal(ELLIP)
    x = rng.standard_normal((200, 3))
    assert np.abs(F.dual("numerical")(x) - F.dual()(x)).max() < 1e-9


def test_dual_homogeneity(rng):
    dual = SuperquadricBlend(0.3).dual()
    x = rng.standard_normal((20, 3))
    assert np.allclose(dual(3.0 * x), 3.0 * dual(x), rtol=1e-9)


def test_dual_zero_vector():
    with pytest.raises(ZeroVector):
        Isotropic(3).dual()(np.zeros(3))


# -- duality identities ----------------------------------------------------------------------


def test_dual_of_cahn_hoffman_on_dense_grid():
    for F, tol in ((Ellipsoidal(ELLIP), 1e-8), (SuperquadricBlend(0.3), 1e-6)):
        xi = sphere_grid(3, 10_000)
        assert np.abs(F.dual()(F.cahn_hoffman(xi)) - 1).max() <= tol
        assert np.abs(np.sum(F.cahn_hoffman(xi) * xi, -1) - F.value(xi)).max() <= 1e-8


@pytest.mark.parametrize(
    "norm, limit",
    [
        (Isotropic(3), 1e-10),
        (Ellipsoidal(ELLIP), 1e-8),
        (SuperquadricBlend(0.3), 1e-6),
        (Isotropic(2), 1e-10),
        (SuperquadricBlend(0.2, dim=2), 1e-6),
    ],
    ids=["isotropic", "ellipsoidal", "blend", "isotropic2d", "blend2d"],
)
def test_verify_duality(norm, limit):
    report = verify_duality(norm, samples=1000, seed=3)
    assert report.verdict.value == "Pass"
    worst = max(r.residual for r in report.records if r.name != "equality_only_parallel")
    assert worst < limit


# -- shifted norm ------------------------------------------------------------------------


def test_shift_isotropic_is_shifted_family():
    F = shift_norm(Isotropic(3), [0.2, -0.1, 0.0])
    assert isinstance(F, Shifted)
    assert F.family == "shifted"


def test_zero_shift_returns_same_norm():
    F = Ellipsoidal(ELLIP)
    assert shift_norm(F, np.zeros(3)) is F


def test_shift_ellipsoidal_half_dual(rng):
    F = Ellipsoidal(ELLIP)
    direction = rng.standard_normal(3)
    k = 0.5 * direction / F.dual()(direction)
    assert F.dual()(k) == pytest.approx(0.5, rel=1e-14)
    G = shift_norm(F, k)
    xi = random_unit(rng, 3, 100)
    assert np.abs(G.cahn_hoffman(xi) - (F.cahn_hoffman(xi) - k)).max() < 1e-14
    assert np.abs(fd_gradient(G.value, xi) - (F.cahn_hoffman(xi) - k)).max() < 1e-9
    fa, _ = F.sphere_hessian_form(xi)
    ga, _ = G.sphere_hessian_form(xi)
    assert np.abs(fa - ga).max() < 1e-9


def test_inadmissible_shift():
    with pytest.raises(NotAdmissibleShift):
        shift_norm(Isotropic(3), [1.0, 0.0, 0.0])
    with pytest.raises(NotAdmissibleShift):
        shift_norm(Ellipsoidal(np.diag([4.0, 1.0, 1.0])), [2.5, 0.0, 0.0])


def test_serialization_round_trip(rng):
    x = random_unit(rng, 3, 10)
    for F in (Isotropic(3), Ellipsoidal(ELLIP), SuperquadricBlend(0.3), Shifted(Ellipsoidal(ELLIP), [0.1, 0.0, 0.2])):
        G = norm_from_dict(F.to_dict())
        assert type(G) is type(F)
        assert np.allclose(G.value(x), F.value(x), rtol=1e-15)
