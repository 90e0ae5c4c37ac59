import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.integrate import quad

from ossfield import kernels
from ossfield.errors import DomainError, NotInQError
from ossfield.linops import mat_exp, mat_pow
from ossfield.polar import (PolarMap, decompose, polar_map, radial_norm, tau,
                            tau_sandwich_check, triangle_constant)

OPERATORS = [np.eye(2), np.diag([2.0, 10.0 / 3.0]), np.array([[2.0, 1.0], [0.0, 2.0]]),
             np.array([[2.0, 1.0], [-1.0, 2.0]])]


def scipy_radial_norm(E, x):
    """Independent route: adaptive quadrature of int_{-inf}^0 |e^{sE} x| ds."""
    f = lambda s: np.linalg.norm(mat_exp(s * E) @ x)
    return quad(f, -np.inf, 0, epsabs=0, epsrel=1e-12, limit=400)[0]


def random_points(rng, n, d=2):
    x = rng.standard_normal((n, d))
    return x * (10.0 ** rng.uniform(-3, 3, n))[:, None] / np.linalg.norm(x, axis=1)[:, None]


def test_identity_reduces_to_euclidean():
    assert radial_norm(np.eye(3), np.array([1.0, 2.0, 2.0])) == pytest.approx(3.0, rel=1e-12)
    assert tau(np.eye(2), np.array([0.0, 5.0])) == pytest.approx(5.0, rel=1e-10)
    pc = decompose(np.eye(2), np.array([3.0, 4.0]))
    assert pc.tau == pytest.approx(5.0, rel=1e-10)
    np.testing.assert_allclose(pc.direction, [0.6, 0.8], rtol=1e-10)


def test_zero_point():
    assert radial_norm(np.eye(2), np.zeros(2)) == 0.0
    with pytest.raises(DomainError, match="zero has no polar decomposition"):
        tau(np.eye(2), np.zeros(2))


def test_isotropic_closed_form():
    E = np.diag([2.0, 2.0])
    assert radial_norm(E, np.array([2.0, 0.0])) == pytest.approx(1.0, rel=1e-10)
    assert tau(E, np.array([2.0, 0.0])) == pytest.approx(1.0, rel=1e-10)
    pc = decompose(E, np.array([2.0, 0.0]))
    np.testing.assert_allclose(pc.direction, [2.0, 0.0], rtol=1e-10)


@pytest.mark.parametrize("E", OPERATORS[1:], ids=["diag", "jordan", "rotation"])
def test_radial_norm_against_adaptive_quadrature(rng, E):
    for x in rng.standard_normal((5, 2)):
        assert radial_norm(E, x) == pytest.approx(scipy_radial_norm(E, x), rel=1e-10)


def test_rejects_operator_outside_q():
    with pytest.raises(NotInQError, match="operator not in Q"):
        radial_norm(np.diag([1.0, -1.0]), np.ones(2))


@pytest.mark.parametrize("E", OPERATORS, ids=["identity", "diag", "jordan", "rotation"])
def test_polar_invariants(rng, E):
    x = random_points(rng, 2000)
    pm = polar_map(E)
    t, l = pm.decompose(x)
    recon = pm.compose(t, l)
    assert np.max(np.linalg.norm(recon - x, axis=1) / np.linalg.norm(x, axis=1)) <= 1e-8
    np.testing.assert_allclose(pm.radial_norm(l), 1.0, rtol=1e-10)
    np.testing.assert_allclose(pm.tau(-x), t, rtol=1e-10)
    for r in (1e-3, 0.5, 1.0, 2.0, 1e3):
        np.testing.assert_allclose(pm.tau(x @ mat_pow(r, E).T), r * t, rtol=1e-8)
    sizes = np.linalg.norm(l, axis=1)
    assert 0 < sizes.min() <= sizes.max() < np.inf


@pytest.mark.parametrize("E", OPERATORS, ids=["identity", "diag", "jordan", "rotation"])
def test_tau_monotone_along_rays(rng, E):
    pm = polar_map(E)
    for u in rng.standard_normal((16, 2)):
        ray = np.outer(np.geomspace(1e-4, 1e4, 40), u)
        t = pm.tau(ray)
        assert np.all(np.diff(t) > 0)
        assert t[0] < 1e-1 and t[-1] > 10


@given(st.floats(0.05, 20.0), st.floats(-3, 3), st.floats(-3, 3))
def test_scaling_property(r, a, b):
    x = np.array([a, b])
    if not np.any(x):
        return
    E = OPERATORS[3]
    assert tau(E, mat_pow(r, E) @ x) == pytest.approx(r * tau(E, x), rel=1e-8)


def test_cache_does_not_change_results(rng):
    E = OPERATORS[2]
    cached, plain = PolarMap(E, use_cache=True), PolarMap(E, use_cache=False)
    for x in rng.standard_normal((20, 2)):
        a = cached.tau(x)
        assert cached.tau(x) == a == plain.tau(x)


def test_triangle_constant():
    assert triangle_constant(np.eye(2), 2000) == pytest.approx(1.0, abs=1e-3)
    E = np.diag([2.0, 2.0])
    x = np.array([2.0, 0.0])
    ratio = tau(E, 2 * x) / (2 * tau(E, x))
    assert ratio == pytest.approx(np.sqrt(2) / 2, rel=1e-10)
    assert triangle_constant(E, 2000) >= ratio - 1e-12


def test_sandwich_closed_form():
    # E = diag(2, 2): tau = sqrt(|x|/2) and sqrt|x1| + sqrt|x2| lies in
    # [|x|^(1/2), 2^(3/4)|x|^(1/2)], so the ratio lies in [2^(-5/4), 2^(-1/2)]
    lo, hi = tau_sandwich_check((0.5, 0.5), 10_000)
    assert lo >= 2 ** -1.25 - 1e-9 and hi <= 2 ** -0.5 + 1e-9
    x = np.array([1.0, 1.0])
    assert tau(np.diag([2.0, 2.0]), x) / 2.0 == pytest.approx(2 ** -1.25, rel=1e-10)
    x = np.array([2.0, 0.0])
    assert tau(np.diag([2.0, 2.0]), x) / np.sqrt(2.0) == pytest.approx(2 ** -0.5, rel=1e-10)


def test_sandwich_on_eigendirection_is_constant():
    E = np.diag([1 / 0.5, 1 / 0.8])
    xs = np.geomspace(1e-3, 1e3, 13)
    ratio = [tau(E, np.array([v, 0.0])) / v ** 0.5 for v in xs]
    np.testing.assert_allclose(ratio, ratio[0], rtol=1e-9)


def test_sandwich_rejects_bad_gamma():
    with pytest.raises(DomainError, match="gamma out of range"):
        tau_sandwich_check((0.5, 1.0), 10)


@pytest.mark.skipif("compiled" not in kernels.available(), reason="compiled core not built")
def test_radial_norm_backends_agree(rng):
    pm = polar_map(OPERATORS[3])
    x = np.ascontiguousarray(rng.standard_normal((500, 2)))
    fast = kernels.radial_norm_batch(pm.mats, pm.weights, x)
    kernels.set_backend("python")
    try:
        slow = kernels.radial_norm_batch(pm.mats, pm.weights, x)
    finally:
        kernels.set_backend("compiled")
    np.testing.assert_allclose(fast, slow, rtol=1e-13)
