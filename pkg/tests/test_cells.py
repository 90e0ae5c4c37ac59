import numpy as np
import pytest

from ossfield.cells import (QuadratureSpec, ShellGeometry, ladder, lattice_grid, make_grid,
                            shell_grid)
from ossfield.errors import DomainError
from ossfield.polar import polar_map

E_ANISO = np.array([[1.5, 0.4], [-0.2, 1.0]])
E_NONSYM = np.array([[1.0, 3.0], [0.0, 1.0]])      # E + E^T is indefinite


def unit_ball_area(E, n=1024):
    """Area of {tau <= 1} in d = 2 by the polar-area formula, radii by bisection."""
    pm = polar_map(E)
    th = 2 * np.pi * np.arange(n) / n
    u = np.column_stack([np.cos(th), np.sin(th)])
    lo, hi = np.full(n, 1e-6), np.full(n, 1e6)
    for _ in range(60):
        mid = np.sqrt(lo * hi)
        big = pm.tau(u * mid[:, None]) > 1
        hi = np.where(big, mid, hi)
        lo = np.where(big, lo, mid)
    rho = np.sqrt(lo * hi)
    return 0.5 * np.mean(rho ** 2) * 2 * np.pi


def test_spec_validation():
    with pytest.raises(DomainError):
        QuadratureSpec(rule="simpson")
    with pytest.raises(DomainError):
        QuadratureSpec(r_in=2.0, r_out=1.0)
    with pytest.raises(DomainError):
        QuadratureSpec(angular=0)
    with pytest.raises(DomainError):
        QuadratureSpec(tail_tol=0.0)


def test_ladders():
    q = QuadratureSpec()
    fine = q.refined()
    assert (fine.angular, fine.radial_per_shell) == (2 * q.angular, 2 * q.radial_per_shell)
    assert fine.tail_tol == q.tail_tol / 16
    wide = q.extended()
    assert wide.tail_tol == pytest.approx(q.tail_tol * 1e-3)
    assert [r.angular for r in ladder(q, 3)] == [16, 32, 64]
    assert ladder(q, 3, kind="extended")[2] == q.extended(2)


def test_lattice_grid_covers_box():
    g = lattice_grid(QuadratureSpec(rule="midpoint_lattice", cells_per_dim=5, box=(0, 2)), 2)
    assert g.n_cells == 25
    assert g.volumes.sum() == pytest.approx(4.0, rel=1e-14)


def test_lattice_singular_cell_uses_far_corner():
    q = QuadratureSpec(rule="midpoint_lattice", cells_per_dim=4, box=(0, 1))
    g = lattice_grid(q, 2, singular=[(0.1, 0.1)])
    assert np.any(np.all(np.isclose(g.points, [0.25, 0.25]), axis=1))
    assert not np.any(np.all(np.isclose(g.points, [0.125, 0.125]), axis=1))


@pytest.mark.parametrize("E", [np.eye(2), E_ANISO, E_NONSYM], ids=["identity", "aniso", "nonsym"])
def test_shell_volumes_match_scaled_unit_ball(E):
    q = QuadratureSpec(r_in=0.25, r_out=4.0, angular=64, radial_per_shell=2)
    g = shell_grid(q, E)
    assert np.all(g.volumes > 0)
    trace = np.trace(E)
    exact = unit_ball_area(E) * (g.meta["r_out"] ** trace - g.meta["r_in"] ** trace)
    assert g.volumes.sum() == pytest.approx(exact, rel=1e-6)


def test_shell_grid_points_lie_in_their_shells():
    q = QuadratureSpec(r_in=0.5, r_out=2.0)
    g = shell_grid(q, E_ANISO)
    t = polar_map(E_ANISO).tau(g.points)
    assert np.all(t >= g.meta["r_in"] * (1 - 1e-9)) and np.all(t <= g.meta["r_out"] * (1 + 1e-9))


def test_refinement_preserves_total_volume():
    q = QuadratureSpec(r_in=0.25, r_out=4.0, refine_levels=8)
    plain = shell_grid(q, E_ANISO)
    refined = shell_grid(q, E_ANISO, singular=[(0.7, -0.3), (-1.1, 0.4)])
    assert refined.n_cells > plain.n_cells
    assert refined.volumes.sum() == pytest.approx(plain.volumes.sum(), rel=1e-7)


def test_singular_points_are_never_evaluated():
    s = np.array([[0.7, -0.3], [-1.1, 0.4]])
    g = shell_grid(QuadratureSpec(r_in=0.25, r_out=4.0, refine_levels=12), E_ANISO, singular=s)
    dmin = np.min(np.linalg.norm(g.points[:, None] - s[None], axis=2))
    assert dmin > 0
    assert g.meta["singular_cells"] >= 2


def test_geometry_coordinates_round_trip(rng):
    for E in (E_ANISO, E_NONSYM, np.eye(3) + 0.2 * rng.standard_normal((3, 3))):
        geo = ShellGeometry(E)
        y = rng.standard_normal((50, geo.d))
        v, a, patch = geo.coords(y)
        np.testing.assert_allclose(geo.to_y(v, a, patch), y, rtol=1e-8, atol=1e-10)


def test_one_dimensional_shells():
    g = shell_grid(QuadratureSpec(r_in=0.5, r_out=2.0), np.array([[2.0]]))
    # {1/2 <= tau <= 2} under E = 2 is {|u| in [1/2, 8]} after tau = sqrt(|u|/2)
    assert g.volumes.sum() == pytest.approx(2 * (8.0 - 0.5), rel=1e-10)


def test_center_translates_grid():
    q = QuadratureSpec(tail_tol=1e-3, refine_levels=4)
    c = np.array([0.3, -0.2])
    g0 = make_grid(q, 2, E_ANISO, [[0.5, 0.5]], (0.5, 1.0))
    g1 = make_grid(q, 2, E_ANISO, [[0.5, 0.5] + c], (0.5, 1.0), center=c)
    np.testing.assert_allclose(g1.points, g0.points + c, atol=1e-12)
    np.testing.assert_array_equal(g1.volumes, g0.volumes)
