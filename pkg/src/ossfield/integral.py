"""Discretized stochastic integrals against a symmetric alpha-stable measure.

For a real matrix integrand Q the integral I(Q) = int Q(u) M(du) is
approximated by sum_k Q(u_k) M(cell_k), and its CF exponent
int |Q(u)^T theta|^alpha du by sum_k |Q(u_k)^T theta|^alpha vol_k. The two use
the same representative points, so the discrete integral has exactly the
law exp(-discrete exponent); the gap to the continuum is a deterministic
quadrature error that can be tracked along a refinement ladder.

Complex integrands Q = Q1 + i Q2 are integrated against a complex measure
built from a 2m-dimensional isotropic draw per cell (real half M_R, imaginary
half M_I): Re int Q dM ~ sum_k Q1(u_k) M_R(cell_k) - Q2(u_k) M_I(cell_k).
"""

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .cells import Grid, QuadratureSpec, ladder, make_grid
from .errors import DomainError, SingularityError
from .stable import CellStream, StableSpec, sample_measure_block

DIVERGENCE_TOL = 0.10


@dataclass(frozen=True)
class MatrixField:
    """A matrix-valued integrand on R^d.

    ``real_part`` / ``imag_part`` map an (N, d) batch to (N, m, m) matrices.
    ``singular_points`` are points where the integrand may blow up; the
    shell rule refines around them (the origin is handled by the inner
    truncation radius). ``operator`` sets the shells (identity if None),
    ``tau_range`` the natural tau scale and ``tail_exponents`` the (inner,
    outer) decay exponents used to size the truncation.
    """

    domain_dim: int
    state_dim: int
    real_part: Callable
    imag_part: Optional[Callable] = None
    singular_points: tuple = ()
    operator: object = None
    tau_range: tuple = (1.0, 1.0)
    tail_exponents: tuple = (1.0, 1.0)

    @property
    def is_complex(self):
        return self.imag_part is not None


def constant_field(matrix, support_lo, support_hi, imag=None):
    """matrix * indicator of the box [lo, hi] (optionally with an imaginary part)."""
    a = np.atleast_2d(np.asarray(matrix, dtype=np.float64))
    lo = np.atleast_1d(np.asarray(support_lo, dtype=np.float64))
    hi = np.atleast_1d(np.asarray(support_hi, dtype=np.float64))

    def part(mat):
        def f(u):
            inside = np.all((u >= lo) & (u <= hi), axis=1)
            return inside[:, None, None] * mat[None]
        return f

    b = None if imag is None else part(np.atleast_2d(np.asarray(imag, dtype=np.float64)))
    return MatrixField(domain_dim=lo.size, state_dim=a.shape[0], real_part=part(a), imag_part=b)


def zero_field(d, m):
    def f(u):
        return np.zeros((u.shape[0], m, m))
    return MatrixField(domain_dim=d, state_dim=m, real_part=f)


def grid_for(Q, quad):
    return make_grid(quad, Q.domain_dim, Q.operator, Q.singular_points,
                     Q.tau_range, Q.tail_exponents)


def field_values(Q, grid):
    """(real, imag) matrices at the grid's points; imag is None for real Q."""
    R = np.asarray(Q.real_part(grid.points), dtype=np.float64)
    I = None if Q.imag_part is None else np.asarray(Q.imag_part(grid.points), dtype=np.float64)
    for part in (R, I):
        if part is not None and not np.all(np.isfinite(part)):
            raise SingularityError("integrand singularity inside cell")
    return R, I


def exponent_from_values(R, I, theta, volumes, alpha):
    """sum_k (|R_k^T theta|^2 + |I_k^T theta|^2)^{alpha/2} vol_k."""
    theta = np.asarray(theta, dtype=np.float64)
    sq = np.einsum("kab,a->kb", R, theta) ** 2
    if I is not None:
        sq = sq + np.einsum("kab,a->kb", I, theta) ** 2
    return float(np.sum(np.sum(sq, axis=1) ** (alpha / 2.0) * volumes))


def _check_alpha(alpha):
    if not 0 < alpha <= 2:
        raise DomainError("alpha must lie in (0, 2]")


def _exponent(Q, theta, quad, alpha, grid, with_error, complex_ok):
    _check_alpha(alpha)
    theta = np.asarray(theta, dtype=np.float64).reshape(-1)
    if theta.size != Q.state_dim:
        raise DomainError("theta has the wrong dimension")

    def one(q, g):
        g = grid_for(Q, q) if g is None else g
        R, I = field_values(Q, g)
        if I is not None and not complex_ok:
            raise DomainError("cf_exponent_real needs a real integrand")
        return exponent_from_values(R, I, theta, g.volumes, alpha)

    value = 0.0 if not np.any(theta) else one(quad, grid)
    if not with_error:
        return value
    if value == 0.0:
        return value, 0.0
    finer = one(quad.refined(), None)
    return finer, abs(finer - value) / abs(finer)


def cf_exponent_real(Q, theta, quad, alpha, grid=None, with_error=False):
    """Quadrature of int |Q(u)^T theta|^alpha du over the truncated domain.

    With ``with_error`` returns (value on the next finer rung, relative change
    from ``quad`` to that rung).
    """
    return _exponent(Q, theta, quad, alpha, grid, with_error, complex_ok=False)


def cf_exponent_complex(Q, theta, quad, alpha, grid=None, with_error=False):
    """Quadrature of int (|Q1^T theta|^2 + |Q2^T theta|^2)^{alpha/2} du."""
    return _exponent(Q, theta, quad, alpha, grid, with_error, complex_ok=True)


def _draws(Q, spec, grid, rng, n_rep, complex_measure):
    m_in = 2 * Q.state_dim if complex_measure else Q.state_dim
    if spec.m != m_in:
        spec = StableSpec(spec.alpha, m_in)
    stream = rng if isinstance(rng, CellStream) else CellStream(rng)
    return sample_measure_block(spec, grid.volumes, stream, range(n_rep))


def integrate_real(Q, spec, quad, rng, n_rep=None, grid=None):
    """sum_k Q(u_k) M(cell_k): one vector (m,) or an (n_rep, m) array.

    ``rng`` is a master seed or a :class:`CellStream`; replicate r uses the
    stream's replicate index r.
    """
    if Q.is_complex:
        raise DomainError("integrate_real needs a real integrand")
    grid = grid_for(Q, quad) if grid is None else grid
    R, _ = field_values(Q, grid)
    Z = _draws(Q, spec, grid, rng, 1 if n_rep is None else int(n_rep), False)
    out = np.einsum("kab,nkb->na", R, Z)
    return out[0] if n_rep is None else out


def integrate_complex(Q, spec, quad, rng, n_rep=None, grid=None):
    """Re of the complex integral: sum_k Q1(u_k) M_R(cell_k) - Q2(u_k) M_I(cell_k)."""
    grid = grid_for(Q, quad) if grid is None else grid
    R, I = field_values(Q, grid)
    if I is None:
        I = np.zeros_like(R)
    m = Q.state_dim
    Z = _draws(Q, spec, grid, rng, 1 if n_rep is None else int(n_rep), True)
    out = np.einsum("kab,nkb->na", R, Z[..., :m]) - np.einsum("kab,nkb->na", I, Z[..., m:])
    return out[0] if n_rep is None else out


def norm_integral(Q, quad, alpha, grid=None):
    """sum_k (||Q1(u_k)||^alpha + ||Q2(u_k)||^alpha) vol_k with the operator norm."""
    grid = grid_for(Q, quad) if grid is None else grid
    R, I = field_values(Q, grid)
    total = np.linalg.norm(R, ord=2, axis=(1, 2)) ** alpha
    if I is not None:
        total = total + np.linalg.norm(I, ord=2, axis=(1, 2)) ** alpha
    return float(np.sum(total * grid.volumes))


@dataclass
class IntegrabilityResult:
    finite: bool
    value: float
    values: list
    changes: list

    @property
    def status(self):
        return "finite" if self.finite else "diverging"


def integrability_diagnostic(Q, quad_sequence, alpha):
    """Evaluate the alpha-norm integral along a ladder and apply a Cauchy test.

    Declares "diverging" when the relative change between the last two rungs
    exceeds 10%; otherwise the value is the last rung's estimate.
    """
    _check_alpha(alpha)
    values = [norm_integral(Q, q, alpha) for q in quad_sequence]
    changes = []
    for a, b in zip(values[:-1], values[1:]):
        if not np.isfinite(b):
            changes.append(np.inf)
        elif a == b:
            changes.append(0.0)
        else:
            changes.append(abs(b - a) / max(abs(a), abs(b)))
    finite = bool(np.all(np.isfinite(values))) and (not changes or changes[-1] <= DIVERGENCE_TOL)
    return IntegrabilityResult(finite=finite, value=float(values[-1]), values=values,
                               changes=changes)


def default_ladder(quad, rungs=3):
    """Extension ladder for the integrability check (wider truncation each rung)."""
    return ladder(quad, rungs, kind="extended")


__all__ = ["MatrixField", "QuadratureSpec", "Grid", "constant_field", "zero_field",
           "grid_for", "field_values", "exponent_from_values", "cf_exponent_real",
           "cf_exponent_complex", "integrate_real", "integrate_complex", "norm_integral",
           "IntegrabilityResult", "integrability_diagnostic", "default_ladder"]
