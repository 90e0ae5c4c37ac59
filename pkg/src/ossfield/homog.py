"""E-homogeneous kernels (phi for moving-average fields, psi for harmonizable
fields) and sample-based diagnostics of their defining properties.

Admissibility is a global analytic property. The checks here sample it and
report empirical constants; a finite estimate is evidence, not proof.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import DomainError, KernelNotPositiveError
from .linops import as_operator, pow_stack
from .polar import polar_map


@dataclass(frozen=True)
class KernelSpec:
    """A scalar kernel R^d -> [0, inf).

    ``evaluator`` maps an (N, d) array to (N,) values. For ``kind ==
    "sum_powers"`` it is sum_j |x_j|^gamma_j and ``gammas`` is set.
    """

    kind: str
    beta: float
    evaluator: Callable = field(repr=False, compare=False)
    gammas: Optional[tuple] = None
    dim: Optional[int] = None

    def __call__(self, x):
        return evaluate(self, x)


def sum_powers(gammas, beta=1.0):
    """Kernel sum_j |x_j|^gamma_j, homogeneous under diag(1/gamma_j)."""
    g = np.asarray(gammas, dtype=np.float64).reshape(-1)
    if np.any((g <= 0) | (g >= 1)):
        raise DomainError("gamma out of range: each gamma_j must lie in (0, 1)")

    def _eval(x):
        return np.sum(np.abs(x) ** g, axis=-1)

    return KernelSpec(kind="sum_powers", beta=float(beta), evaluator=_eval,
                      gammas=tuple(float(v) for v in g), dim=g.size)


def custom(evaluator, beta, dim=None):
    """Wrap a user-supplied vectorized evaluator with its claimed order beta."""
    return KernelSpec(kind="custom", beta=float(beta), evaluator=evaluator, dim=dim)


def evaluate(k, x):
    """Kernel value at a point (returns float) or at each row of a batch."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        return float(np.asarray(k.evaluator(x[None]))[0])
    return np.asarray(k.evaluator(x), dtype=np.float64)


def natural_operator(k):
    """diag(1/gamma_j), the operator under which a sum_powers kernel is homogeneous."""
    if k.kind != "sum_powers":
        raise DomainError("only sum_powers kernels carry a natural operator")
    return as_operator(np.diag(1.0 / np.asarray(k.gammas)))


def _sample_points(rng, n, d, lo=-3.0, hi=3.0):
    dirs = rng.standard_normal((n, d))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    return dirs * (10.0 ** rng.uniform(lo, hi, n))[:, None]


def check_homogeneity(k, E, n_samples=10_000, rng_seed=0, r_range=(1e-3, 1e3)):
    """Max over samples of |k(r^E x) - r k(x)| / (r k(x)), r log-uniform in r_range."""
    E = as_operator(E)
    rng = np.random.default_rng(rng_seed)
    n = int(n_samples)
    x = _sample_points(rng, n, E.dim, -2, 2)
    r = np.exp(rng.uniform(np.log(r_range[0]), np.log(r_range[1]), n))
    mats = pow_stack(r, E.entries)
    scaled = np.einsum("nij,nj->ni", mats, x)
    base = evaluate(k, x)
    resid = np.abs(evaluate(k, scaled) - r * base) / (r * base)
    return float(resid.max())


@dataclass
class AdmissibilityEstimate:
    c1: float
    argmax_x: np.ndarray
    argmax_y: np.ndarray
    level_maxima: list
    unbounded: bool


def check_admissibility(k, E, beta, annulus=(1.0, 10.0), n_samples=20_000,
                        rng_seed=0, levels=6):
    """Empirical C_1 in |k(x+y) - k(y)| <= C_1 tau(x)^beta.

    x ranges over {tau(x) <= 1} and y over the Euclidean annulus
    A <= |y| <= B. Sampling is repeated on ``levels`` refinement levels with
    tau(x) drawn from [4^-level, 1]; the running maxima are returned, and the
    estimate is flagged ``unbounded`` when the running maximum keeps at
    least doubling across the last refinement levels.
    """
    E = as_operator(E)
    lo, hi = annulus
    if not 0 < lo < hi:
        raise DomainError("annulus needs 0 < A < B")
    pm = polar_map(E)
    rng = np.random.default_rng(rng_seed)
    d = E.dim
    per_level = max(1, int(n_samples) // max(1, levels))
    running = 0.0
    best = (0.0, np.zeros(d), np.zeros(d))
    maxima = []
    for level in range(levels):
        raw = rng.standard_normal((per_level, d))
        _, dirs = pm.decompose(raw)
        t = np.exp(rng.uniform(np.log(4.0 ** -(level + 1)), 0.0, per_level))
        x = pm.compose(t, dirs)
        ydir = rng.standard_normal((per_level, d))
        ydir /= np.linalg.norm(ydir, axis=1, keepdims=True)
        # uniform in the annulus volume
        rad = (lo ** d + rng.uniform(0, 1, per_level) * (hi ** d - lo ** d)) ** (1.0 / d)
        y = ydir * rad[:, None]
        ratio = np.abs(evaluate(k, x + y) - evaluate(k, y)) / t ** beta
        i = int(np.argmax(ratio))
        if ratio[i] > best[0]:
            best = (float(ratio[i]), x[i].copy(), y[i].copy())
        running = max(running, float(ratio[i]))
        maxima.append(running)
    growth = [b / a for a, b in zip(maxima[:-1], maxima[1:]) if a > 0]
    unbounded = len(growth) >= 2 and all(g >= 2.0 for g in growth[-2:])
    return AdmissibilityEstimate(c1=best[0], argmax_x=best[1], argmax_y=best[2],
                                 level_maxima=maxima, unbounded=unbounded)


def sphere_directions(d, n_grid, rng_seed=0):
    """Euclidean unit directions covering S^{d-1}.

    Uniform angles for d = 2, a Fibonacci lattice for d = 3, and random
    directions (at least 1e5) for d > 3. The signed coordinate axes are
    always included: coordinate-wise kernels such as sum_powers have cusps
    there, which a generic covering only approaches like sqrt(spacing).
    """
    axes = np.vstack([np.eye(d), -np.eye(d)])
    if d == 1:
        return axes
    if d == 2:
        ang = 2 * np.pi * (np.arange(n_grid) + 0.5) / n_grid
        v = np.column_stack([np.cos(ang), np.sin(ang)])
    elif d == 3:
        i = np.arange(n_grid) + 0.5
        z = 1 - 2 * i / n_grid
        rho = np.sqrt(1 - z * z)
        phi = np.pi * (1 + 5 ** 0.5) * i
        v = np.column_stack([rho * np.cos(phi), rho * np.sin(phi), z])
    else:
        rng = np.random.default_rng(rng_seed)
        v = rng.standard_normal((max(int(n_grid), 100_000), d))
        v /= np.linalg.norm(v, axis=1, keepdims=True)
    return np.vstack([axes, v])


def extrema_on_sphere(k, E, n_grid=2048):
    """(min, max) of the kernel over a covering of Sigma_0 = {tau = 1}."""
    E = as_operator(E)
    dirs = sphere_directions(E.dim, n_grid)
    _, on_sphere = polar_map(E).decompose(dirs)
    vals = evaluate(k, on_sphere)
    if np.any(~(vals > 0)):
        raise KernelNotPositiveError("kernel not positive on the unit sphere Sigma_0")
    return float(vals.min()), float(vals.max())
