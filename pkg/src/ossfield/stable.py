"""Symmetric alpha-stable sampling and empirical characteristic functions.

Scale convention: a scalar or vector with scale s has characteristic function
exp(-s^alpha |theta|^alpha). For alpha = 2 this is exp(-s^2 |theta|^2), i.e.
variance 2 s^2 per coordinate, which is twice the usual Gaussian convention
(and differs from the S_alpha(sigma, 0, 0) "sigma" of some textbooks by a
factor 2^{1/2} at alpha = 2).

Isotropic vectors for alpha < 2 are sub-Gaussian: X = s * kappa * sqrt(A) * G
with G standard normal in R^m and A the positive (alpha/2)-stable variable
with Laplace transform E exp(-u A) = exp(-u^{alpha/2}) (Kanter's
representation). Then E exp(i<theta, X>) = exp(-(kappa^2 s^2 |theta|^2 / 2)^{alpha/2}),
so kappa = sqrt(2) for every alpha. At alpha = 1/2 the mixing variable is
Levy-distributed with location 0 and scale c = 1/2: A = 1 / (2 N^2).

Randomness for cell measures comes from counter-based Philox streams. The
stream for (master seed, tag, replicate) is a Philox key; cell k owns the
counter blocks [k * w / 4, (k + 1) * w / 4) where w is the fixed number of
64-bit words a cell consumes. Any cell range can be regenerated on its own,
so results do not depend on execution order or worker count.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import DomainError

SUBGAUSSIAN_KAPPA = 2.0 ** 0.5
LEVY_HALF_SCALE = 0.5


def subgaussian_constant_closed_form(alpha):
    """kappa(alpha) for the Laplace-standardized mixing variable: sqrt(2)."""
    if not 0 < alpha <= 2:
        raise DomainError("alpha must lie in (0, 2]")
    return 2.0 ** 0.5


@dataclass(frozen=True)
class StableSpec:
    alpha: float
    m: int = 1

    def __post_init__(self):
        if not 0 < self.alpha <= 2:
            raise DomainError("alpha must lie in (0, 2]")
        if int(self.m) != self.m or self.m < 1:
            raise DomainError("state dimension m must be a positive integer")


@dataclass(frozen=True)
class CellMeasureSample:
    cell_volumes: np.ndarray
    values: np.ndarray
    seed_path: tuple


def words_per_cell(alpha, m):
    """64-bit words one isotropic draw consumes, padded to a Philox block."""
    w = (0 if alpha == 2 else 2) + 2 * ((m + 1) // 2)
    return 4 * ((w + 3) // 4)


class CellStream:
    """Counter-addressed random words keyed by (master seed, tag, replicate, cell)."""

    def __init__(self, master_seed, tag=0):
        self.master_seed = int(master_seed)
        self.tag = int(tag)

    def key(self, replicate):
        ss = np.random.SeedSequence(entropy=self.master_seed,
                                    spawn_key=(self.tag, int(replicate)))
        return ss.generate_state(2, dtype=np.uint64)

    def raw(self, replicate, cell_start, cell_stop, width):
        if width % 4:
            raise DomainError("width must be a multiple of 4 words")
        n = int(cell_stop) - int(cell_start)
        counter = np.array([int(cell_start) * (width // 4), 0, 0, 0], dtype=np.uint64)
        bg = np.random.Philox(key=self.key(replicate), counter=counter)
        return bg.random_raw(n * width).reshape(n, width)

    def path(self, replicate):
        return (self.master_seed, self.tag, int(replicate))


def _as_generator(rng):
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.Generator(np.random.Philox(rng))


def _raw_words(rng, n, width):
    return _as_generator(rng).bit_generator.random_raw(n * width).reshape(n, width)


def sample_sym_stable_1d(alpha, scale, rng, size=None):
    """Chambers-Mallows-Stuck draw(s) with CF exp(-scale^alpha |theta|^alpha).

    alpha = 2 gives a Gaussian with variance 2 scale^2.
    """
    if not 0 < alpha <= 2:
        raise DomainError("domain error: alpha must lie in (0, 2]")
    if scale < 0:
        raise DomainError("domain error: scale must be nonnegative")
    n = 1 if size is None else int(size)
    out = scale * kernels.symmetric_stable_from_raw(float(alpha), _raw_words(rng, n, 2))
    return float(out[0]) if size is None else out


def sample_positive_stable(alpha_half, rng, size=None):
    """Positive stable draw(s) with Laplace transform exp(-u^alpha_half)."""
    if not 0 < alpha_half < 1:
        raise DomainError("domain error: alpha_half must lie in (0, 1)")
    n = 1 if size is None else int(size)
    out = kernels.positive_stable_from_raw(float(alpha_half), _raw_words(rng, n, 2))
    return float(out[0]) if size is None else out


def isotropic_from_words(spec, raw, scales):
    """Transform raw Philox words (rows of ``words_per_cell``) into SaS vectors."""
    scales = np.ascontiguousarray(np.broadcast_to(np.asarray(scales, dtype=np.float64),
                                                  (raw.shape[0],)))
    return kernels.isotropic_from_raw(float(spec.alpha), SUBGAUSSIAN_KAPPA,
                                      np.ascontiguousarray(raw), scales, int(spec.m))


def sample_isotropic_vector(spec, scale, rng, size=None):
    """Isotropic SaS vector(s) in R^m with CF exp(-scale^alpha |theta|^alpha)."""
    if scale < 0:
        raise DomainError("domain error: scale must be nonnegative")
    n = 1 if size is None else int(size)
    raw = _raw_words(rng, n, words_per_cell(spec.alpha, spec.m))
    out = isotropic_from_words(spec, raw, scale)
    return out[0] if size is None else out


def _check_volumes(volumes):
    v = np.asarray(volumes, dtype=np.float64).reshape(-1)
    if np.any(~(v > 0)):
        raise DomainError("domain error: cell volumes must be positive")
    return v


def sample_measure(spec, volumes, rng, replicate=0):
    """One draw of the SaS random measure on disjoint cells.

    ``rng`` is a master seed (int) or a :class:`CellStream`. Cell j receives an
    isotropic vector with scale volume_j^(1/alpha), independent across cells.
    """
    v = _check_volumes(volumes)
    stream = rng if isinstance(rng, CellStream) else CellStream(rng)
    w = words_per_cell(spec.alpha, spec.m)
    raw = stream.raw(replicate, 0, v.size, w)
    values = isotropic_from_words(spec, raw, v ** (1.0 / spec.alpha))
    return CellMeasureSample(cell_volumes=v, values=values, seed_path=stream.path(replicate))


def sample_measure_block(spec, volumes, stream, replicates):
    """Measure draws for several replicates: array (len(replicates), K, m).

    Replicate r is identical to ``sample_measure(spec, volumes, stream, r).values``.
    """
    v = _check_volumes(volumes)
    w = words_per_cell(spec.alpha, spec.m)
    reps = list(replicates)
    raw = np.empty((len(reps) * v.size, w), dtype=np.uint64)
    for i, r in enumerate(reps):
        raw[i * v.size:(i + 1) * v.size] = stream.raw(r, 0, v.size, w)
    scales = np.tile(v ** (1.0 / spec.alpha), len(reps))
    return isotropic_from_words(spec, raw, scales).reshape(len(reps), v.size, spec.m)


def ecf(samples, theta):
    """Empirical characteristic function at one theta.

    Returns ``(estimate, (se_re, se_im))`` with per-component standard errors
    (sample standard deviation of cos / sin terms over sqrt(N)).
    """
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[0] < 2:
        raise DomainError("domain error: ecf needs at least two samples")
    est, se = ecf_panel(x, np.atleast_2d(np.asarray(theta, dtype=np.float64)))
    return complex(est[0]), (float(se[0, 0]), float(se[0, 1]))


def ecf_panel(samples, thetas):
    """ECF at every row of ``thetas``; returns (complex (T,), se (T, 2))."""
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[0] < 2:
        raise DomainError("domain error: ecf needs at least two samples")
    thetas = np.atleast_2d(np.asarray(thetas, dtype=np.float64))
    n = x.shape[0]
    proj = x @ thetas.T
    c = np.cos(proj)
    s = np.sin(proj)
    est = c.mean(axis=0) + 1j * s.mean(axis=0)
    se = np.column_stack([c.std(axis=0, ddof=1), s.std(axis=0, ddof=1)]) / np.sqrt(n)
    zero = ~np.any(thetas != 0, axis=1)
    est[zero] = 1.0
    se[zero] = 0.0
    return est, se


def ecf_of_projections(proj):
    """ECF of precomputed projections <theta, X_k>: columns are thetas."""
    proj = np.atleast_2d(np.asarray(proj, dtype=np.float64))
    n = proj.shape[0]
    c = np.cos(proj)
    s = np.sin(proj)
    est = c.mean(axis=0) + 1j * s.mean(axis=0)
    se = np.column_stack([c.std(axis=0, ddof=1), s.std(axis=0, ddof=1)]) / np.sqrt(n)
    return est, se


def _smoothstep(t):
    return t ** 3 * (10 - 15 * t + 6 * t * t), 30 * t * t * (1 - t) ** 2


def sampler_cf_by_quadrature(alpha, kappa, thetas, nodes=400):
    """Exact CF of the m = 1 sub-Gaussian sampler, by quadrature over its inputs.

    The Gaussian factor is integrated in closed form; the mixing variable's
    two input uniforms are integrated with a tensor Gauss-Legendre rule after
    a smoothstep change of variables that tames both endpoints. The sampler's
    own transform (:mod:`ossfield._fallback`) is used, so this is an
    independent route to the law it produces.
    """
    from . import _fallback

    a = alpha / 2.0
    x, w = np.polynomial.legendre.leggauss(nodes)
    t = 0.5 * (x + 1)
    u, du = _smoothstep(t)
    wt = 0.5 * w * du
    keep = (u > 0) & (u < 1)
    u, wt = u[keep], wt[keep]
    U, V = np.meshgrid(u, u, indexing="ij")
    weight = np.outer(wt, wt)
    mix = _fallback._kanter(a, U, -np.log(V))
    thetas = np.asarray(thetas, dtype=np.float64).reshape(-1)
    out = np.empty(thetas.size)
    for i, th in enumerate(thetas):
        out[i] = np.sum(weight * np.exp(-0.5 * kappa ** 2 * th * th * mix))
    return out


def calibrate_subgaussian_constant(alpha, thetas=None, nodes=400):
    """Least-squares kappa matching the sampler's CF to exp(-|theta|^alpha).

    Returns the fitted kappa; compare with :data:`SUBGAUSSIAN_KAPPA`.
    """
    from scipy.optimize import minimize_scalar

    if not 0 < alpha < 2:
        raise DomainError("calibration applies to the sub-Gaussian path, alpha in (0, 2)")
    if thetas is None:
        thetas = np.linspace(0.25, 2.0, 12)
    thetas = np.asarray(thetas, dtype=np.float64)
    target = -np.abs(thetas) ** alpha

    def loss(kappa):
        cf = sampler_cf_by_quadrature(alpha, kappa, thetas, nodes)
        return float(np.sum((np.log(cf) - target) ** 2))

    res = minimize_scalar(loss, bounds=(0.5, 3.0), method="bounded",
                          options={"xatol": 1e-9})
    return float(res.x)
