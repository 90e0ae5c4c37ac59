"""Polar coordinates x = tau(x)^E l(x) under an operator E with positive spectrum.

The radial part is built from the operator-scaling norm

    ||x||_E = int_0^1 |t^E x| dt / t = int_{-inf}^0 |e^{sE} x| ds,

whose unit sphere {||x||_E = 1} serves as Sigma_0.  Since
d/du ||e^{uE} x||_E = |e^{uE} x| > 0, the map u -> ||e^{uE} x||_E is strictly
increasing and tau(x) = e^{-u*} where u* solves ||e^{u* E} x||_E = 1.

The integral over s is a composite Gauss-Legendre rule on [-L, 0]; the
matrices e^{s_k E} at the nodes are computed once per operator, so
evaluating the norm is a weighted sum of |P_k x|.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import kernels
from .errors import DomainError, NotInQError
from .linops import Operator, as_operator, classify, log_pow_stack

_GL_NODES = 16
_TAIL_TOL = 1e-15
_REFINE_TOL = 1e-13
_MAX_REFINE = 4


@dataclass(frozen=True)
class PolarCoords:
    tau: float
    direction: np.ndarray


def _composite_rule(length, width):
    n_panels = max(1, int(np.ceil(length / width)))
    edges = np.linspace(-length, 0.0, n_panels + 1)
    x, w = np.polynomial.legendre.leggauss(_GL_NODES)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


class PolarMap:
    """Radial norm, tau and direction for one operator E in Q(R^d).

    ``use_cache`` memoizes scalar ``tau`` calls keyed by the point's bytes;
    the cache never changes results.
    """

    def __init__(self, E, use_cache=True):
        E = as_operator(E)
        if not classify(E).in_Q:
            raise NotInQError("operator not in Q: all eigenvalues need positive real parts")
        self.E = E
        self.dim = E.dim
        self.use_cache = use_cache
        self._cache = {}
        ent = E.entries
        spread = max(float(np.linalg.norm(ent, 2)), float(np.abs(E.eigvals).max()), 1e-3)
        length = self._truncation(ent)
        width = min(2.0, 2.0 / spread)
        rule = self._build(length, width)
        probes = self._probes()
        ref = self._norm_with(rule, probes)
        for _ in range(_MAX_REFINE):
            finer = self._build(length, width / 2)
            val = self._norm_with(finer, probes)
            delta = np.max(np.abs(val - ref) / ref)
            rule, ref, width = finer, val, width / 2
            if delta < _REFINE_TOL:
                break
        self.nodes, self.weights, self.mats = rule
        self.length = length

    @staticmethod
    def _truncation(ent):
        # tail of int_{-inf}^{-L} ||e^{sE}|| ds relative to the smallest
        # attainable |e^{sE} x| on [-1, 0]
        grid = np.linspace(-1.0, 0.0, 9)
        near = log_pow_stack(grid, ent)
        floor = min(np.linalg.svd(m, compute_uv=False)[-1] for m in near)
        ts = np.arange(0.0, 4000.0, 1.0)
        step = 64
        for stop in range(step, len(ts) + 1, step):
            norms = np.linalg.norm(log_pow_stack(-ts[:stop], ent), ord=2, axis=(1, 2))
            tail = np.cumsum(norms[::-1])[::-1]
            ok = np.nonzero(tail <= _TAIL_TOL * floor)[0]
            if ok.size:
                return float(ts[ok[0]] + 1.0)
        raise DomainError("radial norm truncation did not converge; spectrum too close to 0")

    def _build(self, length, width):
        nodes, weights = _composite_rule(length, width)
        mats = log_pow_stack(nodes, self.E.entries)
        return nodes, weights, np.ascontiguousarray(mats)

    def _probes(self):
        rng = np.random.default_rng(20240611)
        x = rng.standard_normal((4 * self.dim, self.dim))
        return np.vstack([np.eye(self.dim), x / np.linalg.norm(x, axis=1, keepdims=True)])

    @staticmethod
    def _norm_with(rule, x):
        _, w, mats = rule
        return kernels.radial_norm_batch(mats, w, np.ascontiguousarray(x))

    def radial_norm(self, x):
        """||x||_E for a point (d,) or a batch (N, d)."""
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        xb = np.ascontiguousarray(np.atleast_2d(x))
        out = kernels.radial_norm_batch(self.mats, self.weights, xb)
        return float(out[0]) if single else out

    def _solve(self, x):
        """Return (log tau, direction) for a batch of nonzero points."""
        n = x.shape[0]
        ent = self.E.entries
        # start where ||e^{uE}|| |x| <= 1 so the first evaluation cannot overflow
        big = np.abs(x).max(axis=1)
        size = big * np.linalg.norm(x / big[:, None], axis=1)      # no underflow
        u = -np.log(size) / max(1.0, float(np.linalg.norm(ent, 2)))

        def value(uu, pts):
            mats = log_pow_stack(uu, ent)
            y = np.einsum("nij,nj->ni", mats, pts)
            nrm = kernels.radial_norm_batch(self.mats, self.weights, np.ascontiguousarray(y))
            return np.log(nrm), y, nrm

        f, y, nrm = value(u, x)
        lo = np.full(n, -np.inf)
        hi = np.full(n, np.inf)
        step = np.log(4.0)
        # expand the bracket by factors of 4 in t = e^{-u}
        for _ in range(400):
            pos = f > 0
            hi = np.where(pos, np.minimum(hi, u), hi)
            lo = np.where(~pos, np.maximum(lo, u), lo)
            need = ~(np.isfinite(lo) & np.isfinite(hi))
            if not need.any():
                break
            u = np.where(need, np.where(pos, u - step, u + step), u)
            idx = np.nonzero(need)[0]
            f[idx], y[idx], nrm[idx] = value(u[idx], x[idx])
        else:
            raise DomainError("tau bracket expansion failed")
        # the bracketing loop leaves u at an endpoint; start from the midpoint
        u = 0.5 * (lo + hi)
        f, y, nrm = value(u, x)
        active = np.ones(n, dtype=bool)
        for _ in range(200):
            deriv = np.linalg.norm(y, axis=1) / nrm
            newton = u - f / deriv
            pos = f > 0
            hi = np.where(pos, np.minimum(hi, u), hi)
            lo = np.where(~pos, np.maximum(lo, u), lo)
            inside = (newton > lo) & (newton < hi)
            nxt = np.where(inside, newton, 0.5 * (lo + hi))
            moved = np.abs(nxt - u)
            u = np.where(active, nxt, u)
            idx = np.nonzero(active)[0]
            f[idx], y[idx], nrm[idx] = value(u[idx], x[idx])
            active = active & (moved > 1e-14 * np.maximum(1.0, np.abs(u)))
            if not active.any():
                break
        return -u, y

    def _check_nonzero(self, x):
        if np.any(~np.any(x != 0, axis=1)):
            raise DomainError("zero has no polar decomposition")

    def log_tau(self, x):
        """ln tau for a batch (N, d) of nonzero points."""
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        self._check_nonzero(x)
        return self._solve(x)[0]

    def tau(self, x):
        """Radial part of a nonzero point (d,) or batch (N, d)."""
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 1:
            if self.use_cache:
                key = x.tobytes()
                hit = self._cache.get(key)
                if hit is not None:
                    return hit
            val = float(np.exp(self.log_tau(x[None])[0]))
            if self.use_cache:
                self._cache[key] = val
            return val
        return np.exp(self.log_tau(x))

    def decompose(self, x):
        """PolarCoords for a point, or (tau, directions) arrays for a batch."""
        x = np.asarray(x, dtype=np.float64)
        xb = np.atleast_2d(x)
        self._check_nonzero(xb)
        logt, direction = self._solve(xb)
        if x.ndim == 1:
            return PolarCoords(tau=float(np.exp(logt[0])), direction=direction[0])
        return np.exp(logt), direction

    def compose(self, tau, direction):
        """tau^E direction (batch or single)."""
        tau = np.atleast_1d(np.asarray(tau, dtype=np.float64))
        direction = np.atleast_2d(np.asarray(direction, dtype=np.float64))
        out = np.einsum("nij,nj->ni", log_pow_stack(np.log(tau), self.E.entries), direction)
        return out


@lru_cache(maxsize=64)
def _shared_map(E):
    return PolarMap(E)


def polar_map(E):
    """Shared PolarMap for an operator (memoized on the operator's entries)."""
    return _shared_map(as_operator(E))


def radial_norm(E, x):
    """||x||_E = int_0^1 |t^E x| dt/t; raises NotInQError unless E is in Q."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1 and not np.any(x):
        polar_map(as_operator(E))
        return 0.0
    return polar_map(as_operator(E)).radial_norm(x)


def tau(E, x):
    """Radial part tau(x) of a nonzero point under E."""
    return polar_map(as_operator(E)).tau(x)


def decompose(E, x):
    """Polar coordinates (tau, direction) of a nonzero point under E."""
    return polar_map(as_operator(E)).decompose(x)


def _random_points(rng, n, d, lo=-3.0, hi=3.0):
    dirs = rng.standard_normal((n, d))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    return dirs * (10.0 ** rng.uniform(lo, hi, n))[:, None]


def triangle_constant(E, n_samples, rng_seed=0):
    """Largest observed tau(x+y) / (tau(x) + tau(y)) over random pairs.

    A lower bound for the quasi-triangle constant C_0. Pairs mix independent
    draws with near-aligned pairs (y close to a positive multiple of x), where
    the ratio is largest.
    """
    E = as_operator(E)
    pm = polar_map(E)
    rng = np.random.default_rng(rng_seed)
    d = E.dim
    n = max(1, int(n_samples))
    x = _random_points(rng, n, d, -2, 2)
    y = _random_points(rng, n, d, -2, 2)
    half = n // 2
    y[:half] = x[:half] * rng.uniform(0.1, 10.0, (half, 1)) + 1e-3 * y[:half]
    s = x + y
    keep = np.any(s != 0, axis=1)
    ratio = pm.tau(s[keep]) / (pm.tau(x[keep]) + pm.tau(y[keep]))
    return float(ratio.max())


def tau_sandwich_check(gammas, n_samples, rng_seed=0, decades=(-3.0, 3.0)):
    """Extremes of tau(x) / sum_j |x_j|^gamma_j for E = diag(1/gamma_j).

    Points have Euclidean norms log-uniform over ``decades`` (default
    |x| in [1e-3, 1e3]). Returns ``(ratio_min, ratio_max)``.
    """
    g = np.asarray(gammas, dtype=np.float64)
    if np.any((g <= 0) | (g >= 1)):
        raise DomainError("gamma out of range: each gamma_j must lie in (0, 1)")
    E = Operator(np.diag(1.0 / g))
    rng = np.random.default_rng(rng_seed)
    x = _random_points(rng, int(n_samples), g.size, *decades)
    ratio = polar_map(E).tau(x) / np.sum(np.abs(x) ** g, axis=1)
    return float(ratio.min()), float(ratio.max())
