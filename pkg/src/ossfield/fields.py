"""Moving-average and harmonizable operator-self-similar SaS fields.

Moving-average:   X(x) = int [phi(x-y)^{D-qI/a} - phi(-y)^{D-qI/a}] M(dy)
Harmonizable:     X(x) = Re int (e^{i<x,y>} - 1) psi(y)^{-D-qI/a} M~(dy)

with q = tr E and c^A = exp(ln(c) A). phi is E-homogeneous, psi is
E^T-homogeneous. Both fields satisfy {X(r^E x)} = {r^D X(x)} in law and have
stationary increments.

Every evaluation point of one replicate shares a single draw of the random
measure over one set of quadrature cells, so joint laws are right. The
cells are chosen once for the whole point set (see :func:`field_grid`).
"""

import hashlib
import json
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import homog
from .cells import Grid, QuadratureSpec, ladder, make_grid
from .errors import DomainError, FieldNotDefinedError, SingularityError
from .integral import (MatrixField, default_ladder, exponent_from_values,
                       integrability_diagnostic)
from .linops import TOL_EIG, as_operator, classify, log_pow_stack, mat_pow
from .polar import polar_map
from .stable import CellStream, StableSpec, sample_measure_block

MOVING_AVERAGE = "moving_average"
HARMONIZABLE = "harmonizable"
REPLICATE_CHUNK = 128


@dataclass(frozen=True)
class FieldSpec:
    E: object
    D: object
    alpha: float
    kernel: homog.KernelSpec
    variant: str = MOVING_AVERAGE
    quad: QuadratureSpec = field(default_factory=QuadratureSpec)
    check_kernel: bool = True

    def __post_init__(self):
        E = as_operator(self.E)
        D = as_operator(self.D)
        object.__setattr__(self, "E", E)
        object.__setattr__(self, "D", D)
        if self.variant not in (MOVING_AVERAGE, HARMONIZABLE):
            raise DomainError(f"unknown field variant {self.variant!r}")
        if not 0 < self.alpha <= 2:
            raise DomainError("alpha must lie in (0, 2]")
        if not classify(E).in_Q:
            raise DomainError("E not in Q: all eigenvalues of E need positive real parts")
        if not classify(D).in_Q:
            raise DomainError("D not in Q: all eigenvalues of D need positive real parts")
        if self.kernel.dim is not None and self.kernel.dim != E.dim:
            raise DomainError("kernel dimension does not match E")
        if self.variant == MOVING_AVERAGE and not self.H < self.kernel.beta:
            raise DomainError("H >= beta: the moving-average field requires H < beta "
                              f"(H = {self.H:.6g}, beta = {self.kernel.beta:.6g})")
        if self.variant == HARMONIZABLE and not self.H < self.a1:
            raise DomainError("H >= a1: the harmonizable field requires H < a1, the smallest "
                              f"real part of the eigenvalues of E (H = {self.H:.6g}, "
                              f"a1 = {self.a1:.6g})")
        if self.check_kernel:
            op = E if self.variant == MOVING_AVERAGE else E.T
            res = homog.check_homogeneity(self.kernel, op, n_samples=256, rng_seed=1)
            if not res <= 1e-6:
                which = "E" if self.variant == MOVING_AVERAGE else "E^T"
                raise DomainError(f"kernel is not {which}-homogeneous (residual {res:.3g})")

    @property
    def d(self):
        return self.E.dim

    @property
    def m(self):
        return self.D.dim

    @property
    def q(self):
        return self.E.trace

    @property
    def H(self):
        return self.D.eig_real_max

    @property
    def h(self):
        return self.D.eig_real_min

    @property
    def a1(self):
        return self.E.eig_real_min

    @property
    def exponent_matrix(self):
        """D - qI/alpha (moving-average) or -D - qI/alpha (harmonizable)."""
        sign = 1.0 if self.variant == MOVING_AVERAGE else -1.0
        return sign * self.D.entries - (self.q / self.alpha) * np.eye(self.m)

    @property
    def proper(self):
        """False when q/alpha is (within TOL_EIG) an eigenvalue of D, moving-average only."""
        if self.variant == HARMONIZABLE:
            return True
        return bool(np.all(np.abs(self.D.eigvals - self.q / self.alpha) > TOL_EIG))

    @property
    def tail_exponents(self):
        """(inner, outer) decay exponents of the alpha-norm mass in tau."""
        a = self.alpha
        if self.variant == MOVING_AVERAGE:
            return a * self.h, a * (self.kernel.beta - self.H)
        return a * (self.a1 - self.H), a * self.h

    def with_D(self, D):
        return replace(self, D=as_operator(D), check_kernel=False)

    def to_dict(self):
        k = self.kernel
        return {"E": self.E.entries.tolist(), "D": self.D.entries.tolist(),
                "alpha": float(self.alpha), "variant": self.variant,
                "kernel": {"kind": k.kind, "beta": k.beta,
                           "gammas": list(k.gammas) if k.gammas else None,
                           "evaluator": None if k.kind == "sum_powers"
                           else getattr(k.evaluator, "__qualname__", repr(k.evaluator))},
                "quad": self.quad.to_dict()}

    def digest(self):
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def _pow_scalar(c, A):
    """c^A = exp(ln(c) A) for a batch of scalars; NaN where c <= 0."""
    c = np.asarray(c, dtype=np.float64)
    out = np.full((c.size, A.shape[0], A.shape[0]), np.nan)
    ok = c > 0
    if ok.any():
        out[ok] = log_pow_stack(np.log(c[ok]), A)
    return out


def _kernel(spec, y):
    return np.asarray(spec.kernel.evaluator(y), dtype=np.float64).reshape(-1)


def _ma_values(spec, xs, Y, center=None):
    """Real integrand values, shape (J, K, m, m), at cell points Y for points xs.

    With ``center`` the rows of Y are offsets from it, so that x - y is
    formed as (x - center) - offset without cancellation.
    """
    A = spec.exponent_matrix
    xs = np.atleast_2d(xs)
    out = np.zeros((xs.shape[0], Y.shape[0], spec.m, spec.m))
    nonzero = np.any(xs != 0, axis=1)
    if not nonzero.any():
        return out
    c = np.zeros(spec.d) if center is None else np.asarray(center, dtype=np.float64)
    base = _pow_scalar(_kernel(spec, -c - Y), A)
    for j in np.nonzero(nonzero)[0]:
        out[j] = _pow_scalar(_kernel(spec, (xs[j] - c) - Y), A) - base
    return out


def _harm_values(spec, xs, Y):
    """(real, imag) integrand values, each (J, K, m, m), at frequencies Y."""
    A = spec.exponent_matrix
    xs = np.atleast_2d(xs)
    re = np.zeros((xs.shape[0], Y.shape[0], spec.m, spec.m))
    im = np.zeros_like(re)
    nonzero = np.any(xs != 0, axis=1)
    if not nonzero.any():
        return re, im
    P = _pow_scalar(_kernel(spec, Y), A)
    for j in np.nonzero(nonzero)[0]:
        s = Y @ xs[j]
        re[j] = (-2.0 * np.sin(0.5 * s) ** 2)[:, None, None] * P
        im[j] = np.sin(s)[:, None, None] * P
    return re, im


def _tau_range(spec, xs):
    xs = np.atleast_2d(np.asarray(xs, dtype=np.float64))
    nz = xs[np.any(xs != 0, axis=1)]
    if nz.shape[0] == 0:
        return 1.0, 1.0
    t = polar_map(spec.E).tau(nz)
    return float(t.min()), float(t.max())


# cells whose partition weight falls below this are dropped
WEIGHT_FLOOR = 1e-24


def partition_power(spec):
    """Exponent p of the partition weights |y - s_i|^{-p} / sum_k |y - s_k|^{-p}.

    Near another center s_k the weight vanishes like |y - s_k|^p <= C tau^{p a1},
    which has to beat the integrand mass density tau^{alpha h - q}; two extra
    orders keep the product smooth.
    """
    return int(np.ceil((spec.q - spec.alpha * spec.h + 2.0) / spec.a1))


def _centers(spec, xs):
    """Distinct singular points of the moving-average integrands: the origin and the x_j."""
    pts = np.vstack([np.zeros((1, spec.d)), np.atleast_2d(xs)])
    return np.unique(pts, axis=0)


def _partition_weights(offsets, own, centers, p):
    """Weight of center ``own`` at points given as offsets from it."""
    y = offsets + centers[own]
    d_own = np.linalg.norm(offsets, axis=1)
    total = np.ones(offsets.shape[0])
    for k in range(centers.shape[0]):
        if k != own:
            d_k = np.linalg.norm(y - centers[k], axis=1)
            with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
                total += np.where(d_k > 0, (d_own / d_k) ** p, np.inf)
    return 1.0 / total


def _merge(parts, rule, meta):
    pts = np.concatenate([g.points for g in parts])
    vol = np.concatenate([g.volumes for g in parts])
    off = np.concatenate([g.offsets for g in parts])
    ctr = np.concatenate([g.center for g in parts])
    return Grid(points=pts, volumes=vol, rule=rule, meta=meta, center=ctr, offsets=off)


def field_grid(spec, points, quad=None):
    """Quadrature cells shared by all evaluation points.

    Moving-average integrands are singular at the origin and at every
    evaluation point. Each of these centers s_i gets its own tau-shells
    under E, and the cells of center i carry the partition-of-unity weight
    w_i(y) = |y - s_i|^{-p} / sum_k |y - s_k|^{-p} in their volumes. The CF
    exponent is additive over the partition, and a field with independent
    measures M_i on the weighted cells has exactly the same joint law at the
    evaluation points as one with a single measure. Harmonizable cells are
    tau-shells under E^T in frequency space.
    """
    quad = spec.quad if quad is None else quad
    xs = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if spec.variant == HARMONIZABLE:
        lo, hi = _tau_range(spec, xs)
        return make_grid(quad, spec.d, spec.E.T, (), (1.0 / hi, 1.0 / lo), spec.tail_exponents)
    centers = _centers(spec, xs)
    if quad.rule != "shell_product" or centers.shape[0] == 1:
        return make_grid(quad, spec.d, spec.E, (), (1.0, 1.0), spec.tail_exponents)
    p = partition_power(spec)
    pm = polar_map(spec.E)
    parts, kept = [], []
    for i, c in enumerate(centers):
        others = np.delete(centers, i, axis=0) - c
        t = pm.tau(others)
        g = make_grid(quad, spec.d, spec.E, (), (float(t.min()), float(t.max())),
                      spec.tail_exponents)
        w = _partition_weights(g.points, i, centers, p)
        keep = w > WEIGHT_FLOOR
        parts.append(Grid(points=g.points[keep] + c, volumes=g.volumes[keep] * w[keep],
                          rule=g.rule, meta=g.meta, center=np.tile(c, (int(keep.sum()), 1)),
                          offsets=g.points[keep]))
        kept.append(int(keep.sum()))
    meta = {"rule": "shell_partition", "centers": centers.tolist(), "partition_power": p,
            "cells_per_center": kept, "r_in": [g.meta["r_in"] for g in parts],
            "r_out": [g.meta["r_out"] for g in parts]}
    return _merge(parts, "shell_partition", meta)


def ma_integrand(spec, x):
    """y -> phi(x-y)^{D-qI/alpha} - phi(-y)^{D-qI/alpha} as a MatrixField."""
    if spec.variant != MOVING_AVERAGE:
        raise DomainError("ma_integrand needs a moving-average spec")
    x = np.asarray(x, dtype=np.float64).reshape(-1)

    def real(Y):
        return _ma_values(spec, x, np.atleast_2d(Y))[0]

    lo, hi = _tau_range(spec, x)
    return MatrixField(domain_dim=spec.d, state_dim=spec.m, real_part=real,
                       singular_points=(tuple(x),) if np.any(x) else (),
                       operator=spec.E, tau_range=(lo, hi),
                       tail_exponents=spec.tail_exponents)


def harm_integrand(spec, x):
    """y -> (e^{i<x,y>} - 1) psi(y)^{-D-qI/alpha} as a complex MatrixField."""
    if spec.variant != HARMONIZABLE:
        raise DomainError("harm_integrand needs a harmonizable spec")
    x = np.asarray(x, dtype=np.float64).reshape(-1)

    def real(Y):
        return _harm_values(spec, x, np.atleast_2d(Y))[0][0]

    def imag(Y):
        return _harm_values(spec, x, np.atleast_2d(Y))[1][0]

    lo, hi = _tau_range(spec, x)
    return MatrixField(domain_dim=spec.d, state_dim=spec.m, real_part=real, imag_part=imag,
                       operator=spec.E.T, tau_range=(1.0 / hi, 1.0 / lo),
                       tail_exponents=spec.tail_exponents)


def integrand(spec, x):
    return ma_integrand(spec, x) if spec.variant == MOVING_AVERAGE else harm_integrand(spec, x)


def _upsilon(spec, x, quad_ladder):
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if not np.any(x):
        from .integral import IntegrabilityResult
        return IntegrabilityResult(finite=True, value=0.0, values=[0.0], changes=[])
    quad_ladder = default_ladder(spec.quad) if quad_ladder is None else quad_ladder
    return integrability_diagnostic(integrand(spec, x), quad_ladder, spec.alpha)


def upsilon_ma(spec, x, quad_ladder=None):
    """Integrability of ||phi(x-y)^{D-qI/a} - phi(-y)^{D-qI/a}||^alpha along a ladder."""
    if spec.variant != MOVING_AVERAGE:
        raise DomainError("upsilon_ma needs a moving-average spec")
    return _upsilon(spec, x, quad_ladder)


def upsilon_harm(spec, x, quad_ladder=None):
    """Integrability of (|1-cos|^a + |sin|^a) ||psi(y)^{-D-qI/a}||^alpha along a ladder."""
    if spec.variant != HARMONIZABLE:
        raise DomainError("upsilon_harm needs a harmonizable spec")
    return _upsilon(spec, x, quad_ladder)


class SimulationDesign:
    """Linear map from one measure draw to field values at all points.

    Row block k of ``W`` (``m_in`` rows) maps the unit-scale draw of cell k to
    the stacked field values; the cell's draw carries scale vol_k^{1/alpha}.
    """

    def __init__(self, spec, points, grid):
        self.spec = spec
        self.points = np.atleast_2d(np.asarray(points, dtype=np.float64))
        self.grid = grid
        J, m = self.points.shape[0], spec.m
        K = grid.n_cells
        R, I = _grid_values(spec, self.points, grid)
        blocks = [R] if I is None else [R, -I]
        for b in blocks:
            if not np.all(np.isfinite(b)):
                raise SingularityError("integrand singularity inside cell")
        self.m_in = m * len(blocks)
        # W[(k, b), (j, a)] = block[j, k, a, b]
        W = np.concatenate([np.transpose(b, (1, 3, 0, 2)) for b in blocks], axis=1)
        self.W = np.ascontiguousarray(W.reshape(K * self.m_in, J * m))
        self.zero_points = ~np.any(self.points != 0, axis=1)

    def exponent(self, thetas):
        """Discrete CF exponent of sum_j <theta_j, X(x_j)> for (T, J, m) or (J, m) tuples."""
        th = np.asarray(thetas, dtype=np.float64)
        single = th.ndim == 2
        th = th.reshape(-1, self.W.shape[1])
        K = self.grid.n_cells
        proj = (self.W @ th.T).reshape(K, self.m_in, -1)
        norms = np.sqrt(np.sum(proj ** 2, axis=1))
        out = np.sum(norms ** self.spec.alpha * self.grid.volumes[:, None], axis=0)
        return float(out[0]) if single else out

    def simulate(self, n_rep, stream, threads=1):
        J, m = self.points.shape[0], self.spec.m
        st = StableSpec(self.spec.alpha, self.m_in)
        starts = list(range(0, int(n_rep), REPLICATE_CHUNK))
        out = np.empty((int(n_rep), J * m))

        def run(s):
            stop = min(s + REPLICATE_CHUNK, int(n_rep))
            Z = sample_measure_block(st, self.grid.volumes, stream, range(s, stop))
            out[s:stop] = Z.reshape(stop - s, -1) @ self.W

        if threads and threads > 1:
            with ThreadPoolExecutor(max_workers=int(threads)) as ex:
                list(ex.map(run, starts))
        else:
            for s in starts:
                run(s)
        out = out.reshape(int(n_rep), J, m)
        out[:, self.zero_points, :] = 0.0
        return out


@dataclass
class FieldSample:
    spec_digest: str
    points: np.ndarray
    replicates: np.ndarray
    master_seed: int
    design: SimulationDesign = field(default=None, repr=False, compare=False)
    tag: int = 0


def check_defined(spec, points, quad_ladder=None):
    """Raise FieldNotDefinedError if the integrability ladder diverges at any point."""
    for x in np.atleast_2d(np.asarray(points, dtype=np.float64)):
        res = _upsilon(spec, x, quad_ladder)
        if not res.finite:
            raise FieldNotDefinedError(f"field not well defined at point {x.tolist()}")


def simulate(spec, points, n_rep, master_seed, threads=1, check=True, tag=0, quad=None):
    """Replicated field values at ``points``: FieldSample with replicates (n_rep, J, m).

    Replicate r uses the counter-based stream (master_seed, tag, r); the
    output does not depend on ``threads``.
    """
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if points.shape[1] != spec.d:
        raise DomainError("evaluation points have the wrong dimension")
    if check:
        check_defined(spec, points)
    grid = field_grid(spec, points, quad)
    design = SimulationDesign(spec, points, grid)
    values = design.simulate(n_rep, CellStream(master_seed, tag), threads)
    return FieldSample(spec_digest=spec.digest(), points=points, replicates=values,
                       master_seed=int(master_seed), design=design, tag=int(tag))


# ----------------------------------------------------------------------------
# deterministic identities


def _values(spec, xs, Y):
    if spec.variant == MOVING_AVERAGE:
        return _ma_values(spec, xs, Y), None
    return _harm_values(spec, xs, Y)


def _grid_values(spec, xs, grid):
    """Integrand values on a grid's cells, using center offsets when the grid has them."""
    if spec.variant == MOVING_AVERAGE and grid.offsets is not None:
        return _ma_values(spec, xs, grid.offsets, grid.center), None
    return _values(spec, xs, grid.points)


def _combined_exponent(spec, xs, thetas, grid, left_mult=None):
    """Exponent of sum_j <theta_j, M X(x_j)> on a grid (M = left_mult or I)."""
    R, I = _grid_values(spec, xs, grid)
    th = np.asarray(thetas, dtype=np.float64)
    if left_mult is not None:
        th = th @ left_mult            # (M^T theta_j)^T = theta_j^T M
    vr = np.einsum("jkab,ja->kb", R, th)
    sq = np.sum(vr ** 2, axis=1)
    if I is not None:
        sq = sq + np.sum(np.einsum("jkab,ja->kb", I, th) ** 2, axis=1)
    if not np.all(np.isfinite(sq)):
        raise SingularityError("integrand singularity inside cell")
    return float(np.sum(sq ** (spec.alpha / 2.0) * grid.volumes))


def _split_pairs(pairs, spec):
    xs = np.array([np.asarray(p[0], dtype=np.float64).reshape(spec.d) for p in pairs])
    th = np.array([np.asarray(p[1], dtype=np.float64).reshape(spec.m) for p in pairs])
    return xs, th


def oss_cf_identity(spec, r, pairs, quad=None):
    """(gamma_left, gamma_right) for sum_j <theta_j, X(r^E x_j)> vs sum_j <theta_j, r^D X(x_j)>.

    Both exponents are computed on the same cells, chosen for the union of
    {x_j} and {r^E x_j}.
    """
    if not r > 0:
        raise DomainError("domain error: r must be positive")
    xs, th = _split_pairs(pairs, spec)
    rE = mat_pow(r, spec.E.entries)
    xl = xs @ rE.T
    grid = field_grid(spec, np.vstack([xs, xl]), quad)
    left = _combined_exponent(spec, xl, th, grid)
    right = _combined_exponent(spec, xs, th, grid, left_mult=mat_pow(r, spec.D.entries))
    return left, right


def stationary_increments_cf_identity(spec, h_shift, pairs, quad=None):
    """(gamma_left, gamma_right) for sum_j <theta_j, X(x_j+h) - X(h)> vs sum_j <theta_j, X(x_j)>."""
    xs, th = _split_pairs(pairs, spec)
    h = np.asarray(h_shift, dtype=np.float64).reshape(spec.d)
    grid = field_grid(spec, np.vstack([xs, xs + h, h[None]]), quad)
    R1, I1 = _grid_values(spec, xs + h, grid)
    R0, I0 = _grid_values(spec, h[None], grid)
    vr = np.einsum("jkab,ja->kb", R1 - R0[0][None], th)
    sq = np.sum(vr ** 2, axis=1)
    if I1 is not None:
        sq = sq + np.sum(np.einsum("jkab,ja->kb", I1 - I0[0][None], th) ** 2, axis=1)
    left = float(np.sum(sq ** (spec.alpha / 2.0) * grid.volumes))
    right = _combined_exponent(spec, xs, th, grid)
    return left, right


@dataclass
class IdentityLadder:
    """Both sides of a CF-exponent identity along a refinement ladder."""

    left: list
    right: list
    gaps: list
    proxies: list

    @property
    def gap(self):
        return self.gaps[-1]

    @property
    def proxy(self):
        return self.proxies[-1]

    @property
    def tolerance(self):
        return max(1e-3, 3.0 * self.proxy)

    @property
    def passed(self):
        return self.gap <= self.tolerance

    @property
    def monotone(self):
        return all(b < a for a, b in zip(self.gaps[:-1], self.gaps[1:]))


def identity_ladder(which, spec, arg, pairs, quads):
    """Run ``oss`` (arg = r) or ``increments`` (arg = h) identities over a ladder.

    The error proxy of a rung is the larger relative change of the two sides
    from the previous rung.
    """
    fn = oss_cf_identity if which == "oss" else stationary_increments_cf_identity
    left, right, gaps, proxies = [], [], [], []
    for q in quads:
        a, b = fn(spec, arg, pairs, q)
        left.append(a)
        right.append(b)
        scale = max(abs(a), abs(b))
        gaps.append(abs(a - b) / scale if scale > 0 else 0.0)
        if len(left) == 1:
            proxies.append(np.nan)
        else:
            pa = abs(a - left[-2]) / abs(a) if a else 0.0
            pb = abs(b - right[-2]) / abs(b) if b else 0.0
            proxies.append(max(pa, pb))
    return IdentityLadder(left=left, right=right, gaps=gaps, proxies=proxies)


def _rel(a, b):
    den = max(np.linalg.norm(a), np.linalg.norm(b))
    return 0.0 if den == 0 else float(np.linalg.norm(a - b) / den)


def recurrence_residual(spec, r, x, probe_points, variant="corrected"):
    """Max relative residual of the integrand recurrence over probe points.

    Moving-average: f_{r^E x}(y) = r^{-q/alpha} r^D f_x(r^{-E} y).
    Harmonizable, ``variant="corrected"``: f_{r^E x}(y) = r^{q/alpha} r^D f_x(r^{E^T} y);
    ``variant="literal"``: f_{r^E x}(y) = r^{-q/alpha} r^D f_x(r^{-E^T} y)
    (does not hold in general; reported for comparison).
    Probe points where either side is singular are skipped with a warning.
    """
    if not r > 0:
        raise DomainError("domain error: r must be positive")
    x = np.asarray(x, dtype=np.float64).reshape(spec.d)
    Y = np.atleast_2d(np.asarray(probe_points, dtype=np.float64))
    rE = mat_pow(r, spec.E.entries)
    rD = mat_pow(r, spec.D.entries)
    qa = spec.q / spec.alpha
    if spec.variant == MOVING_AVERAGE:
        lhs = _ma_values(spec, (rE @ x)[None], Y)[0]
        Ys = Y @ mat_pow(1.0 / r, spec.E.entries).T
        base = _ma_values(spec, x[None], Ys)[0]
        rhs = (1.0 if r == 1 else r ** -qa) * np.einsum("ab,kbc->kac", rD, base)
        pairs = [(lhs, rhs)]
    else:
        if variant == "corrected":
            Ys = Y @ mat_pow(r, spec.E.entries)        # rows (r^{E^T} y)^T
            fac = 1.0 if r == 1 else r ** qa
        elif variant == "literal":
            Ys = Y @ mat_pow(1.0 / r, spec.E.entries)
            fac = 1.0 if r == 1 else r ** -qa
        else:
            raise DomainError(f"unknown recurrence variant {variant!r}")
        lr, li = _harm_values(spec, (rE @ x)[None], Y)
        br, bi = _harm_values(spec, x[None], Ys)
        pairs = [(lr[0], fac * np.einsum("ab,kbc->kac", rD, br[0])),
                 (li[0], fac * np.einsum("ab,kbc->kac", rD, bi[0]))]
    worst = 0.0
    skipped = 0
    for k in range(Y.shape[0]):
        vals = [(a[k], b[k]) for a, b in pairs]
        if not all(np.all(np.isfinite(a)) and np.all(np.isfinite(b)) for a, b in vals):
            skipped += 1
            continue
        la = np.concatenate([a.ravel() for a, _ in vals])
        rb = np.concatenate([b.ravel() for _, b in vals])
        worst = max(worst, _rel(la, rb))
    if skipped:
        warnings.warn(f"recurrence_residual skipped {skipped} singular probe point(s)")
    return worst


def integrand_commutes_with_rD(spec, x, probe_points, r=2.0):
    """Max relative commutator ||[f_x(y), r^D]|| over probes (harmonizable parts)."""
    Y = np.atleast_2d(np.asarray(probe_points, dtype=np.float64))
    rD = mat_pow(r, spec.D.entries)
    R, I = _values(spec, np.asarray(x, dtype=np.float64)[None], Y)
    worst = 0.0
    for part in [R[0]] + ([] if I is None else [I[0]]):
        for M in part:
            worst = max(worst, _rel(M @ rD, rD @ M))
    return worst


def harmonizable_condition_numbers(spec, probe_points):
    """Condition numbers of psi(y)^{-D-qI/alpha} at nonzero probes (finite means invertible)."""
    Y = np.atleast_2d(np.asarray(probe_points, dtype=np.float64))
    P = _pow_scalar(_kernel(spec, Y), -spec.D.entries - (spec.q / spec.alpha) * np.eye(spec.m))
    return np.linalg.cond(P)


__all__ = ["FieldSpec", "FieldSample", "SimulationDesign", "MOVING_AVERAGE", "HARMONIZABLE",
           "ma_integrand", "harm_integrand", "integrand", "upsilon_ma", "upsilon_harm",
           "field_grid", "simulate", "check_defined", "oss_cf_identity",
           "stationary_increments_cf_identity", "identity_ladder", "IdentityLadder",
           "recurrence_residual", "integrand_commutes_with_rD",
           "harmonizable_condition_numbers", "ladder"]
