"""Quadrature cells for integrals over R^d.

Two rules are provided.

``midpoint_lattice``
    A Cartesian grid of equal boxes on [lo, hi]^d, evaluated at box centers.

``shell_product``
    Cells are boxes in coordinates (v, a) with y = e^{(v - ln tau(w(a))) E} w(a),
    where w(a) runs over a sphere S_P = {w^T P w = 1} transversal to the orbits
    of t -> t^E and a are hyperspherical angles. Then tau(y) = e^v exactly and

        dy = e^{q (v - ln tau(w))} |det[E w, dw/da]| dv da,     q = tr E,

    so a cell's volume is (e^{q v2} - e^{q v1}) / q times an angular factor
    computed by Gauss-Legendre quadrature in a. The v-lattice is absolute
    (v_j = j ln2 / radial_per_shell), hence the cell set is mapped onto itself
    by y -> 2^E y, shifted by one octave. Cells near declared singular points
    are split 2^d-fold over several levels (a graded mesh), and any cell whose
    closure contains a singular point is evaluated at its vertex farthest from
    that point.

For d = 1 there are no angles; the two "patches" are the half lines.
"""

from dataclasses import dataclass, field, replace
from itertools import product

import numpy as np
from scipy.linalg import solve_continuous_lyapunov

from .errors import DomainError
from .linops import Operator, as_operator, log_pow_stack
from .polar import polar_map

_SNAP = 1e-9


@dataclass(frozen=True)
class QuadratureSpec:
    """Discretization recipe.

    Shell radii ``r_in``/``r_out`` are in tau units. When left as None they
    are chosen from the integrand's natural scale so that the neglected tail
    mass is about ``tail_tol`` relative (given the integrand's tail
    exponents). Radii are rounded outward to the shell lattice.

    ``refine_levels`` = None picks the depth of the graded mesh around
    singular points the same way: a cell of relative size 2^-L has tau-size
    about 2^{-L / a_max} (a_max the largest real part of E's spectrum), and
    the mass it can hide scales like tau-size^{e_in}. The depth is capped at
    ``max_refine_levels`` (44 is near the resolution limit of doubles).
    """

    rule: str = "shell_product"
    r_out: float = None
    r_in: float = None
    radial_per_shell: int = 4
    angular: int = 16
    refine_levels: int = None
    max_refine_levels: int = 44
    halo: int = 2
    tail_tol: float = 1e-6
    max_margin_shells: int = 96
    angular_nodes: int = 4
    box: tuple = (0.0, 1.0)
    cells_per_dim: int = 16

    def __post_init__(self):
        if self.rule not in ("shell_product", "midpoint_lattice"):
            raise DomainError(f"unknown quadrature rule {self.rule!r}")
        if self.r_out is not None and self.r_in is not None and not 0 < self.r_in < self.r_out:
            raise DomainError("quadrature needs 0 < r_in < r_out")
        if min(self.radial_per_shell, self.angular, self.cells_per_dim, self.angular_nodes) < 1:
            raise DomainError("cell counts must be positive")
        if (self.refine_levels is not None and self.refine_levels < 0) or self.halo < 0:
            raise DomainError("refine_levels and halo must be nonnegative")
        if not 0 < self.tail_tol < 1:
            raise DomainError("tail_tol must lie in (0, 1)")

    def refined(self, steps=1):
        """Finer rung: cells halved in every coordinate, two more refinement
        levels, tail tolerance divided by 16 (lattice: cells halved)."""
        q = self
        for _ in range(int(steps)):
            q = replace(q, radial_per_shell=2 * q.radial_per_shell, angular=2 * q.angular,
                        refine_levels=None if q.refine_levels is None else q.refine_levels + 2,
                        tail_tol=q.tail_tol / 16,
                        cells_per_dim=2 * q.cells_per_dim)
        return q

    def extended(self, steps=1):
        """Wider rung: tail tolerance divided by 1e3 and the shell cap doubled."""
        q = self
        for _ in range(int(steps)):
            q = replace(q, tail_tol=q.tail_tol * 1e-3,
                        max_margin_shells=2 * q.max_margin_shells)
        return q

    def to_dict(self):
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.__dict__.items()}


def ladder(quad, rungs=3, kind="refined"):
    """Sequence of quadrature specs: quad, quad.refined(1), quad.refined(2), ..."""
    step = quad.refined if kind == "refined" else quad.extended
    return [quad] + [step(k) for k in range(1, rungs)]


@dataclass
class Grid:
    """Quadrature cells: evaluation points and volumes (plus bookkeeping).

    Shell grids built around a nonzero ``center`` also keep ``offsets`` =
    points - center, since points very close to the center are not
    representable as center + offset in floating point.
    """

    points: np.ndarray
    volumes: np.ndarray
    rule: str
    meta: dict = field(default_factory=dict)
    center: np.ndarray = None
    offsets: np.ndarray = None

    @property
    def n_cells(self):
        return self.volumes.size


def _singular_array(singular, d):
    s = np.asarray(singular, dtype=np.float64).reshape(-1, d) if len(singular) else np.zeros((0, d))
    return s[np.any(s != 0, axis=1)]


# ----------------------------------------------------------------------------
# midpoint lattice


def lattice_grid(quad, d, singular=()):
    lo, hi = quad.box
    lo = np.broadcast_to(np.asarray(lo, dtype=np.float64), (d,))
    hi = np.broadcast_to(np.asarray(hi, dtype=np.float64), (d,))
    if np.any(hi <= lo):
        raise DomainError("lattice box needs lo < hi")
    n = quad.cells_per_dim
    h = (hi - lo) / n
    idx = np.stack(np.meshgrid(*[np.arange(n)] * d, indexing="ij"), -1).reshape(-1, d)
    low = lo + idx * h
    pts = low + 0.5 * h
    sing = np.asarray(singular, dtype=np.float64).reshape(-1, d) if len(singular) else np.zeros((0, d))
    for s in sing:
        hit = np.all((low <= s + 1e-12 * h) & (s <= low + h + 1e-12 * h), axis=1)
        for k in np.nonzero(hit)[0]:
            corners = low[k] + np.array(list(product((0.0, 1.0), repeat=d))) * h
            pts[k] = corners[np.argmax(np.linalg.norm(corners - s, axis=1))]
    vol = np.full(idx.shape[0], float(np.prod(h)))
    return Grid(points=pts, volumes=vol, rule="midpoint_lattice",
                meta={"cells_per_dim": n, "box": [lo.tolist(), hi.tolist()]})


# ----------------------------------------------------------------------------
# shell product


def _sphere(a):
    """Hyperspherical map of angles (..., d-1) to unit vectors (..., d); complex-safe."""
    k = a.shape[-1]
    out = []
    sin_prod = np.ones(a.shape[:-1], dtype=a.dtype)
    for i in range(k):
        out.append(sin_prod * np.cos(a[..., i]))
        sin_prod = sin_prod * np.sin(a[..., i])
    out.append(sin_prod)
    return np.stack(out, axis=-1)


def _angles(s):
    """Inverse of :func:`_sphere` for unit vectors (N, d), d >= 2."""
    d = s.shape[1]
    a = np.empty((s.shape[0], d - 1))
    for i in range(d - 2):
        tail = np.linalg.norm(s[:, i:], axis=1)
        a[:, i] = np.arccos(np.clip(s[:, i] / np.where(tail > 0, tail, 1.0), -1.0, 1.0))
    a[:, d - 2] = np.mod(np.arctan2(s[:, d - 1], s[:, d - 2]), 2 * np.pi)
    return a


class ShellGeometry:
    """Coordinates (v, a, patch) <-> y for one operator."""

    def __init__(self, E):
        self.E = as_operator(E)
        self.d = self.E.dim
        self.q = self.E.trace
        self.polar = polar_map(self.E)
        ent = self.E.entries
        if self.d == 1:
            self.P = np.eye(1)
        elif np.linalg.eigvalsh(ent + ent.T).min() > 1e-9:
            self.P = np.eye(self.d)
        else:
            P = solve_continuous_lyapunov(ent.T, 2.0 * np.eye(self.d))
            self.P = 0.5 * (P + P.T)
        w, V = np.linalg.eigh(self.P)
        self.L = (V / np.sqrt(w)) @ V.T          # P^{-1/2}
        self.Linv = (V * np.sqrt(w)) @ V.T       # P^{1/2}

    def omega(self, a, patch):
        """Points of the transversal sphere for angles (N, d-1) / patches (N,)."""
        if self.d == 1:
            return np.where(patch == 0, 1.0, -1.0)[:, None] * self.L[0, 0]
        return _sphere(a) @ self.L.T

    def angular_density(self, a, patch):
        """tau(w)^{-q} |det[E w, dw/da]| and ln tau(w) at angles (N, d-1)."""
        w = self.omega(a, patch)
        logt = self.polar.log_tau(w)
        ew = w @ self.E.entries.T
        if self.d == 1:
            jac = np.abs(ew[:, 0])
        else:
            h = 1e-30
            cols = [ew]
            for k in range(self.d - 1):
                ak = a.astype(complex)
                ak[:, k] += 1j * h
                cols.append((_sphere(ak).imag / h) @ self.L.T)
            jac = np.abs(np.linalg.det(np.stack(cols, axis=2)))
        return np.exp(-self.q * logt) * jac, logt

    def to_y(self, v, a, patch, logt=None):
        w = self.omega(a, patch)
        if logt is None:
            logt = self.polar.log_tau(w)
        mats = log_pow_stack(v - logt, self.E.entries)
        return np.einsum("nij,nj->ni", mats, w)

    def coords(self, y):
        """(v, a, patch) of nonzero points y (N, d)."""
        y = np.atleast_2d(np.asarray(y, dtype=np.float64))
        v = self.polar.log_tau(y)
        if self.d == 1:
            return v, np.zeros((y.shape[0], 0)), (y[:, 0] < 0).astype(int)
        # move along the orbit e^{tE} y onto S_P; ln(w^T P w) is increasing in t
        ent = self.E.entries

        def g(t):
            w = np.einsum("nij,nj->ni", log_pow_stack(t, ent), y)
            return np.log(np.einsum("ni,ij,nj->n", w, self.P, w)), w

        lo = np.full(y.shape[0], -1.0)
        hi = np.full(y.shape[0], 1.0)
        for _ in range(200):
            glo, _ = g(lo)
            ghi, _ = g(hi)
            if np.all(glo < 0) and np.all(ghi > 0):
                break
            lo = np.where(glo < 0, lo, 2 * lo - 1)
            hi = np.where(ghi > 0, hi, 2 * hi + 1)
        for _ in range(100):
            mid = 0.5 * (lo + hi)
            gm, _ = g(mid)
            lo = np.where(gm < 0, mid, lo)
            hi = np.where(gm < 0, hi, mid)
        _, w = g(0.5 * (lo + hi))
        s = w @ self.Linv.T
        s /= np.linalg.norm(s, axis=1, keepdims=True)
        return v, _angles(s), np.zeros(y.shape[0], dtype=int)


def _local_metric(geo, v, a, patch, step=1e-6):
    """Euclidean length per unit of each box coordinate at the points (v, a)."""
    y = geo.to_y(v, a, patch)
    cols = [np.linalg.norm(y @ geo.E.entries.T, axis=1)]
    for k in range(geo.d - 1):
        e = np.zeros_like(a)
        e[:, k] = step
        dy = geo.to_y(v, a + e, patch) - geo.to_y(v, a - e, patch)
        cols.append(np.linalg.norm(dy, axis=1) / (2 * step))
    return np.maximum(np.column_stack(cols), 1e-300)


def _base_angular_boxes(d, angular):
    if d == 1:
        return np.zeros((2, 0)), np.zeros((2, 0)), np.array([0, 1])
    n_pol = max(1, angular // 2)
    edges = [np.linspace(0, np.pi, n_pol + 1)] * (d - 2) + [np.linspace(0, 2 * np.pi, angular + 1)]
    counts = [len(e) - 1 for e in edges]
    idx = np.stack(np.meshgrid(*[np.arange(c) for c in counts], indexing="ij"), -1).reshape(-1, d - 1)
    lo = np.column_stack([edges[i][idx[:, i]] for i in range(d - 1)])
    hi = np.column_stack([edges[i][idx[:, i] + 1] for i in range(d - 1)])
    return lo, hi, np.zeros(lo.shape[0], dtype=int)


def shell_index_range(quad, tau_lo, tau_hi, e_in, e_out):
    """Integer lattice indices [j_lo, j_hi) of the v-cells covering [r_in, r_out]."""
    dv = np.log(2.0) / quad.radial_per_shell
    if quad.r_out is not None:
        log_out = np.log(quad.r_out)
    else:
        extra = min(quad.max_margin_shells,
                    int(np.ceil(np.log2(1.0 / quad.tail_tol) / max(e_out, 0.05))) + 1)
        log_out = np.log(tau_hi) + extra * np.log(2.0)
    if quad.r_in is not None:
        log_in = np.log(quad.r_in)
    else:
        extra = min(quad.max_margin_shells,
                    int(np.ceil(np.log2(1.0 / quad.tail_tol) / max(e_in, 0.05))) + 1)
        log_in = np.log(tau_lo) - extra * np.log(2.0)
    # snap to whole octaves so that 2^E maps the lattice onto itself
    oct_in = int(np.floor(log_in / np.log(2.0) + _SNAP))
    oct_out = int(np.ceil(log_out / np.log(2.0) - _SNAP))
    if oct_out <= oct_in:
        oct_out = oct_in + 1
    return oct_in * quad.radial_per_shell, oct_out * quad.radial_per_shell


def shell_grid(quad, E, singular=(), tau_range=(1.0, 1.0), tail_exponents=(1.0, 1.0),
               center=None):
    """Cells of the shell_product rule for operator E, with shells around ``center``.

    ``tau_range`` is the natural tau scale of the integrand and
    ``tail_exponents`` = (inner, outer) are the exponents e with
    mass(tau < rho) ~ rho^{e_in} near 0 and mass(tau > R) ~ R^{-e_out}.
    """
    geo = ShellGeometry(E)
    d = geo.d
    dv = np.log(2.0) / quad.radial_per_shell
    j_lo, j_hi = shell_index_range(quad, tau_range[0], tau_range[1], *tail_exponents)
    alo, ahi, apatch = _base_angular_boxes(d, quad.angular)
    n_ang = alo.shape[0]
    js = np.arange(j_lo, j_hi)
    vlo = np.repeat(js * dv, n_ang)
    vhi = np.repeat((js + 1) * dv, n_ang)
    lo = np.tile(alo, (js.size, 1))
    hi = np.tile(ahi, (js.size, 1))
    patch = np.tile(apatch, js.size)
    base_cells = vlo.size

    c0 = np.zeros(d) if center is None else np.asarray(center, dtype=np.float64).reshape(d)
    sing = _singular_array(np.asarray(singular, dtype=np.float64).reshape(-1, d) - c0
                           if len(singular) else (), d)
    if sing.shape[0]:
        sv, sa, sp = geo.coords(sing)
    else:
        sv, sa, sp = np.zeros(0), np.zeros((0, d - 1)), np.zeros(0, dtype=int)

    # boxes as (K, d) arrays, column 0 = v, then the angles; last angle periodic
    blo = np.column_stack([vlo, lo])
    bhi = np.column_stack([vhi, hi])
    periodic = np.zeros(d, dtype=bool)
    if d > 1:
        periodic[-1] = True
    if sing.shape[0]:
        sc = np.column_stack([sv, sa])
        metric = _local_metric(geo, sv, sa, sp)

    def excess(blo, bhi, patch):
        """Euclidean gap from each singular point to each box, and box extents."""
        mid = 0.5 * (blo + bhi)
        half = 0.5 * (bhi - blo)
        diff = np.abs(sc[None, :, :] - mid[:, None, :])
        diff = np.where(periodic, np.minimum(diff, 2 * np.pi - diff), diff)
        gap = np.maximum(diff - half[:, None, :] * (1 + 1e-12), 0.0) * metric[None]
        ext = 2 * half[:, None, :] * metric[None]
        dist = np.sqrt(np.sum(gap ** 2, axis=2))
        same = patch[:, None] == sp[None, :]
        return np.where(same, dist, np.inf), ext

    levels = quad.refine_levels
    if levels is None:
        e_in = max(tail_exponents[0], 0.05)
        levels = int(np.ceil(np.log2(1.0 / quad.tail_tol) * geo.E.eig_real_max / e_in))
        levels = min(levels, quad.max_refine_levels)
    passes = 0
    if sing.shape[0] and levels > 0:
        active = np.ones(blo.shape[0], dtype=bool)
        depth = np.zeros(blo.shape[0], dtype=int)
        for passes in range(1, 4 * levels + 1):
            cand = np.nonzero(active)[0]
            if cand.size == 0:
                break
            dist, ext = excess(blo[cand], bhi[cand], patch[cand])
            ext_max = ext.max(axis=2)
            flag = dist <= quad.halo * ext_max
            hit = flag.any(axis=1)
            # boxes narrower than this no longer split cleanly in floating point
            width = bhi[cand] - blo[cand]
            hit &= np.all(width > 1e-11 * np.maximum(1.0, np.abs(blo[cand])), axis=1)
            hit &= depth[cand] < levels
            active[cand[~hit]] = False
            split = cand[hit]
            if split.size == 0:
                break
            owner = np.argmax(flag[hit], axis=1)
            e = ext[hit, owner, :]
            sdim = e >= 0.5 * e.max(axis=1, keepdims=True)
            # a pass that halves every long dimension counts as one level
            full = np.all(sdim | (e < 0.5 * e.max(axis=1, keepdims=True)), axis=1)
            keep = np.ones(blo.shape[0], dtype=bool)
            keep[split] = False
            nlo, nhi, npatch, ndepth = [], [], [], []
            for bits in product((0, 1), repeat=d):
                b = np.array(bits, dtype=bool)
                use = np.all(sdim | ~b, axis=1)     # only children along split dims
                if not use.any():
                    continue
                s_idx = split[use]
                m_ = 0.5 * (blo[s_idx] + bhi[s_idx])
                lo_c = np.where(b & sdim[use], m_, blo[s_idx])
                hi_c = np.where(~b & sdim[use], m_, bhi[s_idx])
                nlo.append(lo_c)
                nhi.append(hi_c)
                npatch.append(patch[s_idx])
                ndepth.append(depth[s_idx] + full[use])
            blo = np.concatenate([blo[keep]] + nlo)
            bhi = np.concatenate([bhi[keep]] + nhi)
            patch = np.concatenate([patch[keep]] + npatch)
            depth = np.concatenate([depth[keep]] + ndepth)
            active = np.concatenate([active[keep], np.ones(sum(x.shape[0] for x in nlo), bool)])
    vlo, vhi = blo[:, 0], bhi[:, 0]
    lo, hi = blo[:, 1:], bhi[:, 1:]

    # angular factor per distinct angular box
    key = np.column_stack([lo, hi, patch[:, None]])
    ukey, inverse = np.unique(key, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    ulo, uhi, upatch = ukey[:, :d - 1], ukey[:, d - 1:2 * d - 2], ukey[:, -1].astype(int)
    x, w = np.polynomial.legendre.leggauss(quad.angular_nodes)
    if d == 1:
        dens, _ = geo.angular_density(np.zeros((ukey.shape[0], 0)), upatch)
        ang_measure = dens
    else:
        grids = np.array(list(product(range(quad.angular_nodes), repeat=d - 1)))
        t = x[grids]                    # (G, d-1)
        wt = np.prod(w[grids], axis=1)  # (G,)
        half = 0.5 * (uhi - ulo)
        mid = 0.5 * (uhi + ulo)
        a = mid[:, None, :] + half[:, None, :] * t[None]
        pa = np.repeat(upatch, t.shape[0])
        dens, _ = geo.angular_density(a.reshape(-1, d - 1), pa)
        ang_measure = (dens.reshape(ukey.shape[0], -1) * wt[None]).sum(axis=1) * np.prod(half, axis=1)
    # center points, ln tau(w) at box centers
    umid = 0.5 * (ulo + uhi)
    ulogt = geo.polar.log_tau(geo.omega(umid, upatch))
    q = geo.q
    volumes = ang_measure[inverse] * np.exp(q * vlo) * np.expm1(q * (vhi - vlo)) / q
    vmid = 0.5 * (vlo + vhi)
    points = geo.to_y(vmid, umid[inverse], patch, ulogt[inverse])

    n_singular_cells = 0
    if sing.shape[0]:
        dist, _ = excess(blo, bhi, patch)
        inside = dist <= 0.0
        for k in np.nonzero(inside.any(axis=1))[0]:
            corners = np.array(list(product((0, 1), repeat=d)), dtype=bool)
            cv = np.where(corners[:, 0], vhi[k], vlo[k])
            ca = np.where(corners[:, 1:], hi[k][None], lo[k][None])
            cy = geo.to_y(cv, ca, np.full(cv.size, patch[k]))
            owners = sing[inside[k]]
            dd = np.min(np.linalg.norm(cy[:, None, :] - owners[None], axis=2), axis=1)
            points[k] = cy[np.argmax(dd)]
            n_singular_cells += 1

    meta = {"rule": "shell_product", "r_in": float(np.exp(j_lo * dv)),
            "r_out": float(np.exp(j_hi * dv)), "shells": int((j_hi - j_lo) // quad.radial_per_shell),
            "radial_per_shell": quad.radial_per_shell, "angular_boxes": n_ang,
            "points_per_shell": n_ang * quad.radial_per_shell, "base_cells": base_cells,
            "refined_cells": int(vlo.size - base_cells), "refine_levels": int(levels),
            "refine_passes": int(passes), "singular_cells": n_singular_cells,
            "v_index_range": (int(j_lo), int(j_hi)), "center": c0.tolist()}
    return Grid(points=points + c0, volumes=volumes, rule="shell_product", meta=meta,
                center=c0 if np.any(c0) else None, offsets=points if np.any(c0) else None)


def make_grid(quad, d, operator=None, singular=(), tau_range=(1.0, 1.0),
              tail_exponents=(1.0, 1.0), center=None):
    if quad.rule == "midpoint_lattice":
        return lattice_grid(quad, d, singular)
    E = Operator.identity(d) if operator is None else as_operator(operator)
    if E.dim != d:
        raise DomainError("shell operator dimension does not match the domain")
    return shell_grid(quad, E, singular, tau_range, tail_exponents, center)
