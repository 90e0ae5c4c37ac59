"""Statistical and deterministic checks of the constructed fields.

Joint laws are compared through linear functionals sum_j <theta_j, X(x_j)>
(Cramer-Wold): a panel of seeded theta tuples, each scaled so the discrete CF
exponent lies in [0.3, 2] where the ECF is most informative. Two-sample
z-scores use the real parts of the two ECFs and their pooled standard errors.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

from .errors import DomainError
from .fields import simulate
from .linops import as_operator, mat_pow, op_norm, pow_stack
from .stable import ecf_of_projections

Z_THRESHOLD = 4.0
FAMILY_ALPHA = 0.005
PANEL_SIZE = 20
PANEL_RANGE = (0.3, 2.0)


def z_threshold(n_comparisons):
    """max(4, Bonferroni two-sided quantile at family level FAMILY_ALPHA)."""
    n = max(1, int(n_comparisons))
    return max(Z_THRESHOLD, float(norm.isf(FAMILY_ALPHA / (2 * n))))


def _z(a, b, sa, sb):
    den = np.sqrt(sa ** 2 + sb ** 2)
    diff = a - b
    with np.errstate(invalid="ignore"):
        inf = np.sign(diff) * np.inf
    return np.where(den > 0, diff / np.where(den > 0, den, 1.0),
                    np.where(diff == 0, 0.0, inf))


@dataclass
class ECFReport:
    """ECF comparison over a theta panel.

    ``empirical`` / ``se`` describe the tested side; ``reference`` / ``se_ref``
    the comparison sample (None for a one-sample test against
    exp(-theoretical_exponent)). ``z_scores`` compare real parts,
    ``z_imag`` imaginary parts.
    """

    label: str
    theta_list: np.ndarray
    empirical: np.ndarray
    se: np.ndarray
    theoretical_exponent: np.ndarray = None
    reference: np.ndarray = None
    se_ref: np.ndarray = None
    z_scores: np.ndarray = None
    z_imag: np.ndarray = None
    threshold: float = Z_THRESHOLD
    verdict: bool = None
    extras: dict = field(default_factory=dict, repr=False)

    def recompute_z(self):
        """(z_real, z_imag) from the stored estimates alone."""
        if self.reference is None:
            theo = np.exp(-np.asarray(self.theoretical_exponent))
            zr = _z(self.empirical.real, theo, self.se[:, 0], np.zeros_like(theo))
            zi = _z(self.empirical.imag, 0.0, self.se[:, 1], np.zeros_like(theo))
        else:
            zr = _z(self.empirical.real, self.reference.real, self.se[:, 0], self.se_ref[:, 0])
            zi = _z(self.empirical.imag, self.reference.imag, self.se[:, 1], self.se_ref[:, 1])
        return zr, zi

    def finalize(self):
        self.z_scores, self.z_imag = self.recompute_z()
        self.threshold = z_threshold(2 * len(self.z_scores))
        self.verdict = bool(self.max_abs_z <= self.threshold)
        return self

    @property
    def max_abs_z(self):
        return float(max(np.max(np.abs(self.z_scores)), np.max(np.abs(self.z_imag))))

    @property
    def passed(self):
        return bool(self.verdict)

    def rows(self):
        """(theta_index, re_emp, im_emp, se, theo, z) records for tables."""
        theo = (np.full(len(self.empirical), np.nan) if self.theoretical_exponent is None
                else np.exp(-np.asarray(self.theoretical_exponent)))
        return [(i, float(e.real), float(e.imag), float(s[0]), float(t), float(z))
                for i, (e, s, t, z) in enumerate(zip(self.empirical, self.se, theo,
                                                     self.z_scores))]

    def to_dict(self):
        return {"label": self.label, "threshold": self.threshold, "verdict": self.verdict,
                "max_abs_z": self.max_abs_z,
                "theta_list": np.asarray(self.theta_list).tolist(),
                "empirical": [[float(e.real), float(e.imag)] for e in self.empirical],
                "se": np.asarray(self.se).tolist(),
                "reference": None if self.reference is None
                else [[float(e.real), float(e.imag)] for e in self.reference],
                "se_ref": None if self.se_ref is None else np.asarray(self.se_ref).tolist(),
                "theoretical_exponent": None if self.theoretical_exponent is None
                else np.asarray(self.theoretical_exponent).tolist(),
                "z_scores": np.asarray(self.z_scores).tolist(),
                "z_imag": np.asarray(self.z_imag).tolist()}


def theta_panel(design, n=PANEL_SIZE, seed=0, left_mult=None, target=PANEL_RANGE):
    """Seeded (n, J, m) theta tuples with discrete exponents spread over ``target``.

    ``left_mult`` (an m x m matrix M) scales against sum_j <theta_j, M X(x_j)>.
    Tuples whose exponent is zero (e.g. all points at the origin) are kept
    unscaled.
    """
    J, m = design.points.shape[0], design.spec.m
    rng = np.random.default_rng(seed)
    raw = rng.standard_normal((n, J, m))
    goal = rng.uniform(target[0], target[1], n)
    th = raw if left_mult is None else raw @ np.asarray(left_mult)
    gam = design.exponent(th)
    scale = np.where(gam > 0, (goal / np.where(gam > 0, gam, 1.0)) ** (1.0 / design.spec.alpha),
                     1.0)
    return raw * scale[:, None, None]


def _project(values, thetas, mult=None):
    """sum_j <theta_j, M X_j> for every replicate and tuple: (n_rep, T)."""
    th = np.asarray(thetas) if mult is None else np.asarray(thetas) @ np.asarray(mult)
    return np.einsum("njm,tjm->nt", values, th)


def _two_sample(label, thetas, proj_left, proj_right, theo=None, extras=None):
    e1, s1 = ecf_of_projections(proj_left)
    e2, s2 = ecf_of_projections(proj_right)
    rep = ECFReport(label=label, theta_list=np.asarray(thetas), empirical=e1, se=s1,
                    reference=e2, se_ref=s2, theoretical_exponent=theo,
                    extras=extras or {})
    return rep.finalize()


def oss_mc_test(spec, r, points, theta_list=None, n_rep=20_000, seed=0, threads=1,
                claimed_D=None, quad=None):
    """Two independent samples: X(r^E x_j) versus r^D X(x_j), compared by ECF.

    ``claimed_D`` replaces D in the right-hand transform (negative controls).
    The samples are kept in ``report.extras`` so controls can reuse them.
    """
    if not r > 0:
        raise DomainError("domain error: r must be positive")
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    rE = mat_pow(r, spec.E.entries)
    left = simulate(spec, pts @ rE.T, n_rep, seed, threads=threads, tag=1, quad=quad)
    right = simulate(spec, pts, n_rep, seed, threads=threads, tag=2, quad=quad)
    return _oss_compare(spec, r, left, right, theta_list, seed, claimed_D)


def _oss_compare(spec, r, left, right, theta_list, seed, claimed_D):
    D = spec.D.entries if claimed_D is None else as_operator(claimed_D).entries
    rD = mat_pow(r, D)
    if theta_list is None:
        theta_list = theta_panel(right.design, seed=seed, left_mult=rD)
    theo = right.design.exponent(np.asarray(theta_list) @ rD)
    rep = _two_sample("oss" if claimed_D is None else "oss-control", theta_list,
                      _project(left.replicates, theta_list),
                      _project(right.replicates, theta_list, rD), theo,
                      {"left": left, "right": right, "r": r})
    return rep


def oss_negative_control(report, spec, factor=1.5):
    """Re-test an oss report's samples with the wrong exponent D' = factor * D."""
    ex = report.extras
    return _oss_compare(spec, ex["r"], ex["left"], ex["right"], report.theta_list, 0,
                        factor * spec.D.entries)


def stationary_increments_mc_test(spec, h, points, theta_list=None, n_rep=20_000, seed=0,
                                  threads=1, quad=None):
    """Two independent samples: {X(x_j + h) - X(h)} versus {X(x_j)}, compared by ECF."""
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    h = np.asarray(h, dtype=np.float64).reshape(spec.d)
    left = simulate(spec, np.vstack([pts + h, h[None]]), n_rep, seed, threads=threads,
                    tag=3, quad=quad)
    right = simulate(spec, pts, n_rep, seed, threads=threads, tag=4, quad=quad)
    if theta_list is None:
        theta_list = theta_panel(right.design, seed=seed)
    incr = left.replicates[:, :-1, :] - left.replicates[:, -1:, :]
    theo = right.design.exponent(np.asarray(theta_list))
    return _two_sample("increments", theta_list, _project(incr, theta_list),
                       _project(right.replicates, theta_list), theo,
                       {"left": left, "right": right, "h": h})


def increments_negative_control(report):
    """Compare {X(x_j + h)} (no base-point subtraction) with {X(x_j)}."""
    ex = report.extras
    th = report.theta_list
    wrong = ex["left"].replicates[:, :-1, :]
    return _two_sample("increments-control", th, _project(wrong, th),
                       _project(ex["right"].replicates, th), report.theoretical_exponent,
                       ex)


@dataclass
class ProperReport:
    verdict: str
    directions: np.ndarray
    max_deficiency: np.ndarray
    se: np.ndarray
    offending: np.ndarray = None

    @property
    def full(self):
        return self.verdict == "full"


def properness_test(sample, directions=None, c_grid=None, min_replicates=1000):
    """Fullness check: a direction y with |ecf(c y)| = 1 for all c flags "suspect".

    ``sample`` is an (n, m) array of replicates at one point. Default
    directions are the coordinate axes plus the sample's right singular
    vectors (the last one is the direction of least spread). For each
    direction the largest deficiency 1 - |ecf(c y)| over ``c_grid`` must
    exceed 4 standard errors.
    """
    x = np.asarray(sample, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    n, m = x.shape
    if n < min_replicates:
        raise DomainError(f"properness test needs at least {min_replicates} replicates")
    if directions is None:
        _, _, vt = np.linalg.svd(x - x.mean(axis=0), full_matrices=False)
        directions = np.vstack([np.eye(m), vt])
    dirs = np.atleast_2d(np.asarray(directions, dtype=np.float64))
    dirs = dirs / np.linalg.norm(dirs, axis=1, keepdims=True)
    if c_grid is None:
        scale = np.median(np.linalg.norm(x, axis=1))
        scale = scale if scale > 0 else 1.0
        c_grid = np.geomspace(0.05, 20.0, 15) / scale
    c_grid = np.asarray(c_grid, dtype=np.float64)
    best = np.zeros(dirs.shape[0])
    best_se = np.zeros(dirs.shape[0])
    ok = np.zeros(dirs.shape[0], dtype=bool)
    for i, y in enumerate(dirs):
        proj = (x @ y)[:, None] * c_grid[None, :]
        est, se = ecf_of_projections(proj)
        defic = 1.0 - np.abs(est)
        s = np.sqrt(se[:, 0] ** 2 + se[:, 1] ** 2)
        k = int(np.argmax(defic - 4 * s))
        best[i], best_se[i] = defic[k], s[k]
        ok[i] = bool(np.any(defic > 4 * s) and np.any(s > 0))
    verdict = "full" if ok.all() else "suspect"
    offending = None if ok.all() else dirs[np.argmin(ok.astype(float) + best)]
    return ProperReport(verdict=verdict, directions=dirs, max_deficiency=best, se=best_se,
                        offending=offending)


@dataclass
class NormBoundReport:
    slope_small: float
    slope_large: float
    h: float
    H: float
    slack: float = 0.05

    @property
    def ok_small(self):
        return self.slope_small >= self.h - self.slack

    @property
    def ok_large(self):
        return self.slope_large <= self.H + self.slack

    @property
    def within_slack(self):
        """Both slopes within the slack of (h, H) on either side."""
        return (abs(self.slope_small - self.h) <= self.slack
                and abs(self.slope_large - self.H) <= self.slack)

    @property
    def passed(self):
        return self.ok_small and self.ok_large

    def __iter__(self):
        return iter((self.slope_small, self.slope_large))


def _slope(D, grid):
    grid = np.asarray(grid, dtype=np.float64)
    if grid.size < 2 or np.log10(grid.max() / grid.min()) < 4 - 1e-9:
        raise DomainError("norm-bound grids must span at least 4 decades")
    norms = np.array([op_norm(M) for M in pow_stack(grid, D)])
    return float(np.polyfit(np.log(grid), np.log(norms), 1)[0])


def norm_bound_slopes(D, r_grid_small, r_grid_large, slack=0.05):
    """Least-squares slopes of log||r^D|| against log r on a small-r and a large-r grid."""
    D = as_operator(D)
    if not D.eig_real_min > 0:
        raise DomainError("D not in Q: all eigenvalues need positive real parts")
    return NormBoundReport(slope_small=_slope(D.entries, r_grid_small),
                           slope_large=_slope(D.entries, r_grid_large),
                           h=D.eig_real_min, H=D.eig_real_max, slack=slack)


@dataclass
class LebesgueReport:
    r: float
    mc_volume: float
    exact: float
    rel_error: float
    tolerance: float
    det_residual: float

    @property
    def passed(self):
        return self.rel_error <= self.tolerance and self.det_residual <= 1e-9


def lebesgue_scaling_check(E, n_mc, seed=0, r=2.0):
    """Monte Carlo volume of r^E [0,1]^d against r^q.

    Uses stratified hit-or-miss sampling over the bounding box of the image
    (one jittered point per stratum), which keeps the error far below the
    3/sqrt(n) tolerance. Also returns |det r^E - r^q| / r^q.
    """
    E = as_operator(E)
    d = E.dim
    M = mat_pow(r, E.entries)
    exact = float(r ** E.trace)
    det_res = abs(np.linalg.det(M) - exact) / exact
    corners = np.array(np.meshgrid(*[[0.0, 1.0]] * d, indexing="ij")).reshape(d, -1).T @ M.T
    lo, hi = corners.min(axis=0), corners.max(axis=0)
    k = max(1, int(round(n_mc ** (1.0 / d))))
    n = k ** d
    rng = np.random.default_rng(seed)
    Minv = mat_pow(1.0 / r, E.entries)
    hits = 0
    idx_all = np.arange(n)
    for start in range(0, n, 1 << 18):
        idx = idx_all[start:start + (1 << 18)]
        cells = np.stack(np.unravel_index(idx, (k,) * d), axis=1)
        u = (cells + rng.uniform(size=cells.shape)) / k
        y = lo + u * (hi - lo)
        z = y @ Minv.T
        hits += int(np.sum(np.all((z >= 0) & (z <= 1), axis=1)))
    vol = hits / n * float(np.prod(hi - lo))
    return LebesgueReport(r=float(r), mc_volume=vol, exact=exact,
                          rel_error=abs(vol - exact) / exact,
                          tolerance=3.0 / np.sqrt(n), det_residual=float(det_res))


__all__ = ["ECFReport", "z_threshold", "theta_panel", "oss_mc_test", "oss_negative_control",
           "stationary_increments_mc_test", "increments_negative_control", "properness_test",
           "ProperReport", "norm_bound_slopes", "NormBoundReport", "lebesgue_scaling_check",
           "LebesgueReport"]
