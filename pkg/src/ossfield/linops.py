"""Small dense matrix operations: exponentials, real powers r^A, norms, classes.

Everything downstream works with :class:`Operator`, an immutable square real
matrix that carries its spectral metadata (trace, extreme real parts of the
eigenvalues). Matrix powers are ``r^A = exp(ln(r) A)``.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import DomainError

TOL_EIG = 1e-9
_CLUSTER_TOL = 1e-4


class Operator:
    """A square real matrix with cached spectral data.

    Attributes
    ----------
    entries : ndarray, read-only, shape (dim, dim)
    dim : int
    trace : float
    eigvals : ndarray of complex
    eig_real_min, eig_real_max : float
        Extremes of the real parts of ``eigvals``.
    """

    __slots__ = ("entries", "dim", "trace", "eigvals", "eig_real_min",
                 "eig_real_max", "_key")

    def __init__(self, entries):
        a = np.array(entries, dtype=np.float64)
        if a.ndim == 0:
            a = a.reshape(1, 1)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] == 0:
            raise DomainError(f"operator must be a nonempty square matrix, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise DomainError("operator entries must be finite")
        a.setflags(write=False)
        self.entries = a
        self.dim = a.shape[0]
        self.trace = float(np.trace(a))
        self.eigvals = np.linalg.eigvals(a)
        self.eig_real_min = float(self.eigvals.real.min())
        self.eig_real_max = float(self.eigvals.real.max())
        self._key = (self.dim, a.tobytes())

    @classmethod
    def identity(cls, dim):
        return cls(np.eye(dim))

    @classmethod
    def diag(cls, values):
        return cls(np.diag(np.asarray(values, dtype=float)))

    @property
    def T(self):
        """Adjoint (transpose) operator."""
        return Operator(self.entries.T)

    def __array__(self, dtype=None, copy=None):
        return self.entries if dtype is None else self.entries.astype(dtype)

    def __eq__(self, other):
        return isinstance(other, Operator) and self._key == other._key

    def __hash__(self):
        return hash(self._key)

    def __repr__(self):
        return f"Operator({self.entries.tolist()!r})"


def as_operator(a):
    return a if isinstance(a, Operator) else Operator(a)


@dataclass(frozen=True)
class OperatorClass:
    in_Q: bool
    in_M: bool


def mat_exp(a):
    """Matrix exponential of a square real matrix (Pade-13, scaling and squaring).

    Raises ``OverflowError("exp overflow")`` if the result leaves the
    floating-point range.
    """
    a = np.asarray(a, dtype=np.float64)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    return kernels.expm_batch(np.ascontiguousarray(a[None]))[0]


def expm_stack(a):
    """Matrix exponential of every matrix in an (N, n, n) stack."""
    a = np.ascontiguousarray(a, dtype=np.float64)
    return kernels.expm_batch(a)


def mat_pow(r, a):
    """Real power ``r^A = exp(ln(r) A)`` for r > 0; ``mat_pow(1, A)`` is exactly I."""
    a = np.asarray(a, dtype=np.float64)
    if not r > 0:
        raise DomainError("domain error: mat_pow needs r > 0")
    if r == 1:
        return np.eye(a.shape[0])
    return mat_exp(np.log(r) * a)


def log_pow_stack(logs, a):
    """``exp(l A)`` for every scalar ``l`` in ``logs``; returns (N, n, n)."""
    a = np.asarray(a, dtype=np.float64)
    logs = np.asarray(logs, dtype=np.float64).reshape(-1)
    return kernels.expm_batch(np.ascontiguousarray(logs[:, None, None] * a[None]))


def pow_stack(rs, a):
    """``r^A`` for every positive ``r`` in ``rs``; returns (N, n, n)."""
    rs = np.asarray(rs, dtype=np.float64).reshape(-1)
    if np.any(~(rs > 0)):
        raise DomainError("domain error: mat_pow needs r > 0")
    return log_pow_stack(np.log(rs), a)


def op_norm(a):
    """Largest singular value of ``a``."""
    a = np.asarray(a, dtype=np.float64)
    if a.ndim == 0:
        return abs(float(a))
    return float(np.linalg.norm(a, 2))


def classify(a, tol=TOL_EIG):
    """Membership of ``a`` in Q (all Re(eig) > 0) and M (Re(eig) >= 0, with
    every eigenvalue on the imaginary axis semisimple).

    Semisimplicity is decided by comparing the algebraic multiplicity (size of
    the numerical eigenvalue cluster) with the geometric multiplicity
    ``n - rank(A - lambda I)``.
    """
    ent = np.asarray(a, dtype=np.float64)
    if ent.ndim == 0:
        ent = ent.reshape(1, 1)
    eig = np.linalg.eigvals(ent)
    n = ent.shape[0]
    in_q = bool(np.all(eig.real > tol))
    if np.any(eig.real < -tol):
        return OperatorClass(in_Q=in_q, in_M=False)
    scale = max(1.0, float(np.abs(ent).max()))
    for lam in eig[np.abs(eig.real) <= tol]:
        alg = int(np.sum(np.abs(eig - lam) <= _CLUSTER_TOL * scale))
        shifted = ent - lam * np.eye(n)
        sv = np.linalg.svd(shifted, compute_uv=False)
        rank = int(np.sum(sv > np.sqrt(np.finfo(float).eps) * scale * n))
        if n - rank < alg:
            return OperatorClass(in_Q=in_q, in_M=False)
    return OperatorClass(in_Q=in_q, in_M=True)
