"""Pure numpy versions of the compiled kernels in ``_core.pyx``.

Signatures and semantics match the compiled module one for one. Results agree
to rounding; bit-identity across the two backends is not promised.
"""

import numpy as np

THETA13 = 5.371920351148152
B13 = (64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
       1187353796428800.0, 129060195264000.0, 10559470521600.0,
       670442572800.0, 33522128640.0, 1323241920.0, 40840800.0, 960960.0,
       16380.0, 182.0, 1.0)
ANGLE_GUARD = 1e-12
TWO_M52 = 2.0 ** -52


def expm_batch(a):
    a = np.ascontiguousarray(a, dtype=np.float64)
    N, n, _ = a.shape
    if N == 0:
        return np.empty_like(a)
    norm1 = np.abs(a).sum(axis=1).max(axis=1)
    s = np.zeros(N, dtype=np.int64)
    big = norm1 > THETA13
    if big.any():
        s[big] = np.frexp(norm1[big] / THETA13)[1]
    A = a * np.ldexp(1.0, -s)[:, None, None]
    ident = np.eye(n)
    A2 = A @ A
    A4 = A2 @ A2
    A6 = A4 @ A2
    U = A6 @ (B13[13] * A6 + B13[11] * A4 + B13[9] * A2)
    U += B13[7] * A6 + B13[5] * A4 + B13[3] * A2 + B13[1] * ident
    U = A @ U
    V = A6 @ (B13[12] * A6 + B13[10] * A4 + B13[8] * A2)
    V += B13[6] * A6 + B13[4] * A4 + B13[2] * A2 + B13[0] * ident
    try:
        out = np.linalg.solve(V - U, V + U)
    except np.linalg.LinAlgError as exc:
        raise FloatingPointError("singular Pade denominator") from exc
    for level in range(int(s.max())):
        sel = s > level
        out[sel] = out[sel] @ out[sel]
    if not np.all(np.isfinite(out)):
        raise OverflowError("exp overflow")
    return out


def radial_norm_batch(mats, weights, x):
    y = np.einsum("krc,nc->nkr", mats, x)
    return np.sqrt((y * y).sum(axis=2)) @ weights


def _unit(raw):
    return ((raw >> np.uint64(12)).astype(np.float64) + 0.5) * TWO_M52


def symmetric_stable_from_raw(alpha, raw):
    u1 = _unit(raw[:, 0])
    u2 = _unit(raw[:, 1])
    if alpha == 2.0:
        return 2.0 * np.sqrt(-np.log(u1)) * np.sin(2.0 * np.pi * u2)
    v = np.clip(np.pi * (u1 - 0.5), -np.pi / 2 + ANGLE_GUARD, np.pi / 2 - ANGLE_GUARD)
    if alpha == 1.0:
        return np.tan(v)
    w = -np.log(u2)
    return (np.sin(alpha * v) / np.cos(v) ** (1.0 / alpha)
            * (np.cos((1.0 - alpha) * v) / w) ** ((1.0 - alpha) / alpha))


def _kanter(a, u, w):
    pu = np.pi * np.clip(u, ANGLE_GUARD, 1.0 - ANGLE_GUARD)
    return (np.sin(a * pu) / np.sin(pu) ** (1.0 / a)
            * (np.sin((1.0 - a) * pu) / w) ** ((1.0 - a) / a))


def positive_stable_from_raw(a, raw):
    return _kanter(a, _unit(raw[:, 0]), -np.log(_unit(raw[:, 1])))


def isotropic_from_raw(alpha, kappa, raw, scales, m):
    N = raw.shape[0]
    scales = np.asarray(scales, dtype=np.float64)
    if alpha == 2.0:
        mix = kappa * scales
        off = 0
    else:
        mix = kappa * scales * np.sqrt(
            _kanter(alpha / 2.0, _unit(raw[:, 0]), -np.log(_unit(raw[:, 1]))))
        off = 2
    pairs = (m + 1) // 2
    u = _unit(raw[:, off:off + 2 * pairs]).reshape(N, pairs, 2)
    rad = np.sqrt(-2.0 * np.log(u[:, :, 0])) * mix[:, None]
    ang = 2.0 * np.pi * u[:, :, 1]
    out = np.empty((N, 2 * pairs))
    out[:, 0::2] = rad * np.cos(ang)
    out[:, 1::2] = rad * np.sin(ang)
    return out[:, :m].copy()
