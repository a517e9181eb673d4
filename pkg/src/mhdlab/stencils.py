"""Compiled interior kernels: -sum_d P_d D_d u for n-component fields.

D_0 is the identity (zero-order term), D_1 the second-order SBP operator in
x1 and D_2, D_3 periodic central differences.  Fields have shape
(n, N1, N2, N3).  Constant coefficients are passed as sparse triplets,
variable ones as a dense (4, n, n, N1, N2, N3) array.
"""
import numba
import numpy as np


@numba.njit(cache=True)
def _derivs(u, a, b, r1, r2, r3, d):
    n, N1, N2, N3 = u.shape
    bp = b + 1 if b + 1 < N2 else 0
    bm = b - 1 if b > 0 else N2 - 1
    for k in range(n):
        if a == 0:
            for c in range(N3):
                d[1, k, c] = (u[k, 1, b, c] - u[k, 0, b, c]) * 2 * r1
        elif a == N1 - 1:
            for c in range(N3):
                d[1, k, c] = (u[k, a, b, c] - u[k, a - 1, b, c]) * 2 * r1
        else:
            for c in range(N3):
                d[1, k, c] = (u[k, a + 1, b, c] - u[k, a - 1, b, c]) * r1
        for c in range(N3):
            d[0, k, c] = u[k, a, b, c]
            d[2, k, c] = (u[k, a, bp, c] - u[k, a, bm, c]) * r2
        d[3, k, 0] = (u[k, a, b, 1] - u[k, a, b, N3 - 1]) * r3
        for c in range(1, N3 - 1):
            d[3, k, c] = (u[k, a, b, c + 1] - u[k, a, b, c - 1]) * r3
        d[3, k, N3 - 1] = (u[k, a, b, 0] - u[k, a, b, N3 - 2]) * r3


@numba.njit(cache=True)
def apply_sparse(rows, cols, ops, vals, u, h1, h2, h3, out):
    n, N1, N2, N3 = u.shape
    d = np.empty((4, n, N3))
    r1, r2, r3 = 0.5 / h1, 0.5 / h2, 0.5 / h3
    for a in range(N1):
        for b in range(N2):
            _derivs(u, a, b, r1, r2, r3, d)
            for i in range(out.shape[0]):
                for c in range(N3):
                    out[i, a, b, c] = 0.0
            for m in range(vals.shape[0]):
                i, k, o, v = rows[m], cols[m], ops[m], vals[m]
                for c in range(N3):
                    out[i, a, b, c] -= v * d[o, k, c]


@numba.njit(cache=True)
def apply_dense(P, u, h1, h2, h3, out):
    n, N1, N2, N3 = u.shape
    d = np.empty((4, n, N3))
    r1, r2, r3 = 0.5 / h1, 0.5 / h2, 0.5 / h3
    for a in range(N1):
        for b in range(N2):
            _derivs(u, a, b, r1, r2, r3, d)
            for i in range(n):
                for c in range(N3):
                    s = 0.0
                    for o in range(4):
                        for k in range(n):
                            s += P[o, i, k, a, b, c] * d[o, k, c]
                    out[i, a, b, c] = -s


class StencilOp:
    """u -> -(P0 u + P1 D1 u + P2 D2 u + P3 D3 u).

    mats: four arrays of shape (n, n) or (N1, N2, N3, n, n)."""

    def __init__(self, mats, spacings, tol=0.0):
        mats = [np.asarray(m, dtype=float) for m in mats]
        self.h = tuple(float(x) for x in spacings)
        self.n = mats[0].shape[-1]
        self.const = all(m.ndim == 2 or _is_uniform(m) for m in mats)
        if self.const:
            flat = [m.reshape((-1,) + m.shape[-2:])[0] for m in mats]
            rows, cols, ops, vals = [], [], [], []
            for o, m in enumerate(flat):
                i, k = np.nonzero(np.abs(m) > tol)
                rows += list(i)
                cols += list(k)
                ops += [o] * len(i)
                vals += list(m[i, k])
            self.rows = np.asarray(rows, dtype=np.int64)
            self.cols = np.asarray(cols, dtype=np.int64)
            self.ops = np.asarray(ops, dtype=np.int64)
            self.vals = np.asarray(vals, dtype=float)
            self.dense = np.stack(flat)
        else:
            full = [np.broadcast_to(m, mats[1].shape) for m in mats]
            self.P = np.ascontiguousarray(np.stack(full).transpose(0, 4, 5, 1, 2, 3))

    def __call__(self, u, out=None):
        if out is None:
            out = np.empty_like(u)
        if self.const:
            apply_sparse(self.rows, self.cols, self.ops, self.vals, u, *self.h, out)
        else:
            apply_dense(self.P, u, *self.h, out)
        return out


def _is_uniform(m):
    flat = m.reshape((-1,) + m.shape[-2:])
    return bool(np.all(flat == flat[0]))
