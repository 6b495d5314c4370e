"""NumPy implementations of the compiled kernels in ``_ext.pyx``.

Used when the extension is not built, or when ``KLCETEST_PURE=1``.
"""

import numpy as np

# Rows of the pairwise difference tensor materialized at once.
_ROW_BLOCK = 256


def _sqdist_block(Q, X):
    diff = Q[:, None, :] - X[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def rbf_gram(X, sigma):
    n = X.shape[0]
    inv = 1.0 / (2.0 * sigma * sigma)
    out = np.empty((n, n))
    for start in range(0, n, _ROW_BLOCK):
        stop = min(start + _ROW_BLOCK, n)
        out[start:stop] = np.exp(-_sqdist_block(X[start:stop], X) * inv)
    # exact symmetry and unit diagonal
    iu = np.triu_indices(n, 1)
    out[(iu[1], iu[0])] = out[iu]
    np.fill_diagonal(out, 1.0)
    return out


def rbf_cross(Q, X, sigma):
    inv = 1.0 / (2.0 * sigma * sigma)
    out = np.empty((Q.shape[0], X.shape[0]))
    for start in range(0, Q.shape[0], _ROW_BLOCK):
        stop = min(start + _ROW_BLOCK, Q.shape[0])
        out[start:stop] = np.exp(-_sqdist_block(Q[start:stop], X) * inv)
    return out


def offdiag_quadratic(e, M):
    if e.shape[0] < 2:
        return 0.0
    return float(e @ (M @ e) - np.dot(e * e, np.diagonal(M)))


def bootstrap_offdiag(e, M, idx):
    if idx.shape[1] < 2:
        return np.zeros(idx.shape[0])
    Eb = e[idx]
    full = np.einsum("ij,ij->i", Eb @ M, Eb)
    return full - (Eb * Eb) @ np.diagonal(M)


def pava(y, w):
    sums, wts, cnt = [], [], []
    for yi, wi in zip(y.tolist(), w.tolist()):
        sums.append(yi * wi)
        wts.append(wi)
        cnt.append(1)
        while len(sums) > 1 and sums[-2] / wts[-2] >= sums[-1] / wts[-1]:
            s, ww, c = sums.pop(), wts.pop(), cnt.pop()
            sums[-1] += s
            wts[-1] += ww
            cnt[-1] += c
    return np.repeat(np.array(sums) / np.array(wts), cnt).astype(np.float64)
