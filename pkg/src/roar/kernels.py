"""Hot inner loops, each in a numba and a pure-numpy flavour.

The public names dispatch to the numba versions unless ``ROAR_DISABLE_NUMBA``
is set. Both flavours are importable (``*_np`` / ``*_nb``) so tests and the
benchmark can compare them directly.
"""
import numpy as np

from ._accel import USE_NUMBA, njit

# ---------------------------------------------------------------------------
# GRU gate arithmetic
#
# gx, gh are the pre-activations x @ W_x + b_x and h @ W_h + b_h, laid out as
# [reset | update | candidate] blocks of width H.
#   r = sigmoid(gx_r + gh_r)
#   z = sigmoid(gx_z + gh_z)
#   n = tanh(gx_n + r * gh_n)
#   h' = (1 - z) * h + z * n
# ---------------------------------------------------------------------------


def _sigmoid_np(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def gru_gates_forward_np(gx, gh, h):
    H = h.shape[1]
    r = _sigmoid_np(gx[:, :H] + gh[:, :H])
    z = _sigmoid_np(gx[:, H:2 * H] + gh[:, H:2 * H])
    n = np.tanh(gx[:, 2 * H:] + r * gh[:, 2 * H:])
    h_new = (1.0 - z) * h + z * n
    return h_new, r, z, n


def gru_gates_backward_np(g, gh, h, r, z, n):
    H = h.shape[1]
    dh = g * (1.0 - z)
    dz_pre = g * (n - h) * z * (1.0 - z)
    dn_pre = g * z * (1.0 - n * n)
    dr_pre = dn_pre * gh[:, 2 * H:] * r * (1.0 - r)
    dgx = np.concatenate([dr_pre, dz_pre, dn_pre], axis=1)
    dgh = np.concatenate([dr_pre, dz_pre, dn_pre * r], axis=1)
    return dgx, dgh, dh


@njit
def _sig(x):
    if x >= 0.0:
        return 1.0 / (1.0 + np.exp(-x))
    ex = np.exp(x)
    return ex / (1.0 + ex)


@njit
def gru_gates_forward_nb(gx, gh, h):
    B, H = h.shape
    h_new = np.empty((B, H))
    r = np.empty((B, H))
    z = np.empty((B, H))
    n = np.empty((B, H))
    for b in range(B):
        for j in range(H):
            rj = _sig(gx[b, j] + gh[b, j])
            zj = _sig(gx[b, H + j] + gh[b, H + j])
            nj = np.tanh(gx[b, 2 * H + j] + rj * gh[b, 2 * H + j])
            r[b, j] = rj
            z[b, j] = zj
            n[b, j] = nj
            h_new[b, j] = (1.0 - zj) * h[b, j] + zj * nj
    return h_new, r, z, n


@njit
def gru_gates_backward_nb(g, gh, h, r, z, n):
    B, H = h.shape
    dgx = np.empty((B, 3 * H))
    dgh = np.empty((B, 3 * H))
    dh = np.empty((B, H))
    for b in range(B):
        for j in range(H):
            gj = g[b, j]
            zj = z[b, j]
            rj = r[b, j]
            nj = n[b, j]
            dh[b, j] = gj * (1.0 - zj)
            dz_pre = gj * (nj - h[b, j]) * zj * (1.0 - zj)
            dn_pre = gj * zj * (1.0 - nj * nj)
            dr_pre = dn_pre * gh[b, 2 * H + j] * rj * (1.0 - rj)
            dgx[b, j] = dr_pre
            dgx[b, H + j] = dz_pre
            dgx[b, 2 * H + j] = dn_pre
            dgh[b, j] = dr_pre
            dgh[b, H + j] = dz_pre
            dgh[b, 2 * H + j] = dn_pre * rj
    return dgx, dgh, dh


# ---------------------------------------------------------------------------
# One-level two-tap analysis filter bank over the rows of a matrix
# ---------------------------------------------------------------------------


def haar_rows_np(X, phi, psi):
    even = X[:, 0::2]
    odd = X[:, 1::2]
    cA = even * phi[0] + odd * phi[1]
    cD = even * psi[0] + odd * psi[1]
    return cA, cD


@njit
def haar_rows_nb(X, phi, psi):
    R, D = X.shape
    K = D // 2
    cA = np.empty((R, K))
    cD = np.empty((R, K))
    for i in range(R):
        for k in range(K):
            a = X[i, 2 * k]
            b = X[i, 2 * k + 1]
            cA[i, k] = a * phi[0] + b * phi[1]
            cD[i, k] = a * psi[0] + b * psi[1]
    return cA, cD


def haar_rows_inverse_np(cA, cD, phi, psi):
    # 2x2 synthesis: solve [[phi0, phi1], [psi0, psi1]] @ [a, b] = [cA, cD]
    det = phi[0] * psi[1] - phi[1] * psi[0]
    out = np.empty((cA.shape[0], 2 * cA.shape[1]))
    out[:, 0::2] = (psi[1] * cA - phi[1] * cD) / det
    out[:, 1::2] = (phi[0] * cD - psi[0] * cA) / det
    return out


@njit
def haar_rows_inverse_nb(cA, cD, phi, psi):
    R, K = cA.shape
    det = phi[0] * psi[1] - phi[1] * psi[0]
    out = np.empty((R, 2 * K))
    for i in range(R):
        for k in range(K):
            out[i, 2 * k] = (psi[1] * cA[i, k] - phi[1] * cD[i, k]) / det
            out[i, 2 * k + 1] = (phi[0] * cD[i, k] - psi[0] * cA[i, k]) / det
    return out


# ---------------------------------------------------------------------------
# First threshold crossing for every (threshold, video) pair.
# P is videos x frames, padded with -inf past each video's length.
# Returns 0-based frame indices, -1 where the threshold is never reached.
# ---------------------------------------------------------------------------


def first_crossings_np(P, thresholds):
    hit = P[None, :, :] >= thresholds[:, None, None]
    idx = np.argmax(hit, axis=2)
    return np.where(hit.any(axis=2), idx, -1).astype(np.int64)


@njit
def first_crossings_nb(P, thresholds):
    V, T = P.shape
    K = thresholds.shape[0]
    out = np.full((K, V), -1, dtype=np.int64)
    for k in range(K):
        a = thresholds[k]
        for v in range(V):
            for t in range(T):
                if P[v, t] >= a:
                    out[k, v] = t
                    break
    return out


if USE_NUMBA:
    gru_gates_forward = gru_gates_forward_nb
    gru_gates_backward = gru_gates_backward_nb
    haar_rows = haar_rows_nb
    haar_rows_inverse = haar_rows_inverse_nb
    first_crossings = first_crossings_nb
    BACKEND = "numba"
else:
    gru_gates_forward = gru_gates_forward_np
    gru_gates_backward = gru_gates_backward_np
    haar_rows = haar_rows_np
    haar_rows_inverse = haar_rows_inverse_np
    first_crossings = first_crossings_np
    BACKEND = "numpy"
