"""Compiled witness value and gradient used inside the optimizer loop.

The public evaluation path in :mod:`cohmeter.witness` is plain numpy and is
kept independent of this kernel; tests compare the two.
"""
import numpy as np
from numba import njit

DIAG_CLAMP = 1e-14  # same value as cohmeter.witness.DIAG_CLAMP


@njit(cache=True)
def tau_grad_kernel(x, rho, weight, idx, want_grad):
    """Witness value (and gradient if ``want_grad``) at angles ``x = [theta, phi]``.

    ``idx`` is the (2n+2, n) table of pair indices per witness vector.
    Non-differentiable terms contribute the zero subgradient.
    """
    n2 = x.size // 2
    n = n2 // 2
    nv = idx.shape[0]
    alpha = np.cos(x[:n2])
    sin_t = np.sin(x[:n2])
    phase = np.exp(1j * x[n2:])
    beta = phase * sin_t

    a = np.empty((nv, n))
    b = np.empty((nv, n), dtype=np.complex128)
    loo = np.empty((nv, n))
    vecs = np.empty((nv, n), dtype=np.complex128)
    for v in range(nv):
        for m in range(n):
            a[v, m] = alpha[idx[v, m]]
            b[v, m] = beta[idx[v, m]]
        for m in range(n):
            prod = 1.0
            for l in range(n):
                if l != m:
                    prod *= a[v, l]
            loo[v, m] = prod
            vecs[v, m] = b[v, m] * prod

    rv = np.zeros((nv, n), dtype=np.complex128)
    for v in range(nv):
        for i in range(n):
            acc = 0j
            for m in range(n):
                acc += rho[i, m] * vecs[v, m]
            rv[v, i] = acc

    cross = 0j
    for m in range(n):
        cross += np.conj(vecs[0, m]) * rv[1, m]
    diag = np.empty(2 * n)
    for j in range(2 * n):
        acc = 0.0
        norm = 0.0
        for m in range(n):
            acc += (np.conj(vecs[j + 2, m]) * rv[j + 2, m]).real
            norm += abs(vecs[j + 2, m]) ** 2
        diag[j] = acc if acc > DIAG_CLAMP * norm else 0.0
    total = 0.0
    roots = np.empty(n)
    for j in range(n):
        roots[j] = np.sqrt(diag[j] * diag[j + n])
        total += roots[j]
    mag = abs(cross)
    value = mag - weight * total

    grad = np.zeros(2 * n2)
    if not want_grad:
        return value, grad

    cot = np.zeros((nv, n), dtype=np.complex128)
    if mag > 0.0:
        u = cross / mag
        for m in range(n):
            cot[0, m] = np.conj(u) * rv[1, m]
            cot[1, m] = u * rv[0, m]
    for j in range(n):
        if roots[j] > 0.0:
            cp = -weight * diag[j + n] / roots[j]
            cq = -weight * diag[j] / roots[j]
            for m in range(n):
                cot[j + 2, m] = cp * rv[j + 2, m]
                cot[j + n + 2, m] = cq * rv[j + n + 2, m]

    for v in range(nv):
        for l in range(n):
            p = idx[v, l]
            gc = np.conj(cot[v, l])
            # d(beta)/d(theta) and d(beta)/d(phi) at this slot
            g_theta = (gc * phase[p] * alpha[p] * loo[v, l]).real
            g_phi = (gc * 1j * b[v, l] * loo[v, l]).real
            off = 0j
            for m in range(n):
                if m == l:
                    continue
                prod = 1.0
                for q in range(n):
                    if q != m and q != l:
                        prod *= a[v, q]
                off += np.conj(cot[v, m]) * b[v, m] * prod
            g_theta += -sin_t[p] * off.real
            grad[p] += g_theta
            grad[n2 + p] += g_phi
    return value, grad
