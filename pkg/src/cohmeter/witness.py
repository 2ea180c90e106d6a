"""The coherence witness tau_kn and its parametrizing product states.

A witness is fixed by 2n pairs ``(alpha_i, beta_i)``. Pairs ``0..n-1`` build
``|phi_1>`` and pairs ``n..2n-1`` build ``|phi_2>``; component ``m`` of a
vector is ``beta_{s(m)} * prod_{l != m} alpha_{s(l)}`` where ``s`` maps a site
to the pair occupying it. The swapped families ``|phi_1^(j)>`` and
``|phi_2^(j)>`` exchange the pair sitting on site j between the two halves.

All vectors are computed in this pole-free product form, so ``alpha_i = 0``
is a legal parameter value.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import DimensionMismatch, InvalidRank, InvalidState, RankTooLow
from .hilbert import DensityMatrix, ExcitationState

PAIR_NORM_TOL = 1e-12
# <v|rho|v> at or below this fraction of |v|^2 is round-off and counts as zero
DIAG_CLAMP = 1e-14


def prefactor(k: int, n: int) -> float:
    """Weight ``a_kn`` of the diagonal sum: ``1/n`` for k = 2, else ``1/(n-k+1)``."""
    if not 2 <= k <= n:
        raise InvalidRank(f"need 2 <= k <= n, got k={k}, n={n}")
    if k == 2:
        return 1.0 / n
    return 1.0 / (n - k + 1)


@dataclass(frozen=True, eq=False)
class WitnessParams:
    """2n normalized complex pairs ``(alpha_i, beta_i)``."""

    alpha: np.ndarray
    beta: np.ndarray

    def __post_init__(self):
        alpha = np.array(self.alpha, dtype=np.complex128)
        beta = np.array(self.beta, dtype=np.complex128)
        if alpha.ndim != 1 or alpha.shape != beta.shape or alpha.size % 2 or alpha.size == 0:
            raise InvalidState(f"need two equal vectors of even length 2n, got {alpha.shape}, {beta.shape}")
        norms = np.abs(alpha) ** 2 + np.abs(beta) ** 2
        if np.abs(norms - 1).max() > PAIR_NORM_TOL:
            raise InvalidState(f"pairs are not normalized: |alpha|^2+|beta|^2 = {norms}")
        alpha.setflags(write=False)
        beta.setflags(write=False)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "beta", beta)

    @property
    def n(self) -> int:
        return self.alpha.size // 2

    @property
    def pairs(self) -> list[tuple[complex, complex]]:
        return list(zip(self.alpha.tolist(), self.beta.tolist()))

    @classmethod
    def from_unnormalized(cls, alpha, beta) -> tuple["WitnessParams", float]:
        """Rescale every pair to unit norm.

        Returns the params and the positive factor ``s`` with
        ``tau(unnormalized) = s * tau(normalized)``; tau is homogeneous of
        degree one in the scale of each pair, so ``s`` is the product of the
        pair norms.
        """
        alpha = np.asarray(alpha, dtype=np.complex128)
        beta = np.asarray(beta, dtype=np.complex128)
        norms = np.sqrt(np.abs(alpha) ** 2 + np.abs(beta) ** 2)
        if np.any(norms == 0):
            raise InvalidState("a pair with alpha = beta = 0 cannot be normalized")
        return cls(alpha / norms, beta / norms), float(np.prod(norms))

    @classmethod
    def from_angles(cls, x: np.ndarray) -> "WitnessParams":
        """Pairs ``(cos theta_i, exp(i phi_i) sin theta_i)`` from ``x = [theta, phi]``."""
        theta, phi = _split_angles(x)
        return cls(np.cos(theta).astype(np.complex128), np.exp(1j * phi) * np.sin(theta))

    def to_angles(self) -> np.ndarray:
        """Inverse of :meth:`from_angles` modulo each pair's irrelevant global phase."""
        theta = np.arctan2(np.abs(self.beta), np.abs(self.alpha))
        phase_a = np.where(np.abs(self.alpha) > 0, np.angle(self.alpha), 0.0)
        phi = np.mod(np.angle(self.beta) - phase_a, 2 * np.pi)
        return np.concatenate([theta, phi])

    @classmethod
    def trivial(cls, n: int) -> "WitnessParams":
        """All ``beta_i = 0``: both vectors vanish and tau is exactly zero."""
        return cls(np.ones(2 * n), np.zeros(2 * n))


@dataclass(frozen=True, eq=False)
class PhiStates:
    phi1: np.ndarray
    phi2: np.ndarray
    phi1_swapped: np.ndarray  # row j is |phi_1^(j)>
    phi2_swapped: np.ndarray  # row j is |phi_2^(j)>


@lru_cache(maxsize=None)
def _family_index(n: int) -> np.ndarray:
    """Pair index occupying each site, for the 2n + 2 vectors.

    Row 0 is phi1, row 1 is phi2, rows ``2..n+1`` are phi1^(j) and rows
    ``n+2..2n+1`` are phi2^(j).
    """
    rows = [np.arange(n), np.arange(n, 2 * n)]
    for j in range(n):
        r = np.arange(n)
        r[j] = j + n
        rows.append(r)
    for j in range(n):
        r = np.arange(n, 2 * n)
        r[j] = j
        rows.append(r)
    idx = np.array(rows)
    idx.setflags(write=False)
    return idx


def _leave_one_out(a: np.ndarray) -> np.ndarray:
    """``out[..., m] = prod_{l != m} a[..., l]`` without division."""
    pre = np.ones_like(a)
    suf = np.ones_like(a)
    pre[..., 1:] = np.cumprod(a[..., :-1], axis=-1)
    suf[..., :-1] = np.cumprod(a[..., :0:-1], axis=-1)[..., ::-1]
    return pre * suf


def _split_angles(x):
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size % 4:
        raise InvalidState(f"angle vector must have length 4n, got {x.shape}")
    half = x.size // 2
    return x[:half], x[half:]


def family_vectors(alpha: np.ndarray, beta: np.ndarray) -> np.ndarray:
    """All 2n + 2 witness vectors as rows, in :func:`_family_index` order."""
    n = alpha.size // 2
    idx = _family_index(n)
    return beta[idx] * _leave_one_out(alpha[idx])


def build_phi(params: WitnessParams) -> PhiStates:
    n = params.n
    vecs = family_vectors(params.alpha, params.beta)
    return PhiStates(vecs[0], vecs[1], vecs[2:n + 2], vecs[n + 2:])


def _tau_from_vectors(rho: np.ndarray, vecs: np.ndarray, weight: float) -> float:
    n = rho.shape[0]
    rv = vecs @ rho.T  # row v holds rho @ vec_v
    cross = np.vdot(vecs[0], rv[1])
    diag = np.einsum("vm,vm->v", vecs[2:].conj(), rv[2:]).real
    norms = np.einsum("vm,vm->v", vecs[2:].conj(), vecs[2:]).real
    diag = np.where(diag > DIAG_CLAMP * norms, diag, 0.0)
    return float(abs(cross) - weight * np.sqrt(diag[:n] * diag[n:]).sum())


def tau_from_pairs(rho: np.ndarray, alpha, beta, k: int) -> float:
    """Witness value for raw (possibly un-normalized) pairs and a raw matrix."""
    alpha = np.asarray(alpha, dtype=np.complex128)
    beta = np.asarray(beta, dtype=np.complex128)
    rho = np.asarray(rho)
    n = rho.shape[0]
    if alpha.size != 2 * n or beta.size != 2 * n:
        raise DimensionMismatch(f"{alpha.size} pairs given for n={n}, expected {2 * n}")
    return _tau_from_vectors(rho, family_vectors(alpha, beta), prefactor(k, n))


def evaluate_tau(rho: DensityMatrix, params: WitnessParams, k: int) -> float:
    """Witness ``|<phi1|rho|phi2>| - a_kn sum_j sqrt(<phi1^(j)|rho|phi1^(j)> <phi2^(j)|rho|phi2^(j)>)``."""
    if params.n != rho.n:
        raise DimensionMismatch(f"params are for n={params.n}, state has n={rho.n}")
    return tau_from_pairs(rho.matrix, params.alpha, params.beta, k)


def tau_angles(x: np.ndarray, rho: np.ndarray, weight: float) -> float:
    """Witness value at angles ``x = [theta_1..theta_2n, phi_1..phi_2n]``."""
    theta, phi = _split_angles(x)
    vecs = family_vectors(np.cos(theta), np.exp(1j * phi) * np.sin(theta))
    return _tau_from_vectors(rho, vecs, weight)


@dataclass(frozen=True, eq=False)
class AppendixConstruction:
    """Un-normalized positive witness for a pure state (alpha_i = 1 throughout)."""

    alpha: np.ndarray
    beta: np.ndarray
    support: np.ndarray
    x: complex
    y: complex
    k: int

    def closed_form(self) -> float:
        n = self.alpha.size // 2
        return (1 - prefactor(self.k, n) * (n - self.k)) * abs(self.x) * abs(self.y)


def appendix_construction(state: ExcitationState, k: int) -> AppendixConstruction:
    """Explicit pairs making the witness positive on a pure state of rank >= k.

    Uses the k largest-modulus amplitudes as support, ``beta_j = xi_j`` there
    (so ``x = sum |xi_j|^2 > 0``) and ``beta_{j+n} = beta_j - x / conj(xi_j)``,
    which zeroes every swapped term on the support and gives ``y = (1-k) x``.
    """
    n = state.n
    prefactor(k, n)
    rank = state.coherence_rank
    if rank < k:
        raise RankTooLow(f"state has coherence rank {rank} < k={k}")
    xi = state.amplitudes
    order = np.argsort(-np.abs(xi), kind="stable")
    support = np.sort(order[:k])

    beta = np.zeros(2 * n, dtype=np.complex128)
    beta[support] = xi[support]
    x = np.sum(beta[support] * xi[support].conj())
    beta[support + n] = beta[support] - x / xi[support].conj()
    y = np.sum(beta[support + n] * xi[support].conj())
    return AppendixConstruction(np.ones(2 * n, dtype=np.complex128), beta, support, complex(x), complex(y), k)


def appendix_witness(state: ExcitationState, k: int) -> WitnessParams:
    """Normalized version of :func:`appendix_construction`."""
    con = appendix_construction(state, k)
    params, _ = WitnessParams.from_unnormalized(con.alpha, con.beta)
    return params
