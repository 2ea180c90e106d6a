"""States of a single excitation shared by n units.

Everything here lives in the n-dimensional single-excitation subspace spanned by
the site states ``|Psi_1>, ..., |Psi_n>``; site indices are 0-based in code.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import InvalidRank, InvalidState, NonNormalizedProbabilities

# |xi_i| at or below this counts as an exact zero when computing coherence rank
AMPLITUDE_ZERO = 1e-9

NORM_TOL = 1e-12
HERMITIAN_TOL = 1e-12
TRACE_TOL = 1e-10
PSD_TOL = 1e-10


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, dtype=np.complex128, copy=True)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class ExcitationState:
    """Pure state ``sum_i xi_i |Psi_i>`` with unit norm."""

    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.asarray(self.amplitudes)
        if amps.ndim != 1 or amps.size == 0:
            raise InvalidState(f"amplitudes must be a non-empty vector, got shape {amps.shape}")
        if not np.all(np.isfinite(amps)):
            raise InvalidState("amplitudes contain non-finite values")
        norm2 = float(np.vdot(amps, amps).real)
        if abs(norm2 - 1.0) > NORM_TOL:
            raise InvalidState(f"state is not normalized: sum |xi|^2 = {norm2!r}")
        object.__setattr__(self, "amplitudes", _frozen(amps))

    @classmethod
    def normalized(cls, amplitudes: Iterable[complex]) -> "ExcitationState":
        """Build a state from arbitrary nonzero amplitudes by rescaling them."""
        amps = np.asarray(list(amplitudes) if not isinstance(amplitudes, np.ndarray) else amplitudes,
                          dtype=np.complex128)
        norm = np.linalg.norm(amps)
        if norm == 0:
            raise InvalidState("cannot normalize the zero vector")
        return cls(amps / norm)

    @classmethod
    def localized(cls, n: int, site: int) -> "ExcitationState":
        amps = np.zeros(n, dtype=np.complex128)
        amps[site] = 1.0
        return cls(amps)

    @classmethod
    def w_state(cls, n: int) -> "ExcitationState":
        return cls(np.full(n, 1 / np.sqrt(n), dtype=np.complex128))

    @property
    def n(self) -> int:
        return self.amplitudes.size

    @property
    def coherence_rank(self) -> int:
        return int(np.count_nonzero(np.abs(self.amplitudes) > AMPLITUDE_ZERO))

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(np.abs(self.amplitudes) > AMPLITUDE_ZERO)


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Hermitian, unit-trace, positive semidefinite n x n matrix."""

    matrix: np.ndarray

    def __post_init__(self):
        rho = np.asarray(self.matrix)
        if rho.ndim != 2 or rho.shape[0] != rho.shape[1] or rho.shape[0] == 0:
            raise InvalidState(f"density matrix must be square, got shape {rho.shape}")
        if not np.all(np.isfinite(rho)):
            raise InvalidState("density matrix contains non-finite values")
        herm = np.abs(rho - rho.conj().T).max()
        if herm > HERMITIAN_TOL:
            raise InvalidState(f"density matrix is not Hermitian (deviation {herm:.3e})")
        trace = np.trace(rho).real
        if abs(trace - 1.0) > TRACE_TOL:
            raise InvalidState(f"density matrix trace is {trace!r}, expected 1")
        lowest = np.linalg.eigvalsh(rho)[0]
        if lowest < -PSD_TOL:
            raise InvalidState(f"density matrix is not positive semidefinite (eigenvalue {lowest:.3e})")
        object.__setattr__(self, "matrix", _frozen(rho))

    @classmethod
    def cleaned(cls, matrix: np.ndarray) -> "DensityMatrix":
        """Hermitize and renormalize the trace before validating.

        Meant for numerically produced matrices whose defects are round-off.
        """
        rho = np.asarray(matrix, dtype=np.complex128)
        rho = 0.5 * (rho + rho.conj().T)
        return cls(rho / np.trace(rho).real)

    @classmethod
    def maximally_mixed(cls, n: int) -> "DensityMatrix":
        return cls(np.eye(n, dtype=np.complex128) / n)

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def populations(self) -> np.ndarray:
        return self.matrix.diagonal().real.copy()

    def purity(self) -> float:
        return float(np.vdot(self.matrix, self.matrix).real)

    def largest_eigenpair(self) -> tuple[float, np.ndarray]:
        vals, vecs = np.linalg.eigh(self.matrix)
        return float(vals[-1]), vecs[:, -1]


def pure_density(state: ExcitationState) -> DensityMatrix:
    xi = state.amplitudes
    return DensityMatrix(np.outer(xi, xi.conj()))


def mix(states: Sequence[tuple[float, ExcitationState]]) -> DensityMatrix:
    """Convex combination ``sum_j p_j |chi_j><chi_j|``."""
    if not states:
        raise NonNormalizedProbabilities("empty mixture")
    probs = np.array([p for p, _ in states], dtype=float)
    if np.any(probs < 0):
        raise NonNormalizedProbabilities(f"negative probability in {probs}")
    if abs(probs.sum() - 1.0) > NORM_TOL:
        raise NonNormalizedProbabilities(f"probabilities sum to {probs.sum()!r}")
    n = states[0][1].n
    rho = np.zeros((n, n), dtype=np.complex128)
    for p, chi in states:
        if chi.n != n:
            raise InvalidState("all mixture components must share the same n")
        xi = chi.amplitudes
        rho += p * np.outer(xi, xi.conj())
    return DensityMatrix(0.5 * (rho + rho.conj().T))


def random_k_coherent_pure(n: int, k: int, seed: int | np.random.Generator,
                           min_modulus: float = 0.05) -> ExcitationState:
    """Haar-random pure state supported on a uniformly chosen k-subset of sites.

    Draws are rejected until every supported amplitude has modulus at least
    ``min_modulus``, so the coherence rank is exactly k.
    """
    if not 1 <= k <= n:
        raise InvalidRank(f"need 1 <= k <= n, got k={k}, n={n}")
    if k * min_modulus**2 >= 1:
        raise InvalidRank(f"k={k} amplitudes cannot all reach modulus {min_modulus}")
    rng = np.random.default_rng(seed)
    support = np.sort(rng.choice(n, size=k, replace=False))
    while True:
        z = rng.normal(size=k) + 1j * rng.normal(size=k)
        z /= np.linalg.norm(z)
        if np.abs(z).min() >= min_modulus:
            break
    amps = np.zeros(n, dtype=np.complex128)
    amps[support] = z
    return ExcitationState(amps)


def random_density(n: int, seed: int | np.random.Generator, rank: int | None = None) -> DensityMatrix:
    """Random mixed state ``G G^dagger / tr`` with Ginibre G of the given rank."""
    rng = np.random.default_rng(seed)
    rank = n if rank is None else rank
    g = rng.normal(size=(n, rank)) + 1j * rng.normal(size=(n, rank))
    return DensityMatrix.cleaned(g @ g.conj().T)


def ipr(rho: DensityMatrix) -> float:
    """Inverse participation ratio ``1 / sum_i q_i^2`` of the site populations."""
    q = rho.matrix.diagonal().real
    return float(1.0 / np.dot(q, q))
