"""Kraus channels on the single-excitation subspace and their incoherence tests.

Spin convention on each unit: ``|1>`` is excited, ``sigma_z|1> = +|1>``,
``sigma_z|0> = -|0>`` and ``sigma_+|0> = |1>``. In the full 2^n space unit 0
is the most significant tensor factor and the basis index of a bit string
``b_0 b_1 ... b_{n-1}`` is its binary value.

An operator is incoherent when it is a product of single-unit factors of the
form ``b 1 + d sigma_z`` (dephasing type), ``sigma_+`` or ``sigma_-``. On the
single-excitation subspace such operators become diagonal matrices, scaled
matrix units ``E_jl`` or zero.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from .errors import (DimensionMismatch, DimensionTooLarge, ExplosionGuard, IndexOutOfRange,
                     InvalidGamma, NotTracePreserving, SameSite)
from .hilbert import DensityMatrix

ZERO_TOL = 1e-12
TRACE_PRESERVING_TOL = 1e-10
BLOCK_TOL = 1e-10
FULL_SPACE_MAX_N = 8
DEFAULT_OPERATOR_CAP = 100_000

SIGMA_0 = np.eye(2, dtype=np.complex128)
SIGMA_Z = np.diag([-1.0, 1.0]).astype(np.complex128)  # basis order |0>, |1>
SIGMA_PLUS = np.array([[0, 0], [1, 0]], dtype=np.complex128)
SIGMA_MINUS = SIGMA_PLUS.T.copy()
P0 = np.diag([1.0, 0.0]).astype(np.complex128)
P1 = np.diag([0.0, 1.0]).astype(np.complex128)


class Kind(str, Enum):
    DEPHASING = "Dephasing"
    HOPPING = "Hopping"
    COHERENT = "Coherent"
    ANNIHILATING = "Annihilating"

    @property
    def incoherent(self) -> bool:
        return self is not Kind.COHERENT


@dataclass(frozen=True)
class Classification:
    kind: Kind
    sites: tuple[int, int] | None = None  # (j, l) of a hopping E_jl, 0-based

    @property
    def incoherent(self) -> bool:
        return self.kind.incoherent

    def __str__(self) -> str:
        if self.kind is Kind.HOPPING:
            return f"Hopping({self.sites[0] + 1},{self.sites[1] + 1})"
        return self.kind.value


def classify_subspace(matrix: np.ndarray) -> Classification:
    """Dephasing if diagonal, Hopping if a single off-diagonal entry, Annihilating if zero.

    The zero matrix is also diagonal; it is reported as Annihilating.
    """
    mat = np.asarray(matrix)
    mag = np.abs(mat)
    big = mag > ZERO_TOL
    if not big.any():
        return Classification(Kind.ANNIHILATING)
    off = big & ~np.eye(mat.shape[0], dtype=bool)
    if not off.any():
        return Classification(Kind.DEPHASING)
    if big.sum() == 1:
        j, l = np.argwhere(big)[0]
        return Classification(Kind.HOPPING, (int(j), int(l)))
    return Classification(Kind.COHERENT)


@dataclass(frozen=True, eq=False)
class SubspaceKraus:
    """Kraus operator restricted to the single-excitation subspace.

    ``classification`` defaults to :func:`classify_subspace`. Operators built
    from known full-space factors may carry the tag of their full-space form
    instead, e.g. ``P0 x P0`` is a product of dephasing factors even though it
    vanishes on the subspace.
    """

    matrix: np.ndarray
    classification: Classification | None = None

    def __post_init__(self):
        mat = np.array(self.matrix, dtype=np.complex128)
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
            raise DimensionMismatch(f"Kraus operator must be square, got {mat.shape}")
        mat.setflags(write=False)
        object.__setattr__(self, "matrix", mat)
        if self.classification is None:
            object.__setattr__(self, "classification", classify_subspace(mat))

    @property
    def n(self) -> int:
        return self.matrix.shape[0]


def _trace_defect(ops: Sequence[np.ndarray]) -> float:
    n = ops[0].shape[0]
    total = sum(op.conj().T @ op for op in ops)
    return float(np.abs(total - np.eye(n)).max())


@dataclass(frozen=True, eq=False)
class KrausChannel:
    operators: tuple[SubspaceKraus, ...]
    tolerance: float = TRACE_PRESERVING_TOL
    # <00|F|00> of each operator for two-site channels built from full-space operators
    vacuum: tuple[complex, ...] | None = None

    def __post_init__(self):
        ops = tuple(op if isinstance(op, SubspaceKraus) else SubspaceKraus(op) for op in self.operators)
        if not ops:
            raise NotTracePreserving("a channel needs at least one Kraus operator")
        if len({op.n for op in ops}) != 1:
            raise DimensionMismatch("Kraus operators have different dimensions")
        defect = _trace_defect([op.matrix for op in ops])
        if defect > self.tolerance:
            raise NotTracePreserving(f"sum F^+F deviates from identity by {defect:.3e}")
        object.__setattr__(self, "operators", ops)

    @property
    def n(self) -> int:
        return self.operators[0].n

    @property
    def matrices(self) -> list[np.ndarray]:
        return [op.matrix for op in self.operators]

    @property
    def incoherent(self) -> bool:
        return all(op.classification.incoherent for op in self.operators)

    def superoperator(self) -> np.ndarray:
        """Row-major vectorized action ``sum_i F_i kron conj(F_i)``."""
        return sum(np.kron(f, f.conj()) for f in self.matrices)


def apply(channel: KrausChannel, rho: DensityMatrix) -> DensityMatrix:
    """``sum_i F_i rho F_i^+``."""
    if channel.n != rho.n:
        raise DimensionMismatch(f"channel acts on n={channel.n}, state has n={rho.n}")
    out = sum(f @ rho.matrix @ f.conj().T for f in channel.matrices)
    return DensityMatrix.cleaned(out)


def _check_site(n: int, site: int, name: str):
    if not 0 <= site < n:
        raise IndexOutOfRange(f"{name}={site + 1} outside 1..{n}")


def elementary_dephasing(n: int, ell: int, u1: complex, u2: complex) -> SubspaceKraus:
    """``u1 E_ll + u2 sum_{j != l} E_jj``; ``ell`` is 1-based."""
    _check_site(n, ell - 1, "ell")
    diag = np.full(n, u2, dtype=np.complex128)
    diag[ell - 1] = u1
    return SubspaceKraus(np.diag(diag), Classification(Kind.DEPHASING))


def elementary_hopping(n: int, j: int, ell: int) -> SubspaceKraus:
    """Matrix unit ``E_jl`` moving the excitation from site l to site j (1-based)."""
    _check_site(n, j - 1, "j")
    _check_site(n, ell - 1, "ell")
    if j == ell:
        raise SameSite(f"hopping needs two different sites, got j = l = {j}")
    mat = np.zeros((n, n), dtype=np.complex128)
    mat[j - 1, ell - 1] = 1.0
    return SubspaceKraus(mat)


# --- full space ---------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class FullSpaceOperator:
    n: int
    matrix: np.ndarray

    def __post_init__(self):
        if self.n > FULL_SPACE_MAX_N:
            raise DimensionTooLarge(f"full-space operators are limited to n <= {FULL_SPACE_MAX_N}")
        mat = np.array(self.matrix, dtype=np.complex128)
        if mat.shape != (2 ** self.n, 2 ** self.n):
            raise DimensionMismatch(f"expected shape {(2 ** self.n,) * 2}, got {mat.shape}")
        object.__setattr__(self, "matrix", mat)

    @classmethod
    def product(cls, factors: Sequence[np.ndarray]) -> "FullSpaceOperator":
        mat = np.ones((1, 1), dtype=np.complex128)
        for f in factors:
            mat = np.kron(mat, f)
        return cls(len(factors), mat)


def single_excitation_basis(n: int) -> np.ndarray:
    """Full-space indices of the states with only unit i excited, i = 0..n-1."""
    return np.array([1 << (n - 1 - i) for i in range(n)])


def restrict(op: FullSpaceOperator) -> np.ndarray:
    idx = single_excitation_basis(op.n)
    return op.matrix[np.ix_(idx, idx)]


def excitation_number(n: int) -> np.ndarray:
    return np.diag([bin(b).count("1") for b in range(2 ** n)]).astype(float)


def _factor_type(f: np.ndarray) -> str:
    if abs(f[0, 1]) <= ZERO_TOL and abs(f[1, 0]) <= ZERO_TOL:
        return "sigma_0"
    return "sigma_+" if abs(f[1, 0]) > ZERO_TOL else "sigma_-"


@dataclass(frozen=True)
class FullDecomposition:
    is_excitation_conserving: bool
    is_local_product: bool
    factors: list | None
    factor_types: list | None
    schmidt_rank: int
    block_rank: int


def _is_zero(block: np.ndarray) -> bool:
    return np.abs(block).max(initial=0.0) <= BLOCK_TOL


def _proportional(a: np.ndarray, b: np.ndarray):
    """Return (ca, cb, base) with ``a = ca base`` and ``b = cb base``, or None."""
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na <= ZERO_TOL and nb <= ZERO_TOL:
        return None
    base = a if na >= nb else b
    flat = base.reshape(-1)
    pivot = np.argmax(np.abs(flat))
    ca = a.reshape(-1)[pivot] / flat[pivot]
    cb = b.reshape(-1)[pivot] / flat[pivot]
    scale = max(na, nb)
    if np.abs(a - ca * base).max() > BLOCK_TOL * scale or np.abs(b - cb * base).max() > BLOCK_TOL * scale:
        return None
    return ca, cb, base


def _peel(mat: np.ndarray):
    """Split off the first unit as a 2x2 factor, or return None if not a local product."""
    half = mat.shape[0] // 2
    b00, b01 = mat[:half, :half], mat[:half, half:]
    b10, b11 = mat[half:, :half], mat[half:, half:]
    if _is_zero(b01) and _is_zero(b10):
        split = _proportional(b00, b11)
        if split is None:
            return None
        c0, c1, rest = split
        return np.array([[c0, 0], [0, c1]]), rest
    if _is_zero(b00) and _is_zero(b11):
        if _is_zero(b01) == _is_zero(b10):
            return None
        if _is_zero(b01):
            return np.array([[0, 0], [1, 0]], dtype=np.complex128), b10
        return np.array([[0, 1], [0, 0]], dtype=np.complex128), b01
    return None


def _block_rank(mat: np.ndarray) -> int:
    """Operator Schmidt rank of the first unit's diagonal-block (sigma_0) sector.

    That sector reads ``P0 x B00 + P1 x B11``; its rank is the number of
    linearly independent blocks among B00 and B11.
    """
    half = mat.shape[0] // 2
    blocks = np.stack([mat[:half, :half].reshape(-1), mat[half:, half:].reshape(-1)])
    return int(np.linalg.matrix_rank(blocks, tol=BLOCK_TOL * max(1.0, np.abs(blocks).max())))


def _schmidt_rank(mat: np.ndarray) -> int:
    """Operator Schmidt rank across the cut between unit 0 and the rest."""
    half = mat.shape[0] // 2
    realigned = mat.reshape(2, half, 2, half).transpose(0, 2, 1, 3).reshape(4, half * half)
    sv = np.linalg.svd(realigned, compute_uv=False)
    return int(np.count_nonzero(sv > BLOCK_TOL * max(1.0, sv[0])))


def decompose_full(op: FullSpaceOperator) -> FullDecomposition:
    """Test excitation conservation and locality of a full-space operator.

    Locality is checked unit by unit: the blocks over unit 0's basis must
    either be block diagonal with proportional diagonal blocks (a dephasing
    factor) or have exactly one nonzero off-diagonal block (sigma_+ or
    sigma_-); the surviving block is then examined the same way.
    """
    if op.n > FULL_SPACE_MAX_N:
        raise DimensionTooLarge(f"full-space operators are limited to n <= {FULL_SPACE_MAX_N}")
    mat = op.matrix
    num = excitation_number(op.n)
    conserving = bool(np.abs(mat @ num - num @ mat).max() <= BLOCK_TOL)
    schmidt = _schmidt_rank(mat) if op.n > 1 else 1
    block = _block_rank(mat) if op.n > 1 else 1

    factors = []
    rest = mat
    local = True
    for _ in range(op.n - 1):
        peeled = _peel(rest)
        if peeled is None:
            local = False
            break
        f, rest = peeled
        factors.append(f)
    if local:
        factors.append(rest)
        types = [_factor_type(f) for f in factors]
        return FullDecomposition(conserving, True, factors, types, schmidt, block)
    return FullDecomposition(conserving, False, None, None, schmidt, block)


def propagator_two_site(lambda_t: float) -> FullSpaceOperator:
    """``cos(lt) P_s + i sin(lt) (s+ x s- + s- x s+)`` plus identity outside the subspace.

    ``P_s`` projects on the single-excitation subspace; the zero- and
    two-excitation states are left unchanged.
    """
    c, s = np.cos(lambda_t), np.sin(lambda_t)
    swap = np.kron(SIGMA_PLUS, SIGMA_MINUS) + np.kron(SIGMA_MINUS, SIGMA_PLUS)
    p_s = np.kron(P1, P0) + np.kron(P0, P1)
    outside = np.kron(P0, P0) + np.kron(P1, P1)
    return FullSpaceOperator(2, c * p_s + 1j * s * swap + outside)


# --- the two-site channel and compositions --------------------------------------

def _tag_from_full(op: FullSpaceOperator) -> Classification:
    """Classification of a local full-space product by its factor types."""
    dec = decompose_full(op)
    if not dec.is_local_product:
        return Classification(Kind.COHERENT)
    raising = [i for i, t in enumerate(dec.factor_types) if t == "sigma_+"]
    lowering = [i for i, t in enumerate(dec.factor_types) if t == "sigma_-"]
    if not raising and not lowering:
        return Classification(Kind.DEPHASING)
    if len(raising) == 1 and len(lowering) == 1:
        return Classification(Kind.HOPPING, (raising[0], lowering[0]))
    return Classification(Kind.ANNIHILATING)


def _two_site_terms(gamma_t: float) -> list[tuple[float, list[np.ndarray]]]:
    """Coefficient and single-unit factors of the seven two-unit Kraus operators."""
    if not 0 < gamma_t <= 1:
        raise InvalidGamma(f"Gamma_t must lie in (0, 1], got {gamma_t}")
    g = gamma_t
    hop = np.sqrt((1 - g * g) / 2)
    both = np.sqrt(1 - g)
    one = (1 - g) / np.sqrt(2)
    return [
        (hop, [SIGMA_PLUS, SIGMA_MINUS]),
        (hop, [SIGMA_MINUS, SIGMA_PLUS]),
        (both, [P1, P1]),
        (both, [P0, P0]),
        (one, [P1, P0]),
        (one, [P0, P1]),
        (np.sqrt(g), [SIGMA_0, SIGMA_0]),
    ]


def kraus_two_site_full(gamma_t: float) -> list[FullSpaceOperator]:
    """The seven two-unit Kraus operators in the 4-dimensional full space."""
    out = []
    for coef, factors in _two_site_terms(gamma_t):
        out.append(FullSpaceOperator(2, coef * FullSpaceOperator.product(factors).matrix))
    return out


def kraus_two_site(gamma_t: float) -> KrausChannel:
    """Exact two-site incoherent channel at ``Gamma_t = exp(-gamma t)`` on the subspace.

    Operators are tagged from their full-space factors, so the two that vanish
    on the subspace (``P1 x P1`` and ``P0 x P0``), and any operator whose
    coefficient is zero, still report the type of their factors.
    """
    ops, vacuum = [], []
    for coef, factors in _two_site_terms(gamma_t):
        unit = FullSpaceOperator.product(factors)
        ops.append(SubspaceKraus(coef * restrict(unit), _tag_from_full(unit)))
        vacuum.append(complex(coef * unit.matrix[0, 0]))
    return KrausChannel(tuple(ops), vacuum=tuple(vacuum))


def embed(channel: KrausChannel, n: int, i: int, j: int) -> KrausChannel:
    """Extend a two-site channel on sites (i, j) (0-based) to n sites.

    Sites outside the pair are idle units in their ground state, so on the
    subspace the embedded operator keeps the 2x2 block on (i, j) and acts on
    every other site with the operator's ``P0 x P0`` amplitude, i.e. the
    entry it assigns to the two-unit vacuum.
    """
    if channel.n != 2:
        raise DimensionMismatch("only two-site channels can be embedded")
    _check_site(n, i, "i")
    _check_site(n, j, "j")
    if i == j:
        raise SameSite("a pair channel needs two different sites")
    if channel.vacuum is None:
        raise DimensionMismatch("channel does not record its vacuum amplitudes")
    vacua = channel.vacuum
    others = [m for m in range(n) if m not in (i, j)]
    ops = []
    for op, vac in zip(channel.operators, vacua):
        mat = np.zeros((n, n), dtype=np.complex128)
        mat[np.ix_([i, j], [i, j])] = op.matrix
        mat[others, others] = vac
        ops.append(SubspaceKraus(mat, op.classification if op.classification.kind is not Kind.ANNIHILATING
                                 else None))
    return KrausChannel(tuple(ops))


def _compress(ops: list[np.ndarray]) -> list[np.ndarray]:
    """Smaller Kraus set with the same action for diagonal and single-entry operators.

    Hopping operators sharing the same entry (j, l) add up in quadrature. The
    diagonal operators ``diag(d_i)`` act as the Schur multiplier
    ``M = sum_i d_i d_i^+``; an eigendecomposition of M yields at most n
    diagonal operators. Anything else is kept as it is.
    """
    n = ops[0].shape[0]
    hops: dict[tuple[int, int], float] = {}
    multiplier = np.zeros((n, n), dtype=np.complex128)
    rest = []
    for f in ops:
        kind = classify_subspace(f)
        if kind.kind is Kind.DEPHASING:
            d = f.diagonal()
            multiplier += np.outer(d, d.conj())
        elif kind.kind is Kind.HOPPING:
            hops[kind.sites] = hops.get(kind.sites, 0.0) + abs(f[kind.sites]) ** 2
        elif kind.kind is Kind.COHERENT:
            rest.append(f)
    out = []
    vals, vecs = np.linalg.eigh(multiplier)
    for val, vec in zip(vals, vecs.T):
        if val > ZERO_TOL ** 2:
            out.append(np.diag(np.sqrt(val) * vec))
    for (j, l), weight in sorted(hops.items()):
        mat = np.zeros((n, n), dtype=np.complex128)
        mat[j, l] = np.sqrt(weight)
        out.append(mat)
    return out + rest


def trotter_compose(pair_channels: Sequence[tuple[int, int, KrausChannel]], m: int, n: int | None = None,
                    cap: int = DEFAULT_OPERATOR_CAP, compress: bool = True) -> KrausChannel:
    """``(prod_pairs C_ij)^m`` with each pair channel already built for time t/m.

    Pair channels are applied in list order within each repetition. After
    every product the Kraus set is compressed (see :func:`_compress`) and
    operators with norm at most 1e-12 are dropped.
    """
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    if not pair_channels:
        raise ValueError("at least one pair channel is required")
    n = n or 1 + max(max(i, j) for i, j, _ in pair_channels)
    embedded = [embed(ch, n, i, j).matrices if ch.n == 2 else ch.matrices for i, j, ch in pair_channels]
    current = [np.eye(n, dtype=np.complex128)]
    for _ in range(m):
        for ops in embedded:
            if len(current) * len(ops) > cap:
                raise ExplosionGuard(f"{len(current) * len(ops)} Kraus operators exceed the cap {cap}")
            current = [g @ f for g in ops for f in current]
            current = [f for f in current if np.linalg.norm(f) > ZERO_TOL]
            if compress:
                current = _compress(current)
    return KrausChannel(tuple(SubspaceKraus(f) for f in current), tolerance=m * TRACE_PRESERVING_TOL)


def all_pairs_trotter(n: int, gamma: np.ndarray, t: float, m: int, **kwargs) -> KrausChannel:
    """Trotterized incoherent evolution over all pairs ``i > j`` with rates ``gamma_ij``."""
    pairs = [(i, j, kraus_two_site(float(np.exp(-gamma[i, j] * t / m))))
             for i in range(n) for j in range(i) if gamma[i, j] > 0]
    return trotter_compose(pairs, m, n, **kwargs)


def random_incoherent_channel(n: int, seed, max_dephasing: int = 3, max_hopping: int = 4) -> KrausChannel:
    """Random mixture of dephasing ``A_l`` and hopping ``c E_jl`` branches.

    The raw set ``{F_i}`` has a diagonal ``S = sum F_i^+ F_i``; replacing every
    ``F_i`` by ``F_i S^{-1/2}`` makes it trace preserving while keeping each
    operator diagonal or a single scaled matrix unit.
    """
    rng = np.random.default_rng(seed)
    ops = []
    for _ in range(int(rng.integers(1, max_dephasing + 1))):
        u1, u2 = rng.normal(size=2) + 1j * rng.normal(size=2)
        ops.append(elementary_dephasing(n, int(rng.integers(1, n + 1)), u1, u2).matrix)
    if n > 1:
        for _ in range(int(rng.integers(0, max_hopping + 1))):
            j, l = rng.choice(n, size=2, replace=False)
            c = rng.normal() + 1j * rng.normal()
            ops.append(c * elementary_hopping(n, int(j) + 1, int(l) + 1).matrix)
    s = sum(np.abs(f) ** 2 for f in ops).sum(axis=0)  # diagonal of sum F^+F
    scale = 1 / np.sqrt(s)
    return KrausChannel(tuple(SubspaceKraus(f * scale[None, :]) for f in ops))
