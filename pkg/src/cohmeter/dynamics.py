"""Master-equation dynamics of one excitation shared by n units.

The generator is ``-i[H, rho] + D(rho)`` restricted to the single-excitation
subspace, where H couples sites through ``lambda_ij`` and D is a sum over
unordered site pairs of four Lindblad channels with common rate ``gamma_ij``:
hopping i<-j, hopping j<-i, and two dephasing operators. Superoperators act on
row-major vectorized matrices, ``vec(A rho B) = (A kron B^T) vec(rho)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import AsymmetricCoupling, DimensionMismatch, InvalidState, NegativeRate, StepTooLarge
from .hilbert import DensityMatrix, ipr

SQRT2 = np.sqrt(2.0)
# |z| bound inside the classical RK4 stability region along both axes
RK4_STABILITY = 2.5
TRACE_DRIFT_TOL = 1e-8


def _check_square(mat: np.ndarray, name: str) -> np.ndarray:
    mat = np.asarray(mat, dtype=float)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise DimensionMismatch(f"{name} must be square, got shape {mat.shape}")
    return mat


def uniform_matrix(n: int, value: float) -> np.ndarray:
    """All-to-all coupling with zero diagonal."""
    return value * (np.ones((n, n)) - np.eye(n))


def ring_matrix(n: int, value: float) -> np.ndarray:
    mat = np.zeros((n, n))
    for i in range(n):
        mat[i, (i + 1) % n] = mat[(i + 1) % n, i] = value
    return mat


def hamiltonian_subspace(coupling: np.ndarray) -> np.ndarray:
    """Hopping Hamiltonian with ``H_ij = lambda_ij`` off the diagonal."""
    lam = _check_square(coupling, "coupling")
    if np.abs(lam - lam.T).max() > 1e-12:
        raise AsymmetricCoupling("coupling matrix must be symmetric")
    if np.abs(np.diag(lam)).max(initial=0.0) > 0:
        raise AsymmetricCoupling("coupling matrix must have zero diagonal")
    return lam.astype(np.complex128)


def lindblad_operators(n: int, i: int, j: int) -> list[np.ndarray]:
    """Subspace restrictions of the four Lindblad operators of site pair (i, j).

    In order: ``E_ij`` (excitation hops j -> i), ``E_ji``,
    ``-(1/sqrt 2) sum_{m not in {i,j}} E_mm`` and
    ``(1/(2 sqrt 2)) (-E_ii - E_jj + sum_{m not in {i,j}} E_mm)``.
    """
    hop_in = np.zeros((n, n), dtype=np.complex128)
    hop_in[i, j] = 1.0
    others = np.ones(n)
    others[[i, j]] = 0.0
    g3 = np.diag(-others / SQRT2).astype(np.complex128)
    signs = others.copy()
    signs[[i, j]] = -1.0
    g4 = np.diag(signs / (2 * SQRT2)).astype(np.complex128)
    return [hop_in, hop_in.T.copy(), g3, g4]


def lindblad_superoperator(ops: Sequence[np.ndarray], rates: Sequence[float]) -> np.ndarray:
    """``sum_k rate_k (G rho G^+ - 1/2 {G^+ G, rho})`` as an n^2 x n^2 matrix."""
    n = ops[0].shape[0]
    eye = np.eye(n)
    sup = np.zeros((n * n, n * n), dtype=np.complex128)
    for g, rate in zip(ops, rates):
        if rate == 0:
            continue
        gdg = g.conj().T @ g
        sup += rate * (np.kron(g, g.conj()) - 0.5 * np.kron(gdg, eye) - 0.5 * np.kron(eye, gdg.T))
    return sup


def hamiltonian_superoperator(h: np.ndarray) -> np.ndarray:
    eye = np.eye(h.shape[0])
    return -1j * (np.kron(h, eye) - np.kron(eye, h.T))


def dissipator_subspace(gamma: np.ndarray, terms: Sequence[int] = (1, 2, 3, 4)) -> np.ndarray:
    """Dissipator summed over unordered pairs ``i > j`` with rate ``gamma_ij``.

    ``terms`` selects which of the four Lindblad operators (1-based) are kept;
    identity-proportional restrictions are kept as they are.
    """
    rates = _check_square(gamma, "gamma")
    if np.any(rates < 0):
        raise NegativeRate("rates must be nonnegative")
    if np.abs(rates - rates.T).max() > 1e-12:
        raise InvalidState("rate matrix must be symmetric")
    n = rates.shape[0]
    sup = np.zeros((n * n, n * n), dtype=np.complex128)
    for i in range(n):
        for j in range(i):
            if rates[i, j] == 0:
                continue
            ops = [g for t, g in enumerate(lindblad_operators(n, i, j), start=1) if t in terms]
            sup += lindblad_superoperator(ops, [rates[i, j]] * len(ops))
    return sup


def apply_superoperator(sup: np.ndarray, rho: np.ndarray) -> np.ndarray:
    n = rho.shape[0]
    return (sup @ rho.reshape(-1)).reshape(n, n)


@dataclass(frozen=True, eq=False)
class DynamicsSpec:
    coupling: np.ndarray
    gamma: np.ndarray
    t_max: float
    dt: float
    initial: DensityMatrix
    dissipator_terms: tuple[int, ...] = (1, 2, 3, 4)

    def __post_init__(self):
        lam = _check_square(self.coupling, "coupling")
        gam = _check_square(self.gamma, "gamma")
        n = self.initial.n
        if lam.shape != (n, n) or gam.shape != (n, n):
            raise DimensionMismatch(f"coupling {lam.shape} and gamma {gam.shape} must be {n}x{n}")
        if np.abs(lam - lam.T).max() > 1e-12:
            raise AsymmetricCoupling("coupling matrix must be symmetric")
        if np.any(gam < 0):
            raise NegativeRate("rates must be nonnegative")
        if not self.dt > 0:
            raise InvalidState(f"dt must be positive, got {self.dt}")
        if not self.t_max >= 0:
            raise InvalidState(f"t_max must be nonnegative, got {self.t_max}")
        object.__setattr__(self, "coupling", lam)
        object.__setattr__(self, "gamma", gam)

    @property
    def n(self) -> int:
        return self.initial.n

    @staticmethod
    def default_dt(coupling: np.ndarray, gamma: np.ndarray) -> float:
        scale = max(np.abs(gamma).max(initial=0.0), np.abs(coupling).max(initial=0.0))
        return 1e-3 / scale if scale > 0 else 1e-3

    def generator(self) -> np.ndarray:
        return (hamiltonian_superoperator(hamiltonian_subspace(self.coupling))
                + dissipator_subspace(self.gamma, self.dissipator_terms))


@dataclass(eq=False)
class TimeSeries:
    times: np.ndarray
    states: list[DensityMatrix]
    observables: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        if len(self.states) != self.times.size:
            raise DimensionMismatch("one state per time point is required")
        if np.any(np.diff(self.times) <= 0):
            raise InvalidState("times must be strictly increasing")

    @property
    def n(self) -> int:
        return self.states[0].n

    def __len__(self) -> int:
        return self.times.size

    def subsample(self, stride: int) -> "TimeSeries":
        """Every ``stride``-th point, always keeping the last one."""
        keep = list(range(0, len(self), stride))
        if keep[-1] != len(self) - 1:
            keep.append(len(self) - 1)
        return TimeSeries(self.times[keep], [self.states[i] for i in keep],
                          {key: col[keep] for key, col in self.observables.items()})


def _rk4_step(gen: np.ndarray, v: np.ndarray, dt: float) -> np.ndarray:
    k1 = gen @ v
    k2 = gen @ (v + 0.5 * dt * k1)
    k3 = gen @ (v + 0.5 * dt * k2)
    k4 = gen @ (v + dt * k3)
    return v + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


def evolve(spec: DynamicsSpec) -> TimeSeries:
    """Fixed-step RK4 integration, storing every step.

    Each stored state is re-Hermitized and trace-renormalized. Populations
    ``q_i`` and the IPR are recorded for every step.
    """
    n = spec.n
    gen = spec.generator()
    radius = np.abs(np.linalg.eigvals(gen)).max()
    if radius * spec.dt > RK4_STABILITY:
        raise StepTooLarge(f"dt={spec.dt} exceeds the RK4 stability limit {RK4_STABILITY / radius:.3e}")
    steps = int(round(spec.t_max / spec.dt))
    times = spec.dt * np.arange(steps + 1)
    states = [spec.initial]
    v = spec.initial.matrix.reshape(-1).copy()
    diag = np.arange(n) * (n + 1)
    for _ in range(steps):
        nxt = _rk4_step(gen, v, spec.dt)
        drift = abs(nxt[diag].sum().real - v[diag].sum().real)
        if drift > TRACE_DRIFT_TOL:
            raise StepTooLarge(f"trace drift {drift:.3e} per step exceeds {TRACE_DRIFT_TOL}")
        rho = DensityMatrix.cleaned(nxt.reshape(n, n))
        states.append(rho)
        v = rho.matrix.reshape(-1).copy()
    pops = np.array([s.populations for s in states])
    obs = {f"q_{i + 1}": pops[:, i] for i in range(n)}
    obs["IPR"] = np.array([ipr(s) for s in states])
    return TimeSeries(times, states, obs)


def observable_series(ts: TimeSeries, ks: Sequence[int], cfg=None, stride: int = 10,
                      progress=None) -> TimeSeries:
    """Add ``T_k`` and ``T_k_normalized = T_k / w_k`` columns on every ``stride``-th step.

    ``w_k`` is the measure of the W state computed with the same optimizer
    settings. Measures are first taken forward in time, each point seeded with
    the optimum of the previous one; a backward sweep then re-polishes each
    point from the optimum of its successor and of order k + 1. Both sweeps
    only ever raise an estimate, so the columns stay valid lower bounds.
    """
    from .optimizer import OptimizerConfig, improve, measure_profile, w_normalization

    cfg = cfg or OptimizerConfig()
    ks = sorted(ks)
    sub = ts.subsample(stride)
    w = w_normalization(sub.n, ks, cfg)
    rows: list[dict] = []
    prev: dict = {}
    for i, rho in enumerate(sub.states):
        seeds = {k: [prev[k].best_params] for k in prev}
        res = dict(zip(ks, measure_profile(rho, ks, cfg, seeds)))
        rows.append(res)
        prev = res
        if progress:
            progress(i, len(sub))
    for i in range(len(rows) - 2, -1, -1):
        for k in sorted(ks, reverse=True):
            seeds = [rows[i + 1][k].best_params]
            if k + 1 in rows[i]:
                seeds.append(rows[i][k + 1].best_params)
            rows[i][k] = improve(sub.states[i], rows[i][k], seeds, cfg)
    obs = dict(sub.observables)
    for k in ks:
        values = np.array([r[k].value for r in rows])
        obs[f"T_{k}"] = values
        obs[f"T_{k}_normalized"] = values / w[k] if w[k] > 0 else np.zeros_like(values)
    out = TimeSeries(sub.times, sub.states, obs)
    out.w = w
    out.results = rows
    return out
