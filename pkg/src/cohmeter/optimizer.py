"""Multi-start maximization of the witness: the measure ``T_kn(rho) = max tau``.

Each start is a point in the 4n angles ``(theta_i, phi_i)`` with
``alpha_i = cos theta_i`` and ``beta_i = exp(i phi_i) sin theta_i``. Starts come
from five sources: uniform random points, the explicit pure-state
construction (for near-pure states), structured starts built from the leading
eigenvectors of rho, the optimum for the leading eigenvector continued to
rho along a straight mixing path, and caller-supplied seeds (e.g. the optimum at a
neighbouring time step). The all-zero-beta point, where tau vanishes exactly,
is always a candidate, so the result is never negative.
"""
from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import minimize, minimize_scalar

from ._kernels import tau_grad_kernel
from .errors import InvalidRank, InvalidState
from .hilbert import DensityMatrix, ExcitationState
from .witness import (WitnessParams, _family_index, appendix_witness, evaluate_tau,
                      prefactor, tau_from_pairs)

AGREEMENT_TOL = 1e-6
CLAMP_TOL = 1e-10
NEAR_PURE = 1 - 1e-6
# rho is treated as rank deficient below this smallest eigenvalue
SINGULAR_EIGENVALUE = 1e-9
# mixing weights of the identity used to smooth kinks before polishing on rho itself
WARMUP_SCHEDULE = (1e-4, 1e-6, 1e-8)
STRUCTURED_RATIOS = (-2.0, -1.0, -0.5, -0.25)
HOMOTOPY_STEPS = 8
SCALE_GRID = np.linspace(-6.0, 4.0, 41)


@dataclass(frozen=True)
class OptimizerConfig:
    restarts: int = 32
    max_iterations: int = 2000
    convergence_tol: float = 1e-10
    seed: int = 0
    include_appendix_starts: bool = True
    structured_starts: bool = True
    method: str = "lbfgs"
    threads: int = 1

    def __post_init__(self):
        if self.restarts < 1:
            raise InvalidState(f"restarts must be >= 1, got {self.restarts}")
        if not self.convergence_tol > 0:
            raise InvalidState(f"convergence_tol must be positive, got {self.convergence_tol}")
        if self.method not in ("lbfgs", "nelder-mead"):
            raise InvalidState(f"unknown local method {self.method!r}")

    @classmethod
    def from_env(cls, **kwargs) -> "OptimizerConfig":
        """Config whose ``threads`` honours ``COHMETER_THREADS`` (0 means all cores)."""
        threads = int(os.environ.get("COHMETER_THREADS", "1") or 1)
        if threads == 0:
            threads = os.cpu_count() or 1
        kwargs.setdefault("threads", threads)
        return cls(**kwargs)


@dataclass(frozen=True, eq=False)
class MeasureResult:
    value: float
    best_params: WitnessParams
    restarts_agreeing: int
    k: int
    n: int
    starts: int = 0

    def to_dict(self) -> dict:
        from .formats import params_to_json
        return {"k": self.k, "n": self.n, "value": self.value,
                "restarts_agreeing": self.restarts_agreeing,
                "best_params": params_to_json(self.best_params)}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def _random_start(rng: np.random.Generator, n: int) -> np.ndarray:
    return np.concatenate([rng.uniform(0, np.pi / 2, 2 * n), rng.uniform(0, 2 * np.pi, 2 * n)])


def _scaled_pairs_start(rho: np.ndarray, k: int, beta: np.ndarray) -> np.ndarray:
    """Angles of ``(1, t * beta)`` with the scale t maximizing tau after normalization."""
    n = rho.shape[0]
    ones = np.ones(2 * n)
    mod2 = np.abs(beta) ** 2

    def neg_tau(log_t):
        t = np.exp(log_t)
        return -tau_from_pairs(rho, ones, t * beta, k) / np.prod(np.sqrt(1 + t * t * mod2))

    grid = np.array([neg_tau(lt) for lt in SCALE_GRID])
    i = int(np.argmin(grid))
    step = SCALE_GRID[1] - SCALE_GRID[0]
    res = minimize_scalar(neg_tau, bounds=(SCALE_GRID[i] - step, SCALE_GRID[i] + step),
                          method="bounded", options={"xatol": 1e-8})
    log_t = res.x if res.fun <= grid[i] else SCALE_GRID[i]
    params, _ = WitnessParams.from_unnormalized(ones, np.exp(log_t) * beta)
    return params.to_angles()


def structured_starts(rho: np.ndarray, k: int, max_vectors: int = 3) -> list[np.ndarray]:
    """Starts shaped like the positive pure-state witness.

    For each dominant eigenvector xi of rho and each support S of its s >= k
    largest amplitudes, set ``beta_j = xi_j`` and
    ``beta_{j+n} = beta_j + c x / conj(xi_j)`` on S with ``x = sum_S |xi_j|^2``.
    ``c = -1`` zeroes every swapped overlap on S; ``c = -1/(s-1)`` zeroes the
    partner overlaps instead. The overall scale of the betas is then tuned.
    """
    n = rho.shape[0]
    vals, vecs = np.linalg.eigh(rho)
    starts = []
    for v in range(n - 1, max(n - 1 - max_vectors, -1), -1):
        if vals[v] < 0.5 * vals[-1] or vals[v] <= 0:
            break
        xi = vecs[:, v]
        order = np.argsort(-np.abs(xi), kind="stable")
        rank = int(np.count_nonzero(np.abs(xi) > 1e-6))
        for s in range(k, rank + 1):
            support = np.sort(order[:s])
            x = np.sum(np.abs(xi[support]) ** 2)
            for c in sorted(set(STRUCTURED_RATIOS) | {-1.0 / (s - 1)}):
                beta = np.zeros(2 * n, dtype=np.complex128)
                beta[support] = xi[support]
                beta[support + n] = xi[support] + c * x / xi[support].conj()
                starts.append(_scaled_pairs_start(rho, k, beta))
    return starts


def homotopy_start(rho: np.ndarray, k: int, cfg: OptimizerConfig) -> np.ndarray | None:
    """Optimum for the leading eigenvector, carried along ``(1-s) P + s rho``.

    The pure-state problem ``P = |xi><xi|`` is solved from the explicit
    construction and the structured starts; its optimum is then re-polished
    while the mixing parameter s goes from 0 to 1. Returns None when the
    leading eigenvector has coherence rank below k.
    """
    _, vecs = np.linalg.eigh(rho)
    lead = ExcitationState.normalized(vecs[:, -1])
    if lead.coherence_rank < k:
        return None
    pure = np.outer(lead.amplitudes, lead.amplitudes.conj())
    best, x = -np.inf, None
    for x0 in [appendix_witness(lead, k).to_angles()] + structured_starts(pure, k):
        v, xs = local_search(x0, pure, k, cfg, singular=True)
        if v > best:
            best, x = v, xs
    for s in np.linspace(0, 1, HOMOTOPY_STEPS + 1)[1:]:
        _, x = local_search(x, (1 - s) * pure + s * rho, k, cfg, singular=False)
    return x


def _lbfgs(x0, rho, weight, idx, cfg: OptimizerConfig):
    fun = lambda x: _negated(tau_grad_kernel(x, rho, weight, idx, True))
    res = minimize(fun, x0, jac=True, method="L-BFGS-B",
                   options={"maxiter": cfg.max_iterations, "ftol": cfg.convergence_tol,
                            "gtol": 1e-12, "maxcor": 30})
    return res.x


def _negated(pair):
    value, grad = pair
    return -value, -grad


def _nelder_mead(x0, rho, weight, idx, cfg: OptimizerConfig):
    fun = lambda x: -tau_grad_kernel(x, rho, weight, idx, False)[0]
    res = minimize(fun, x0, method="Nelder-Mead",
                   options={"maxiter": cfg.max_iterations * x0.size, "fatol": cfg.convergence_tol,
                            "xatol": 1e-10, "adaptive": True})
    return res.x


def local_search(x0: np.ndarray, rho: np.ndarray, k: int, cfg: OptimizerConfig,
                 singular: bool | None = None) -> tuple[float, np.ndarray]:
    """Locally maximize tau from ``x0``; never returns a worse point than ``x0``.

    For rank-deficient rho the search first runs on ``(1-e) rho + e I/n`` for
    a decreasing sequence of e, which rounds off the kinks sitting on the
    kernel of rho.
    """
    n = rho.shape[0]
    weight = prefactor(k, n)
    idx = _family_index(n)
    x0 = np.asarray(x0, dtype=float)
    step = _lbfgs if cfg.method == "lbfgs" else _nelder_mead
    if singular is None:
        singular = np.linalg.eigvalsh(rho)[0] < SINGULAR_EIGENVALUE
    x = x0
    if singular:
        eye = np.eye(n) / n
        for eps in WARMUP_SCHEDULE:
            x = step(x, (1 - eps) * rho + eps * eye, weight, idx, cfg)
    x = step(x, rho, weight, idx, cfg)
    v0 = tau_grad_kernel(x0, rho, weight, idx, False)[0]
    v1 = tau_grad_kernel(x, rho, weight, idx, False)[0]
    return (v1, x) if v1 >= v0 else (v0, x0)


def _as_angles(seed) -> np.ndarray:
    if isinstance(seed, WitnessParams):
        return seed.to_angles()
    return np.asarray(seed, dtype=float)


def measure(rho: DensityMatrix, k: int, cfg: OptimizerConfig | None = None,
            seeds: Iterable = ()) -> MeasureResult:
    """Estimate ``T_kn(rho)`` from below by multi-start local maximization."""
    cfg = cfg or OptimizerConfig()
    n = rho.n
    if not 2 <= k <= n:
        raise InvalidRank(f"need 2 <= k <= n, got k={k}, n={n}")
    mat = np.ascontiguousarray(rho.matrix)
    rng = np.random.default_rng(cfg.seed)

    starts = [_random_start(rng, n) for _ in range(cfg.restarts)]
    eigvals, eigvecs = np.linalg.eigh(mat)
    if cfg.include_appendix_starts and eigvals[-1] >= NEAR_PURE:
        lead = ExcitationState.normalized(eigvecs[:, -1])
        if lead.coherence_rank >= k:
            starts.append(appendix_witness(lead, k).to_angles())
    if cfg.structured_starts:
        starts.extend(structured_starts(mat, k))
        if eigvals[-1] < NEAR_PURE:
            x = homotopy_start(mat, k, cfg)
            if x is not None:
                starts.append(x)
    starts.extend(_as_angles(s) for s in seeds)

    singular = eigvals[0] < SINGULAR_EIGENVALUE
    search = lambda x0: local_search(x0, mat, k, cfg, singular)
    if cfg.threads > 1:
        with ThreadPoolExecutor(cfg.threads) as pool:
            found = list(pool.map(search, starts))
    else:
        found = [search(x0) for x0 in starts]

    values = np.array([v for v, _ in found])
    best = int(np.argmax(values))
    params = WitnessParams.from_angles(found[best][1])
    value = evaluate_tau(rho, params, k)
    if value < CLAMP_TOL:
        # tau is exactly zero at beta = 0, which beats any non-positive optimum
        params, value = WitnessParams.trivial(n), 0.0
    agreeing = int(np.count_nonzero(values >= value - AGREEMENT_TOL))
    return MeasureResult(float(value), params, agreeing, k, n, len(starts))


def measure_profile(rho: DensityMatrix, ks: Sequence[int], cfg: OptimizerConfig | None = None,
                    seeds: dict[int, Sequence] | None = None) -> list[MeasureResult]:
    """Measures for several k, returned in the order of ``ks``.

    Orders are processed from the largest k down and the optimum for k + 1
    seeds the search for k: ``a_kn`` is non-decreasing in k, so the same
    parameters give at least as large a witness at the lower order.
    """
    seeds = seeds or {}
    results: dict[int, MeasureResult] = {}
    for k in sorted(set(ks), reverse=True):
        extra = list(seeds.get(k, ()))
        if k + 1 in results:
            extra.append(results[k + 1].best_params)
        results[k] = measure(rho, k, cfg, extra)
    return [results[k] for k in ks]


def w_normalization(n: int, ks: Sequence[int], cfg: OptimizerConfig | None = None) -> dict[int, float]:
    """``w_k = T_kn(|W><W|)`` for the uniform superposition over n sites."""
    from .hilbert import pure_density
    rho = pure_density(ExcitationState.w_state(n))
    return {r.k: r.value for r in measure_profile(rho, list(ks), cfg)}


def improve(rho: DensityMatrix, result: MeasureResult, seeds: Iterable,
            cfg: OptimizerConfig | None = None) -> MeasureResult:
    """Polish extra seeds and keep whichever of them or ``result`` is best."""
    cfg = cfg or OptimizerConfig()
    mat = np.ascontiguousarray(rho.matrix)
    singular = np.linalg.eigvalsh(mat)[0] < SINGULAR_EIGENVALUE
    best = result
    for seed in seeds:
        _, x = local_search(_as_angles(seed), mat, result.k, cfg, singular)
        params = WitnessParams.from_angles(x)
        value = evaluate_tau(rho, params, result.k)
        if value > best.value:
            best = MeasureResult(float(value), params, 1, result.k, result.n, result.starts)
    return best
