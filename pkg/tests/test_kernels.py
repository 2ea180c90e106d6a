import numpy as np
import pytest
from scipy.optimize import approx_fprime

from cohmeter._kernels import tau_grad_kernel
from cohmeter.hilbert import random_density
from cohmeter.witness import _family_index, prefactor, tau_angles


def random_angles(rng, n):
    return np.concatenate([rng.uniform(0.1, 1.4, 2 * n), rng.uniform(0, 2 * np.pi, 2 * n)])


@pytest.mark.parametrize("n", [2, 3, 5, 6])
def test_value_matches_numpy(rng, n):
    idx = _family_index(n)
    for _ in range(30):
        rho = np.ascontiguousarray(random_density(n, rng).matrix)
        x = random_angles(rng, n)
        k = int(rng.integers(2, n + 1))
        w = prefactor(k, n)
        value, _ = tau_grad_kernel(x, rho, w, idx, False)
        assert value == pytest.approx(tau_angles(x, rho, w), abs=1e-13)


@pytest.mark.parametrize("n", [2, 4, 5])
def test_gradient_matches_finite_differences(rng, n):
    idx = _family_index(n)
    for _ in range(10):
        rho = np.ascontiguousarray(random_density(n, rng).matrix)
        x = random_angles(rng, n)
        w = prefactor(2, n)
        _, grad = tau_grad_kernel(x, rho, w, idx, True)
        fd = approx_fprime(x, lambda y: tau_angles(y, rho, w), 1e-7)
        assert np.allclose(grad, fd, atol=2e-6)


def test_thread_safety(rng):
    from concurrent.futures import ThreadPoolExecutor
    n = 5
    idx = _family_index(n)
    rho = np.ascontiguousarray(random_density(n, rng).matrix)
    xs = [random_angles(rng, n) for _ in range(64)]
    serial = [tau_grad_kernel(x, rho, 0.2, idx, True)[0] for x in xs]
    with ThreadPoolExecutor(4) as pool:
        threaded = list(pool.map(lambda x: tau_grad_kernel(x, rho, 0.2, idx, True)[0], xs))
    assert serial == threaded
