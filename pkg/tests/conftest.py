import numpy as np
import pytest

from pneumoseg.autodiff import Tensor, backward


def pytest_runtest_logreport(report):
    """One visible pass/fail line per acceptance criterion."""
    if report.when == "call" and "test_acceptance" in report.nodeid:
        status = "PASS" if report.passed else "FAIL"
        name = report.nodeid.split("::")[-1]
        print(f"\nACCEPTANCE {status}: {name}")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def max_rel_err(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Norm-wise relative error between gradient arrays."""
    return float(np.max(np.abs(analytic - numeric)) / (np.max(np.abs(numeric)) + 1e-12))


def gradcheck(build, arrays, h=1e-3, tol=1e-3):
    """Compare tape gradients against central finite differences.

    ``build(*tensors)`` must return a scalar Tensor. Every input array is
    treated as requiring grad; the check runs in float64 so the h=1e-3
    stencil is the dominant error term.
    """
    arrays = [np.asarray(a, dtype=np.float64) for a in arrays]
    tensors = [Tensor(a, requires_grad=True, dtype=np.float64) for a in arrays]
    loss = build(*tensors)
    backward(loss)

    def value():
        return float(build(*[Tensor(a, dtype=np.float64) for a in arrays]).data[0])

    worst = 0.0
    for t, a in zip(tensors, arrays):
        assert t.grad is not None, "missing gradient"
        numeric = np.zeros_like(a)
        for idx in np.ndindex(a.shape):
            orig = a[idx]
            a[idx] = orig + h
            up = value()
            a[idx] = orig - h
            down = value()
            a[idx] = orig
            numeric[idx] = (up - down) / (2.0 * h)
        worst = max(worst, max_rel_err(t.grad, numeric))
    assert worst < tol, f"gradient mismatch: rel err {worst:.3e} >= {tol}"
    return worst


def away_from_kinks(x: np.ndarray, margin: float = 0.05) -> np.ndarray:
    """Push values away from 0 so ReLU finite differences stay clean."""
    return np.where(np.abs(x) < margin, np.where(x >= 0, x + 4 * margin, x - 4 * margin), x)


def pool_safe(rng: np.random.Generator, shape) -> np.ndarray:
    """Values with pairwise gaps well above the FD step, so window argmaxes
    are stable under the +-h probes."""
    n = int(np.prod(shape))
    base = 0.1 * rng.permutation(n).astype(np.float64)
    return (base + 0.01 * rng.standard_normal(n)).reshape(shape)
