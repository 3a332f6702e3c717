import numpy as np
import pytest

from suspflow import (
    FlowObservable,
    RoofSpec,
    doubling,
    geometric_lorenz_2d,
    lorenz_quotient,
)


@pytest.fixture(scope="session")
def lq_model():
    return lorenz_quotient()


@pytest.fixture(scope="session")
def dbl_model():
    return doubling()


@pytest.fixture(scope="session")
def gl2_model():
    return geometric_lorenz_2d()


@pytest.fixture(scope="session")
def roof():
    return RoofSpec()


@pytest.fixture(scope="session")
def psi_x():
    return FlowObservable(fn=lambda x, s: x + 0.0 * s, bound=1.0,
                          fiber_integral=lambda x, a, b: x * (b - a))


@pytest.fixture(scope="session")
def psi_xcoss():
    # no closed-form fiber integral attached: exercises the quadrature path
    return FlowObservable(fn=lambda x, s: x * np.cos(s), bound=1.0)


def sample_interval(rng: np.random.Generator, lo: float, hi: float, n: int,
                    keep_away=(), margin: float = 1e-9) -> np.ndarray:
    """Uniform draws that stay a margin away from listed points."""
    xs = rng.uniform(lo, hi, n)
    for p in keep_away:
        while True:
            bad = np.abs(xs - p) < margin
            if not bad.any():
                break
            xs[bad] = rng.uniform(lo, hi, int(bad.sum()))
    return xs
