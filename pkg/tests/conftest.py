import math

import numpy as np
import pytest

from nfirs.config import from_dict
from nfirs.geometry import SPEED_OF_LIGHT, SystemGeometry
from nfirs.moments import _assemble

REF_USERS = ((10.0, 70.0, 0.0), (30.0, 60.0, 0.0), (20.0, 50.0, 0.0), (45.0, 45.0, 0.0))
REF_CENTER = (-0.72, 0.51, 0.51)
F60 = 60e9


def freq_for(wavelength):
    return SPEED_OF_LIGHT / wavelength


def reference_geometry(n_u=20, n_v=20, zeta_bs=3.0, zeta_irs=6.0, center=REF_CENTER, M=128):
    return SystemGeometry(F60, M, zeta_bs, n_u, n_v, zeta_irs, center, REF_USERS, allow_even=True)


@pytest.fixture
def ref_geom():
    return reference_geometry()


@pytest.fixture
def small_geom():
    # odd counts, a handful of elements, near-field placement
    return SystemGeometry(F60, 7, 3.0, 3, 3, 6.0, (-0.3, 0.2, 0.2), REF_USERS[:3])


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def crandn(rng, *shape):
    return (rng.normal(size=shape) + 1j * rng.normal(size=shape)) / math.sqrt(2)


def random_set(rng, M=4, N=6, K=3, betas=None):
    """Moment set with a Gaussian ``F`` and random LoS phases."""
    F = crandn(rng, M, N)
    los = np.exp(2j * np.pi * rng.random((K, N)))
    alpha = rng.uniform(0.5, 2.0, K)
    beta = rng.uniform(0.1, 0.9, K) if betas is None else np.asarray(betas, dtype=float)
    return _assemble(F, los, alpha, beta)


def unit_phases(rng, N):
    return np.exp(2j * np.pi * rng.random(N))


# small sweeps for every experiment type, used by determinism checks
TINY_RUNS = {
    "GjkSweep": {"sweep": [0.0, 3.0]},
    "EdofSweep": {"sweep": [0.8, 1.6]},
    "RateVsPower": {"sweep": [10.0, 20.0]},
    "RateVsKappa": {"sweep": [0.0, 10.0]},
    "Convergence": {"sweep": [16.0, 24.0]},
    "EdofVsIrsSize": {"irs_sizes": [3, 5]},
    "FloorSweep": {"irs_sizes": [3, 5]},
}


def tiny_config(experiment, **run):
    data = {
        "geometry": {"M": 9, "N_u": 4, "N_v": 4, "irs_center": [-0.3, 0.2, 0.2]},
        "run": {"experiment": experiment, "mc_samples": 200, "phase_samples": 50, "max_outer": 8}
        | TINY_RUNS[experiment] | run,
    }
    return from_dict(data)


# lines collected by the acceptance suite, echoed in the terminal summary
ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)
