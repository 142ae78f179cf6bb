import itertools
import math

import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")

ACCEPTANCE_LINES = []


def direct_circular_convolution(a, b):
    """O(D^2) circular convolution of two arrays on the same grid."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    dims = a.shape
    out = np.zeros(dims)
    for s in itertools.product(*(range(n) for n in dims)):
        if a[s] == 0:
            continue
        out += a[s] * np.roll(b, s, axis=tuple(range(len(dims))))
    return out


def direct_dft(x):
    """O(D^2) multi-dimensional DFT by explicit summation."""
    x = np.asarray(x, dtype=float)
    dims = x.shape
    out = np.zeros(dims, dtype=complex)
    grids = np.indices(dims)
    for w in itertools.product(*(range(n) for n in dims)):
        phase = sum(grids[i] * w[i] / dims[i] for i in range(len(dims)))
        out[w] = np.sum(x * np.exp(-2j * math.pi * phase))
    return out


def unit_filters(rng, n_filters, channels, support):
    f = rng.standard_normal((n_filters, channels) + tuple(support))
    norms = np.sqrt(np.sum(f.reshape(n_filters, -1) ** 2, axis=1))
    return f / norms.reshape((-1,) + (1,) * (f.ndim - 1))


def sparse_maps(rng, shape, density=0.3):
    z = rng.standard_normal(shape)
    return z * (rng.random(shape) < density)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


class AcceptanceRecorder:
    def __init__(self):
        self.lines = []

    def check(self, number, title, ok, detail=""):
        line = "CRITERION %2d %s: %s%s" % (number, "PASS" if ok else "FAIL", title,
                                           " (%s)" % detail if detail else "")
        self.lines.append(line)
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok


@pytest.fixture
def acceptance():
    return AcceptanceRecorder()


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
