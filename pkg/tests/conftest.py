import numpy as np
import pytest
from fractions import Fraction
from hypothesis import strategies as st

from graphweyl.interval_map import validate_map
from graphweyl.quantize import doubling_unitary
from graphweyl.spectral import eigendecompose

_SPECTRA = {}
ACCEPTANCE_LINES = []


def doubling_spectrum(n):
    """Eigendecomposition of the doubling quantization, cached for the whole session."""
    if n not in _SPECTRA:
        _SPECTRA[n] = eigendecompose(doubling_unitary(n))
    return _SPECTRA[n]


@pytest.fixture(scope="session")
def spectrum():
    return doubling_spectrum


@st.composite
def block_maps(draw):
    """Admissible maps built from full branches over permuted blocks of atoms.

    m0 = blocks * size; the atoms of block b are mapped, each with slope
    +-size, onto the range of block perm[b].
    """
    blocks = draw(st.integers(1, 3))
    size = draw(st.integers(2, 4))
    m0 = blocks * size
    perm = draw(st.permutations(range(blocks)))
    segs = []
    for b in range(blocks):
        lo = Fraction(perm[b] * size, m0)
        hi = lo + Fraction(size, m0)
        for i in range(size):
            j = b * size + i
            left = Fraction(j, m0)
            if draw(st.booleans()):
                segs.append((size, lo - size * left))
            else:
                segs.append((-size, hi + size * left))
    endpoint = draw(st.sampled_from(["right", "left"]))
    return validate_map(segs, endpoint=endpoint)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
