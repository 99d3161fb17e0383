"""Spectral statistics of unitary quantizations of piecewise-linear interval maps."""

__version__ = "0.1.0"

from .errors import *  # noqa: F401,F403
from .interval_map import (
    BLOCK_DOUBLING,
    DOUBLING,
    FOUR_LEGS,
    MapConstants,
    PiecewiseLinearMap,
    evaluate_iterate,
    k_tilde,
    load_map,
    validate_map,
)
from .markov import (
    BadCoordinateSet,
    RowStochasticSparse,
    SupportReport,
    bad_coordinates,
    build_markov,
    markov_power,
    support_report,
    unique_path,
)
from .quantize import (
    ComplexUnitary,
    apply_phases,
    block_dft_quantize,
    doubling_unitary,
    verify_unistochastic,
)
from .spectral import (
    ArcWindow,
    SelbergPolyPair,
    SpectralData,
    arc_projection,
    eigendecompose,
    evaluate_trig_poly,
    pointwise_weyl,
    selberg_polynomials,
    weyl_count,
    weyl_remainder_report,
)
