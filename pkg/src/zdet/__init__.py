"""Regularized determinants of zeroth-order operators on the circle, plus a
symbol-level toolkit on the 2-torus cosphere bundle."""

from __future__ import annotations

__version__ = "0.1.0"

from .circle_ops import (  # noqa: E402
    CircleOperator,
    FourierSeries,
    MultiplierExpansion,
    ZollRegularizer,
    identity,
    mk_multiplication,
    mk_multiplier,
    mk_random_operator,
    mk_reciprocal_multiplier,
    mk_shift,
    mk_smoothing,
)
from .zetalib import ZetaParams, w_q  # noqa: E402

__all__ = [
    "__version__",
    "CircleOperator",
    "FourierSeries",
    "MultiplierExpansion",
    "ZollRegularizer",
    "ZetaParams",
    "identity",
    "mk_multiplication",
    "mk_multiplier",
    "mk_random_operator",
    "mk_reciprocal_multiplier",
    "mk_shift",
    "mk_smoothing",
    "w_q",
]
