"""Malliavin derivative, Skorokhod integral, Ornstein-Uhlenbeck operator and
Wick product on truncated Wiener chaos expansions with weighted norms."""

__version__ = "0.1.0"

from .chaos import (  # noqa: E402
    UNIT,
    ChaosExpansion,
    CoefShape,
    Custom,
    Kondratiev,
    SequencePower,
    ShapeMismatch,
    TruncationBox,
    duality_pairing,
    evaluate,
    weighted_norm,
    white_noise,
)
from .multiindex import MultiIndex, UnsupportedIndex, enumerate_box  # noqa: E402
from .operators import (  # noqa: E402
    malliavin_d,
    ornstein_uhlenbeck,
    required_box,
    skorokhod,
    wick,
)

__all__ = [
    "UNIT",
    "ChaosExpansion",
    "CoefShape",
    "Custom",
    "Kondratiev",
    "MultiIndex",
    "SequencePower",
    "ShapeMismatch",
    "TruncationBox",
    "UnsupportedIndex",
    "duality_pairing",
    "enumerate_box",
    "evaluate",
    "malliavin_d",
    "ornstein_uhlenbeck",
    "required_box",
    "skorokhod",
    "weighted_norm",
    "white_noise",
    "wick",
]
