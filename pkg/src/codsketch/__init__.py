"""Streaming approximate matrix multiplication with co-occurring directions."""

from .baselines import (
    METHODS,
    RANDOMIZED,
    brute_force_amm,
    fd_amm,
    hashing_amm,
    make_state,
    projection_amm,
    sampling_amm,
)
from .estimators import ApproximateMatMul, CoOccurringDirections, FrequentDirections
from .evaluation import (
    BoundsReport,
    ErrorReport,
    LowRankModelSpec,
    amm_error,
    gen_low_rank,
    low_rank_product_approx,
    nuclear_norm,
    spectral_norm,
    stable_rank,
    theoretical_bounds,
)
from .sketch_core import (
    ColumnPair,
    CoOccurringSketch,
    FrequentDirectionsSketch,
    ShrinkReport,
    SketchConfig,
    cod_merge,
    cod_new,
    cod_result,
    cod_shrink,
    cod_sketch,
    cod_update,
    fd_new,
    fd_sketch,
    fd_update,
    sketch_length_for,
)
from .stream_io import SketchSnapshot, load_sketch, read_all, read_batch, save_sketch, write_stream

__version__ = "0.1.0"
