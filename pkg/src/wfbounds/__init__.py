"""Optimal distance bounds between compressed sequences, and mining on top of them."""
from .bounds import (BoundPair, CrossTermProblem, DoubleWaterfillResult, bounds_vs_uncompressed,
                     build_partition, distance_bounds, double_waterfill, exact_distance,
                     fixed_point_gamma, gamma_window, solve_cross_term)
from .compress import (CompressedSeq, compress_first, compress_top, deserialize,
                       first_coeff_count, serialize, storage_budget)
from .errors import (BadMagicError, ChecksumError, ConsistencyError, ConvergenceError,
                     FormatError, InfeasibleEnergyError, InvalidInputError, InvalidPairError,
                     PreconditionError, TruncatedError)
from .transform import Basis, Spectrum, dft_forward, dft_inverse, forward, haar_forward, haar_inverse, inverse
from .waterfill import WaterfillResult, waterfill

__version__ = "0.1.0"
