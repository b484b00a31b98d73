"""Integer-arithmetic randomized smoothing for int8 classifiers.

Certifies L2-norm robustness of quantized classifiers via discrete Gaussian
noise, with the entire certification path in integer and exact rational
arithmetic.
"""

from .dgauss import (
    CdfTable,
    NoiseParams,
    build_cdf_table,
    inverse_cdf,
    inverse_cdf_floor,
    load_cdf_table,
    noise_params,
    pmf,
    sample,
    sample_noise_pool,
    save_cdf_table,
)

__all__ = [
    "CdfTable",
    "NoiseParams",
    "build_cdf_table",
    "inverse_cdf",
    "inverse_cdf_floor",
    "load_cdf_table",
    "noise_params",
    "pmf",
    "sample",
    "sample_noise_pool",
    "save_cdf_table",
]

__version__ = "0.1.0"
