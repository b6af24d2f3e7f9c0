"""Gaussian process classification with privileged noise."""

try:
    from ._gppriv import (
        Model,
        SEKernelParams,
        TiltedMoments,
        average_ranks,
        error_rate,
        fit,
        gauss_hermite,
        kernel_matrix,
        load_model,
        log_std_norm_cdf,
        nemenyi_cd,
        se_kernel,
        std_norm_cdf,
        synth_lupi,
        tilted_gpc,
        tilted_gpc_plus,
    )
except ImportError:  # in-tree builds keep the extension next to the package
    from _gppriv import (
        Model,
        SEKernelParams,
        TiltedMoments,
        average_ranks,
        error_rate,
        fit,
        gauss_hermite,
        kernel_matrix,
        load_model,
        log_std_norm_cdf,
        nemenyi_cd,
        se_kernel,
        std_norm_cdf,
        synth_lupi,
        tilted_gpc,
        tilted_gpc_plus,
    )

__all__ = [
    "Model",
    "SEKernelParams",
    "TiltedMoments",
    "average_ranks",
    "error_rate",
    "fit",
    "gauss_hermite",
    "kernel_matrix",
    "load_model",
    "log_std_norm_cdf",
    "nemenyi_cd",
    "se_kernel",
    "std_norm_cdf",
    "synth_lupi",
    "tilted_gpc",
    "tilted_gpc_plus",
]
