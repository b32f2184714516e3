"""Python access to the sdemem inference library."""

from ._core import (
    InputError,
    InvalidConfiguration,
    SdememError,
    ess,
    loglik,
    mess,
    run_cli,
    simulate,
    sort_particles,
    systematic_resample,
    wasserstein1d,
)

__all__ = [
    "InputError",
    "InvalidConfiguration",
    "SdememError",
    "ess",
    "loglik",
    "mess",
    "run_cli",
    "simulate",
    "sort_particles",
    "systematic_resample",
    "wasserstein1d",
]
