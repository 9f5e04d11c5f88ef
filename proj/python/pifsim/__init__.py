"""Particle-in-Fourier Vlasov-Poisson simulator."""

import json

from ._core import (
    Error,
    InvalidArgument,
    UsageError,
    direct_type1,
    direct_type2,
    nufft_type1,
    nufft_type2,
    run_cli,
    simulate,
)
from ._core import config_json as _config_json


def config(settings=None):
    """Effective run configuration after defaults and dependent defaults."""
    return json.loads(_config_json(settings or {}))


__all__ = [
    "Error",
    "InvalidArgument",
    "UsageError",
    "config",
    "direct_type1",
    "direct_type2",
    "nufft_type1",
    "nufft_type2",
    "run_cli",
    "simulate",
]
