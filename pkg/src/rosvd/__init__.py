"""Simulated ring-oscillator entropy, SVD seed separation, ledger and LSB marking."""

from .errors import RosvdError
from .ledger import Ledger
from .pipeline import PipelineParams, SeedBundle, derive_auth, derive_bundle, derive_stochastic
from .sim import DeviceModel, EnvCondition, ResponseMatrix, SimConfig, new_device, sample_response
from .svd import SvdFactorization, TruncationSpec, reconstruct

__version__ = "0.1.0"

__all__ = [
    "DeviceModel",
    "EnvCondition",
    "Ledger",
    "PipelineParams",
    "ResponseMatrix",
    "RosvdError",
    "SeedBundle",
    "SimConfig",
    "SvdFactorization",
    "TruncationSpec",
    "derive_auth",
    "derive_bundle",
    "derive_stochastic",
    "new_device",
    "reconstruct",
    "sample_response",
]
