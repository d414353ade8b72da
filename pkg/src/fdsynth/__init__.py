"""Timeout synthesis for CTMCs with fixed-delay transitions."""
from .embedded import DiscretizationParams, build_kernel
from .errors import FdError, ModelError, NumericError
from .model import CostStructure, DelayFunction, FdCtmc, RateModel, classify, prepare, uniformize
from .models import DpmParams, ProtocolParams, gen_dpm, gen_protocol
from .policy import SynthesisReport, policy_evaluate, synthesize
from .simulator import SimConfig, SimEstimate, estimate

__all__ = [
    "CostStructure",
    "DelayFunction",
    "DiscretizationParams",
    "DpmParams",
    "FdCtmc",
    "FdError",
    "ModelError",
    "NumericError",
    "ProtocolParams",
    "RateModel",
    "SimConfig",
    "SimEstimate",
    "SynthesisReport",
    "build_kernel",
    "classify",
    "estimate",
    "gen_dpm",
    "gen_protocol",
    "policy_evaluate",
    "prepare",
    "synthesize",
    "uniformize",
]
