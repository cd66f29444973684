"""Gamma network codes: SRLNC with a random linear outer code and an LDPC pre-code."""

from .code import GammaCode
from .codespec import CodeSpec, DegreeDistribution, Robust, SpecError, builtin, builtin_names
from .decoder import DecodeStalled, Decoder, run_until_success
from .field import FieldContext, GenerationSystem, field_for_q, get_field

__version__ = "0.1.0"

__all__ = [
    "CodeSpec",
    "DecodeStalled",
    "Decoder",
    "DegreeDistribution",
    "FieldContext",
    "GammaCode",
    "GenerationSystem",
    "Robust",
    "SpecError",
    "builtin",
    "builtin_names",
    "field_for_q",
    "get_field",
    "run_until_success",
]
