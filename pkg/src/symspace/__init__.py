"""Symmetric function spaces on [0,1]: exact step functions, class-G weights,
Lorentz/Marcinkiewicz/Orlicz norms, embedding tests and a block counterexample."""

from .stepfn import ExactScalar, StepFunction, disjoint_sum, rearrange
from .gfun import Constant, GFun, Pow, PowLog, Scaled, Table, parse_gfun
from .norms import (
    Power,
    TableConvex,
    lorentz_norm,
    marcinkiewicz_norm,
    orlicz_norm,
    quasi_norm,
)
from .embed import construct_rho, series_test, theorem5_chain, witness_search
from .cex import build_family, f_norm, verify_all

__all__ = [
    "ExactScalar",
    "StepFunction",
    "disjoint_sum",
    "rearrange",
    "Constant",
    "GFun",
    "Pow",
    "PowLog",
    "Scaled",
    "Table",
    "parse_gfun",
    "Power",
    "TableConvex",
    "lorentz_norm",
    "marcinkiewicz_norm",
    "orlicz_norm",
    "quasi_norm",
    "construct_rho",
    "series_test",
    "theorem5_chain",
    "witness_search",
    "build_family",
    "f_norm",
    "verify_all",
]
