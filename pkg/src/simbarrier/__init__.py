"""Barrier certificate synthesis from simulations, with rigorous
interval verification."""

__version__ = "0.1.0"

from .engine import RunConfig, RunReport, RunStatus, run
from .model import (
    Box,
    Problem,
    Segment,
    Template,
    bloat,
    load_problem,
    make_template,
    vertices,
)
from .verify import Verdict, VerdictStatus, VerifyConfig
from .verify import verify as verify_certificate

__all__ = [
    "Box",
    "Problem",
    "RunConfig",
    "RunReport",
    "RunStatus",
    "Segment",
    "Template",
    "Verdict",
    "VerdictStatus",
    "VerifyConfig",
    "bloat",
    "load_problem",
    "make_template",
    "run",
    "verify_certificate",
    "vertices",
]
