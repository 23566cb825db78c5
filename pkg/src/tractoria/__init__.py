"""Conformal curvature and the ambient obstruction tensor from truncated Taylor jets."""

import os as _os

# cap BLAS threads before numpy loads
if "TRACTORIA_THREADS" in _os.environ:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        _os.environ.setdefault(_var, _os.environ["TRACTORIA_THREADS"])

from .curvature import CurvatureBundle, TensorJet, curvature_bundle
from .jets import Jet, JetDomainError, JetError, JetSpace, jet_space
from .metrics import ExprSyntaxError, MetricError, MetricSpec, builtin_metric, lift_metric, parse_metric
from .obstruction import ObstructionResult, obstruction
from .tractor import Scale, TractorJet, scale_at

__version__ = "0.1.0"

__all__ = [
    "CurvatureBundle",
    "ExprSyntaxError",
    "Jet",
    "JetDomainError",
    "JetError",
    "JetSpace",
    "MetricError",
    "MetricSpec",
    "ObstructionResult",
    "Scale",
    "TensorJet",
    "TractorJet",
    "builtin_metric",
    "curvature_bundle",
    "jet_space",
    "lift_metric",
    "obstruction",
    "parse_metric",
    "scale_at",
]
