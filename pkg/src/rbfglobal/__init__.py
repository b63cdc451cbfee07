"""Global derivative-free optimization of mixed-variable black-box
problems with radial-basis-function surrogate models."""

from .engine import EvaluationTrace, OptimizerConfig, run
from .parallel import run_parallel
from .problem import ProblemSpec, decode, encode, load_problem
from .rbf import RbfKind
from .refine import RefineConfig
from .subsolver import GaConfig, SamplingConfig

__version__ = "0.1.0"

__all__ = [
    "EvaluationTrace",
    "GaConfig",
    "OptimizerConfig",
    "ProblemSpec",
    "RbfKind",
    "RefineConfig",
    "SamplingConfig",
    "decode",
    "encode",
    "load_problem",
    "run",
    "run_parallel",
    "__version__",
]
