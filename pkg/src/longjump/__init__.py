"""Simulation and numerical analysis of a boundary-driven exclusion process
with long jumps: kernels, operators, an exact event-driven engine, field
functionals and an experiment harness."""

from .errors import LongJumpError
from .harness import EnsembleSummary, ExperimentConfig, Row, load_config, run_experiment
from .kernel import JumpKernel, kernel_build
from .params import ModelParams
from .regime import RegimeInfo, Space, Theorem, classify

__all__ = [
    "EnsembleSummary", "ExperimentConfig", "JumpKernel", "LongJumpError", "ModelParams", "RegimeInfo", "Row",
    "Space", "Theorem", "classify", "kernel_build", "load_config", "run_experiment",
]
__version__ = "0.1.0"
