"""Entropy-structured cross-diffusion models: hypothesis audits, an implicit
entropy-variable solver, and relative-entropy stability experiments."""

__version__ = "0.1.0"

from .core import (
    EntropyVariableTransformer,
    GridField,
    entropy_density,
    entropy_functional,
    from_entropy_vars,
    hessian,
    hessian_inverse,
    to_entropy_vars,
)
from .diagnostics import (
    TwinExperimentResult,
    decomposition_observables,
    gronwall_fit,
    hl2_lower_bound,
    relative_entropy,
    twin_experiment,
)
from .hypotheses import HypothesisReport, Verdict, run_check
from .models import ModelSpec, build_model, catalog, with_reaction
from .solver import (
    CrossDiffusionSolver,
    EntropyLedger,
    SolverConfig,
    TrajectoryField,
    discrete_entropy_production,
    simulate,
    step,
)

__all__ = [
    "CrossDiffusionSolver",
    "EntropyLedger",
    "EntropyVariableTransformer",
    "GridField",
    "HypothesisReport",
    "ModelSpec",
    "SolverConfig",
    "TrajectoryField",
    "TwinExperimentResult",
    "Verdict",
    "build_model",
    "catalog",
    "decomposition_observables",
    "discrete_entropy_production",
    "entropy_density",
    "entropy_functional",
    "from_entropy_vars",
    "gronwall_fit",
    "hessian",
    "hessian_inverse",
    "hl2_lower_bound",
    "relative_entropy",
    "run_check",
    "simulate",
    "step",
    "to_entropy_vars",
    "twin_experiment",
    "with_reaction",
]
