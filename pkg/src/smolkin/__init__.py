"""Aggregation-fragmentation kinetics with low-rank kernels and adaptive RK steppers."""
from .kernels import (DenseKernel, KernelKind, KernelSpec, LowRankFactors, build_dense,
                      build_factors, kernel_entry)
from .rhs import (ModelSpec, ModelVariant, Rhs, RhsWorkspace, SourceTerm, birth_term, death_term,
                  eval_rhs, eval_rhs_dense_oracle, euler_stability_bound, shattering_terms)
from .simulator import InitialCondition, SimulationConfig, initial_state, moments, run
from .steppers import Scheme, StepControl, StepOutcome

__version__ = "0.1.0"
