"""Numerical toolkit for Musielak-Orlicz spaces L_M(Ω) on box domains."""

from .conjugate import (
    ConjugateResult,
    conjugate_density,
    conjugate_eval,
    conjugate_phi,
    inverse_eval,
    young_gap,
)
from .errors import (
    ConfigError,
    ExpressionError,
    InvalidParameter,
    MokitError,
    OutOfRange,
    PhiOverflow,
    SurrogateFailed,
    UnboundedConjugate,
)
from .experiments import (
    ExperimentReport,
    run_kr_counterexample,
    run_modular_vs_norm_equivalence,
    run_mollifier_convergence,
    run_sandwich_and_duality_suite,
    run_translation_continuity,
    run_truncation_density,
)
from .grid import Domain, GridFunction, ModularValue, modular, read_csv, sample
from .norms import (
    NormResult,
    amemiya_norm,
    char_indicator_bound,
    dual_functional_norm,
    holder_check,
    luxemburg_norm,
)
from .operators import CompactExhaustion, mollifier_kernel, mollify, translate, truncate
from .phi import (
    PhiFunction,
    Probe,
    check_delta2,
    check_local_integrability,
    eval_density,
    make_phi,
    validate_axioms,
)

__version__ = "0.1.0"
