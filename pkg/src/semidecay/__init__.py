"""Numerical laboratory for semigroup decay rates via functional calculus."""
from .config import DEFAULT, Config, from_env
from .errors import HypothesisViolated, SemidecayError
from .linop import OperatorModel, operator_norm, resolvent_shift, sectoriality, spectrum
from .cbf import StieltjesRep, catalog, catalog_entry, eval_cbf_scalar, apply_cbf_operator
from .funcalc import (
    HInftyZeroSymbol,
    dunford_apply,
    frac_power_inv,
    log_operator,
    matrix_function_oracle,
    weight_operator,
)
from .semigroup import (
    decay_curve,
    evolve,
    laplace_orbit_infinity,
    laplace_orbit_infinity_zero,
)
from .profiles import (
    fit_growth_infinity,
    fit_growth_zero,
    m_log,
    m_log_right_inverse,
    predict_decay,
    resolvent_profile,
)
from .verify import (
    ExperimentSpec,
    FamilySpec,
    build_family,
    family_profile_calibration,
    fit_exponents,
    paper_suite,
    run_experiment,
    run_suite,
)

__version__ = "0.1.0"
