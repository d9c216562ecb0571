"""dichokit: numerics for nonuniform dichotomies of nonautonomous systems.

The toolkit computes evolution operators of x' = A(t) x, verifies and
estimates generalized dichotomy bounds driven by four growth rates,
constructs quadratic Lyapunov functions and robust projections, builds the
topological linearization of small nonlinear perturbations, and computes
Lipschitz stable manifolds by graph transform.  Every construction ships
with a grid-checked certificate.
"""

__version__ = "0.1.0"

from .growth import GrowthRate, RateQuadruple, builtin, product_rate, ratio_power, validate
from .system import (
    BlockSystem,
    CoefficientField,
    Example22Params,
    NonlinearTerm,
    ParameterSpace,
    adjoint,
    constant_field,
    make_example22,
)
from .evolution import EvolutionOperator, IntegratorConfig
from .dichotomy import (
    Certificate,
    DichotomySpec,
    ProjectionFamily,
    check_projection,
    estimate_constants,
    square_grid,
    verify,
)

__all__ = [
    "GrowthRate",
    "RateQuadruple",
    "builtin",
    "product_rate",
    "ratio_power",
    "validate",
    "BlockSystem",
    "CoefficientField",
    "Example22Params",
    "NonlinearTerm",
    "ParameterSpace",
    "adjoint",
    "constant_field",
    "make_example22",
    "EvolutionOperator",
    "IntegratorConfig",
    "Certificate",
    "DichotomySpec",
    "ProjectionFamily",
    "check_projection",
    "estimate_constants",
    "square_grid",
    "verify",
    "__version__",
]
