"""Operator-self-similar stable random fields: construction, simulation and checks."""

__version__ = "0.1.0"

from . import kernels
from .errors import (ConfigError, DomainError, FieldNotDefinedError, KernelNotPositiveError,
                     NotInQError, OssFieldError, SingularityError)
from .linops import Operator, classify, mat_exp, mat_pow, op_norm
from .polar import decompose, radial_norm, tau
from .homog import KernelSpec, custom, sum_powers
from .stable import StableSpec, ecf, sample_isotropic_vector, sample_measure, sample_sym_stable_1d
from .cells import QuadratureSpec
from .integral import (MatrixField, cf_exponent_complex, cf_exponent_real, integrate_complex,
                       integrate_real, integrability_diagnostic)
from .fields import (HARMONIZABLE, MOVING_AVERAGE, FieldSample, FieldSpec, oss_cf_identity,
                     recurrence_residual, simulate, stationary_increments_cf_identity)
