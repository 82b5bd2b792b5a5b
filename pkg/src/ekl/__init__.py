"""Learning entangled operator-valued kernels for multi-output regression."""

from .alignment import (EklObjectiveConfig, UndefinedAlignmentError, centered_alignment, ekl_gradient,
                        ekl_objective, learn_entangled_kernel)
from .features import FeatureMap, ScalarKernelSpec, apply_feature_map, fit_feature_map, gram_scalar
from .harness import CvPlan, Dataset, cross_validate, gen_bilinear, nmse, ni
from .io import load_csv, load_model, save_csv, save_model
from .ovk import (ChoiKrausKernel, EntangledModel, SeparableKernel, assemble_gram_entangled, choi_kraus_eval,
                  extract_scalar_kernel, separable_gram, separable_to_choi_kraus)
from .separability import PPTResult, ppt_check
from .solver import (FitResult, fit_krr_baseline, fit_operator_valued, fit_scalar, fit_separable_baseline,
                     generalization_bound, predict, rademacher_bound, reduce_dimensions)
from .tensor import BlockMatrix, kron, partial_trace, partial_transpose, unvec_col, vec_col
from .timing import timing_benchmark

__version__ = "0.1.0"
