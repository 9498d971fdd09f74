"""Degenerate CP decompositions: diverging component groups, triangular
boundary forms and the proportionality of diverging factors."""
__version__ = "0.1.0"

from .als import FitTrace, fit_als, swamp_metrics
from .cp import (
    ComponentGroup,
    CpDecomposition,
    congruence,
    congruence_matrix,
    evaluate,
    group_sum,
    normalize,
)
from .degeneracy import DivergenceReport, classify_group, detect_groups, eigen_pattern, rank1_metric
from .exceptions import (
    ClosedFormUndefined,
    ContractViolation,
    DegenerateComponentError,
    InvalidArgument,
    UndefinedMetricError,
)
from .families import SequenceFamily, family_generic, family_r3, family_r4, family_r6, make_family
from .sgsd import (
    SchurForm,
    closed_form_3x3,
    eigen_structure,
    find_nonsingular_slicemix,
    normalize_first_slice,
    sgsd_jacobi,
)
from .tensor import mode_ranks, multilinear_multiply, numerical_rank, rank1, refold, slicemix, unfold
