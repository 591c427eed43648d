"""
Maximum-margin activation clipping: margin ascent and bound learning.
"""

from .margin_ascent import (
    MarginAscentResult,
    MarginMaximaSet,
    generate_maxima,
    margins_and_input_gradient,
    maximize_margin,
)
from .mmac import (
    ACCURACY_SLACK,
    IterationRecord,
    MmacConfig,
    MmacResult,
    ObjectiveValue,
    bounded_accuracy,
    correctly_classified_subset,
    initial_bounds,
    mmac_objective,
    run_mmac,
    update_lambda,
)

__all__ = [
    "ACCURACY_SLACK",
    "IterationRecord",
    "MarginAscentResult",
    "MarginMaximaSet",
    "MmacConfig",
    "MmacResult",
    "ObjectiveValue",
    "bounded_accuracy",
    "correctly_classified_subset",
    "generate_maxima",
    "initial_bounds",
    "margins_and_input_gradient",
    "maximize_margin",
    "mmac_objective",
    "run_mmac",
    "update_lambda",
]
