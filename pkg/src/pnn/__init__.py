"""Prescriptive 0-1 neural networks trained by mixed-integer programming.

Subpackages and modules:

``pnn.core``          datasets, architectures, weights, trained models
``pnn.mip``           MIP model builder, MPS export, embedded and external solvers
``pnn.formulation``   network training problem as a MIP
``pnn.inference``     forward pass, prescriptions, weight extraction
``pnn.causal``        nuisance models and doubly robust scores
``pnn.synthetic``     simulation designs, binarization, loaders
``pnn.evaluation``    metrics, tuning, paired tests
``pnn.training``      end-to-end training helper
"""

__version__ = "0.1.0"

from .core import (
    Architecture,
    CounterfactualScores,
    Dataset,
    Mode,
    NetworkWeights,
    PolicyModel,
    validate_dataset,
)
from .inference import forward, predict, prescribe
from .training import train

__all__ = [
    "Architecture",
    "CounterfactualScores",
    "Dataset",
    "Mode",
    "NetworkWeights",
    "PolicyModel",
    "__version__",
    "forward",
    "predict",
    "prescribe",
    "train",
    "validate_dataset",
]
