"""Semi-supervised image classification at desk scale.

Three stages: contrastive pretraining of a small CNN encoder, an
embedding-space wrapper classifier fitted on the few labeled samples, and
an inductive CNN trained on real plus wrapper-predicted (synthetic) labels.
"""

from .kernels import BACKEND as kernel_backend

__version__ = "0.1.0"
__all__ = ["kernel_backend", "__version__"]
