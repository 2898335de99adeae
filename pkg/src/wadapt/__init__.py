"""Wasserstein-adversarial unsupervised domain adaptation.

Pipeline: supervised source training, adversarial feature-extractor
adaptation (Wasserstein critic with weight clipping, plus a GAN baseline),
divergence estimation and evaluation/reporting, with a synthetic
device-shift dataset for desk-scale verification.
"""

__version__ = "0.1.0"

from .types import (  # noqa: F401
    AdaptConfig,
    ClassPosterior,
    CriticScore,
    DomainTag,
    FeatureTensor,
    LabelVector,
    LatentRep,
    ParameterSet,
    copy_parameters,
    onehot,
)
