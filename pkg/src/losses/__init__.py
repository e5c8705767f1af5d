"""Loss functions and the frozen feature extractors they use."""
from .features import (
    FeatureMapExtractor,
    IdentityExtractor,
    ToyExtractor,
    InceptionExtractor,
    build_extractor,
    extract_features,
    TOY_FEATURE_DIM,
    INCEPTION_FEATURE_DIM
)
from .losses import (
    EPSILON,
    disc_loss,
    disc_loss_terms,
    adv_loss,
    self_reg_loss,
    perceptual_loss,
    refiner_loss
)

__all__ = [
    "FeatureMapExtractor",
    "IdentityExtractor",
    "ToyExtractor",
    "InceptionExtractor",
    "build_extractor",
    "extract_features",
    "TOY_FEATURE_DIM",
    "INCEPTION_FEATURE_DIM",
    "EPSILON",
    "disc_loss",
    "disc_loss_terms",
    "adv_loss",
    "self_reg_loss",
    "perceptual_loss",
    "refiner_loss"
]
