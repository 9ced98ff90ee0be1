from .layers import ContractError, positional_encoding, scaled_dot_product_attention
from .linreg import LinearFit, add_intercept, fit_linear_regression_closed_form, fit_linear_regression_gd
from .zoo import (
    DISPLAY_NAMES,
    FAMILIES,
    BuildError,
    EERegressor,
    ModelSpec,
    TransformerRegressor,
    build_model,
    canonical_family,
    load_checkpoint,
    save_checkpoint,
)

__all__ = [
    "BuildError", "ContractError", "DISPLAY_NAMES", "EERegressor", "FAMILIES", "LinearFit", "ModelSpec",
    "TransformerRegressor", "add_intercept", "build_model", "canonical_family", "fit_linear_regression_closed_form",
    "fit_linear_regression_gd", "load_checkpoint", "positional_encoding", "save_checkpoint",
    "scaled_dot_product_attention",
]
