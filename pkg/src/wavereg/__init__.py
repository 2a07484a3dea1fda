"""Deformable 3D registration with a multi-scale wavelet coefficient pyramid."""

from .diffeo import exp_backward, scaling_and_squaring
from .metrics import dice, hausdorff, neg_jac_fraction
from .optimizer import RegistrationConfig, RegistrationResult, register
from .pyramid import CoefficientPyramid, flow_gradient_to_coeffs, init_pyramid, reconstruct_flow
from .similarity import LossConfig, total_loss
from .volume import Volume, jacobian_determinant, warp
from .wavelet import FilterBank, dwt3, filter_bank, idwt3

__version__ = "0.1.0"

__all__ = [
    "CoefficientPyramid", "FilterBank", "LossConfig", "RegistrationConfig", "RegistrationResult", "Volume",
    "dice", "dwt3", "exp_backward", "filter_bank", "flow_gradient_to_coeffs", "hausdorff", "idwt3",
    "init_pyramid", "jacobian_determinant", "neg_jac_fraction", "reconstruct_flow", "register",
    "scaling_and_squaring", "total_loss", "warp",
]
