"""Network builders: U-Net (SB), encoder-regressor (DE/DEW) and VGG regressor."""

from src.networks.bundle import ModelBundle, describe_plan, plan_parameter_count
from src.networks.transfer import transfer_encoder_weights
from src.networks.unet import build_encoder_regressor, build_unet
from src.networks.vgg import build_vgg_regressor

__all__ = [
    "ModelBundle",
    "build_encoder_regressor",
    "build_unet",
    "build_vgg_regressor",
    "describe_plan",
    "plan_parameter_count",
    "transfer_encoder_weights",
]
