"""Encoder weight transfer from a trained U-Net to an encoder-regressor (DEW)."""

import logging

from src.networks.bundle import ModelBundle
from src.networks.unet import ENCODER_PREFIXES
from src.utils.exceptions import ConfigError

logger = logging.getLogger(__name__)


def is_encoder_name(name: str) -> bool:
    """Return True for parameters and buffers of the encoder or bottleneck."""
    return name.split(".", 1)[0].startswith(ENCODER_PREFIXES)


def transfer_encoder_weights(
    src: ModelBundle, dst: ModelBundle, freeze: bool = False
) -> ModelBundle:
    """Copy every encoder and bottleneck parameter (and batch-norm buffer) by name.

    The fully connected head of ``dst`` keeps its fresh initialisation.

    Args:
        src (ModelBundle): Trained segmentation U-Net (``SB``).
        dst (ModelBundle): Encoder-regressor (``DE``), modified in place.
        freeze (bool): Exclude the transferred parameters from optimiser updates.

    Returns:
        ModelBundle: ``dst``.

    Raises:
        ConfigError: If the architectures or encoder configurations differ.
    """
    if src.architecture != "SB" or dst.architecture != "DE":
        raise ConfigError(
            "Weights transfer from SB to DE, "
            f"got {src.architecture} -> {dst.architecture}"
        )
    if src.config.to_dict() != dst.config.encoder.to_dict():
        raise ConfigError(
            f"Encoder configurations differ: {src.config.to_dict()} "
            f"vs {dst.config.encoder.to_dict()}"
        )
    copied = 0
    for name, tensor in dst.params.items():
        if is_encoder_name(name):
            tensor.data[...] = src.params[name].data
            copied += 1
    for name, buffer in dst.buffers.items():
        if is_encoder_name(name):
            buffer[...] = src.buffers[name]
    if freeze:
        dst.frozen |= {name for name in dst.params if is_encoder_name(name)}
    dst.metadata["transferred_from"] = src.metadata.get("checkpoint", "SB")
    dst.metadata["encoder_frozen"] = freeze
    logger.debug("Transferred %d encoder tensors (freeze=%s)", copied, freeze)
    return dst
