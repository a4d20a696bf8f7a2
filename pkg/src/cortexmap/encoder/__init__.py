from .architectures import EncoderConfig, ResidualBlock, build_encoder, stage_channel_plan
from .augment import AugmentationConfig, augment, mirror_flip
from .features import embed_nodes, extract_patch, load_features, save_features
from .loss import supcon_loss, supcon_loss_bruteforce
from .training import (
    EncoderSchedule,
    EncoderTrainResult,
    normalize_rows,
    train_encoder,
)
