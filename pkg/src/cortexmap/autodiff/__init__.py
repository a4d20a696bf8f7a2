from .tensor import (
    AutodiffError,
    Tape,
    Tensor,
    backward,
    concat,
    dropout,
    exp,
    gather,
    leaky_relu,
    log,
    matmul,
    maximum_const,
    mul,
    no_grad,
    reshape,
    relu,
    segment_sum,
    sqrt,
    square,
    tmean,
    transpose,
    tsum,
)
from .layers import (
    BatchNorm,
    Conv2d,
    Dropout,
    GlobalAvgPool,
    Layer,
    LayerSpec,
    Linear,
    MaxPool2d,
    ReLU,
    Sequential,
    ShapeError,
    build_layer,
    conv_output_size,
)
from .optim import LARS, OptimizerState, SGDNesterov, lars_step, sgd_nesterov_step
from .checkpoint import load_checkpoint, save_checkpoint
