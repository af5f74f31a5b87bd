from .tensor import (
    PI,
    TWO_PI,
    Tensor,
    add,
    as_tensor,
    broadcast_to,
    concat,
    constant,
    conv2d,
    div,
    getitem,
    grad,
    l2norm,
    leaf,
    matmul,
    maximum_const,
    maxpool2d,
    minimum_const,
    mul,
    neg,
    relu,
    reshape,
    scatter,
    set_check_finite,
    sigmoid,
    sqrt,
    square,
    stack,
    sub,
    tcos,
    texp,
    tmean,
    transpose,
    tsin,
    tsum,
    ttanh,
    wrap_angle_t,
)
from .optim import CHECKPOINT_VERSION, ParamStore, load_checkpoint_meta
