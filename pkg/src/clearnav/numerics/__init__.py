"""Dense float64 arrays with reverse-mode gradients, layers, and optimizers."""
from .checkpoint import CheckpointError, load_params, save_params
from .gradcheck import grad_check
from .nn import (
    GRUParams,
    LSTMParams,
    ParamStore,
    attention,
    cosine_matrix,
    cosine_sim,
    gru_step,
    layer_norm,
    linear,
    lstm_step,
)
from .optim import AdamW, RMSProp, clip_grad_norm
from .tensor import (
    NonFiniteError,
    ShapeError,
    Tensor,
    as_tensor,
    backward,
    concat,
    exp,
    log,
    log_softmax,
    matmul,
    no_grad,
    normalize,
    relu,
    sigmoid,
    softmax,
    stack,
    tanh,
    where_mask,
)
from .rnn import gru_scan
