"""Convolutional energy-based image model.

An image density built by exponentially tilting Gaussian white noise
with the score of a ReLU ConvNet.  The package provides the bottom-up
scoring pass, the per-piece affine linearization and its gradient
cross-check, Langevin sampling, maximum-likelihood and contrastive-
divergence training, exhaustive small-model oracles, and a command-line
front end (``convebm``).
"""

from .tensor import SeededRng, Tensor3, gaussian_noise, inner_product, sq_norm, tensor3
from .net import (
    CATEGORY_HEADS,
    CONV_SUM,
    ActivationPattern,
    LayerSpec,
    Network,
    forward,
    init_network,
    score_category,
    score_conv,
    softmax_posterior,
)
from .linearize import LinearPiece, energy, grad_score, top_down
from .prototype import (
    PrototypeModel,
    as_network,
    enumerate_pieces,
    proto_activation,
    proto_energy,
    proto_mean,
    proto_score,
)
from .sampler import ChainState, LangevinConfig, descend, langevin_run, langevin_step
from .learner import (
    DivergenceError,
    ParamGrad,
    TrainConfig,
    TrainRecord,
    cd_step,
    grad_params,
    history_csv,
    mle_step,
    reconstruct,
    train,
)

__version__ = "0.1.0"
