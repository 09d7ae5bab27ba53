from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .loss import LossParts, loss, loss_grad
from .networks import (
    FICNN,
    PICNN,
    PROJECTION_EPS,
    Architecture,
    NetworkParams,
    ShapeError,
    backward,
    ensemble_predict,
    forward,
    init_params,
    predict,
    project_weights,
    symmetrize_prediction,
)
from .optim import Adamax, adamax_step
from .train import TrainConfig, TrainHistory, batch_loss_and_grad, evaluate_loss, train, train_ensemble
