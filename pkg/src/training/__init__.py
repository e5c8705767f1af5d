"""Refiner training loop, history buffer and checkpoint selection."""
from .history_buffer import HistoryBuffer
from .selection import moving_average, selection_criterion, select_best_checkpoint
from .loss_log import LOSS_LOG_HEADER, format_loss_log, write_loss_log, read_loss_log
from .trainer import (
    TrainState,
    TrainResult,
    build_state,
    image_stream,
    pretrain_refiner,
    pretrain_discriminator,
    refiner_update,
    disc_update,
    full_train_step,
    make_checkpoint,
    evaluate_refiner,
    run_training,
    load_refiner
)

__all__ = [
    "HistoryBuffer",
    "moving_average",
    "selection_criterion",
    "select_best_checkpoint",
    "LOSS_LOG_HEADER",
    "format_loss_log",
    "write_loss_log",
    "read_loss_log",
    "TrainState",
    "TrainResult",
    "build_state",
    "image_stream",
    "pretrain_refiner",
    "pretrain_discriminator",
    "refiner_update",
    "disc_update",
    "full_train_step",
    "make_checkpoint",
    "evaluate_refiner",
    "run_training",
    "load_refiner"
]
