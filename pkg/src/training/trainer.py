"""
Refiner training: perceptual pretraining of the refiner, pretraining of the
discriminator, then alternating adversarial updates with a history buffer.

All state lives in a ``TrainState``; every phase function takes the state and
batch streams and returns the same state, updated in place.
"""
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Tuple, Union

import torch
import torch.nn as nn
from tqdm import tqdm

from ..core.checkpoint import Checkpoint, checkpoint_path, save_checkpoint
from ..core.config import TrainConfig, config_hash, validate_config
from ..core.errors import DimensionError, NonFiniteLossError
from ..core.seeding import derive_seed, seed_everything
from ..core.types import ImageBatch, StepLog
from ..data.pipeline import ImageDataset, batch_iter
from ..losses.features import FeatureMapExtractor, IdentityExtractor, ToyExtractor, build_extractor
from ..losses.losses import (
    adv_loss,
    disc_loss,
    disc_loss_terms,
    perceptual_loss,
    refiner_loss,
    self_reg_loss
)
from ..metrics.fid import fid
from ..metrics.ssim import WINDOW_SIZE, dataset_ssim
from ..networks.discriminator import DiscriminatorNet, disc_forward, disc_prob_real
from ..networks.factory import NetKind, init_params
from ..networks.refiner import RefinerNet, refine_batch, refiner_forward
from .history_buffer import HistoryBuffer
from .loss_log import write_loss_log
from .selection import select_best_checkpoint

logger = logging.getLogger(__name__)

LOSS_LOG_NAME = "loss_log.csv"
SELECTION_NAME = "selection.json"

ImageSource = Union[ImageDataset, ImageBatch, torch.Tensor]


@dataclass
class TrainState:
    """Networks, optimizers, history buffer and log of one training run."""
    refiner: RefinerNet
    disc: DiscriminatorNet
    buffer: HistoryBuffer
    cfg: TrainConfig
    extractor: FeatureMapExtractor
    refiner_optimizer: torch.optim.Optimizer
    disc_optimizer: torch.optim.Optimizer
    step: int = 0
    logs: List[StepLog] = field(default_factory=list)
    refiner_updates: int = 0
    disc_updates: int = 0
    pretrain_losses: Dict[str, List[float]] = field(
        default_factory=lambda: {"refiner": [], "disc": []}
    )

    @property
    def device(self) -> torch.device:
        return next(self.refiner.parameters()).device


@dataclass
class TrainResult:
    """Outputs of ``run_training``."""
    final: Checkpoint
    best_step: int
    best_checkpoint: Path
    checkpoints: Dict[int, Path]
    logs: List[StepLog]
    loss_log_path: Path


def make_optimizer(params, name: str, lr: float) -> torch.optim.Optimizer:
    """Plain SGD (no momentum) or Adam."""
    if name == "sgd":
        return torch.optim.SGD(params, lr=lr)
    if name == "adam":
        return torch.optim.Adam(params, lr=lr)
    raise ValueError(f"Unknown optimizer {name!r}")


def set_requires_grad(net: nn.Module, requires_grad: bool):
    for param in net.parameters():
        param.requires_grad_(requires_grad)


def build_state(cfg: TrainConfig, extractor: Optional[FeatureMapExtractor] = None) -> TrainState:
    """
    Initialize networks, optimizers and buffer from a config.

    Args:
        cfg: Training configuration
        extractor: Feature extractor for the perceptual loss; built from the config when None
    """
    validate_config(cfg)
    device = torch.device(cfg.device)
    refiner = init_params(NetKind.REFINER, derive_seed(cfg.seed, "init.refiner"),
                          channels=cfg.refiner_channels, num_blocks=cfg.refiner_blocks).to(device)
    disc = init_params(NetKind.DISCRIMINATOR, derive_seed(cfg.seed, "init.disc")).to(device)
    if extractor is None:
        extractor = build_extractor(cfg.feature_backend, cfg.inception_weights_path,
                                    cfg.allow_toy_fallback, seed=cfg.seed, device=cfg.device)
    return TrainState(
        refiner=refiner,
        disc=disc,
        buffer=HistoryBuffer(cfg.history_capacity, seed=derive_seed(cfg.seed, "buffer")),
        cfg=cfg,
        extractor=extractor,
        refiner_optimizer=make_optimizer(refiner.parameters(), cfg.optimizer, cfg.refiner_lr),
        disc_optimizer=make_optimizer(disc.parameters(), cfg.optimizer, cfg.disc_lr),
    )


def image_stream(images: ImageSource, batch_size: int, seed: int,
                 device: Union[str, torch.device] = "cpu") -> Iterator[torch.Tensor]:
    """Infinite seeded stream of [B, 3, H, W] tensors."""
    if isinstance(images, ImageDataset):
        images = images.images
    if isinstance(images, ImageBatch):
        images = images.to_tensor()
    batches = batch_iter(images, batch_size, seed)
    return (batch.to(device) for batch in batches)


def _check_finite(loss: torch.Tensor, phase: str, step: int) -> float:
    value = float(loss.detach())
    if not torch.isfinite(loss.detach()):
        logger.error("Non-finite %s loss (%s) at step %d", phase, value, step)
        raise NonFiniteLossError(phase, step, value)
    return value


def _progress(steps: int, desc: str, cfg: TrainConfig):
    return tqdm(range(steps), desc=desc, disable=not cfg.show_progress, leave=False)


def pretrain_refiner(state: TrainState, synthetic_stream: Iterator[torch.Tensor],
                     steps: int) -> TrainState:
    """
    Teach the refiner to reproduce its input.

    Uses the perceptual loss against the input itself; with
    ``skip_perceptual_pretrain`` the per-pixel mean of the self-regularization
    L1 is used instead. The discriminator is untouched.
    """
    if steps < 0:
        raise ValueError("steps must be >= 0")
    cfg = state.cfg
    set_requires_grad(state.disc, False)
    for index in _progress(steps, "refiner pretrain", cfg):
        x = next(synthetic_stream)
        refined = refiner_forward(state.refiner, x)
        if cfg.skip_perceptual_pretrain:
            loss = self_reg_loss(refined, x) / x[0].numel()
        else:
            loss = perceptual_loss(refined, x, state.extractor, cfg.perceptual_layer)
        value = _check_finite(loss, "refiner_pretrain", index)
        state.refiner_optimizer.zero_grad()
        loss.backward()
        state.refiner_optimizer.step()
        state.pretrain_losses["refiner"].append(value)
    set_requires_grad(state.disc, True)
    if steps:
        logger.info("Refiner pretraining: %d steps, final loss %.6f", steps,
                    state.pretrain_losses["refiner"][-1])
    return state


def _disc_probabilities(disc: DiscriminatorNet, refined: torch.Tensor,
                        real: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
    return disc_prob_real(disc_forward(disc, refined)), disc_prob_real(disc_forward(disc, real))


def pretrain_discriminator(state: TrainState, synthetic_stream: Iterator[torch.Tensor],
                           real_stream: Iterator[torch.Tensor], steps: int) -> TrainState:
    """
    Train the discriminator against the current, frozen refiner.
    """
    if steps < 0:
        raise ValueError("steps must be >= 0")
    for index in _progress(steps, "discriminator pretrain", state.cfg):
        with torch.no_grad():
            refined = refiner_forward(state.refiner, next(synthetic_stream))
        p_refined, p_real = _disc_probabilities(state.disc, refined, next(real_stream))
        loss = disc_loss(p_refined, p_real)
        value = _check_finite(loss, "disc_pretrain", index)
        state.disc_optimizer.zero_grad()
        loss.backward()
        state.disc_optimizer.step()
        state.pretrain_losses["disc"].append(value)
    if steps:
        logger.info("Discriminator pretraining: %d steps, final loss %.6f", steps,
                    state.pretrain_losses["disc"][-1])
    return state


def refiner_update(state: TrainState, x: torch.Tensor) -> Tuple[float, float]:
    """
    One refiner update on alpha * adversarial + beta * self-regularization,
    with the discriminator frozen.

    Returns:
        (refiner loss, adversarial loss)
    """
    cfg = state.cfg
    set_requires_grad(state.disc, False)
    try:
        refined = refiner_forward(state.refiner, x)
        adversarial = adv_loss(disc_prob_real(disc_forward(state.disc, refined)))
        loss = refiner_loss(adversarial, self_reg_loss(refined, x), cfg.alpha, cfg.beta)
        value = _check_finite(loss, "refiner", state.step + 1)
        state.refiner_optimizer.zero_grad()
        loss.backward()
        state.refiner_optimizer.step()
    finally:
        set_requires_grad(state.disc, True)
    state.refiner_updates += 1
    return value, float(adversarial.detach())


def disc_update(state: TrainState, refined: torch.Tensor, real: torch.Tensor) -> Tuple[float, float]:
    """
    One discriminator update on buffered-plus-fresh refined images versus real images.

    ``refined`` must carry no graph to the refiner, which therefore stays unchanged.

    Returns:
        (refined term, real term) of the discriminator loss
    """
    mixed = state.buffer.sample_mixed(refined.detach(), state.cfg.history_fraction)
    p_refined, p_real = _disc_probabilities(state.disc, mixed, real)
    refined_term, real_term = disc_loss_terms(p_refined, p_real)
    loss = refined_term + real_term
    _check_finite(loss, "disc", state.step + 1)
    state.disc_optimizer.zero_grad()
    loss.backward()
    state.disc_optimizer.step()
    state.disc_updates += 1
    return float(refined_term.detach()), float(real_term.detach())


def full_train_step(state: TrainState, synthetic_stream: Iterator[torch.Tensor],
                    real_stream: Iterator[torch.Tensor]) -> TrainState:
    """
    One adversarial step.

    ``refiner_updates_per_step`` refiner updates, then ``disc_updates_per_step``
    discriminator updates on a fresh refined batch mixed with buffered images.
    The fresh batch is pushed into the buffer afterwards and one StepLog is
    appended.
    """
    cfg = state.cfg
    for _ in range(cfg.refiner_updates_per_step):
        refiner_value, adversarial = refiner_update(state, next(synthetic_stream))

    with torch.no_grad():
        current = refiner_forward(state.refiner, next(synthetic_stream))
    for _ in range(cfg.disc_updates_per_step):
        refined_term, real_term = disc_update(state, current, next(real_stream))
    state.buffer.push(current)

    state.step += 1
    state.logs.append(StepLog(
        step=state.step,
        refiner_loss=refiner_value,
        disc_loss_real=real_term,
        disc_loss_refined=refined_term,
        adv_loss=adversarial,
    ))
    return state



def make_checkpoint(state: TrainState) -> Checkpoint:
    return Checkpoint(
        refiner_params=state.refiner.state_dict(),
        disc_params=state.disc.state_dict(),
        step=state.step,
        loss_log=list(state.logs),
        config=asdict(state.cfg),
        config_hash=config_hash(state.cfg),
    )


def evaluate_refiner(state: TrainState, synthetic: ImageBatch, real: ImageBatch,
                     with_fid: bool = False) -> Tuple[Optional[float], Optional[float]]:
    """
    SSIM (and optionally FID) of the refined evaluation images against real images.

    SSIM is skipped for images smaller than its window. FID uses the run's
    extractor, or the toy projection when the extractor is the identity.
    """
    refined = refine_batch(state.refiner, synthetic)
    value_ssim = None
    if refined.height >= WINDOW_SIZE and refined.width >= WINDOW_SIZE:
        value_ssim = dataset_ssim(refined, real, seed=derive_seed(state.cfg.seed, "pairing"))
    value_fid = None
    if with_fid:
        extractor = state.extractor
        if isinstance(extractor, IdentityExtractor):
            extractor = ToyExtractor(seed=state.cfg.seed).to(state.device)
        value_fid = fid(refined, real, extractor)
    return value_ssim, value_fid


def _images_of(source: ImageSource) -> ImageBatch:
    if isinstance(source, ImageDataset):
        return source.images
    if isinstance(source, torch.Tensor):
        return ImageBatch.from_tensor(source)
    return source


def _check_dims(images: ImageBatch, cfg: TrainConfig, name: str):
    if (images.height, images.width) != (cfg.image_height, cfg.image_width):
        raise DimensionError(
            f"{name} images are {images.height}x{images.width}, "
            f"config expects {cfg.image_height}x{cfg.image_width}"
        )
    if images.channels != 3:
        raise DimensionError(f"{name} images must have 3 channels, got {images.channels}")


def run_training(cfg: TrainConfig, synthetic: ImageSource, real: ImageSource,
                 output_dir: Union[str, Path],
                 extractor: Optional[FeatureMapExtractor] = None) -> TrainResult:
    """
    Run the full recipe and write checkpoints, the loss CSV and the selection record.

    ``ckpt_0.bin`` holds the pretrained networks before any adversarial step.
    Later checkpoints are written every ``ckpt_every`` steps and at the last
    step. The best step is chosen among checkpointed steps.

    Args:
        cfg: Training configuration
        synthetic: Synthetic training images
        real: Real training images
        output_dir: Run directory
        extractor: Optional pre-built feature extractor

    Returns:
        TrainResult

    Raises:
        NonFiniteLossError: after logging, keeping every checkpoint written so far
    """
    validate_config(cfg)
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    synthetic_images, real_images = _images_of(synthetic), _images_of(real)
    _check_dims(synthetic_images, cfg, "Synthetic")
    _check_dims(real_images, cfg, "Real")

    seed_everything(cfg.seed)
    state = build_state(cfg, extractor)
    device = state.device
    synthetic_stream = image_stream(synthetic_images, cfg.batch_size,
                                    derive_seed(cfg.seed, "data.synthetic"), device)
    real_stream = image_stream(real_images, cfg.batch_size, derive_seed(cfg.seed, "data.real"), device)
    eval_synthetic = synthetic_images[:cfg.eval_images]
    eval_real = real_images[:cfg.eval_images]

    logger.info("Pretraining refiner for %d steps (%s)", cfg.refiner_pretrain_steps,
                "self-regularization" if cfg.skip_perceptual_pretrain else "perceptual loss")
    pretrain_refiner(state, synthetic_stream, cfg.refiner_pretrain_steps)
    logger.info("Pretraining discriminator for %d steps", cfg.disc_pretrain_steps)
    pretrain_discriminator(state, synthetic_stream, real_stream, cfg.disc_pretrain_steps)

    checkpoints = {0: save_checkpoint(make_checkpoint(state), checkpoint_path(output_dir, 0))}
    loss_log_path = output_dir / LOSS_LOG_NAME

    logger.info("Adversarial training for %d steps", cfg.full_train_steps)
    try:
        for _ in _progress(cfg.full_train_steps, "adversarial", cfg):
            full_train_step(state, synthetic_stream, real_stream)
            log = state.logs[-1]
            if state.step % cfg.eval_every == 0:
                log.ssim_vs_real, log.fid_vs_real = evaluate_refiner(
                    state, eval_synthetic, eval_real, with_fid=cfg.eval_fid
                )
                logger.info(
                    "step %d: refiner %.4f, disc real %.4f, disc refined %.4f, ssim %s, fid %s",
                    log.step, log.refiner_loss, log.disc_loss_real, log.disc_loss_refined,
                    log.ssim_vs_real, log.fid_vs_real,
                )
            if state.step % cfg.ckpt_every == 0 or state.step == cfg.full_train_steps:
                checkpoints[state.step] = save_checkpoint(
                    make_checkpoint(state), checkpoint_path(output_dir, state.step)
                )
    except NonFiniteLossError:
        write_loss_log(state.logs, loss_log_path)
        logger.error("Training aborted; last good checkpoint is %s", checkpoints[max(checkpoints)])
        raise

    write_loss_log(state.logs, loss_log_path)
    best_step = 0
    if state.logs:
        candidates = [i for i, log in enumerate(state.logs) if log.step in checkpoints]
        best_step = state.logs[select_best_checkpoint(state.logs, cfg.smooth_window, candidates)].step
    selection = {
        "best_step": best_step,
        "checkpoint": checkpoints[best_step].name,
        "smooth_window": cfg.smooth_window,
    }
    (output_dir / SELECTION_NAME).write_text(json.dumps(selection, indent=2) + "\n", encoding="utf-8")
    logger.info("Selected checkpoint at step %d", best_step)

    return TrainResult(
        final=make_checkpoint(state),
        best_step=best_step,
        best_checkpoint=checkpoints[best_step],
        checkpoints=checkpoints,
        logs=state.logs,
        loss_log_path=loss_log_path,
    )


def load_refiner(ckpt: Checkpoint, cfg: Optional[TrainConfig] = None,
                 device: Union[str, torch.device] = "cpu") -> RefinerNet:
    """
    Rebuild the refiner stored in a checkpoint.

    The architecture comes from ``cfg`` or, when None, from the checkpoint's config record.
    """
    if cfg is None:
        record = ckpt.config or {}
        channels = record.get("refiner_channels", 64)
        blocks = record.get("refiner_blocks", 5)
    else:
        channels, blocks = cfg.refiner_channels, cfg.refiner_blocks
    refiner = RefinerNet(channels=channels, num_blocks=blocks)
    refiner.load_state_dict(ckpt.refiner_params)
    return refiner.to(device).eval()
