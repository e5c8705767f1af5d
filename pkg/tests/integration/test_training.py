"""
Integration tests for refiner training.

These tests run the full recipe on small toy scenes with tiny step counts.
"""
import json
import math
import pytest
from pathlib import Path
import sys

import numpy as np
import torch

sys.path.insert(0, str(Path(__file__).parent.parent.parent))

from src.core import (
    DimensionError,
    NonFiniteLossError,
    TrainConfig,
    derive_seed,
    find_checkpoints,
    load_checkpoint,
    load_config
)
from src.data import ToySceneSpec, make_toy_dataset
from src.losses import EPSILON, build_extractor
from src.metrics import fid
from src.networks import disc_forward, disc_prob_real, parameter_digest, refine_batch, refiner_forward
from src.training import (
    build_state,
    disc_update,
    full_train_step,
    image_stream,
    load_refiner,
    moving_average,
    pretrain_discriminator,
    pretrain_refiner,
    read_loss_log,
    refiner_update,
    run_training
)
import src.training.trainer as trainer


def tiny_config(**overrides) -> TrainConfig:
    """A config that trains in seconds on 32x64 toy scenes."""
    values = dict(
        alpha=1.0,
        beta=0.005,
        optimizer="adam",
        refiner_lr=1e-3,
        disc_lr=1e-3,
        refiner_pretrain_steps=3,
        disc_pretrain_steps=2,
        full_train_steps=4,
        batch_size=4,
        history_capacity=16,
        image_height=32,
        image_width=64,
        refiner_channels=8,
        refiner_blocks=1,
        eval_every=2,
        ckpt_every=2,
        smooth_window=3,
        eval_fid=True,
        eval_images=8,
        feature_backend="toy_deterministic",
        show_progress=False,
    )
    values.update(overrides)
    return TrainConfig(**values)


@pytest.fixture(scope="module")
def toy(toy_factory):
    return toy_factory(num_images=12, height=32, width=64, seed=2)


@pytest.fixture(scope="module")
def toy_config():
    return load_config(str(Path(__file__).parent.parent.parent / "configs" / "toy.cfg"))


@pytest.fixture(scope="module")
def toy_scenes(toy_config):
    return make_toy_dataset(ToySceneSpec(num_images=32, height=toy_config.train.image_height,
                                         width=toy_config.train.image_width))


def streams(state, toy):
    cfg = state.cfg
    synthetic = image_stream(toy.synthetic, cfg.batch_size, derive_seed(cfg.seed, "data.synthetic"))
    real = image_stream(toy.real, cfg.batch_size, derive_seed(cfg.seed, "data.real"))
    return synthetic, real


@pytest.mark.integration
class TestTrainingSteps:
    """Test individual training phases."""

    def test_update_counts(self, toy):
        """Test each full step makes two refiner updates per discriminator update."""
        state = build_state(tiny_config())
        synthetic, real = streams(state, toy)
        for _ in range(3):
            full_train_step(state, synthetic, real)
        assert state.step == 3
        assert state.refiner_updates == 6
        assert state.disc_updates == 3
        assert [log.step for log in state.logs] == [1, 2, 3]

    def test_refiner_update_freezes_discriminator(self, toy):
        """Test a refiner update leaves the discriminator bit-identical."""
        state = build_state(tiny_config())
        synthetic, _ = streams(state, toy)
        disc_before = parameter_digest(state.disc)
        refiner_before = parameter_digest(state.refiner)
        refiner_update(state, next(synthetic))
        assert parameter_digest(state.disc) == disc_before
        assert parameter_digest(state.refiner) != refiner_before
        assert all(p.requires_grad for p in state.disc.parameters())

    def test_disc_update_freezes_refiner(self, toy):
        """Test a discriminator update leaves the refiner bit-identical."""
        state = build_state(tiny_config())
        synthetic, real = streams(state, toy)
        with torch.no_grad():
            refined = state.refiner(next(synthetic))
        refiner_before = parameter_digest(state.refiner)
        disc_before = parameter_digest(state.disc)
        disc_update(state, refined, next(real))
        assert parameter_digest(state.refiner) == refiner_before
        assert parameter_digest(state.disc) != disc_before

    def test_pretraining_touches_one_network_each(self, toy):
        """Test refiner pretraining keeps the discriminator and vice versa."""
        state = build_state(tiny_config())
        synthetic, real = streams(state, toy)
        disc_before = parameter_digest(state.disc)
        pretrain_refiner(state, synthetic, 2)
        assert parameter_digest(state.disc) == disc_before
        assert len(state.pretrain_losses["refiner"]) == 2

        refiner_before = parameter_digest(state.refiner)
        pretrain_discriminator(state, synthetic, real, 2)
        assert parameter_digest(state.refiner) == refiner_before
        assert parameter_digest(state.disc) != disc_before

    def test_zero_pretrain_steps(self, toy):
        """Test zero steps leave the refiner untouched."""
        state = build_state(tiny_config())
        synthetic, _ = streams(state, toy)
        before = parameter_digest(state.refiner)
        pretrain_refiner(state, synthetic, 0)
        assert parameter_digest(state.refiner) == before

    def test_buffer_fills_with_fresh_batches(self, toy):
        """Test every step pushes one batch until the buffer is full."""
        state = build_state(tiny_config(history_capacity=10))
        synthetic, real = streams(state, toy)
        full_train_step(state, synthetic, real)
        assert len(state.buffer) == 4
        for _ in range(3):
            full_train_step(state, synthetic, real)
        assert len(state.buffer) == 10

    def test_build_state_is_seeded(self):
        """Test equal seeds build equal networks."""
        first, second = build_state(tiny_config()), build_state(tiny_config())
        assert parameter_digest(first.refiner) == parameter_digest(second.refiner)
        assert parameter_digest(first.disc) == parameter_digest(second.disc)
        assert parameter_digest(build_state(tiny_config(seed=1)).refiner) != parameter_digest(first.refiner)


@pytest.mark.integration
class TestRunTraining:
    """Test run_training end to end."""

    def test_outputs(self, toy, tmp_path):
        """Test checkpoints, loss log and selection record."""
        result = run_training(tiny_config(), toy.synthetic, toy.real, tmp_path)
        assert sorted(find_checkpoints(tmp_path)) == [0, 2, 4]
        assert result.final.step == 4

        lines = (tmp_path / "loss_log.csv").read_text().splitlines()
        assert lines[0] == "step,refiner_loss,disc_loss_real,disc_loss_refined,ssim,fid"
        logs = read_loss_log(tmp_path / "loss_log.csv")
        assert [log.step for log in logs] == [1, 2, 3, 4]
        assert logs[0].ssim_vs_real is None
        assert logs[1].ssim_vs_real is not None and logs[1].fid_vs_real is not None
        assert -1.0 <= logs[1].ssim_vs_real <= 1.0
        assert logs[1].fid_vs_real >= 0.0

        selection = json.loads((tmp_path / "selection.json").read_text())
        assert selection["best_step"] in (2, 4)
        assert selection["best_step"] == result.best_step
        assert result.best_checkpoint.name == selection["checkpoint"]

    def test_initial_checkpoint_is_pretrained_state(self, toy, tmp_path):
        """Test ckpt_0 holds the networks before any adversarial step."""
        run_training(tiny_config(full_train_steps=0), toy.synthetic, toy.real, tmp_path / "a")
        run_training(tiny_config(), toy.synthetic, toy.real, tmp_path / "b")
        first = load_checkpoint(tmp_path / "a" / "ckpt_0.bin")
        second = load_checkpoint(tmp_path / "b" / "ckpt_0.bin")
        assert first.step == 0 and first.loss_log == []
        for name, tensor in first.refiner_params.items():
            assert torch.allclose(second.refiner_params[name], tensor)

    def test_deterministic(self, toy, tmp_path):
        """Test equal configs reproduce the loss log and final parameters."""
        first = run_training(tiny_config(), toy.synthetic, toy.real, tmp_path / "a")
        second = run_training(tiny_config(), toy.synthetic, toy.real, tmp_path / "b")
        assert first.logs == second.logs
        for name, tensor in first.final.refiner_params.items():
            assert torch.equal(second.final.refiner_params[name], tensor)
        for name, tensor in first.final.disc_params.items():
            assert torch.equal(second.final.disc_params[name], tensor)
        assert (tmp_path / "a" / "loss_log.csv").read_bytes() == (tmp_path / "b" / "loss_log.csv").read_bytes()

    def test_checkpoint_reloads_refiner(self, toy, tmp_path):
        """Test the refiner rebuilt from the final checkpoint refines like the trained one."""
        result = run_training(tiny_config(), toy.synthetic, toy.real, tmp_path)
        refiner = load_refiner(load_checkpoint(result.checkpoints[4]))
        rebuilt = load_refiner(result.final)
        images = toy.synthetic.images[:3]
        assert np.allclose(refine_batch(refiner, images).data, refine_batch(rebuilt, images).data)

    def test_self_regularization_pretraining(self, toy, tmp_path):
        """Test the arm without perceptual pretraining runs with the identity backend."""
        cfg = tiny_config(skip_perceptual_pretrain=True, feature_backend="identity", eval_fid=True)
        result = run_training(cfg, toy.synthetic, toy.real, tmp_path)
        assert result.logs[-1].fid_vs_real is not None

    def test_dimension_mismatch(self, toy, tmp_path):
        """Test images of another size than the config raise DimensionError."""
        with pytest.raises(DimensionError, match="32x64"):
            run_training(tiny_config(image_height=80, image_width=160), toy.synthetic, toy.real, tmp_path)

    def test_non_finite_loss_aborts(self, toy, tmp_path, monkeypatch):
        """Test a NaN loss stops training but keeps the log and ckpt_0."""
        monkeypatch.setattr(trainer, "adv_loss",
                            lambda p: torch.tensor(float("nan"), requires_grad=True))
        with pytest.raises(NonFiniteLossError) as excinfo:
            run_training(tiny_config(), toy.synthetic, toy.real, tmp_path)
        assert excinfo.value.phase == "refiner"
        assert (tmp_path / "ckpt_0.bin").is_file()
        assert read_loss_log(tmp_path / "loss_log.csv") == []

    @pytest.mark.slow
    def test_toy_config_run(self, toy_config, toy_scenes, tmp_path):
        """Test the shipped toy config trains to finite metrics and refines toward the real domain."""
        cfg = toy_config.train
        result = run_training(cfg, toy_scenes.synthetic, toy_scenes.real, tmp_path)
        evaluated = [log for log in result.logs if log.fid_vs_real is not None]
        assert evaluated
        assert all(np.isfinite(log.fid_vs_real) for log in evaluated)
        assert all(np.isfinite(log.ssim_vs_real) for log in evaluated)

        ceiling = -math.log(EPSILON)
        smoothed = moving_average([log.adv_loss for log in result.logs], 51)
        assert float(smoothed.max()) < ceiling

        refiner = load_refiner(load_checkpoint(result.best_checkpoint))
        refined = refine_batch(refiner, toy_scenes.synthetic.images)
        extractor = build_extractor(cfg.feature_backend, seed=cfg.seed)
        real = toy_scenes.real.images
        assert fid(refined, real, extractor) < fid(toy_scenes.synthetic.images, real, extractor)


@pytest.mark.integration
@pytest.mark.slow
class TestToyPretraining:
    """Test the pretraining phases with the shipped toy config."""

    def test_refiner_pretraining_approaches_identity(self, toy_config, toy_scenes):
        """Test refiner pretraining shrinks the mean distance between input and output."""
        state = build_state(toy_config.train)
        synthetic, _ = streams(state, toy_scenes)
        held_out = next(image_stream(toy_scenes.synthetic, 16, seed=99))
        with torch.no_grad():
            before = float((refiner_forward(state.refiner, held_out) - held_out).abs().mean())
        pretrain_refiner(state, synthetic, 200)
        with torch.no_grad():
            after = float((refiner_forward(state.refiner, held_out) - held_out).abs().mean())
        assert after < 0.5 * before

    def test_discriminator_pretraining_learns(self, toy_config, toy_scenes):
        """Test discriminator pretraining lowers its loss or separates real from refined."""
        cfg = toy_config.train
        state = build_state(cfg)
        synthetic, real = streams(state, toy_scenes)
        pretrain_refiner(state, synthetic, cfg.refiner_pretrain_steps)
        pretrain_discriminator(state, synthetic, real, cfg.disc_pretrain_steps)
        losses = state.pretrain_losses["disc"]
        assert len(losses) == cfg.disc_pretrain_steps

        held_synthetic = next(image_stream(toy_scenes.synthetic, 16, seed=99))
        held_real = next(image_stream(toy_scenes.real, 16, seed=98))
        with torch.no_grad():
            refined = refiner_forward(state.refiner, held_synthetic)
            p_refined = float(disc_prob_real(disc_forward(state.disc, refined)).mean())
            p_real = float(disc_prob_real(disc_forward(state.disc, held_real)).mean())
        assert np.mean(losses[-10:]) < np.mean(losses[:10]) or p_real > p_refined
