"""
Integration tests for the command-line interface.

These tests drive ``main`` the way the console script does and check exit
codes, printed results and the files each subcommand leaves behind.
"""
import json
import pytest
from pathlib import Path
import sys

from PIL import Image

sys.path.insert(0, str(Path(__file__).parent.parent.parent))

from src.cli import main

TOY_CONFIG = str(Path(__file__).parent.parent.parent / "configs" / "toy.cfg")

# Shrinks configs/toy.cfg to a few steps
FAST = [
    "-c", TOY_CONFIG,
    "-o", "refiner_pretrain_steps=3",
    "-o", "disc_pretrain_steps=2",
    "-o", "full_train_steps=4",
    "-o", "batch_size=4",
    "-o", "ckpt_every=2",
    "-o", "eval_every=2",
    "-o", "eval_images=8",
    "-o", "refiner_channels=8",
    "-o", "refiner_blocks=1",
    "-o", "seg.steps=2",
    "-o", "seg.batch_size=4",
    "-o", "seg.base_channels=4",
    "-o", "seg.test_size=4",
    "-o", "seg.mask_samples=1",
]


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """Toy datasets and one trained run shared by the tests below."""
    root = tmp_path_factory.mktemp("cli")
    assert main(["make-toy", str(root / "data"), "--num-images", "12"]) == 0
    assert main(["train", *FAST, "-o", "alpha=50", "--synthetic", str(root / "data" / "synthetic"),
                 "--real", str(root / "data" / "real"), "--output-dir", str(root / "run")]) == 0
    return root


@pytest.mark.integration
class TestCommands:
    """Test successful subcommands."""

    def test_make_toy_layout(self, workspace):
        """Test make-toy writes images and labels for both domains."""
        for domain in ("synthetic", "real"):
            assert len(list((workspace / "data" / domain / "images").glob("*.png"))) == 12
            assert len(list((workspace / "data" / domain / "labels").glob("*.png"))) == 12

    def test_train_outputs(self, workspace):
        """Test train leaves checkpoints, logs and a manifest."""
        run = workspace / "run"
        for name in ("ckpt_0.bin", "ckpt_2.bin", "ckpt_4.bin", "loss_log.csv",
                     "selection.json", "run.log", "run_manifest.json"):
            assert (run / name).is_file(), name
        manifest = json.loads((run / "run_manifest.json").read_text())
        assert manifest["command"] == "train"
        assert manifest["config"]["train"]["full_train_steps"] == 4
        assert manifest["config"]["train"]["alpha"] == 50.0
        assert len(manifest["config_hash"]) == 64

    def test_select_ckpt(self, workspace, capsys):
        """Test select-ckpt agrees with the selection recorded by train."""
        assert main(["select-ckpt", str(workspace / "run"), "--smooth-window", "5"]) == 0
        out = capsys.readouterr().out
        selection = json.loads((workspace / "run" / "selection.json").read_text())
        assert f"best_step = {selection['best_step']}" in out
        assert selection["checkpoint"] in out

    def test_refine_copies_labels(self, workspace, tmp_path):
        """Test refined images keep their names and labels are copied unchanged."""
        source = workspace / "data" / "synthetic"
        output = tmp_path / "refined"
        assert main(["refine", *FAST, str(workspace / "run" / "ckpt_4.bin"), str(source), str(output)]) == 0
        names = sorted(p.name for p in (source / "images").glob("*.png"))
        assert sorted(p.name for p in (output / "images").glob("*.png")) == names
        for name in names:
            assert (output / "labels" / name).read_bytes() == (source / "labels" / name).read_bytes()

    def test_refine_uses_checkpoint_size(self, workspace, tmp_path):
        """Test refine without a config works at the size the checkpoint was trained on."""
        source = workspace / "data" / "synthetic"
        output = tmp_path / "refined"
        assert main(["refine", str(workspace / "run" / "ckpt_4.bin"), str(source), str(output)]) == 0
        for path in sorted((source / "images").glob("*.png")):
            with Image.open(output / "images" / path.name) as refined, Image.open(path) as original:
                assert refined.size == original.size == (64, 32)
            assert (output / "labels" / path.name).read_bytes() == \
                (source / "labels" / path.name).read_bytes()

    def test_train_rerun_reproduces_log(self, workspace, tmp_path):
        """Test training again with the same arguments writes a byte-identical loss log."""
        data = workspace / "data"
        assert main(["train", *FAST, "-o", "alpha=50", "--synthetic", str(data / "synthetic"),
                     "--real", str(data / "real"), "--output-dir", str(tmp_path / "run")]) == 0
        first = (workspace / "run" / "loss_log.csv").read_bytes()
        assert (tmp_path / "run" / "loss_log.csv").read_bytes() == first
        assert (tmp_path / "run" / "selection.json").read_bytes() == \
            (workspace / "run" / "selection.json").read_bytes()

    def test_eval_ssim_of_identical_sets(self, workspace, tmp_path, capsys):
        """Test SSIM of a set with itself prints 1.0000 and is recorded."""
        real = str(workspace / "data" / "real")
        assert main(["eval-ssim", *FAST, real, real, "--output-dir", str(tmp_path)]) == 0
        assert "ssim = 1.0000" in capsys.readouterr().out
        record = json.loads((tmp_path / "metrics.jsonl").read_text().splitlines()[-1])
        assert record["kind"] == "ssim"
        assert record["value"] == pytest.approx(1.0)

    def test_eval_fid_of_identical_sets(self, workspace, tmp_path, capsys):
        """Test FID of a set with itself prints 0.0000."""
        real = str(workspace / "data" / "real")
        assert main(["eval-fid", *FAST, real, real, "--backend", "toy_deterministic",
                     "--output-dir", str(tmp_path)]) == 0
        assert "fid = 0.0000" in capsys.readouterr().out

    def test_eval_fid_orders_domains(self, workspace, tmp_path, capsys):
        """Test synthetic vs real scores above zero."""
        data = workspace / "data"
        assert main(["eval-fid", *FAST, str(data / "synthetic"), str(data / "real"),
                     "--output-dir", str(tmp_path)]) == 0
        value = float(capsys.readouterr().out.strip().split("=")[1])
        assert value > 0.0

    def test_seg_matrix_with_checkpoint(self, workspace, tmp_path, capsys):
        """Test seg-matrix refines the synthetic set first and reports a 3x3 matrix."""
        data = workspace / "data"
        output = tmp_path / "seg"
        assert main(["seg-matrix", *FAST, "--synthetic", str(data / "synthetic"), "--real", str(data / "real"),
                     "--checkpoint", str(workspace / "run" / "ckpt_4.bin"), "--output-dir", str(output)]) == 0
        assert "mIoU" in capsys.readouterr().out
        header = (output / "matrix_report.csv").read_text().splitlines()[0]
        assert header == "block,train,synthetic,refined,real"
        assert (output / "refined" / "labels").is_dir()
        assert (output / "splits.json").is_file()

    def test_seg_matrix_rerun_reproduces_report(self, workspace, tmp_path):
        """Test seg-matrix run twice writes byte-identical matrix reports."""
        data = workspace / "data"
        reports = []
        for name in ("first", "second"):
            output = tmp_path / name
            assert main(["seg-matrix", *FAST, "--synthetic", str(data / "synthetic"),
                         "--real", str(data / "real"), "--checkpoint", str(workspace / "run" / "ckpt_4.bin"),
                         "--output-dir", str(output)]) == 0
            reports.append((output / "matrix_report.csv").read_bytes())
        assert reports[0] == reports[1]


@pytest.mark.integration
class TestErrors:
    """Test exit codes for failures."""

    def test_no_command(self):
        """Test running without a subcommand exits with 2."""
        assert main([]) == 2

    def test_missing_config_file(self, tmp_path, capsys):
        """Test a missing config file is a user error."""
        code = main(["train", "-c", str(tmp_path / "missing.cfg"), "--output-dir", str(tmp_path)])
        assert code == 2
        assert "Error:" in capsys.readouterr().err

    def test_unknown_override(self, tmp_path, capsys):
        """Test an unknown override key is a user error."""
        code = main(["train", "-o", "gamma=1", "--output-dir", str(tmp_path)])
        assert code == 2
        assert "gamma" in capsys.readouterr().err

    def test_missing_dataset_root(self, tmp_path, capsys):
        """Test training without data roots is a user error."""
        code = main(["train", "--output-dir", str(tmp_path / "run")])
        assert code == 2
        assert "data.synthetic_root is not set" in capsys.readouterr().err

    def test_missing_dataset_directory(self, tmp_path, capsys):
        """Test evaluating a nonexistent directory is a user error."""
        missing = str(tmp_path / "nowhere")
        assert main(["eval-ssim", missing, missing, "--output-dir", str(tmp_path)]) == 2
        assert "Dataset directory not found" in capsys.readouterr().err

    def test_corrupt_checkpoint(self, workspace, tmp_path, capsys):
        """Test refining with a corrupt checkpoint is a user error."""
        broken = tmp_path / "ckpt_9.bin"
        broken.write_bytes(b"S2RC\x01garbage")
        code = main(["refine", str(broken), str(workspace / "data" / "synthetic"), str(tmp_path / "out")])
        assert code == 2
        assert "truncated" in capsys.readouterr().err

    def test_refine_size_disagrees_with_checkpoint(self, workspace, tmp_path, capsys):
        """Test a configured image size other than the checkpoint's is a user error."""
        code = main(["refine", *FAST, "-o", "image_height=80", "-o", "image_width=160",
                     str(workspace / "run" / "ckpt_4.bin"), str(workspace / "data" / "synthetic"),
                     str(tmp_path / "out")])
        assert code == 2
        assert "32x64" in capsys.readouterr().err

    def test_select_ckpt_without_log(self, tmp_path):
        """Test select-ckpt on an empty directory is a user error."""
        assert main(["select-ckpt", str(tmp_path)]) == 2
