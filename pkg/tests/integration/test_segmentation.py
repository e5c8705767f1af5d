"""
Integration tests for the segmentation train/test matrix.
"""
import json
import logging
import pytest
from pathlib import Path
import sys

import numpy as np

sys.path.insert(0, str(Path(__file__).parent.parent.parent))

from src.core import DatasetError, ImageType, LabelMap, SegConfig, load_config
from src.segmentation import (
    MatrixReport,
    check_diagonal_dominance,
    eval_seg,
    run_matrix,
    split_indices,
    train_seg
)


def tiny_seg_config(**overrides) -> SegConfig:
    values = dict(steps=5, batch_size=4, lr=1e-3, base_channels=4, num_classes=4,
                  test_size=4, mask_samples=1, seed=0)
    values.update(overrides)
    return SegConfig(**values)


@pytest.fixture(scope="module")
def toy(toy_factory):
    return toy_factory(num_images=12, height=16, width=32, seed=9)


@pytest.fixture(scope="module")
def datasets(toy):
    refined = toy.synthetic.with_images(toy.real.images)
    return {ImageType.SYNTHETIC: toy.synthetic, ImageType.REFINED: refined, ImageType.REAL: toy.real}


@pytest.mark.integration
class TestRunMatrix:
    """Test run_matrix."""

    def test_matrix_outputs(self, datasets, tmp_path):
        """Test the 3x3 report, CSV, split manifest and masks."""
        report = run_matrix(datasets, tiny_seg_config(), tmp_path)
        assert report.types == [ImageType.SYNTHETIC, ImageType.REFINED, ImageType.REAL]
        assert report.miou.shape == (3, 3)
        assert np.all((report.miou >= 0.0) & (report.miou <= 1.0))
        assert np.all((report.pixel_acc >= 0.0) & (report.pixel_acc <= 1.0))
        assert report.n_test == 4

        csv_lines = (tmp_path / "matrix_report.csv").read_text().splitlines()
        assert csv_lines[0] == "block,train,synthetic,refined,real"
        assert len(csv_lines) == 7

        splits = json.loads((tmp_path / "splits.json").read_text())
        assert len(splits["synthetic"]["test"]) == 4
        assert splits["synthetic"] == splits["refined"]
        assert not set(splits["real"]["train"]) & set(splits["real"]["test"])
        assert splits["real_split"] == "synthetic"
        assert (tmp_path / "masks" / "refined_on_real").is_dir()
        assert len(list((tmp_path / "masks" / "synthetic_on_synthetic").glob("*.png"))) == 1

    def test_real_test_scenes_unseen_in_training(self, datasets, tmp_path):
        """Test no real test scene is trained on through its synthetic or refined twin."""
        run_matrix(datasets, tiny_seg_config(steps=1, mask_samples=0), tmp_path)
        splits = json.loads((tmp_path / "splits.json").read_text())
        real_test = set(splits["real"]["test"])
        assert splits["real"] == splits["synthetic"]
        for image_type in ("synthetic", "refined"):
            assert not set(splits[image_type]["train"]) & real_test

    def test_unaligned_real_split_drawn_independently(self, toy, tmp_path):
        """Test a real set with other scenes gets its own split."""
        real = toy.real.subset(range(10))
        run_matrix({"synthetic": toy.synthetic, "real": real},
                   tiny_seg_config(steps=1, mask_samples=0), tmp_path)
        splits = json.loads((tmp_path / "splits.json").read_text())
        assert splits["real_split"] == "independent"
        assert len(splits["real"]["train"]) + len(splits["real"]["test"]) == 10

    def test_deterministic(self, datasets, tmp_path):
        """Test equal inputs and config give a byte-identical CSV."""
        run_matrix(datasets, tiny_seg_config(), tmp_path / "a")
        run_matrix(datasets, tiny_seg_config(), tmp_path / "b")
        first = (tmp_path / "a" / "matrix_report.csv").read_text()
        assert first == (tmp_path / "b" / "matrix_report.csv").read_text()

    def test_without_refined(self, toy, caplog):
        """Test a missing refined set yields a 2x2 matrix and a warning."""
        with caplog.at_level(logging.WARNING):
            report = run_matrix({"synthetic": toy.synthetic, "real": toy.real},
                                tiny_seg_config(steps=1, mask_samples=0))
        assert report.types == [ImageType.SYNTHETIC, ImageType.REAL]
        assert "No refined dataset" in caplog.text

    def test_requires_real(self, toy):
        """Test the real set is required."""
        with pytest.raises(DatasetError, match="real"):
            run_matrix({"synthetic": toy.synthetic}, tiny_seg_config())

    def test_refined_labels_must_match(self, toy):
        """Test refined labels differing from the synthetic labels are rejected."""
        labels = toy.synthetic.labels.data.copy()
        labels[0] = (labels[0] + 1) % 4
        refined = toy.synthetic.with_images(toy.real.images)
        refined.labels = LabelMap(labels, 4)
        with pytest.raises(DatasetError, match="identical"):
            run_matrix({"synthetic": toy.synthetic, "refined": refined, "real": toy.real},
                       tiny_seg_config())


@pytest.mark.integration
class TestSegmentationParts:
    """Test training, evaluation and splitting."""

    def test_train_and_eval(self, toy):
        """Test a trained network scores within [0, 1]."""
        net = train_seg(toy.synthetic, tiny_seg_config(steps=3))
        value_miou, value_acc = eval_seg(net, toy.synthetic)
        assert 0.0 <= value_miou <= 1.0
        assert 0.0 <= value_acc <= 1.0

    def test_labels_beyond_classes(self, toy):
        """Test labels above seg.num_classes raise DatasetError."""
        with pytest.raises(DatasetError, match="num_classes"):
            train_seg(toy.synthetic, tiny_seg_config(num_classes=2))

    def test_split_is_disjoint_and_seeded(self):
        """Test the split partitions the indices reproducibly."""
        train, test = split_indices(20, 5, seed=3)
        assert len(test) == 5 and len(train) == 15
        assert not set(train) & set(test)
        assert np.array_equal(test, split_indices(20, 5, seed=3)[1])

    def test_split_capped_at_half(self, caplog):
        """Test oversized test splits shrink to half the set with a warning."""
        with caplog.at_level(logging.WARNING):
            train, test = split_indices(6, 10, seed=0)
        assert len(test) == 3 and len(train) == 3
        assert "reduced" in caplog.text


@pytest.mark.integration
class TestMatrixReport:
    """Test MatrixReport formatting."""

    def make_report(self):
        return MatrixReport(
            [ImageType.SYNTHETIC, ImageType.REAL],
            miou=[[0.8, 0.2], [0.3, 0.7]],
            pixel_acc=[[0.9, 0.4], [0.5, 0.85]],
        )

    def test_csv_layout(self):
        """Test mIoU rows at full precision, pixel accuracy in percent."""
        lines = self.make_report().to_csv().splitlines()
        assert lines == [
            "block,train,synthetic,real",
            "miou,synthetic,0.8,0.2",
            "miou,real,0.3,0.7",
            "pixel_acc_percent,synthetic,90,40",
            "pixel_acc_percent,real,50,85",
        ]

    def test_csv_round_trip(self):
        """Test a report reads back from its CSV."""
        report = self.make_report()
        loaded = MatrixReport.from_csv(report.to_csv())
        assert loaded.entry("synthetic", "real") == 0.2
        assert loaded.entry(ImageType.REAL, ImageType.REAL, "pixel_acc") == 0.85

    def test_csv_round_trip_exact(self):
        """Test pixel accuracy reloads bit for bit, including long binary fractions."""
        pixel_acc = np.array([[0.00042724609375, 1.0 / 3.0], [0.1 + 0.2, 0.9999999999999999]])
        report = MatrixReport([ImageType.SYNTHETIC, ImageType.REAL],
                              miou=[[0.8, 0.2], [0.3, 0.7]], pixel_acc=pixel_acc)
        loaded = MatrixReport.from_csv(report.to_csv())
        assert np.array_equal(loaded.pixel_acc, pixel_acc)
        assert np.array_equal(loaded.miou, report.miou)
        assert "0.042724609375" in report.to_csv()

    def test_diagonal_dominance(self):
        """Test violations are reported without raising."""
        assert check_diagonal_dominance(self.make_report()) == []
        report = MatrixReport([ImageType.SYNTHETIC, ImageType.REAL],
                              miou=[[0.5, 0.6], [0.1, 0.7]], pixel_acc=np.zeros((2, 2)))
        assert check_diagonal_dominance(report) == ["row synthetic"]

    def test_format_table(self):
        """Test the terminal table lists both types."""
        table = self.make_report().format_table("pixel_acc")
        assert "synthetic" in table and "85.0000" in table


@pytest.mark.integration
@pytest.mark.slow
class TestToyMatrix:
    """Test the matrix on toy scenes with the shipped toy config."""

    def test_domain_gap_and_refined_gain(self, toy_factory):
        """Test each type scores best on itself, and real-looking images help on real tests."""
        config = load_config(str(Path(__file__).parent.parent.parent / "configs" / "toy.cfg"))
        toy = toy_factory(num_images=32, height=32, width=64, seed=7)
        report = run_matrix({"synthetic": toy.synthetic, "real": toy.real}, config.seg)
        assert check_diagonal_dominance(report) == []

        # Synthetic labels under real images: the best a refiner could deliver
        refined = toy.synthetic.with_images(toy.real.images)
        report = run_matrix({"synthetic": toy.synthetic, "refined": refined, "real": toy.real},
                            config.seg)
        assert report.entry("refined", "real") >= report.entry("synthetic", "real")
