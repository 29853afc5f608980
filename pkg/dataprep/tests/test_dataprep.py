import numpy as np
import pytest
from PIL import Image

from dataprep import cli
from dataprep.convert import ConversionError, convert
from dataprep.format import HEADER, read_dataset
from dataprep.synth import make_synthetic, nearest_centroid_accuracy


def put_image(path, color, size=(8, 8), mode="RGB"):
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.new(mode, size, color).save(path)


@pytest.fixture
def class_folder_tree(tmp_path):
    root = tmp_path / "tree"
    for name, color in (("cats", (200, 30, 30)), ("dogs", (30, 30, 200))):
        for i in range(3):
            put_image(root / name / f"img{i}.png", color)
    return root


class TestConvertClassFolders:
    def test_record_count_and_file_size(self, class_folder_tree, tmp_path):
        out = tmp_path / "out.tinb"
        report = convert(class_folder_tree, "class_folders", 16, out)
        assert (report.records, report.num_classes, report.skipped) == (6, 2, 0)
        assert out.stat().st_size == HEADER.size + 6 * (2 + 16 * 16 * 3)

    def test_double_conversion_byte_identical(self, class_folder_tree, tmp_path):
        a, b = tmp_path / "a.tinb", tmp_path / "b.tinb"
        convert(class_folder_tree, "class_folders", 16, a)
        convert(class_folder_tree, "class_folders", 16, b)
        assert a.read_bytes() == b.read_bytes()
        assert (tmp_path / "a.tinb.names").read_text() == \
            (tmp_path / "b.tinb.names").read_text()

    def test_class_names_sorted(self, class_folder_tree, tmp_path):
        out = tmp_path / "out.tinb"
        convert(class_folder_tree, "class_folders", 16, out)
        assert (tmp_path / "out.tinb.names").read_text().splitlines() == \
            ["cats", "dogs"]

    def test_grayscale_replicated_to_rgb(self, tmp_path):
        root = tmp_path / "tree"
        put_image(root / "a" / "g.png", 100, mode="L")
        put_image(root / "b" / "c.png", (10, 20, 30))
        out = tmp_path / "out.tinb"
        convert(root, "class_folders", 16, out)
        _, pixels, _ = read_dataset(out)
        assert np.all(pixels[0, :, :, 0] == pixels[0, :, :, 1])
        assert np.all(pixels[0] == 100)

    def test_undecodable_skipped_with_count(self, class_folder_tree, tmp_path):
        (class_folder_tree / "cats" / "broken.png").write_bytes(b"not an image")
        out = tmp_path / "out.tinb"
        report = convert(class_folder_tree, "class_folders", 16, out)
        assert report.skipped == 1
        assert report.records == 6

    def test_empty_class_fatal(self, class_folder_tree, tmp_path):
        (class_folder_tree / "empty").mkdir()
        with pytest.raises(ConversionError, match="empty"):
            convert(class_folder_tree, "class_folders", 16, tmp_path / "o.tinb")

    def test_bad_resolution(self, class_folder_tree, tmp_path):
        with pytest.raises(ConversionError, match="resolution"):
            convert(class_folder_tree, "class_folders", 48, tmp_path / "o.tinb")

    def test_resize_applied(self, class_folder_tree, tmp_path):
        out = tmp_path / "out.tinb"
        convert(class_folder_tree, "class_folders", 32, out)
        _, pixels, _ = read_dataset(out)
        assert pixels.shape[1:] == (32, 32, 3)


@pytest.fixture
def tiny_imagenet_tree(tmp_path):
    root = tmp_path / "tin"
    wnids = ["n001", "n002"]
    colors = [(250, 0, 0), (0, 0, 250)]
    for w, color in zip(wnids, colors):
        for i in range(2):
            put_image(root / "train" / w / "images" / f"{w}_{i}.JPEG",
                      color, size=(64, 64))
    for i, w in enumerate(["n002", "n001", "n001"]):
        put_image(root / "val" / "images" / f"val_{i}.JPEG",
                  colors[wnids.index(w)], size=(64, 64))
    ann = "\n".join(f"val_{i}.JPEG\t{w}\t0\t0\t63\t63"
                    for i, w in enumerate(["n002", "n001", "n001"]))
    (root / "val" / "val_annotations.txt").write_text(ann + "\n")
    return root


class TestConvertTinyImagenet:
    def test_train_split(self, tiny_imagenet_tree, tmp_path):
        out = tmp_path / "train.tinb"
        report = convert(tiny_imagenet_tree, "tiny_imagenet", 64, out)
        assert (report.records, report.num_classes) == (4, 2)
        labels, _, nc = read_dataset(out)
        np.testing.assert_array_equal(labels, [0, 0, 1, 1])
        assert nc == 2

    def test_val_split_uses_annotations(self, tiny_imagenet_tree, tmp_path):
        out = tmp_path / "val.tinb"
        report = convert(tiny_imagenet_tree, "tiny_imagenet", 64, out, split="val")
        assert report.records == 3
        labels, pixels, _ = read_dataset(out)
        # records grouped by class: two n001 images then one n002
        np.testing.assert_array_equal(labels, [0, 0, 1])
        assert tuple(pixels[2, 0, 0]) == (0, 0, 250)

    def test_unknown_val_wnid_fatal(self, tiny_imagenet_tree, tmp_path):
        ann = tiny_imagenet_tree / "val" / "val_annotations.txt"
        ann.write_text(ann.read_text() + "val_9.JPEG\tn999\t0\t0\t63\t63\n")
        with pytest.raises(ConversionError, match="n999"):
            convert(tiny_imagenet_tree, "tiny_imagenet", 64,
                    tmp_path / "v.tinb", split="val")

    def test_missing_train_dir(self, tmp_path):
        with pytest.raises(ConversionError, match="train"):
            convert(tmp_path, "tiny_imagenet", 64, tmp_path / "o.tinb")


class TestSynthetic:
    def test_balanced_histogram(self, tmp_path):
        out = tmp_path / "s.tinb"
        labels, pixels = make_synthetic(10, 100, 32, seed=7, out_path=out)
        assert len(labels) == 1000
        np.testing.assert_array_equal(np.bincount(labels), [100] * 10)
        assert pixels.shape == (1000, 32, 32, 3)

    def test_same_seed_byte_identical(self, tmp_path):
        a, b = tmp_path / "a.tinb", tmp_path / "b.tinb"
        make_synthetic(4, 20, 16, seed=3, out_path=a)
        make_synthetic(4, 20, 16, seed=3, out_path=b)
        assert a.read_bytes() == b.read_bytes()

    def test_different_seed_differs(self, tmp_path):
        a, b = tmp_path / "a.tinb", tmp_path / "b.tinb"
        make_synthetic(4, 20, 16, seed=3, out_path=a)
        make_synthetic(4, 20, 16, seed=4, out_path=b)
        assert a.read_bytes() != b.read_bytes()

    def test_rejects_single_class(self, tmp_path):
        with pytest.raises(ValueError):
            make_synthetic(1, 10, 16, seed=0, out_path=tmp_path / "x.tinb")


class TestAcceptanceSecondary:
    def test_converter_contract(self, tmp_path, class_folder_tree):
        """Output parses under the primary loader with a matching class
        histogram; double conversion is byte-identical; synthetic classes
        are nearest-centroid separable above 90%."""
        densekit_data = pytest.importorskip(
            "densekit.data", reason="primary package not installed")

        out = tmp_path / "conv.tinb"
        convert(class_folder_tree, "class_folders", 16, out)
        ds = densekit_data.load_dataset(out, str(out) + ".names")
        np.testing.assert_array_equal(ds.class_histogram(), [3, 3])
        assert ds.class_names == ["cats", "dogs"]

        again = tmp_path / "conv2.tinb"
        convert(class_folder_tree, "class_folders", 16, again)
        assert out.read_bytes() == again.read_bytes()

        synth_out = tmp_path / "synth.tinb"
        labels, pixels = make_synthetic(10, 100, 32, seed=7, out_path=synth_out)
        ds2 = densekit_data.load_dataset(synth_out)
        np.testing.assert_array_equal(ds2.class_histogram(), [100] * 10)
        acc = nearest_centroid_accuracy(labels, pixels)
        assert acc > 0.90, acc
        print(f"ACCEPTANCE PASS: converter contract (centroid acc {acc:.3f})")


class TestCli:
    def test_convert_command(self, class_folder_tree, tmp_path, capsys):
        out = tmp_path / "c.tinb"
        assert cli.main(["convert", "--src", str(class_folder_tree),
                         "--layout", "class_folders", "--res", "16",
                         "--out", str(out)]) == 0
        assert "6 records" in capsys.readouterr().out
        assert out.exists()

    def test_synth_command(self, tmp_path, capsys):
        out = tmp_path / "s.tinb"
        assert cli.main(["synth", "--classes", "3", "--per-class", "5",
                         "--res", "16", "--seed", "7", "--out", str(out)]) == 0
        labels, _, nc = read_dataset(out)
        assert len(labels) == 15 and nc == 3

    def test_error_exit_code(self, tmp_path, capsys):
        assert cli.main(["convert", "--src", str(tmp_path / "missing"),
                         "--layout", "class_folders", "--res", "16",
                         "--out", str(tmp_path / "o.tinb")]) == 1
        assert "error:" in capsys.readouterr().err
