"""End-to-end command surface: wiring, file outputs, exit-code contract."""

import csv
import json

import numpy as np
import pytest

from dsn.cli import EXIT_DATA, EXIT_OK, EXIT_USAGE, gradcheck_suite, main
from dsn.imaging import psnr, read_image, read_pgm, rgb_to_y, ssim, to_image, to_tensor
from dsn.model import DsnModel, ModelConfig, load_checkpoint, save_checkpoint
from dsn.resample import BICUBIC, resize
from synth import make_corpus, make_gray, make_rgb
from dsn.imaging import write_png

TINY = ModelConfig(
    scale=2,
    down_widths=(4, 4, 4),
    up_input_width=4,
    dense_depth=1,
    dense_growth=3,
    bottleneck_width=4,
)

TINY_SETS = [
    "--set", 'model.down_widths=[4,4,4]',
    "--set", "model.up_input_width=4",
    "--set", "model.dense_depth=1",
    "--set", "model.dense_growth=3",
    "--set", "model.bottleneck_width=4",
]


@pytest.fixture()
def model_file(tmp_path):
    path = tmp_path / "model.dsnc"
    save_checkpoint(DsnModel.initialized(TINY, seed=42), path)
    return path


@pytest.fixture()
def png(tmp_path):
    path = tmp_path / "input.png"
    write_png(make_gray(600, 32, 32), path)
    return path


class TestExitCodes:
    def test_usage_error_is_one(self, capsys):
        assert main(["no-such-command"]) == EXIT_USAGE
        assert main(["down"]) == EXIT_USAGE  # missing required args

    def test_missing_model_is_data_error(self, tmp_path, png, capsys):
        rc = main(["down", "--model", str(tmp_path / "nope.dsnc"),
                   str(png), str(tmp_path / "o.pgm")])
        assert rc == EXIT_DATA

    def test_corrupt_bundle_is_data_error(self, tmp_path, model_file, capsys):
        bad = tmp_path / "bad.dsnb"
        bad.write_bytes(b"DSNB" + bytes(40))
        rc = main(["decompress", "--model", str(model_file),
                   str(bad), str(tmp_path / "o.png")])
        assert rc == EXIT_DATA


class TestInference:
    def test_down_writes_valid_p5(self, tmp_path, model_file, png, capsys):
        out = tmp_path / "lr.pgm"
        assert main(["down", "--model", str(model_file), str(png), str(out)]) == EXIT_OK
        assert out.read_bytes().startswith(b"P5\n16 16\n255\n")
        lr = read_pgm(out)
        assert lr.data.shape == (16, 16)
        assert (tmp_path / "manifest.json").exists()

    def test_up_restores_dims(self, tmp_path, model_file, png, capsys):
        lr = tmp_path / "lr.pgm"
        hr = tmp_path / "hr.png"
        main(["down", "--model", str(model_file), str(png), str(lr)])
        assert main(["up", "--model", str(model_file), str(lr), str(hr)]) == EXIT_OK
        assert read_image(hr).data.shape == (32, 32)

    def test_down_refuses_odd_dims_without_autocrop(self, tmp_path, model_file, capsys):
        odd = tmp_path / "odd.png"
        write_png(make_gray(601, 33, 31), odd)
        rc = main(["down", "--model", str(model_file), str(odd), str(tmp_path / "o.pgm")])
        assert rc == EXIT_DATA
        assert "--auto-crop" in capsys.readouterr().err
        rc = main(["down", "--model", str(model_file), "--auto-crop",
                   str(odd), str(tmp_path / "o.pgm")])
        assert rc == EXIT_OK
        assert read_pgm(tmp_path / "o.pgm").data.shape == (16, 15)

    def test_roundtrip_prints_metrics_and_baseline(self, tmp_path, model_file, png, capsys):
        rc = main(["roundtrip", "--model", str(model_file), "--baseline", "bicubic", str(png)])
        assert rc == EXIT_OK
        lines = capsys.readouterr().out.strip().splitlines()
        assert lines[0].startswith("dsn: psnr=")
        assert lines[1].startswith("bicubic: psnr=")


class TestTrainCommand:
    def test_train_produces_artifacts(self, tmp_path, capsys):
        data = tmp_path / "imgs"
        make_corpus(data, [610, 611], h=32, w=32)
        out = tmp_path / "run1"
        rc = main(["train", "--data", str(data), "--out", str(out),
                   "--scale", "2", "--epochs", "2", "--seed", "5",
                   "--set", "patch_size=16", "--set", "batch_size=8",
                   *TINY_SETS])
        assert rc == EXIT_OK
        assert (out / "model.dsnc").exists()
        assert (out / "loss.csv").exists()
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["command"] == "train"
        assert manifest["settings"]["train_config"]["epochs"] == 2
        assert manifest["model_hash"]
        model = load_checkpoint(out / "model.dsnc")
        assert model.config.scale == 2

    def test_resume_continues(self, tmp_path, capsys):
        data = tmp_path / "imgs"
        make_corpus(data, [612], h=32, w=32)
        out = tmp_path / "run2"
        base = ["train", "--data", str(data), "--out", str(out),
                "--scale", "2", "--seed", "5",
                "--set", "patch_size=16", "--set", "batch_size=8", *TINY_SETS]
        assert main(base + ["--epochs", "2"]) == EXIT_OK
        assert main(base + ["--epochs", "4", "--resume"]) == EXIT_OK
        lines = (out / "loss.csv").read_text().strip().splitlines()
        assert len(lines) == 5  # header + 4 epochs total

    def test_freeze_down_round_trip(self, tmp_path, model_file, capsys):
        data = tmp_path / "imgs"
        make_corpus(data, [613], h=32, w=32)
        out = tmp_path / "run3"
        rc = main(["train", "--data", str(data), "--out", str(out),
                   "--scale", "2", "--epochs", "1", "--freeze-down",
                   "--init-from", str(model_file),
                   "--set", "patch_size=16", "--set", "batch_size=8", *TINY_SETS])
        assert rc == EXIT_OK
        before = load_checkpoint(model_file)
        after = load_checkpoint(out / "model.dsnc")
        for (name, pa), (_, pb) in zip(before.named_parameters(), after.named_parameters()):
            if name.startswith("down."):
                np.testing.assert_array_equal(pa.data, pb.data, err_msg=name)


class TestEvalCommand:
    def test_csv_schema_and_mean_row(self, tmp_path, model_file, capsys):
        data = tmp_path / "imgs"
        make_corpus(data, [620, 621, 622], h=32, w=32)
        out = tmp_path / "eval.csv"
        rc = main(["eval", "--model", str(model_file), "--data", str(data),
                   "--out", str(out), "--baselines", "bicubic"])
        assert rc == EXIT_OK
        with open(out) as fh:
            rows = list(csv.DictReader(fh))
        assert set(rows[0]) == {"image", "method", "psnr_db", "ssim"}
        per_image = [r for r in rows if r["method"] == "dsn" and r["image"] != "mean"]
        mean_row = next(r for r in rows if r["method"] == "dsn" and r["image"] == "mean")
        assert float(mean_row["psnr_db"]) == pytest.approx(
            np.mean([float(r["psnr_db"]) for r in per_image]), abs=1e-9)

    def test_bicubic_baseline_matches_library_path(self, tmp_path, model_file, capsys):
        data = tmp_path / "imgs"
        make_corpus(data, [623], h=32, w=32)
        out = tmp_path / "eval.csv"
        main(["eval", "--model", str(model_file), "--data", str(data),
              "--out", str(out), "--baselines", "bicubic"])
        with open(out) as fh:
            row = next(r for r in csv.DictReader(fh) if r["method"] == "bicubic")
        y = rgb_to_y(read_image(data / "img623.png"))
        lr = resize(y, 16, 16, BICUBIC)
        ref = resize(lr, 32, 32, BICUBIC)
        assert float(row["psnr_db"]) == pytest.approx(psnr(y, ref, border_crop=2), abs=1e-4)
        assert float(row["ssim"]) == pytest.approx(ssim(y, ref, border_crop=2), abs=1e-6)


class TestCompressionCommands:
    def test_compress_decompress_cycle(self, tmp_path, model_file, capsys):
        src = tmp_path / "in.png"
        write_png(make_rgb(630, 33, 35), src)  # odd dims: crop metadata in play
        bundle = tmp_path / "img.dsnb"
        restored = tmp_path / "restored.png"
        assert main(["compress", "--model", str(model_file), str(src), str(bundle)]) == EXIT_OK
        out = capsys.readouterr().out
        assert "bpp" in out
        assert main(["decompress", "--model", str(model_file), str(bundle), str(restored)]) == EXIT_OK
        assert read_image(restored).data.shape == (33, 35)

    def test_rdreport_csv(self, tmp_path, model_file, capsys):
        data = tmp_path / "imgs"
        make_corpus(data, [640, 641], h=32, w=32)
        out = tmp_path / "rd.csv"
        rc = main(["rdreport", "--model", str(model_file), "--data", str(data),
                   "--out", str(out)])
        assert rc == EXIT_OK
        with open(out) as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 4  # 2 images x (dsn, baseline)
        assert {r["method"] for r in rows} == {"dsn+deflate", "bicubic+deflate"}


class TestDegmatrixCommand:
    def test_matrix_csv_shape(self, tmp_path, capsys):
        train_dir = tmp_path / "train"
        test_dir = tmp_path / "test"
        make_corpus(train_dir, [650, 651], h=48, w=48)
        make_corpus(test_dir, [652], h=48, w=48)
        out = tmp_path / "dm"
        rc = main(["degmatrix", "--data", str(train_dir), "--test-data", str(test_dir),
                   "--out", str(out), "--scale", "3", "--epochs", "2", "--seed", "7",
                   "--set", "patch_size=24", "--set", "batch_size=8", *TINY_SETS])
        assert rc == EXIT_OK
        lines = (out / "degradation_matrix.csv").read_text().strip().splitlines()
        assert lines[0] == "train\\test,nearest,bilinear,bicubic,avg"
        assert len(lines) == 4
        manifest = json.loads((out / "manifest.json").read_text())
        assert len(manifest["settings"]["matrix"]["matrix"]) == 3


class TestGradcheckCommand:
    def test_suite_passes_and_reports(self, capsys):
        assert main(["gradcheck"]) == EXIT_OK
        out = capsys.readouterr().out
        assert "full_model" in out
        assert "FAIL" not in out

    def test_suite_structure(self):
        results = gradcheck_suite(coords=10)
        names = {r["op"] for r in results}
        assert {"conv2d", "avg_pool", "tile_upsample", "pixel_shuffle",
                "leaky_relu", "l1_loss", "full_model"} <= names
        assert all(r["passed"] for r in results)
