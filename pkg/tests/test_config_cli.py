import json

import numpy as np
import pytest

from test_training import write_corpus
from n2b.cli import dispatch
from n2b.config import ConfigError, parse_config, serialize_config
from n2b.image import load_image, save_image
from n2b.noise import NoiseSpec


def minimal_doc(root, **extra):
    doc = {
        "clean_dir": str(root / "clean"),
        "source_dir": str(root / "source"),
        "noise_model": "gaussian",
        "noise_level": 25.0,
    }
    doc.update(extra)
    return json.dumps(doc)


class TestParseConfig:
    def test_defaults_applied(self, tmp_path):
        write_corpus(tmp_path)
        cfg = parse_config(minimal_doc(tmp_path))
        assert cfg.train.total_steps == 2000
        assert cfg.train.batch_size == 4
        assert cfg.train.filter.kind == "bilateral"
        assert cfg.output_dir == "out"

    def test_unknown_key_named_in_error(self, tmp_path):
        write_corpus(tmp_path)
        with pytest.raises(ConfigError, match="fliter"):
            parse_config(minimal_doc(tmp_path, fliter="mean"))

    def test_missing_clean_dir(self):
        with pytest.raises(ConfigError, match="clean_dir"):
            parse_config("{}")

    def test_not_json(self):
        with pytest.raises(ConfigError):
            parse_config("not json {")

    def test_not_an_object(self):
        with pytest.raises(ConfigError):
            parse_config("[1, 2]")

    def test_type_errors_name_the_key(self, tmp_path):
        write_corpus(tmp_path)
        with pytest.raises(ConfigError, match="batch_size"):
            parse_config(minimal_doc(tmp_path, batch_size="four"))
        with pytest.raises(ConfigError, match="single_image"):
            parse_config(minimal_doc(tmp_path, single_image="yes"))

    def test_level_range(self, tmp_path):
        write_corpus(tmp_path)
        cfg = parse_config(minimal_doc(tmp_path, noise_level=[5, 50]))
        assert cfg.train.noise.level == (5.0, 50.0)

    def test_bad_level_range(self, tmp_path):
        write_corpus(tmp_path)
        with pytest.raises(ConfigError, match="noise_level"):
            parse_config(minimal_doc(tmp_path, noise_level=[5, 25, 50]))

    def test_noise_model_requires_level(self, tmp_path):
        write_corpus(tmp_path)
        doc = json.loads(minimal_doc(tmp_path))
        del doc["noise_level"]
        with pytest.raises(ConfigError, match="noise_level"):
            parse_config(json.dumps(doc))

    def test_bad_variant(self, tmp_path):
        write_corpus(tmp_path)
        with pytest.raises(ConfigError, match="variant"):
            parse_config(minimal_doc(tmp_path, variant="oracle"))

    def test_serialize_round_trip(self, tmp_path):
        write_corpus(tmp_path)
        cfg = parse_config(minimal_doc(tmp_path, total_steps=50, seed=9))
        again = parse_config(serialize_config(cfg))
        assert again.train == cfg.train
        assert serialize_config(again) == serialize_config(cfg)


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    write_corpus(root, n=3, size=32)
    return root


class TestCliMakeLabels:
    def test_writes_filtered_copies(self, corpus, tmp_path):
        out = tmp_path / "labels"
        rc = dispatch(["make-labels", "--filter", "gaussian", "--kernel", "5",
                       "--sigma", "1.5", "--in", str(corpus / "source"),
                       "--out", str(out)])
        assert rc == 0
        names = sorted(p.name for p in out.iterdir())
        assert names == ["0.pgm", "1.pgm", "2.pgm"]

    def test_input_not_mutated(self, corpus, tmp_path):
        before = {p.name: p.read_bytes() for p in (corpus / "source").iterdir()}
        dispatch(["make-labels", "--filter", "mean", "--kernel", "3",
                  "--in", str(corpus / "source"), "--out", str(tmp_path / "o")])
        after = {p.name: p.read_bytes() for p in (corpus / "source").iterdir()}
        assert before == after

    def test_missing_dir_fails_cleanly(self, tmp_path, capsys):
        rc = dispatch(["make-labels", "--filter", "mean",
                       "--in", str(tmp_path / "nope"), "--out", str(tmp_path / "o")])
        assert rc == 1
        assert "error:" in capsys.readouterr().err


class TestCliAddNoise:
    def test_seeded_and_reproducible(self, corpus, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        for out in (a, b):
            rc = dispatch(["add-noise", "--model", "gaussian", "--sigma", "25",
                           "--seed", "11", "--in", str(corpus / "source"),
                           "--out", str(out)])
            assert rc == 0
        for p in a.iterdir():
            assert p.read_bytes() == (b / p.name).read_bytes()

    def test_different_seed_differs(self, corpus, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        dispatch(["add-noise", "--model", "gaussian", "--sigma", "25",
                  "--seed", "1", "--in", str(corpus / "source"), "--out", str(a)])
        dispatch(["add-noise", "--model", "gaussian", "--sigma", "25",
                  "--seed", "2", "--in", str(corpus / "source"), "--out", str(b)])
        assert any(p.read_bytes() != (b / p.name).read_bytes() for p in a.iterdir())

    def test_level_and_range_are_exclusive(self, corpus, tmp_path, capsys):
        rc = dispatch(["add-noise", "--model", "gaussian", "--sigma", "25",
                       "--sigma-range", "5,50", "--in", str(corpus / "source"),
                       "--out", str(tmp_path / "o")])
        assert rc == 1
        assert "error:" in capsys.readouterr().err

    def test_range_accepted(self, corpus, tmp_path):
        rc = dispatch(["add-noise", "--model", "speckle",
                       "--variance-range", "0.05,0.2", "--seed", "3",
                       "--in", str(corpus / "source"), "--out", str(tmp_path / "o")])
        assert rc == 0


@pytest.fixture(scope="module")
def run_dir(corpus, tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    config = {
        "clean_dir": str(corpus / "clean"),
        "source_dir": str(corpus / "source"),
        "noise_model": "gaussian",
        "noise_level": 25.0,
        "filter": "gaussian",
        "filter_kernel": 5,
        "total_steps": 8,
        "batch_size": 2,
        "patch_size": 16,
        "depth": 2,
        "base_width": 4,
        "output_dir": str(out),
    }
    cfg_path = out / "cfg.json"
    cfg_path.write_text(json.dumps(config))
    rc = dispatch(["train", "--config", str(cfg_path)])
    assert rc == 0
    return out


class TestCliTrainDenoisEval:
    def test_train_artifacts(self, run_dir):
        assert (run_dir / "config.json").exists()
        assert (run_dir / "checkpoint.n2b").exists()
        csv = (run_dir / "curves.csv").read_text()
        assert csv.startswith("iter,stage,l_n2b,l_n2c\n")
        assert len(csv.strip().split("\n")) == 9

    def test_denoise_runs_from_checkpoint(self, corpus, run_dir, tmp_path):
        out = tmp_path / "denoised"
        rc = dispatch(["denoise", "--checkpoint", str(run_dir / "checkpoint.n2b"),
                       "--in", str(corpus / "source"), "--out", str(out)])
        assert rc == 0
        img = load_image(out / "0.pgm")
        assert img.pixels.shape == (32, 32, 1)

    def test_eval_csv(self, corpus, tmp_path, capsys):
        rc = dispatch(["eval", "--ref", str(corpus / "source"),
                       "--test", str(corpus / "source")])
        assert rc == 0
        out = capsys.readouterr().out
        assert out.startswith("filename,psnr_db,ssim")
        assert "inf" in out

    def test_eval_missing_pair(self, corpus, tmp_path, capsys):
        partial = tmp_path / "partial"
        partial.mkdir()
        src = sorted((corpus / "source").iterdir())[0]
        (partial / src.name).write_bytes(src.read_bytes())
        rc = dispatch(["eval", "--ref", str(corpus / "source"),
                       "--test", str(partial)])
        assert rc == 1
        assert "error:" in capsys.readouterr().err

    def test_curves_export(self, run_dir, tmp_path):
        out = tmp_path / "c.csv"
        rc = dispatch(["curves", "--run", str(run_dir), "--out", str(out)])
        assert rc == 0
        assert out.read_text() == (run_dir / "curves.csv").read_text()

    def test_curves_missing_run(self, tmp_path, capsys):
        rc = dispatch(["curves", "--run", str(tmp_path)])
        assert rc == 1
        assert "error:" in capsys.readouterr().err

    def test_bad_config_reports_key(self, tmp_path, capsys):
        cfg = tmp_path / "bad.json"
        cfg.write_text(json.dumps({"clean_dir": "x", "fliter": "mean"}))
        rc = dispatch(["train", "--config", str(cfg)])
        assert rc == 1
        assert "fliter" in capsys.readouterr().err
