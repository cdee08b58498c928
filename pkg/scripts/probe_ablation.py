"""Calibration probes for the variant ablation and single-image mode."""

import sys
import tempfile
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "tests"))

from synth import build_desk_corpus, make_natural_image  # noqa: E402

from n2b.filters import FilterSpec
from n2b.image import clamp_01, load_image, save_image
from n2b.metrics import psnr
from n2b.noise import NoiseSpec, add_gaussian
from n2b.training import TrainConfig, denoise, list_images, train

tmp = Path(tempfile.mkdtemp())
build_desk_corpus(tmp, n_train=20, n_clean=20, n_test=5, size=64, seed=123)

cfg = TrainConfig(
    clean_dir=str(tmp / "clean"), source_dir=str(tmp / "source"),
    noise=NoiseSpec("gaussian", 25.0, seed=5),
    filter=FilterSpec("mean", kernel_size=15),
    total_steps=2000, batch_size=4, patch_size=64, seed=7,
    depth=3, base_width=16,
)


def held_out(result):
    rng = np.random.default_rng(99)
    scores = []
    for p in list_images(tmp / "test"):
        clean = load_image(p)
        s = add_gaussian(clean, 25.0, rng)
        scores.append(psnr(denoise(result.dnnet, s.noisy), clean))
    return float(np.mean(scores))


which = sys.argv[1] if len(sys.argv) > 1 else "variant"

if which == "variant":
    t0 = time.time()
    res_v = train(replace(cfg, variant="n2b_v"))
    print(f"n2b_v: {time.time() - t0:.0f}s  denoised {held_out(res_v):.2f}")
else:
    one = Path(tempfile.mkdtemp())
    (one / "noisy").mkdir()
    rng = np.random.default_rng(321)
    clean = make_natural_image(rng, 256)
    sample = add_gaussian(clean, 25.0, rng)
    save_image(clamp_01(sample.noisy), one / "noisy" / "only.pgm")
    cfg_one = replace(cfg, source_dir=None, noise=None,
                      noisy_dir=str(one / "noisy"), single_image=True)
    t0 = time.time()
    res_one = train(cfg_one)
    rng = np.random.default_rng(99)
    gains = []
    for p in list_images(tmp / "test"):
        ref = load_image(p)
        s = add_gaussian(ref, 25.0, rng)
        gains.append(psnr(denoise(res_one.dnnet, s.noisy), ref)
                     - psnr(clamp_01(s.noisy), ref))
    print(f"single: {time.time() - t0:.0f}s  mean gain {np.mean(gains):.2f} dB")
