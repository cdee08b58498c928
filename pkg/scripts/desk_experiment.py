"""Calibration run for the desk-scale acceptance configuration."""

import sys
import time
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "tests"))

from synth import make_natural_image, build_desk_corpus  # noqa: E402

from n2b.filters import FilterSpec, make_blurred_label
from n2b.image import Image, clamp_01, load_image
from n2b.metrics import psnr
from n2b.noise import NoiseSpec, add_gaussian
from n2b.training import TrainConfig, train, denoise, list_images

import tempfile

tmp = Path(tempfile.mkdtemp())
build_desk_corpus(tmp, n_train=20, n_clean=20, n_test=5, size=64, seed=123)

width = int(sys.argv[1]) if len(sys.argv) > 1 else 16
steps = int(sys.argv[2]) if len(sys.argv) > 2 else 2000
choice = sys.argv[3] if len(sys.argv) > 3 else "bilateral"
filt = {
    "bilateral": FilterSpec("bilateral", kernel_size=15, sigma_range=0.1),
    "gaussian": FilterSpec("gaussian", kernel_size=15, gaussian_sigma=2.5),
    "mean": FilterSpec("mean", kernel_size=15),
}[choice]

cfg = TrainConfig(
    clean_dir=str(tmp / "clean"), source_dir=str(tmp / "source"),
    noise=NoiseSpec("gaussian", 25.0, seed=5), filter=filt,
    total_steps=steps, batch_size=4, patch_size=64, seed=7,
    depth=3, base_width=width,
)
t0 = time.time()
res = train(cfg)
el = time.time() - t0
print(f"width={width} T={steps}: {el:.0f}s ({el/steps*1000:.0f} ms/step)")

rng = np.random.default_rng(99)
noisy_psnr, out_psnr, lab_psnr = [], [], []
for p in list_images(tmp / "test"):
    clean = load_image(p)
    s = add_gaussian(clean, 25.0, rng)
    noisy_psnr.append(psnr(clamp_01(s.noisy), clean))
    lab, _ = make_blurred_label(s.noisy, filt)
    lab_psnr.append(psnr(clamp_01(lab), clean))
    out = denoise(res.dnnet, s.noisy)
    out_psnr.append(psnr(out, clean))
print(f"noisy {np.mean(noisy_psnr):.2f}  label {np.mean(lab_psnr):.2f}  denoised {np.mean(out_psnr):.2f}")

c = [r for r in res.curve if r.stage == "convergence"]
n = len(c)
b = [r.l_n2b for r in c]; cc = [r.l_n2c for r in c]
dec = max(1, n // 10)
print(f"l_n2b first/last decile: {np.mean(b[:dec]):.4f} / {np.mean(b[-dec:]):.4f}")
print(f"l_n2c first/last decile: {np.mean(cc[:dec]):.4f} / {np.mean(cc[-dec:]):.4f}")
