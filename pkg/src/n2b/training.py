"""Two-stage training: blur-guided warm-up, then the noise-transplant loop.

The warm-up trains the composed model H(x - F(x)) against the blurred labels.
In the convergence stage each step runs:

    n_hat   = x - F(x)              (noise map from the denoiser)
    n_tilde = H(stop(n_hat))        (refined map; gradient stops at the boundary)
    d       = c + stop(n_tilde)     (transplant onto a random clean patch)
    c_hat   = F(d)

    L_n2c = mean|c_hat - c|   -> updates only the denoiser F
    L_n2b = mean|n_tilde - (x - label)|  -> updates only the extractor H

The `n2b_v` variant removes the first stop-gradient, letting the blur
objective reach F as well; `supervised` trains F alone on true pairs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import tensor as T
from .filters import FilterSpec, make_blurred_label
from .image import Image, PatchSampler, clamp_01, image_to_tensor, load_image, tensor_to_image
from .networks import DnNet, NENet
from .noise import NoiseSpec, exp_domain, log_domain, stabilized_sum
from .tensor import Adam, Tensor

VARIANTS = ("n2b", "n2b_v", "supervised")
IMAGE_SUFFIXES = (".png", ".pgm", ".ppm")


@dataclass(frozen=True)
class TrainConfig:
    """Everything needed to reproduce one experiment."""

    clean_dir: str                     # unpaired clean corpus for transplantation
    noisy_dir: str | None = None       # pre-degraded noisy corpus
    source_dir: str | None = None      # clean originals to degrade on the fly
    noise: NoiseSpec | None = None     # required with source_dir
    filter: FilterSpec = field(default_factory=FilterSpec)
    total_steps: int = 2000
    initial_fraction: float = 0.05
    batch_size: int = 4
    patch_size: int = 64
    seed: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    variant: str = "n2b"
    single_image: bool = False         # train from the first noisy image only
    log_transform: bool | None = None  # None: decided by the noise model (speckle)
    detach_transplant: bool = True     # stop gradient on n_tilde before d = c + n_tilde
    depth: int = 3
    base_width: int = 32
    channels: int = 1

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if not 0.0 < self.initial_fraction < 1.0:
            raise ValueError("initial_fraction must lie in (0, 1)")
        if self.batch_size < 1 or self.total_steps < 1:
            raise ValueError("batch_size and total_steps must be >= 1")
        if (self.noisy_dir is None) == (self.source_dir is None):
            raise ValueError("give exactly one of noisy_dir or source_dir")
        if self.source_dir is not None and self.noise is None:
            raise ValueError("source_dir requires a noise spec")
        if self.variant == "supervised" and self.source_dir is None:
            raise ValueError("the supervised variant needs source_dir ground truth")

    @property
    def initial_steps(self) -> int:
        return math.ceil(self.initial_fraction * self.total_steps)

    @property
    def use_log_transform(self) -> bool:
        if self.log_transform is not None:
            return self.log_transform
        return self.noise is not None and self.noise.kind == "speckle"


@dataclass(frozen=True)
class StepRecord:
    iteration: int
    stage: str            # initial | convergence
    l_n2b: float
    l_n2c: float | None = None

    def __post_init__(self):
        for v in (self.l_n2b, self.l_n2c):
            if v is not None and not math.isfinite(v):
                raise FloatingPointError(
                    f"non-finite loss at iteration {self.iteration}: "
                    f"l_n2b={self.l_n2b}, l_n2c={self.l_n2c}")


def curve_to_csv(curve) -> str:
    lines = ["iter,stage,l_n2b,l_n2c"]
    for rec in curve:
        n2c = "" if rec.l_n2c is None else f"{rec.l_n2c:.8g}"
        lines.append(f"{rec.iteration},{rec.stage},{rec.l_n2b:.8g},{n2c}")
    return "\n".join(lines) + "\n"


def list_images(directory) -> list[Path]:
    paths = sorted(p for p in Path(directory).iterdir()
                   if p.suffix.lower() in IMAGE_SUFFIXES)
    if not paths:
        raise FileNotFoundError(f"no images (png/pgm/ppm) in {directory}")
    return paths


def _batch(patches: list[Image]) -> Tensor:
    return Tensor(np.stack([p.pixels.transpose(2, 0, 1) for p in patches]))


# -- single steps ------------------------------------------------------


def initial_step(dnnet: DnNet, nenet: NENet, x: Tensor, y_b: Tensor,
                 opt_f: Adam, opt_h: Adam) -> StepRecord:
    """One warm-up step on the composed model; gradients reach both networks."""
    n_tilde = nenet(T.sub(x, dnnet(x)))
    y_tilde = T.sub(x, n_tilde)
    loss = T.l1_loss(y_tilde, y_b)
    loss.backward()
    opt_f.step()
    opt_h.step()
    return StepRecord(iteration=0, stage="initial", l_n2b=loss.item())


def convergence_step(dnnet: DnNet, nenet: NENet, x: Tensor, y_b: Tensor,
                     c: Tensor, opt_f: Adam, opt_h: Adam, *,
                     variant: str = "n2b", detach_transplant: bool = True,
                     instrument: dict | None = None) -> StepRecord:
    """One step of the convergence stage (two denoiser passes, one extractor pass)."""
    n_hat = T.sub(x, dnnet(x))
    h_in = n_hat.detach() if variant != "n2b_v" else n_hat
    n_tilde = nenet(h_in)

    if detach_transplant:
        # detached path: form d off-graph, at a fixed point where the
        # transplanted noise is exactly d - c
        d = Tensor(stabilized_sum(c.data, n_tilde.data))
    else:
        d = T.add(c, n_tilde)
    c_hat = dnnet(d)
    loss_n2c = T.l1_loss(c_hat, c)

    n_b = T.sub(x, y_b)
    loss_n2b = T.l1_loss(n_tilde, n_b)

    loss_n2b.backward()
    if instrument is not None:
        instrument["grad_f_after_n2b"] = _grad_norm(dnnet.params())
        instrument["h_grads_after_n2b"] = [
            None if p.grad is None else p.grad.copy() for p in nenet.params()]
    loss_n2c.backward()
    if instrument is not None:
        instrument["grad_h_from_n2c"] = _grad_delta(
            nenet.params(), instrument.pop("h_grads_after_n2b"))
        n_recovered = d.data - c.data
        instrument["transplant_exact"] = bool(
            np.array_equal(c.data + n_recovered, d.data))
        instrument["transplant_ulp_error"] = float(
            np.abs(n_recovered - n_tilde.data).max())

    opt_f.step()
    opt_h.step()
    return StepRecord(iteration=0, stage="convergence",
                      l_n2b=loss_n2b.item(), l_n2c=loss_n2c.item())


def _grad_norm(params) -> float:
    total = 0.0
    for p in params:
        if p.grad is not None:
            total += float(np.sum(p.grad.astype(np.float64) ** 2))
    return math.sqrt(total)


def _grad_delta(params, before) -> float:
    total = 0.0
    for p, g0 in zip(params, before):
        g1 = p.grad if p.grad is not None else 0.0
        g0 = g0 if g0 is not None else 0.0
        total += float(np.sum((np.asarray(g1, dtype=np.float64) - g0) ** 2))
    return math.sqrt(total)


def supervised_step(dnnet: DnNet, x: Tensor, y: Tensor, opt_f: Adam) -> StepRecord:
    loss = T.l1_loss(dnnet(x), y)
    loss.backward()
    opt_f.step()
    return StepRecord(iteration=0, stage="convergence", l_n2b=0.0, l_n2c=loss.item())


# -- corpus handling ---------------------------------------------------


class _Corpus:
    """Noisy images, their labels/residuals, optional ground truth."""

    def __init__(self, config: TrainConfig):
        self.config = config
        noise_rng = np.random.default_rng(_stream_seed(config.seed, "noise"))
        self.ground_truth: list[Image] | None = None

        if config.noisy_dir is not None:
            noisy = [load_image(p) for p in list_images(config.noisy_dir)]
        else:
            sources = [load_image(p) for p in list_images(config.source_dir)]
            samples = [config.noise.apply(im, noise_rng) for im in sources]
            noisy = [s.noisy for s in samples]
            self.ground_truth = [s.clean for s in samples]

        if config.single_image:
            noisy = noisy[:1]
            if self.ground_truth is not None:
                self.ground_truth = self.ground_truth[:1]

        if config.use_log_transform:
            noisy = [log_domain(im) for im in noisy]
            if self.ground_truth is not None:
                self.ground_truth = [log_domain(im) for im in self.ground_truth]

        self.noisy = noisy
        labeled = [make_blurred_label(im, config.filter) for im in noisy]
        self.labels = [lab for lab, _ in labeled]
        self.residuals = [res for _, res in labeled]

        clean = [load_image(p) for p in list_images(config.clean_dir)]
        if config.use_log_transform:
            clean = [log_domain(im) for im in clean]
        self.clean = clean


def _stream_seed(seed: int, role: str) -> np.random.SeedSequence:
    return np.random.SeedSequence([seed, {"noise": 0, "patch": 1, "pair": 2}[role]])


# -- full run ----------------------------------------------------------


@dataclass
class TrainResult:
    dnnet: DnNet
    nenet: NENet
    opt_f: Adam
    opt_h: Adam
    curve: list[StepRecord]
    config: TrainConfig
    rng_states: dict


def train(config: TrainConfig, step_callback=None, resume_from=None,
          stop_at: int | None = None) -> TrainResult:
    """Run the full two-stage schedule and return nets, optimizers and curve.

    `step_callback(t, record, dnnet, nenet)`, when given, runs after every
    step; it must not touch any RNG if reproducibility is to be preserved.
    `resume_from` accepts a Checkpoint saved from an earlier (shorter or
    interrupted) run of the same config; training continues at the recorded
    iteration and matches an uninterrupted run step for step.
    """
    corpus = _Corpus(config)
    dnnet = DnNet(config.channels, config.depth, config.base_width,
                  seed=_derive(config.seed, 10))
    nenet = NENet(config.channels, seed=_derive(config.seed, 11))
    opt_f = Adam(dnnet.params(), config.lr, config.beta1, config.beta2, config.epsilon)
    opt_h = Adam(nenet.params(), config.lr, config.beta1, config.beta2, config.epsilon)

    patch_sampler = PatchSampler(corpus.noisy, config.patch_size,
                                 _stream_seed(config.seed, "patch"))
    clean_sampler = PatchSampler(corpus.clean, config.patch_size,
                                 _stream_seed(config.seed, "pair"))

    start_t = 1
    if resume_from is not None:
        dnnet.load_state(resume_from.dnnet_state)
        nenet.load_state(resume_from.nenet_state)
        _restore_adam(opt_f, resume_from.opt_f_state, dnnet)
        _restore_adam(opt_h, resume_from.opt_h_state, nenet)
        patch_sampler.rng.bit_generator.state = resume_from.rng_states["patch"]
        clean_sampler.rng.bit_generator.state = resume_from.rng_states["pair"]
        start_t = resume_from.iteration + 1

    curve: list[StepRecord] = []
    n_initial = config.initial_steps
    for t in range(start_t, config.total_steps + 1):
        corners = [patch_sampler.sample_corner() for _ in range(config.batch_size)]
        x = _batch([patch_sampler.extract(*c) for c in corners])
        y_b = _batch([Image(corpus.labels[i].pixels[r:r + config.patch_size,
                                                    s:s + config.patch_size])
                      for i, r, s in corners])

        if config.variant == "supervised":
            y = _batch([Image(corpus.ground_truth[i].pixels[r:r + config.patch_size,
                                                            s:s + config.patch_size])
                        for i, r, s in corners])
            rec = supervised_step(dnnet, x, y, opt_f)
        elif t <= n_initial:
            rec = initial_step(dnnet, nenet, x, y_b, opt_f, opt_h)
        else:
            c = _batch([clean_sampler.sample_patch() for _ in range(config.batch_size)])
            rec = convergence_step(dnnet, nenet, x, y_b, c, opt_f, opt_h,
                                   variant=config.variant,
                                   detach_transplant=config.detach_transplant)
        rec = replace(rec, iteration=t)
        curve.append(rec)
        if step_callback is not None:
            step_callback(t, rec, dnnet, nenet)
        if stop_at is not None and t >= stop_at:
            break

    rng_states = {"patch": patch_sampler.rng.bit_generator.state,
                  "pair": clean_sampler.rng.bit_generator.state}
    return TrainResult(dnnet, nenet, opt_f, opt_h, curve, config, rng_states)


def _restore_adam(opt: Adam, state: dict, net) -> None:
    names = [name for name, _ in net.named_params()]
    opt.t = state["t"]
    opt.m = [state["m"][n].astype(np.float32) for n in names]
    opt.v = [state["v"][n].astype(np.float32) for n in names]


def _derive(seed: int, salt: int) -> int:
    return int(np.random.SeedSequence([seed, salt]).generate_state(1)[0])


# -- inference ---------------------------------------------------------


def denoise(dnnet: DnNet, img: Image, log_transform: bool = False) -> Image:
    """Run only the denoiser; pads to the U-Net stride and clamps the output."""
    work = log_domain(img) if log_transform else img
    px = work.pixels
    div = 2 ** (dnnet.depth - 1)
    pad_h = (-px.shape[0]) % div
    pad_w = (-px.shape[1]) % div
    if pad_h or pad_w:
        px = np.pad(px, ((0, pad_h), (0, pad_w), (0, 0)), mode="reflect")
    out = dnnet(image_to_tensor(Image(px)))
    result = tensor_to_image(out)
    if pad_h or pad_w:
        result = Image(result.pixels[:img.height, :img.width])
    if log_transform:
        result = exp_domain(result)
    return clamp_01(result)
