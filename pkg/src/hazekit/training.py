"""Unpaired training: Adam, patch discriminators, loss assembly and the training loop."""
from __future__ import annotations

import copy
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Iterator

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from . import checkpoint
from .asm import rehaze
from .config import TrainConfig
from .inr import make_grid, window_grid
from .metrics import psnr, ssim
from .network import DehazeGenerator

log = logging.getLogger(__name__)


class TrainingFault(RuntimeError):
    def __init__(self, iteration: int, name: str, value: float):
        super().__init__(f"non-finite {name} loss ({value}) at iteration {iteration}")
        self.iteration, self.name, self.value = iteration, name, value


def adam_step(params, grads, state: dict, lr: float = 1e-4, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
    """One in-place Adam update with bias correction.

    ``state`` holds ``step`` and per-parameter first/second moments ``m``/``v``;
    it is created on the first call. Returns (params, state).
    """
    params, grads = list(params), list(grads)
    if len(params) != len(grads):
        raise ValueError(f"{len(params)} parameters but {len(grads)} gradients")
    for i, (p, g) in enumerate(zip(params, grads)):
        if p.shape != g.shape:
            raise ValueError(f"parameter {i} has shape {tuple(p.shape)} but its gradient has {tuple(g.shape)}")
    if "m" not in state:
        state["step"] = 0
        state["m"] = [torch.zeros_like(p) for p in params]
        state["v"] = [torch.zeros_like(p) for p in params]
    for i, (p, m) in enumerate(zip(params, state["m"])):
        if m.shape != p.shape:
            raise ValueError(f"optimizer state for parameter {i} has shape {tuple(m.shape)}, expected {tuple(p.shape)}")
    state["step"] += 1
    bc1 = 1 - beta1 ** state["step"]
    bc2 = 1 - beta2 ** state["step"]
    with torch.no_grad():
        for p, g, m, v in zip(params, grads, state["m"], state["v"]):
            m.mul_(beta1).add_(g, alpha=1 - beta1)
            v.mul_(beta2).addcmul_(g, g, value=1 - beta2)
            p.sub_(lr * (m / bc1) / ((v / bc2).sqrt() + eps))
    return params, state


class Adam:
    """Minimal optimizer wrapper around ``adam_step``; parameters without gradients are skipped."""

    def __init__(self, params: Iterable[torch.Tensor], lr: float = 1e-4, betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = list(params)
        self.lr, self.betas, self.eps = lr, betas, eps
        self.states: dict[int, dict] = {}

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        for i, p in enumerate(self.params):
            if p.grad is None:
                continue
            adam_step([p], [p.grad], self.states.setdefault(i, {}), self.lr, *self.betas, self.eps)


class PatchDiscriminator(nn.Module):
    """Maps (B, 3, H, W) images to (B, 1, H/4, W/4) real-valued patch scores."""

    def __init__(self, width: int = 32):
        super().__init__()
        self.net = nn.Sequential(
            nn.Conv2d(3, width, 4, stride=2, padding=1),
            nn.LeakyReLU(0.2),
            nn.Conv2d(width, 2 * width, 4, stride=2, padding=1),
            nn.LeakyReLU(0.2),
            nn.Conv2d(2 * width, 1, 3, padding=1),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.net(x)


def lsgan(scores: torch.Tensor, target: float) -> torch.Tensor:
    return F.mse_loss(scores, torch.full_like(scores, target))


def compute_losses(
    gen,
    disc_clean,
    disc_hazy,
    hazy: torch.Tensor,
    clean: torch.Tensor,
    cfg: TrainConfig,
    return_fakes: bool = False,
    hazy_coords: torch.Tensor | None = None,
    clean_coords: torch.Tensor | None = None,
):
    """Generator losses on one unpaired batch.

    adv: least-squares GAN on the dehazed output (vs clean pool) and on clean
         images re-hazed with the transmission/airlight predicted for the hazy batch.
    cyc: L1 between the hazy input and its dehazed output re-hazed with the predicted
         t and A, plus L1 between clean images and the dehazed version of their re-hazed copy.
    idt: L1 between a clean image and the generator's output for it.

    ``hazy_coords``/``clean_coords`` (B, H, W, 2) place crops inside their source images.
    """
    b = hazy.shape[0]
    coords = None
    if hazy_coords is not None or clean_coords is not None:
        default = make_grid(*hazy.shape[-2:], hazy.dtype).expand(b, -1, -1, -1)
        hazy_coords = default if hazy_coords is None else hazy_coords
        clean_coords = default if clean_coords is None else clean_coords
        coords = torch.cat([hazy_coords, clean_coords])
    out, t_all, a_all = gen(torch.cat([hazy, clean]), coords)
    dehazed, identity = out[:b], out[b:]
    t, A = t_all[:b], a_all[:b]
    rehazed = rehaze(dehazed, t, A)
    fake_hazy = rehaze(clean, t, A)
    # the re-hazed copy is pixel-aligned with the clean crop it came from
    recovered, _, _ = gen(fake_hazy, clean_coords)
    adv = lsgan(disc_clean(dehazed), 1.0) + lsgan(disc_hazy(fake_hazy), 1.0)
    cyc = F.l1_loss(rehazed, hazy) + F.l1_loss(recovered, clean)
    idt = F.l1_loss(identity, clean)
    losses = {
        "adv": adv,
        "cyc": cyc,
        "idt": idt,
        "total": cfg.lambda_adv * adv + cfg.lambda_cyc * cyc + cfg.lambda_idt * idt,
    }
    if return_fakes:
        return losses, {"dehazed": dehazed.detach(), "fake_hazy": fake_hazy.detach()}
    return losses


def _real_term(disc, real: torch.Tensor, r1_gamma: float) -> torch.Tensor:
    """LSGAN loss on real images plus (r1_gamma / 2) * E ||grad_x D(x)||^2 when r1_gamma > 0."""
    if r1_gamma <= 0:
        return lsgan(disc(real), 1.0)
    real = real.detach().requires_grad_(True)
    scores = disc(real)
    (grad,) = torch.autograd.grad(scores.sum(), real, create_graph=True)
    return lsgan(scores, 1.0) + 0.5 * r1_gamma * grad.pow(2).sum(dim=(1, 2, 3)).mean()


def discriminator_losses(disc_clean, disc_hazy, hazy, clean, fakes, r1_gamma: float = 0.0) -> dict[str, torch.Tensor]:
    d_clean = 0.5 * (_real_term(disc_clean, clean, r1_gamma) + lsgan(disc_clean(fakes["dehazed"]), 0.0))
    d_hazy = 0.5 * (_real_term(disc_hazy, hazy, r1_gamma) + lsgan(disc_hazy(fakes["fake_hazy"]), 0.0))
    return {"d_clean": d_clean, "d_hazy": d_hazy}


def set_requires_grad(modules, flag: bool) -> None:
    for m in modules:
        for p in m.parameters():
            p.requires_grad_(flag)


def check_finite(iteration: int, losses: dict[str, torch.Tensor]) -> None:
    for name, value in losses.items():
        v = float(value.detach())
        if not math.isfinite(v):
            raise TrainingFault(iteration, name, v)


def to_tensor(images: np.ndarray) -> torch.Tensor:
    """(B, H, W, 3) numpy -> (B, 3, H, W) float32 tensor."""
    return torch.as_tensor(np.asarray(images), dtype=torch.float32).permute(0, 3, 1, 2).contiguous()


def evaluate(gen: DehazeGenerator, pairs, batch: int = 8) -> tuple[float, float]:
    """Mean PSNR/SSIM of dehazed outputs against references; pairs are (hazy, clean)."""
    scores_p, scores_s = [], []
    was_training = gen.training
    gen.eval()
    with torch.no_grad():
        for i in range(0, len(pairs), batch):
            chunk = pairs[i : i + batch]
            out, _, _ = gen(to_tensor(np.stack([h for h, _ in chunk])))
            for restored, (_, ref) in zip(out.permute(0, 2, 3, 1).double().numpy(), chunk):
                scores_p.append(psnr(restored, ref))
                scores_s.append(ssim(restored, ref))
    gen.train(was_training)
    return float(np.mean(scores_p)), float(np.mean(scores_s))


@dataclass
class TrainResult:
    gen: DehazeGenerator
    disc_clean: PatchDiscriminator
    disc_hazy: PatchDiscriminator
    trace: list[tuple[int, str, float]] = field(default_factory=list)
    checkpoint_path: Path | None = None
    ema_gen: DehazeGenerator | None = None

    @property
    def inference_gen(self) -> DehazeGenerator:
        return self.ema_gen if self.ema_gen is not None else self.gen

    def modules(self) -> dict[str, nn.Module]:
        return {"gen": self.inference_gen, "disc_clean": self.disc_clean, "disc_hazy": self.disc_hazy}


def build_models(cfg: TrainConfig) -> tuple[DehazeGenerator, PatchDiscriminator, PatchDiscriminator]:
    torch.manual_seed(cfg.seed)
    return DehazeGenerator(cfg.net), PatchDiscriminator(), PatchDiscriminator()


def format_trace_line(iteration: int, name: str, value: float) -> str:
    return f"{iteration}, {name}, {value:.9g}"


def _batch_coords(windows, images: torch.Tensor) -> torch.Tensor | None:
    if windows is None:
        return None
    return window_grid(windows, tuple(images.shape[-2:]), images.dtype)


def update_ema(average: nn.Module, model: nn.Module, decay: float) -> None:
    with torch.no_grad():
        for a, p in zip(average.parameters(), model.parameters()):
            a.mul_(decay).add_(p, alpha=1 - decay)


def train_loop(
    cfg: TrainConfig,
    batches: Iterator,
    val_pairs=None,
    checkpoint_sink: Path | str | Callable | None = None,
    trace_path: Path | str | None = None,
) -> TrainResult:
    """Alternate discriminator and generator updates for ``cfg.iterations`` steps.

    ``batches`` yields objects with ``hazy``/``clean`` arrays of shape (B, H, W, 3).
    ``checkpoint_sink`` is a directory (``final.hzk`` plus periodic ``iter_NNNNNNN.hzk``)
    or a callable ``(iteration, result)``. Trace lines are ``iteration, name, value``.
    """
    gen, disc_clean, disc_hazy = build_models(cfg)
    result = TrainResult(gen, disc_clean, disc_hazy)
    if cfg.ema_decay > 0:
        result.ema_gen = copy.deepcopy(gen).requires_grad_(False)
    trace_fh = open(trace_path, "a") if trace_path is not None else None

    def record(it: int, name: str, value: float) -> None:
        result.trace.append((it, name, value))
        if trace_fh is not None:
            trace_fh.write(format_trace_line(it, name, value) + "\n")
            trace_fh.flush()

    def emit(it: int, final: bool = False) -> None:
        if checkpoint_sink is None:
            return
        if callable(checkpoint_sink):
            checkpoint_sink(it, result)
            return
        out = Path(checkpoint_sink)
        out.mkdir(parents=True, exist_ok=True)
        path = out / ("final.hzk" if final else f"iter_{it:07d}.hzk")
        checkpoint.save(path, cfg, result.modules())
        if final:
            result.checkpoint_path = path

    betas = (cfg.beta1, cfg.beta2)
    opt_g = Adam(gen.parameters(), cfg.lr, betas, cfg.eps)
    opt_d = Adam(list(disc_clean.parameters()) + list(disc_hazy.parameters()), cfg.lr, betas, cfg.eps)
    try:
        for it in range(1, cfg.iterations + 1):
            batch = next(batches)
            hazy, clean = to_tensor(batch.hazy), to_tensor(batch.clean)
            hazy_coords = _batch_coords(getattr(batch, "hazy_windows", None), hazy)
            clean_coords = _batch_coords(getattr(batch, "clean_windows", None), clean)

            set_requires_grad((disc_clean, disc_hazy), False)
            losses, fakes = compute_losses(
                gen, disc_clean, disc_hazy, hazy, clean, cfg, True, hazy_coords, clean_coords
            )
            check_finite(it, losses)
            opt_g.zero_grad()
            losses["total"].backward()
            opt_g.step()
            if result.ema_gen is not None:
                update_ema(result.ema_gen, gen, cfg.ema_decay)
            set_requires_grad((disc_clean, disc_hazy), True)

            d_losses = discriminator_losses(disc_clean, disc_hazy, hazy, clean, fakes, cfg.r1_gamma)
            check_finite(it, d_losses)
            opt_d.zero_grad()
            (d_losses["d_clean"] + d_losses["d_hazy"]).backward()
            opt_d.step()

            for name, value in {**losses, **d_losses}.items():
                record(it, name, float(value.detach()))
            if val_pairs and cfg.eval_every and (it % cfg.eval_every == 0 or it == cfg.iterations):
                p, s = evaluate(result.inference_gen, val_pairs)
                record(it, "val_psnr", p)
                record(it, "val_ssim", s)
                log.info("iter %d: total %.4f val PSNR %.2f SSIM %.3f", it, float(losses["total"].detach()), p, s)
            if cfg.checkpoint_every and it % cfg.checkpoint_every == 0:
                emit(it)
        emit(cfg.iterations, final=True)
    finally:
        if trace_fh is not None:
            trace_fh.close()
    return result


def load_generator(path) -> tuple[DehazeGenerator, TrainConfig]:
    cfg, tensors = checkpoint.read(path)
    gen = DehazeGenerator(cfg.net)
    checkpoint.load_into(gen, tensors, "gen")
    gen.eval()
    return gen, cfg
