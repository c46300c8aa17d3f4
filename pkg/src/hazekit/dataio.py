"""PNG input/output, unpaired batch pools and synthetic hazy-set generation."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import numpy as np
from PIL import Image as PILImage

from . import asm

log = logging.getLogger(__name__)


class ConfigurationError(ValueError):
    pass


def load_image(path) -> np.ndarray:
    """Read an 8-bit RGB PNG as float64 (H, W, 3) in [0, 1]."""
    path = Path(path)
    if not path.is_file():
        raise OSError(f"{path}: no such file")
    try:
        with PILImage.open(path) as im:
            im.load()
            fmt, mode = im.format, im.mode
            arr = np.asarray(im)
    except PILImage.UnidentifiedImageError as e:
        raise OSError(f"{path}: not a readable image") from e
    if fmt != "PNG":
        raise OSError(f"{path}: expected a PNG file, got {fmt}")
    if mode != "RGB" or arr.dtype != np.uint8:
        raise OSError(f"{path}: expected 8-bit RGB, got mode {mode!r} (grayscale, 16-bit and alpha images are not supported)")
    return arr.astype(np.float64) / 255.0


def quantize(img) -> np.ndarray:
    """[0, 1] floats to bytes with round-half-up."""
    img = np.clip(np.asarray(img, dtype=np.float64), 0.0, 1.0)
    return np.floor(img * 255.0 + 0.5).astype(np.uint8)


def save_image(img, path) -> None:
    """Write (H, W, 3) or (H, W) values in [0, 1] as an 8-bit PNG."""
    path = Path(path)
    data = quantize(img)
    if data.ndim not in (2, 3) or (data.ndim == 3 and data.shape[2] != 3):
        raise ValueError(f"cannot save array of shape {data.shape} as an image")
    try:
        PILImage.fromarray(data).save(path, format="PNG")
    except OSError as e:
        raise OSError(f"{path}: cannot write image ({e})") from e


def list_pngs(directory) -> list[Path]:
    directory = Path(directory)
    if not directory.is_dir():
        raise ConfigurationError(f"{directory}: not a directory")
    return sorted(p for p in directory.iterdir() if p.suffix.lower() == ".png")


@dataclass
class Batch:
    hazy: np.ndarray  # (B, crop, crop, 3)
    clean: np.ndarray
    hazy_names: list[str]
    clean_names: list[str]
    # where each crop sits in its source image: rows of (top, left, source_h, source_w)
    hazy_windows: np.ndarray | None = None
    clean_windows: np.ndarray | None = None


class _Pool:
    """Cycles through images in a fresh shuffled order every epoch."""

    def __init__(self, images: list[np.ndarray], names: list[str], rng: np.random.Generator):
        self.images, self.names, self.rng = images, names, rng
        self.order: list[int] = []

    def next_index(self) -> int:
        if not self.order:
            self.order = list(self.rng.permutation(len(self.images)))
        return int(self.order.pop())


def _random_crop(img: np.ndarray, crop: int, rng: np.random.Generator) -> tuple[np.ndarray, tuple[int, int, int, int]]:
    h, w = img.shape[:2]
    if h < crop or w < crop:
        raise ConfigurationError(f"image of size {h}x{w} is smaller than crop {crop}")
    y = int(rng.integers(0, h - crop + 1))
    x = int(rng.integers(0, w - crop + 1))
    return img[y : y + crop, x : x + crop], (y, x, h, w)


def unpaired_pools(hazy_dir, clean_dir, crop: int, seed: int, batch_size: int = 4) -> Iterator[Batch]:
    """Endless batches drawing hazy and clean images independently of each other.

    The batch sequence is a pure function of the directory contents and ``seed``.
    """
    pools = []
    for directory in (hazy_dir, clean_dir):
        files = list_pngs(directory)
        if not files:
            raise ConfigurationError(f"{directory}: no PNG images found")
        pools.append(([load_image(f) for f in files], [f.name for f in files]))
    return unpaired_batches(pools[0], pools[1], crop, seed, batch_size)


def unpaired_batches(hazy_pool, clean_pool, crop: int, seed: int, batch_size: int = 4) -> Iterator[Batch]:
    """In-memory variant of ``unpaired_pools``; each pool is (images, names)."""
    ss = np.random.SeedSequence(seed)
    hazy_rng, clean_rng, crop_rng = (np.random.default_rng(s) for s in ss.spawn(3))
    hazy = _Pool(list(hazy_pool[0]), list(hazy_pool[1]), hazy_rng)
    clean = _Pool(list(clean_pool[0]), list(clean_pool[1]), clean_rng)
    while True:
        hi = [hazy.next_index() for _ in range(batch_size)]
        ci = [clean.next_index() for _ in range(batch_size)]
        hz = [_random_crop(hazy.images[i], crop, crop_rng) for i in hi]
        cl = [_random_crop(clean.images[i], crop, crop_rng) for i in ci]
        yield Batch(
            hazy=np.stack([p for p, _ in hz]),
            clean=np.stack([p for p, _ in cl]),
            hazy_names=[hazy.names[i] for i in hi],
            clean_names=[clean.names[i] for i in ci],
            hazy_windows=np.array([w for _, w in hz]),
            clean_windows=np.array([w for _, w in cl]),
        )


@dataclass
class ManifestEntry:
    filename: str
    seed: int
    beta: float
    A: tuple[float, float, float]

    def line(self) -> str:
        return f"{self.filename}, {self.seed}, {self.beta!r}, {self.A[0]!r}, {self.A[1]!r}, {self.A[2]!r}"


MANIFEST_NAME = "manifest.txt"


def _output_name(index: int, source: Path) -> str:
    return f"{index:05d}_{source.name}"


def _source_name(output_name: str) -> str:
    return output_name.split("_", 1)[1]


def generate_synthetic_set(
    clean_dir,
    out_dir,
    count: int,
    seed: int,
    beta_range=(0.4, 1.2),
    a_range=(0.7, 1.0),
    d_max: float = asm.DEFAULT_D_MAX,
) -> list[ManifestEntry]:
    """Write ``count`` hazy PNGs synthesised from the clean images (cycled in name order).

    Output names are ``NNNNN_<source name>``; ``manifest.txt`` in ``out_dir`` records
    ``filename, seed, beta, A_r, A_g, A_b`` per image.
    """
    sources = list_pngs(clean_dir)
    if not sources:
        raise ConfigurationError(f"{clean_dir}: no PNG images found")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    seeds = np.random.default_rng(seed).integers(0, 2**31 - 1, size=count)
    entries = []
    for i in range(count):
        src = sources[i % len(sources)]
        clean = load_image(src)
        params = asm.random_asm_params(*clean.shape[:2], int(seeds[i]), beta_range, a_range, d_max)
        name = _output_name(i, src)
        save_image(asm.synthesize_haze(clean, params), out_dir / name)
        entries.append(ManifestEntry(name, int(seeds[i]), params.beta, tuple(float(a) for a in params.A)))
    write_manifest(entries, out_dir / MANIFEST_NAME)
    log.info("wrote %d hazy images to %s", count, out_dir)
    return entries


def write_manifest(entries: list[ManifestEntry], path) -> None:
    Path(path).write_text("".join(e.line() + "\n" for e in entries))


def read_manifest(path) -> list[ManifestEntry]:
    entries = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        if not line.strip():
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 6:
            raise ConfigurationError(f"{path}:{lineno}: expected 6 fields, got {len(parts)}")
        entries.append(ManifestEntry(parts[0], int(parts[1]), float(parts[2]), tuple(float(p) for p in parts[3:])))
    return entries


def regenerate_from_manifest(manifest_path, clean_dir, out_dir, beta_range=(0.4, 1.2), a_range=(0.7, 1.0), d_max=asm.DEFAULT_D_MAX) -> None:
    """Rebuild every image listed in a manifest from its recorded seed."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for entry in read_manifest(manifest_path):
        clean = load_image(Path(clean_dir) / _source_name(entry.filename))
        params = asm.random_asm_params(*clean.shape[:2], entry.seed, beta_range, a_range, d_max)
        if not np.isclose(params.beta, entry.beta) or not np.allclose(params.A, entry.A):
            raise ConfigurationError(f"{entry.filename}: parameters do not match the manifest; were the ranges changed?")
        save_image(asm.synthesize_haze(clean, params), out_dir / entry.filename)
