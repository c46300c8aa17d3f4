"""Desk-scale clean image sources cut from scikit-image's bundled sample photos.

Tiles are non-overlapping 64x64 crops, so any split of the tile list gives
pools with disjoint source content.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from . import asm
from .dataio import save_image

PHOTOS = ("astronaut", "coffee", "chelsea", "rocket", "immunohistochemistry")
BUNDLED_PHOTO = Path(__file__).parent / "data" / "test_photo.png"


def _photo(name: str) -> np.ndarray:
    from skimage import data

    return getattr(data, name)().astype(np.float64) / 255.0


def photo_tiles(size: int = 64, min_std: float = 0.03) -> list[np.ndarray]:
    """All non-overlapping size x size tiles of the sample photos with some texture."""
    tiles = []
    for name in PHOTOS:
        img = _photo(name)
        for y in range(0, img.shape[0] - size + 1, size):
            for x in range(0, img.shape[1] - size + 1, size):
                tile = img[y : y + size, x : x + size]
                if tile.std() >= min_std:
                    tiles.append(tile)
    return tiles


def toy_split(n_hazy: int = 100, n_clean: int = 100, n_val: int = 16, seed: int = 0, size: int = 64) -> dict[str, list[np.ndarray]]:
    """Disjoint clean tiles for the hazy pool sources, the clean pool and validation."""
    tiles = photo_tiles(size)
    need = n_hazy + n_clean + n_val
    if len(tiles) < need:
        raise ValueError(f"only {len(tiles)} tiles available, need {need}")
    order = np.random.default_rng(seed).permutation(len(tiles))
    picked = [tiles[i] for i in order[:need]]
    return {
        "hazy_src": picked[:n_hazy],
        "clean": picked[n_hazy : n_hazy + n_clean],
        "val": picked[n_hazy + n_clean :],
    }


def hazy_pairs(clean_images, seed: int, beta_range=(0.4, 1.2), a_range=(0.7, 1.0)) -> list[tuple[np.ndarray, np.ndarray]]:
    """(hazy, clean) pairs with per-image seeds derived from ``seed``."""
    seeds = np.random.default_rng(seed).integers(0, 2**31 - 1, size=len(clean_images))
    pairs = []
    for s, clean in zip(seeds, clean_images):
        params = asm.random_asm_params(*clean.shape[:2], int(s), beta_range, a_range)
        pairs.append((asm.synthesize_haze(clean, params), clean))
    return pairs


def write_toy_dataset(root, seed: int = 0, **kwargs) -> dict[str, Path]:
    """Write hazy/, clean/, val_hazy/ and val_clean/ PNG folders under ``root``."""
    root = Path(root)
    split = toy_split(seed=seed, **kwargs)
    dirs = {k: root / k for k in ("hazy", "clean", "val_hazy", "val_clean")}
    for d in dirs.values():
        d.mkdir(parents=True, exist_ok=True)
    for i, (hazy, _) in enumerate(hazy_pairs(split["hazy_src"], seed + 1)):
        save_image(hazy, dirs["hazy"] / f"h{i:04d}.png")
    for i, clean in enumerate(split["clean"]):
        save_image(clean, dirs["clean"] / f"c{i:04d}.png")
    for i, (hazy, clean) in enumerate(hazy_pairs(split["val"], seed + 2)):
        save_image(hazy, dirs["val_hazy"] / f"v{i:04d}.png")
        save_image(clean, dirs["val_clean"] / f"v{i:04d}.png")
    return dirs
