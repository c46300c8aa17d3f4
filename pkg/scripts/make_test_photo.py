"""Regenerate the bundled 64x64 test photo from scikit-image's ``chelsea`` sample."""
from skimage import data, transform

from hazekit.dataio import save_image
from hazekit.toydata import BUNDLED_PHOTO

img = data.chelsea()
h, w = img.shape[:2]
s = min(h, w)
img = img[(h - s) // 2 : (h - s) // 2 + s, (w - s) // 2 : (w - s) // 2 + s]
BUNDLED_PHOTO.parent.mkdir(parents=True, exist_ok=True)
save_image(transform.resize(img, (64, 64), anti_aliasing=True), BUNDLED_PHOTO)
print(f"wrote {BUNDLED_PHOTO}")
