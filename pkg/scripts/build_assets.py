"""Regenerate the data files shipped in ``src/tokenlink/data``.

    python scripts/build_assets.py images     # needs scikit-image
    python scripts/build_assets.py codebook
    python scripts/build_assets.py patches

Test images (natural photographs) are center-cropped to a square and
area-resampled to 256x256.  Codebook-training images are a disjoint set at
512x512.
"""

import sys
from pathlib import Path

import numpy as np

from tokenlink import zeroout
from tokenlink.dct_tokenizer import DctTokenizerConfig, training_vectors
from tokenlink.imageio import load_image, save_image
from tokenlink.vq import train_codebook

DATA = Path(__file__).resolve().parents[1] / "src" / "tokenlink" / "data"
TEST_IMAGES = ["astronaut", "coffee", "chelsea", "rocket"]
TRAIN_IMAGES = ["immunohistochemistry", "hubble_deep_field", "retina", "camera", "coins", "brick", "grass"]


def square(im, size):
    from skimage.transform import resize

    im = im[..., :3] if im.ndim == 3 else np.repeat(im[..., None], 3, axis=2)
    h, w = im.shape[:2]
    s = min(h, w)
    y, x = (h - s) // 2, (w - s) // 2
    return resize(im[y : y + s, x : x + s] / 255.0, (size, size), anti_aliasing=True)


def build_images():
    from skimage import data

    (DATA / "images").mkdir(parents=True, exist_ok=True)
    (DATA / "train_images").mkdir(parents=True, exist_ok=True)
    for name in TEST_IMAGES:
        save_image(square(getattr(data, name)(), 256), DATA / "images" / f"{name}.ppm")
    for name in TRAIN_IMAGES:
        save_image(square(getattr(data, name)(), 512), DATA / "train_images" / f"{name}.png")


def build_codebook():
    images = [load_image(p) for p in sorted((DATA / "train_images").iterdir())]
    vectors = training_vectors(images, DctTokenizerConfig(), stride=64, flips=True)
    train_codebook(vectors, 4096, seed=0).save(DATA / "codebook.rtcb")


def build_patches():
    zeroout.save_patches(zeroout.synthetic_patches(4096, seed=0), DATA / "zeroout_patches.bin")


if __name__ == "__main__":
    steps = {"images": build_images, "codebook": build_codebook, "patches": build_patches}
    for arg in sys.argv[1:]:
        steps[arg]()
