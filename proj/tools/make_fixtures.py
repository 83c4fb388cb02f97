#!/usr/bin/env python3
"""Regenerate the checked-in image fixtures from scikit-image sample data.

fixtures/images/  evaluation set: 16 natural 64x64 crops (PPM), 4 natural
                  128x128 crops (PNG) and 4 synthetic 64x64 images (PPM).
fixtures/train/   training images (PNG), drawn from different sources.
"""
import argparse
import pathlib

import numpy as np
from PIL import Image
from skimage import data, transform


def rgb(img):
    img = np.asarray(img)
    if img.dtype == bool:
        img = img.astype(np.uint8) * 255
    if img.ndim == 2:
        img = np.stack([img] * 3, axis=-1)
    return img[..., :3].astype(np.uint8)


def shrink(img, factor):
    if factor == 1:
        return img
    out = transform.rescale(img, 1.0 / factor, channel_axis=-1, anti_aliasing=True, preserve_range=True)
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


def crop(img, top, left, size):
    return img[top:top + size, left:left + size]


# (name, source, shrink factor, top, left)
NATURAL_64 = [
    ("n00_chelsea_face", "chelsea", 3, 20, 40),
    ("n01_chelsea_fur", "chelsea", 2, 70, 120),
    ("n02_coffee_cup", "coffee", 4, 10, 60),
    ("n03_coffee_table", "coffee", 3, 60, 20),
    ("n04_hubble_a", "hubble_deep_field", 4, 40, 80),
    ("n05_hubble_b", "hubble_deep_field", 6, 70, 40),
    ("n06_retina_disc", "retina", 8, 60, 90),
    ("n07_retina_vessels", "retina", 6, 120, 60),
    ("n08_gravel", "gravel", 3, 50, 40),
    ("n09_clock_face", "clock", 3, 10, 40),
    ("n10_colorwheel", "colorwheel", 4, 10, 14),
    ("n11_text", "text", 2, 10, 60),
    ("n12_page", "page", 2, 20, 50),
    ("n13_cell", "cell", 5, 40, 30),
    ("n14_cat_eye", "cat", 2, 40, 120),
    ("n15_logo", "logo", 5, 15, 20),
]

NATURAL_128 = [
    ("w00_chelsea", "chelsea", 2, 10, 40),
    ("w01_coffee", "coffee", 3, 0, 40),
    ("w02_hubble", "hubble_deep_field", 5, 20, 40),
    ("w03_retina", "retina", 8, 20, 20),
]

TRAIN = [
    ("astronaut", 2), ("rocket", 2), ("immunohistochemistry", 2), ("camera", 2),
    ("grass", 2), ("brick", 2), ("moon", 2), ("coins", 1),
]


def stereo_pair():
    left, right, _ = data.stereo_motorcycle()
    return [("motorcycle_left", shrink(rgb(left), 2)), ("motorcycle_right", shrink(rgb(right), 2))]


def synthetic_train(size=128, count=8):
    # Saturated colour patterns, drawn from a different seed than the
    # evaluation synthetics.
    rng = np.random.default_rng(7)
    y, x = np.mgrid[0:size, 0:size] / (size - 1)
    out = []
    for k in range(count):
        kind = k % 4
        c0, c1 = rng.uniform(0, 1, 3), rng.uniform(0, 1, 3)
        if kind == 0:
            a = rng.uniform(0, 2 * np.pi)
            t = np.clip(0.5 + (np.cos(a) * (x - 0.5) + np.sin(a) * (y - 0.5)), 0, 1)[..., None]
            img = c0 * (1 - t) + c1 * t
        elif kind == 1:
            n = int(rng.integers(3, 12))
            m = ((np.floor(x * n) + np.floor(y * n)) % 2)[..., None]
            img = c0 * (1 - m) + c1 * m
        elif kind == 2:
            img = np.tile(c0, (size, size, 1))
            for _ in range(12):
                h, w = rng.integers(8, size // 2, 2)
                t, l = rng.integers(0, size - h), rng.integers(0, size - w)
                img[t:t + h, l:l + w] = rng.uniform(0, 1, 3)
        else:
            coarse = rng.uniform(0, 1, (size // 16, size // 16, 3))
            img = transform.resize(coarse, (size, size, 3), order=3)
        out.append((f"synthetic_{k}", np.clip(np.rint(np.clip(img, 0, 1) * 255), 0, 255).astype(np.uint8)))
    return out


def synthetic(size=64):
    rng = np.random.default_rng(20240601)
    y, x = np.mgrid[0:size, 0:size] / (size - 1)
    grad = np.stack([x, y, 1 - 0.5 * (x + y)], axis=-1)
    noise = rng.uniform(0, 1, (size, size, 3))
    checker = (((np.floor(x * 8) + np.floor(y * 8)) % 2)[..., None] * np.array([0.9, 0.8, 0.2]) + 0.05)
    blur = np.clip(0.5 + 0.15 * rng.standard_normal((size // 8, size // 8, 3)), 0, 1)
    smooth_noise = transform.resize(blur, (size, size, 3), order=1)
    to8 = lambda a: np.clip(np.rint(a * 255), 0, 255).astype(np.uint8)
    return [("s00_gradient", to8(grad)), ("s01_uniform_noise", to8(noise)),
            ("s02_checker", to8(checker)), ("s03_smooth_noise", to8(smooth_noise))]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default=str(pathlib.Path(__file__).resolve().parent.parent / "fixtures"))
    args = ap.parse_args()
    out = pathlib.Path(args.out)
    (out / "images").mkdir(parents=True, exist_ok=True)
    (out / "train").mkdir(parents=True, exist_ok=True)

    for name, src, f, top, left in NATURAL_64:
        img = crop(shrink(rgb(getattr(data, src)()), f), top, left, 64)
        assert img.shape == (64, 64, 3), (name, img.shape)
        Image.fromarray(img).save(out / "images" / f"{name}.ppm")
    for name, src, f, top, left in NATURAL_128:
        img = crop(shrink(rgb(getattr(data, src)()), f), top, left, 128)
        assert img.shape == (128, 128, 3), (name, img.shape)
        Image.fromarray(img).save(out / "images" / f"{name}.png")
    for name, img in synthetic():
        Image.fromarray(img).save(out / "images" / f"{name}.ppm")
    for src, f in TRAIN:
        Image.fromarray(shrink(rgb(getattr(data, src)()), f)).save(out / "train" / f"{src}.png")
    for name, img in stereo_pair() + synthetic_train():
        Image.fromarray(img).save(out / "train" / f"{name}.png")


if __name__ == "__main__":
    main()
