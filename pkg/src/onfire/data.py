"""Dataset ingestion, deterministic splitting, and the synthetic generator.

The synthetic set stands in for the real fire corpus at desk scale: "fire"
images carry amorphous high-saturation red-through-yellow gradient blobs
over varied backgrounds, while "nofire" images mix plain backgrounds with
rigid uniformly-colored objects, half of them red, the canonical hard
negative.  Generation is fully determined by the seed, so repeated runs
produce bit-identical files.
"""

from __future__ import annotations

import json
import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ContractError

logger = logging.getLogger("onfire.data")

CLASSES = ("nofire", "fire")     # class index 1 is the positive class
SPLITS = ("train", "val", "test")
IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp")


def one_hot(label: str) -> np.ndarray:
    vec = np.zeros(2, dtype=np.float32)
    vec[CLASSES.index(label)] = 1.0
    return vec


# ---------------------------------------------------------------------------
# manifest


@dataclass
class ManifestEntry:
    path: str
    label: str
    split: str


@dataclass
class DatasetManifest:
    entries: list = field(default_factory=list)
    ratios: tuple = (0.8, 0.2)
    seed: int = 0
    skipped: list = field(default_factory=list)

    def select(self, split: str) -> list:
        return [e for e in self.entries if e.split == split]

    def counts(self) -> dict:
        out: dict = {}
        for e in self.entries:
            out.setdefault(e.split, {}).setdefault(e.label, 0)
            out[e.split][e.label] += 1
        return out

    def save(self, path) -> None:
        doc = {
            "seed": self.seed,
            "ratios": list(self.ratios),
            "skipped": self.skipped,
            "entries": [{"path": e.path, "label": e.label, "split": e.split}
                        for e in self.entries],
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=1)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "DatasetManifest":
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        return cls([ManifestEntry(**e) for e in doc["entries"]],
                   tuple(doc["ratios"]), doc["seed"], doc.get("skipped", []))


def ingest(root_dir, ratios=(0.8, 0.2), seed: int = 0) -> DatasetManifest:
    """Scan ``root/fire`` and ``root/nofire`` into a seeded stratified split.

    Ratios are (train, val) or (train, val, test) and must sum to 1.
    Unreadable images are skipped with a warning and recorded; an empty
    class directory is a hard error.
    """
    root = Path(root_dir)
    if len(ratios) not in (2, 3) or abs(sum(ratios) - 1.0) > 1e-6 \
            or any(r < 0 for r in ratios):
        raise ContractError(f"ratios must be 2 or 3 non-negative values summing to 1, "
                            f"got {ratios}")
    entries: list = []
    skipped: list = []
    for ci, label in enumerate(CLASSES):
        class_dir = root / label
        files = sorted(p for p in class_dir.glob("*")
                       if p.suffix.lower() in IMAGE_SUFFIXES) if class_dir.is_dir() else []
        usable = []
        for p in files:
            try:
                with Image.open(p) as im:
                    im.verify()
                usable.append(p)
            except Exception as exc:
                logger.warning("skipping unreadable image %s (%s)", p, exc)
                skipped.append(str(p))
        if not usable:
            raise ContractError(f"class directory {class_dir} has no readable images")
        order = np.random.default_rng([seed, ci]).permutation(len(usable))
        n = len(usable)
        n_train = round(ratios[0] * n)
        n_val = round((ratios[0] + ratios[1]) * n) - n_train
        for rank, idx in enumerate(order):
            if rank < n_train:
                split = "train"
            elif rank < n_train + n_val:
                split = "val"
            else:
                split = "test"
            entries.append(ManifestEntry(str(usable[idx]), label, split))
    manifest = DatasetManifest(entries, tuple(ratios), seed, skipped)
    for split in SPLITS[:len(ratios)]:
        if not manifest.select(split):
            warnings.warn(f"split {split!r} is empty under ratios {ratios}")
    return manifest


# ---------------------------------------------------------------------------
# image loading / preprocessing


def letterbox(img: np.ndarray, target_h: int, target_w: int) -> np.ndarray:
    """Aspect-preserving resize onto a zero-padded float32 canvas in [0,1]."""
    h, w = img.shape[:2]
    scale = min(target_h / h, target_w / w)
    nh, nw = max(1, int(round(h * scale))), max(1, int(round(w * scale)))
    if (nh, nw) != (h, w):
        im = Image.fromarray(img if img.dtype == np.uint8
                             else (np.clip(img, 0, 1) * 255).astype(np.uint8))
        img = np.asarray(im.resize((nw, nh), Image.BILINEAR))
    arr = img.astype(np.float32)
    if arr.max() > 1.0:
        arr = arr / 255.0
    canvas = np.zeros((target_h, target_w, 3), dtype=np.float32)
    top, left = (target_h - nh) // 2, (target_w - nw) // 2
    canvas[top:top + nh, left:left + nw] = arr
    return canvas


def load_image(path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"))


def load_split(manifest: DatasetManifest, split: str, size: tuple):
    """Materialize one split as (x [N,H,W,3] float32 in [0,1], y one-hot)."""
    entries = manifest.select(split)
    if not entries:
        raise ContractError(f"split {split!r} is empty")
    th, tw = size
    x = np.stack([letterbox(load_image(e.path), th, tw) for e in entries])
    y = np.stack([one_hot(e.label) for e in entries])
    return x, y


# ---------------------------------------------------------------------------
# synthetic generator


def _hsv_to_rgb(h, s, v):
    h6 = (h % 1.0) * 6.0
    i = np.floor(h6).astype(int) % 6
    f = h6 - np.floor(h6)
    p, q, t = v * (1 - s), v * (1 - f * s), v * (1 - (1 - f) * s)
    lut = [(v, t, p), (q, v, p), (p, v, t), (p, q, v), (t, p, v), (v, p, q)]
    rgb = np.zeros(h.shape + (3,))
    for sector, (r, g, b) in enumerate(lut):
        m = i == sector
        rgb[m, 0], rgb[m, 1], rgb[m, 2] = r[m], g[m], b[m]
    return rgb


def _background(size: int, rng: np.random.Generator) -> np.ndarray:
    # Smooth two-color gradient in cool hues plus low-amplitude noise.
    yy, xx = np.meshgrid(np.linspace(0, 1, size), np.linspace(0, 1, size),
                         indexing="ij")
    angle = rng.uniform(0, 2 * np.pi)
    ramp = (np.cos(angle) * xx + np.sin(angle) * yy + 1) / 2
    h0, h1 = rng.uniform(0.25, 0.75, size=2)
    hue = h0 + (h1 - h0) * ramp
    sat = rng.uniform(0.1, 0.5) * np.ones_like(hue)
    val = rng.uniform(0.25, 0.8) + 0.15 * ramp
    rgb = _hsv_to_rgb(hue, sat, np.clip(val, 0, 1))
    rgb += rng.normal(0, 0.015, rgb.shape)
    return np.clip(rgb, 0, 1)


def _fire_field(size: int, rng: np.random.Generator) -> np.ndarray:
    yy, xx = np.meshgrid(np.arange(size, dtype=float), np.arange(size, dtype=float),
                         indexing="ij")
    cy, cx = rng.uniform(0.25 * size, 0.75 * size, size=2)
    field = np.zeros((size, size))
    for _ in range(rng.integers(2, 5)):
        by = cy + rng.normal(0, size * 0.10)
        bx = cx + rng.normal(0, size * 0.10)
        sy = rng.uniform(size * 0.06, size * 0.20)
        sx = rng.uniform(size * 0.06, size * 0.20)
        field += rng.uniform(0.6, 1.0) * np.exp(
            -(((yy - by) / sy) ** 2 + ((xx - bx) / sx) ** 2) / 2)
    field /= field.max()
    # Flame-like flicker texture.
    field *= 1.0 + 0.25 * np.sin(yy * rng.uniform(0.5, 1.5)
                                 + xx * rng.uniform(0.5, 1.5)
                                 + rng.uniform(0, 6.28))
    return np.clip(field, 0, 1)


def make_fire_image(size: int, rng: np.random.Generator):
    """Returns (uint8 RGB image, boolean fire mask)."""
    bg = _background(size, rng)
    field = _fire_field(size, rng)
    hue = 0.015 + 0.14 * field ** 1.5 + rng.normal(0, 0.008, field.shape)
    sat = np.clip(0.9 + rng.normal(0, 0.04, field.shape), 0.75, 1.0)
    val = np.clip(0.65 + 0.35 * field, 0, 1)
    flame = _hsv_to_rgb(np.clip(hue, 0.0, 0.17), sat, val)
    alpha = np.clip((field - 0.25) / 0.35, 0, 1)[..., None]
    img = bg * (1 - alpha) + flame * alpha
    mask = field > 0.35
    return (np.clip(img, 0, 1) * 255).astype(np.uint8), mask


def _draw_shape(img: np.ndarray, rng: np.random.Generator, red: bool) -> None:
    size = img.shape[0]
    yy, xx = np.meshgrid(np.arange(size, dtype=float), np.arange(size, dtype=float),
                         indexing="ij")
    cy, cx = rng.uniform(0.2 * size, 0.8 * size, size=2)
    extent = rng.uniform(0.12 * size, 0.3 * size)
    kind = rng.integers(0, 3)
    if kind == 0:       # rotated rectangle
        theta = rng.uniform(0, np.pi)
        u = (yy - cy) * np.cos(theta) + (xx - cx) * np.sin(theta)
        v = -(yy - cy) * np.sin(theta) + (xx - cx) * np.cos(theta)
        mask = (np.abs(u) < extent) & (np.abs(v) < extent * rng.uniform(0.4, 1.0))
    elif kind == 1:     # disc
        mask = (yy - cy) ** 2 + (xx - cx) ** 2 < extent ** 2
    else:               # triangle (half-plane intersection)
        theta = rng.uniform(0, np.pi)
        u = (yy - cy) * np.cos(theta) + (xx - cx) * np.sin(theta)
        v = -(yy - cy) * np.sin(theta) + (xx - cx) * np.cos(theta)
        mask = (v > -extent * 0.6) & (v < u + extent * 0.6) & (v < -u + extent * 0.6)
    if red:
        hue = rng.uniform(-0.03, 0.04) % 1.0
        sat, val = rng.uniform(0.8, 1.0), rng.uniform(0.6, 0.95)
    else:
        hue = rng.uniform(0.2, 0.9)
        sat, val = rng.uniform(0.5, 1.0), rng.uniform(0.4, 0.9)
    color = _hsv_to_rgb(np.full((1,), hue), np.full((1,), sat), np.full((1,), val))[0]
    shade = 1.0 - 0.15 * (yy - cy + extent) / (2 * extent + 1e-9)
    img[mask] = np.clip(color[None, :] * shade[mask, None], 0, 1)


def make_nofire_image(size: int, rng: np.random.Generator) -> np.ndarray:
    img = _background(size, rng)
    # Half the negatives carry a rigid red object, the classic false-positive
    # trigger; the rest get differently colored clutter or stay plain.
    n_shapes = int(rng.integers(0, 4))
    force_red = rng.random() < 0.5
    for si in range(n_shapes):
        _draw_shape(img, rng, red=force_red and si == 0)
    return (np.clip(img, 0, 1) * 255).astype(np.uint8)


def synth_dataset(out_dir, n_per_class: int, image_size: int = 64, seed: int = 0,
                  write_masks: bool = False) -> list:
    """Generate ``n_per_class`` images per class under ``out_dir/{fire,nofire}``.

    Returns the list of written file paths.  With ``write_masks`` the fire
    masks land under ``out_dir/masks`` for localization ground truth.
    """
    if n_per_class < 1:
        raise ContractError(f"n_per_class must be >= 1, got {n_per_class}")
    out = Path(out_dir)
    written = []
    for ci, label in enumerate(CLASSES):
        (out / label).mkdir(parents=True, exist_ok=True)
        for i in range(n_per_class):
            rng = np.random.default_rng([seed, ci, i])
            if label == "fire":
                img, mask = make_fire_image(image_size, rng)
                if write_masks:
                    (out / "masks").mkdir(exist_ok=True)
                    Image.fromarray(mask.astype(np.uint8) * 255).save(
                        out / "masks" / f"fire_{i:05d}.png")
            else:
                img = make_nofire_image(image_size, rng)
            path = out / label / f"{label}_{i:05d}.png"
            Image.fromarray(img).save(path)
            written.append(str(path))
    return written
