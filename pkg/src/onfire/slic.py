"""SLIC superpixel over-segmentation and per-region classification.

The segmentation is the classic recipe: convert to CIELAB, seed cluster
centers on a grid of step ``S = sqrt(H*W/k)``, nudge each seed to the lowest
gradient spot in its 3x3 neighbourhood, then iterate windowed assignment
(distance ``sqrt(d_lab^2 + (d_xy/S)^2 * m^2)`` inside a 2S x 2S window) and
center updates until the total center displacement drops below one pixel or
``max_iters`` is hit.  A connectivity pass absorbs 4-connected fragments
smaller than ``connectivity_min_fraction * (N/k)`` into their dominant
neighbour and relabels densely.

Everything is deterministic for a fixed image and parameters; ties during
assignment go to the lowest cluster id, so results do not depend on thread
count or backend.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import backend
from .colorspace import srgb_to_lab
from .errors import ContractError

PATCH_SIZE = 224


@dataclass(frozen=True)
class SlicParams:
    k: int = 100
    compactness: float = 10.0
    max_iters: int = 10
    connectivity_min_fraction: float = 0.25

    def __post_init__(self):
        if self.k < 1:
            raise ContractError(f"k must be >= 1, got {self.k}")
        if self.compactness <= 0:
            raise ContractError(f"compactness must be > 0, got {self.compactness}")
        if self.max_iters < 1:
            raise ContractError(f"max_iters must be >= 1, got {self.max_iters}")
        if not (0.0 < self.connectivity_min_fraction <= 1.0):
            raise ContractError("connectivity_min_fraction must be in (0,1]")


@dataclass
class Region:
    label: int
    pixel_count: int
    bbox: tuple           # (y0, x0, y1, x1), half-open
    centroid: tuple       # (cy, cx) floats


@dataclass
class SuperpixelMap:
    labels: np.ndarray    # int32 [H,W], dense ids 0..L-1
    regions: list = field(default_factory=list)
    center_moves: list = field(default_factory=list)  # per-iteration displacement

    @property
    def n_regions(self) -> int:
        return len(self.regions)


def _seed_grid(h: int, w: int, k: int) -> np.ndarray:
    ny = max(1, round(np.sqrt(k * h / w)))
    nx = max(1, round(k / ny))
    ys = ((np.arange(ny) + 0.5) * h / ny).astype(np.int64)
    xs = ((np.arange(nx) + 0.5) * w / nx).astype(np.int64)
    return np.stack(np.meshgrid(ys, xs, indexing="ij"), axis=-1).reshape(-1, 2)


def _perturb_to_low_gradient(lab: np.ndarray, seeds: np.ndarray) -> np.ndarray:
    h, w, _ = lab.shape
    grad = np.full((h, w), np.inf)
    if h > 2 and w > 2:
        dx = lab[1:-1, 2:] - lab[1:-1, :-2]
        dy = lab[2:, 1:-1] - lab[:-2, 1:-1]
        grad[1:-1, 1:-1] = (dx * dx).sum(-1) + (dy * dy).sum(-1)
    out = seeds.copy()
    for i, (sy, sx) in enumerate(seeds):
        cy = min(max(int(sy), 1), max(h - 2, 1))
        cx = min(max(int(sx), 1), max(w - 2, 1))
        best = (np.inf, cy, cx)
        for yy in range(max(cy - 1, 0), min(cy + 2, h)):
            for xx in range(max(cx - 1, 0), min(cx + 2, w)):
                g = grad[yy, xx]
                if g < best[0]:
                    best = (g, yy, xx)
        out[i] = (best[1], best[2])
    return out


def _accumulate(lab: np.ndarray, labels: np.ndarray, k: int):
    flat = labels.ravel()
    valid = flat >= 0
    idx = flat[valid]
    h, w, _ = lab.shape
    yy, xx = np.meshgrid(np.arange(h, dtype=np.float64),
                         np.arange(w, dtype=np.float64), indexing="ij")
    sums = np.zeros((k, 5))
    for fi, feat in enumerate((lab[..., 0], lab[..., 1], lab[..., 2], yy, xx)):
        sums[:, fi] = np.bincount(idx, weights=feat.ravel()[valid], minlength=k)
    counts = np.bincount(idx, minlength=k)
    return sums, counts


def slic_segment(image: np.ndarray, params: SlicParams = SlicParams()) -> SuperpixelMap:
    """Over-segment a color image into approximately equal superpixels."""
    img = np.asarray(image)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ContractError(f"slic_segment needs an HxWx3 color image, got {img.shape}")
    h, w = img.shape[:2]
    if params.k > h * w:
        raise ContractError(f"k={params.k} exceeds pixel count {h * w}")
    lab = np.ascontiguousarray(srgb_to_lab(img))
    step = float(np.sqrt(h * w / params.k))
    search = int(np.ceil(2.0 * step))
    spatial_w = (params.compactness / step) ** 2
    seeds = _perturb_to_low_gradient(lab, _seed_grid(h, w, params.k))
    k = len(seeds)
    centers = np.empty((k, 5))
    centers[:, :3] = lab[seeds[:, 0], seeds[:, 1]]
    centers[:, 3:] = seeds.astype(np.float64)

    kern = backend.kernels(np.float64)
    labels = np.empty((h, w), dtype=np.int32)
    dist2 = np.empty((h, w), dtype=np.float64)
    moves = []
    for _ in range(params.max_iters):
        labels.fill(-1)
        dist2.fill(np.inf)
        kern.slic_assign(lab, centers, search, spatial_w, labels, dist2)
        sums, counts = _accumulate(lab, labels, k)
        nonzero = counts > 0
        new_centers = centers.copy()
        new_centers[nonzero] = sums[nonzero] / counts[nonzero, None]
        move = np.sqrt(((new_centers[:, 3:] - centers[:, 3:]) ** 2).sum(axis=1)).sum()
        moves.append(float(move))
        centers = new_centers
        if move < 1.0:
            break
    # Safety net: claim any pixel no window reached by nearest seed center.
    if (labels < 0).any():
        miss = np.argwhere(labels < 0)
        d = ((miss[:, None, :] - centers[None, :, 3:]) ** 2).sum(-1)
        labels[miss[:, 0], miss[:, 1]] = d.argmin(axis=1)
    labels = _enforce_connectivity(labels, params)
    return SuperpixelMap(labels, _region_stats(labels), moves)


def _enforce_connectivity(labels: np.ndarray, params: SlicParams) -> np.ndarray:
    """Absorb small 4-connected fragments into their dominant neighbour."""
    h, w = labels.shape
    comp = -np.ones((h, w), dtype=np.int64)
    sizes, first_px = [], []
    nid = 0
    for y in range(h):
        for x in range(w):
            if comp[y, x] >= 0:
                continue
            stack = [(y, x)]
            comp[y, x] = nid
            size = 0
            lab_val = labels[y, x]
            while stack:
                cy, cx = stack.pop()
                size += 1
                for ny, nx in ((cy - 1, cx), (cy + 1, cx), (cy, cx - 1), (cy, cx + 1)):
                    if 0 <= ny < h and 0 <= nx < w and comp[ny, nx] < 0 \
                            and labels[ny, nx] == lab_val:
                        comp[ny, nx] = nid
                        stack.append((ny, nx))
            sizes.append(size)
            first_px.append((y, x))
            nid += 1
    sizes = np.asarray(sizes)
    # Neighbour adjacency counts between components.
    adj: list[dict] = [dict() for _ in range(nid)]
    a, b = comp[:, :-1].ravel(), comp[:, 1:].ravel()
    va, vb = comp[:-1, :].ravel(), comp[1:, :].ravel()
    for left, right in ((a, b), (va, vb)):
        diff = left != right
        for ca, cb in zip(left[diff], right[diff]):
            adj[ca][cb] = adj[ca].get(cb, 0) + 1
            adj[cb][ca] = adj[cb].get(ca, 0) + 1
    min_size = max(1, int(params.connectivity_min_fraction * (h * w / params.k)))
    parent = np.arange(nid)

    def find(c):
        while parent[c] != c:
            parent[c] = parent[parent[c]]
            c = parent[c]
        return c

    for c in sorted(range(nid), key=lambda c: (sizes[c], c)):
        if sizes[c] >= min_size or not adj[c]:
            continue
        # Dominant neighbour: most shared boundary, lowest id on ties.
        tgt = min(adj[c].items(), key=lambda kv: (-kv[1], kv[0]))[0]
        root_t, root_c = find(tgt), find(c)
        if root_t == root_c:
            continue
        parent[root_c] = root_t
        sizes[root_t] += sizes[root_c]
        for other, cnt in adj[c].items():
            if other != tgt:
                adj[tgt][other] = adj[tgt].get(other, 0) + cnt
                adj[other][tgt] = adj[other].get(tgt, 0) + cnt
    roots = np.array([find(c) for c in range(nid)])
    # Dense relabel in first-appearance scan order.
    remap = {}
    order = comp.ravel()
    final = np.empty(order.shape, dtype=np.int32)
    for i, c in enumerate(order):
        r = roots[c]
        if r not in remap:
            remap[r] = len(remap)
        final[i] = remap[r]
    return final.reshape(h, w)


def _region_stats(labels: np.ndarray) -> list:
    h, w = labels.shape
    n = int(labels.max()) + 1
    flat = labels.ravel()
    counts = np.bincount(flat, minlength=n)
    yy, xx = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    sy = np.bincount(flat, weights=yy.ravel(), minlength=n)
    sx = np.bincount(flat, weights=xx.ravel(), minlength=n)
    regions = []
    for lbl in range(n):
        mask_idx = np.flatnonzero(flat == lbl)
        ys, xs = np.divmod(mask_idx, w)
        regions.append(Region(
            lbl, int(counts[lbl]),
            (int(ys.min()), int(xs.min()), int(ys.max()) + 1, int(xs.max()) + 1),
            (float(sy[lbl] / counts[lbl]), float(sx[lbl] / counts[lbl]))))
    return regions


# ---------------------------------------------------------------------------
# region patches and localization


@dataclass
class RegionPatch:
    image: np.ndarray     # float32 [patch,patch,3] in [0,1]; zero off-mask
    frame_id: str
    label: int


def extract_patch(image: np.ndarray, spmap: SuperpixelMap, label: int,
                  patch_size: int = PATCH_SIZE, frame_id: str = "") -> RegionPatch:
    """Mask one superpixel onto a zero canvas with its centroid centered.

    Regions wider/taller than the canvas are uniformly downscaled to fit
    (aspect preserved); everything off the superpixel mask stays exactly 0.
    """
    if label < 0 or label >= spmap.n_regions:
        raise KeyError(f"label {label} not in superpixel map "
                       f"(0..{spmap.n_regions - 1})")
    img = np.asarray(image)
    if img.dtype == np.uint8:
        img = img.astype(np.float32) / 255.0
    else:
        img = img.astype(np.float32)
    region = spmap.regions[label]
    y0, x0, y1, x1 = region.bbox
    crop = img[y0:y1, x0:x1].copy()
    mask = (spmap.labels[y0:y1, x0:x1] == label)
    crop[~mask] = 0.0
    cy, cx = region.centroid[0] - y0, region.centroid[1] - x0
    bh, bw = crop.shape[:2]
    scale = min(1.0, patch_size / bh, patch_size / bw)
    if scale < 1.0:
        from PIL import Image
        nh, nw = max(1, int(round(bh * scale))), max(1, int(round(bw * scale)))
        im = Image.fromarray((crop * 255.0).astype(np.uint8))
        crop = np.asarray(im.resize((nw, nh), Image.BILINEAR), dtype=np.float32) / 255.0
        m = Image.fromarray(mask.astype(np.uint8) * 255)
        mask = np.asarray(m.resize((nw, nh), Image.NEAREST)) > 127
        crop[~mask] = 0.0
        cy, cx = cy * scale, cx * scale
        bh, bw = nh, nw
    canvas = np.zeros((patch_size, patch_size, 3), dtype=np.float32)
    top = int(round(patch_size / 2 - cy))
    left = int(round(patch_size / 2 - cx))
    cy0, cx0 = max(0, -top), max(0, -left)
    py0, px0 = max(0, top), max(0, left)
    ch = min(bh - cy0, patch_size - py0)
    cw = min(bw - cx0, patch_size - px0)
    if ch > 0 and cw > 0:
        canvas[py0:py0 + ch, px0:px0 + cw] = crop[cy0:cy0 + ch, cx0:cx0 + cw]
    return RegionPatch(canvas, frame_id, label)


@dataclass
class RegionVerdict:
    label: int
    cls: str              # fire / nofire
    score: float          # softmax probability of the predicted class


@dataclass
class LocalizationResult:
    spmap: SuperpixelMap
    verdicts: list
    overlay: np.ndarray   # uint8 [H,W,3]

    def fire_labels(self) -> list:
        return [v.label for v in self.verdicts if v.cls == "fire"]


FIRE_COLOR = np.array([0, 255, 0], dtype=np.uint8)     # boundaries of fire regions
NOFIRE_COLOR = np.array([255, 0, 0], dtype=np.uint8)   # boundaries of no-fire regions


def region_boundaries(labels: np.ndarray) -> np.ndarray:
    edge = np.zeros(labels.shape, dtype=bool)
    edge[:-1, :] |= labels[:-1, :] != labels[1:, :]
    edge[1:, :] |= labels[:-1, :] != labels[1:, :]
    edge[:, :-1] |= labels[:, :-1] != labels[:, 1:]
    edge[:, 1:] |= labels[:, :-1] != labels[:, 1:]
    return edge


def draw_overlay(frame: np.ndarray, spmap: SuperpixelMap, verdicts: list) -> np.ndarray:
    img = np.asarray(frame)
    if img.dtype != np.uint8:
        img = (np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)
    out = img.copy()
    is_fire = np.zeros(spmap.n_regions, dtype=bool)
    for v in verdicts:
        is_fire[v.label] = v.cls == "fire"
    edge = region_boundaries(spmap.labels)
    colors = np.where(is_fire[spmap.labels][..., None], FIRE_COLOR, NOFIRE_COLOR)
    out[edge] = colors[edge]
    return out


def localize(frame: np.ndarray, classifier, params: SlicParams = SlicParams(),
             input_size: int = PATCH_SIZE, batch_size: int = 64,
             frame_id: str = "") -> LocalizationResult:
    """Segment a frame and classify every superpixel as fire / no-fire.

    ``classifier`` maps a float32 batch [M, input_size, input_size, 3] to
    class probabilities [M, 2] ordered (nofire, fire).
    """
    spmap = slic_segment(frame, params)
    patches = [extract_patch(frame, spmap, r.label, input_size, frame_id).image
               for r in spmap.regions]
    verdicts = []
    for start in range(0, len(patches), batch_size):
        batch = np.stack(patches[start:start + batch_size])
        probs = np.asarray(classifier(batch))
        if probs.ndim != 2 or probs.shape != (len(batch), 2):
            raise ContractError(
                f"classifier returned shape {probs.shape}, expected ({len(batch)}, 2)")
        for j, p in enumerate(probs):
            cls = "fire" if p[1] >= p[0] else "nofire"
            verdicts.append(RegionVerdict(start + j, cls, float(p.max())))
    overlay = draw_overlay(frame, spmap, verdicts)
    return LocalizationResult(spmap, verdicts, overlay)


def export_label_map(spmap: SuperpixelMap, image_path, index_path) -> None:
    """Write the label image (grayscale PNG) plus a text index of regions."""
    from PIL import Image
    labels = spmap.labels
    if spmap.n_regions <= 256:
        Image.fromarray(labels.astype(np.uint8), mode="L").save(image_path)
    else:
        Image.fromarray(labels.astype(np.int32), mode="I").save(image_path)
    with open(index_path, "w", encoding="utf-8") as fh:
        fh.write("# label pixel_count y0 x0 y1 x1 centroid_y centroid_x\n")
        for r in spmap.regions:
            y0, x0, y1, x1 = r.bbox
            fh.write(f"{r.label} {r.pixel_count} {y0} {x0} {y1} {x1} "
                     f"{r.centroid[0]:.2f} {r.centroid[1]:.2f}\n")
