"""Full-frame detection: checkpoint loading, frame streams, evaluation."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .checkpoint import Checkpoint
from .data import CLASSES, DatasetManifest, IMAGE_SUFFIXES, letterbox, load_image, load_split
from .errors import ContractError
from .graph import GraphExecutor
from .metrics import MetricsReport
from .zoo import build_arch, count_parameters

logger = logging.getLogger("onfire.detect")

VIDEO_SUFFIXES = (".mp4", ".avi", ".mov", ".mkv")


@dataclass
class FrameVerdict:
    frame_id: str
    cls: str | None
    score: float | None
    error: str | None = None

    def as_json(self) -> str:
        doc = {"frame": self.frame_id, "class": self.cls, "score": self.score}
        if self.error:
            doc["error"] = self.error
        return json.dumps(doc)


def load_model(checkpoint: Checkpoint | str, input_size: tuple | None = None,
               norm: str | None = None) -> GraphExecutor:
    """Rebuild the checkpoint's architecture and load its weights.

    The spatial input size may be overridden; convolution weights are
    size-independent and the head pools globally, so any valid size works.
    """
    ckpt = checkpoint if isinstance(checkpoint, Checkpoint) else Checkpoint.load(checkpoint)
    graph = build_arch(ckpt.arch_name, input_size=input_size, norm=norm)
    ex = GraphExecutor(graph)
    ckpt.apply_to(ex)
    return ex


def preprocess_frame(frame: np.ndarray, input_hw: tuple) -> np.ndarray:
    return letterbox(frame, input_hw[0], input_hw[1])


def iter_frames(source, frame_skip: int = 1):
    """Yield (frame_id, rgb array or None, error or None) from an image,
    a directory of images, or a video file."""
    src = Path(source)
    if src.is_dir():
        for p in sorted(src.iterdir()):
            if p.suffix.lower() not in IMAGE_SUFFIXES:
                continue
            try:
                yield str(p), load_image(p), None
            except Exception as exc:
                yield str(p), None, str(exc)
        return
    if src.suffix.lower() in VIDEO_SUFFIXES:
        import cv2  # optional dependency, only needed for video input
        cap = cv2.VideoCapture(str(src))
        if not cap.isOpened():
            raise ContractError(f"cannot open video {src}")
        index = 0
        while True:
            ok, frame = cap.read()
            if not ok:
                break
            if index % frame_skip == 0:
                yield f"{src.name}#{index}", frame[:, :, ::-1].copy(), None
            index += 1
        cap.release()
        return
    try:
        yield str(src), load_image(src), None
    except Exception as exc:
        yield str(src), None, str(exc)


def detect(model: GraphExecutor, source, frame_skip: int = 1):
    """Yield one FrameVerdict per frame; decode errors flag the verdict and
    processing continues."""
    h, w, _ = model.shapes[model.graph.input_node.name]
    for frame_id, frame, err in iter_frames(source, frame_skip):
        if frame is None:
            yield FrameVerdict(frame_id, None, None, error=err)
            continue
        x = preprocess_frame(frame, (h, w))[None]
        probs = model.predict(x)[0]
        idx = int(probs.argmax())
        yield FrameVerdict(frame_id, CLASSES[idx], float(probs[idx]))


def evaluate_arrays(model: GraphExecutor, x: np.ndarray, y: np.ndarray,
                    batch_size: int = 64) -> MetricsReport:
    """Exact confusion counts with ``fire`` as the positive class."""
    preds = []
    for i in range(0, len(x), batch_size):
        preds.append(model.predict(x[i:i + batch_size]).argmax(axis=1))
    pred = np.concatenate(preds)
    true = y.argmax(axis=1)
    fire = CLASSES.index("fire")
    tp = int(((pred == fire) & (true == fire)).sum())
    fp = int(((pred == fire) & (true != fire)).sum())
    tn = int(((pred != fire) & (true != fire)).sum())
    fn = int(((pred != fire) & (true == fire)).sum())
    return MetricsReport.from_counts(tp, fp, tn, fn)


def evaluate_checkpoint(checkpoint: Checkpoint | str, manifest: DatasetManifest,
                        split: str, batch_size: int = 64,
                        input_size: tuple | None = None) -> MetricsReport:
    model = load_model(checkpoint, input_size=input_size)
    h, w, _ = model.shapes[model.graph.input_node.name]
    x, y = load_split(manifest, split, (h, w))
    report = evaluate_arrays(model, x, y, batch_size)
    total, _ = count_parameters(model.graph)
    return report.with_complexity(total / 1e6)
