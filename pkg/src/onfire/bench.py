"""Throughput benchmark: frames per second and latency percentiles.

Frames are decoded up front; the timed loop covers preprocessing plus
single-frame inference, which is what a live pipeline pays per frame.  The
reported fps is the median over repetitions.
"""

from __future__ import annotations

import os
import time
from dataclasses import dataclass

import numpy as np

from . import backend
from .detect import preprocess_frame
from .errors import ContractError
from .graph import GraphExecutor


@dataclass
class BenchReport:
    model_name: str
    input_size: tuple
    threads: int
    backend: str
    frames: int
    repetitions: int
    fps: float
    p50_latency_s: float
    p95_latency_s: float

    def as_dict(self) -> dict:
        return {
            "model": self.model_name,
            "input_size": list(self.input_size),
            "threads": self.threads,
            "backend": self.backend,
            "frames": self.frames,
            "repetitions": self.repetitions,
            "fps": self.fps,
            "p50_latency_s": self.p50_latency_s,
            "p95_latency_s": self.p95_latency_s,
        }


def _thread_count() -> int:
    env = os.environ.get("OMP_NUM_THREADS")
    if env and env.isdigit():
        return int(env)
    return os.cpu_count() or 1


def bench_fps(model: GraphExecutor, frames, warmup: int = 10,
              repetitions: int = 5) -> BenchReport:
    """Time per-frame inference over preloaded decoded frames."""
    frames = list(frames)
    if not frames:
        raise ContractError("bench_fps needs at least one frame")
    if repetitions < 1:
        raise ContractError(f"repetitions must be >= 1, got {repetitions}")
    h, w, _ = model.shapes[model.graph.input_node.name]
    for i in range(warmup):
        x = preprocess_frame(frames[i % len(frames)], (h, w))[None]
        model.predict(x)
    latencies = []
    fps_runs = []
    for _ in range(repetitions):
        t0 = time.perf_counter()
        for frame in frames:
            f0 = time.perf_counter()
            x = preprocess_frame(frame, (h, w))[None]
            model.predict(x)
            latencies.append(time.perf_counter() - f0)
        elapsed = time.perf_counter() - t0
        fps_runs.append(len(frames) / elapsed)
    lat = np.asarray(latencies)
    return BenchReport(
        model_name=model.graph.name,
        input_size=(h, w),
        threads=_thread_count(),
        backend=backend.current(),
        frames=len(frames),
        repetitions=repetitions,
        fps=float(np.median(fps_runs)),
        p50_latency_s=float(np.percentile(lat, 50)),
        p95_latency_s=float(np.percentile(lat, 95)),
    )


def synthetic_frames(n: int, size: int = 256, seed: int = 0) -> list:
    """Deterministic random RGB frames for benchmarking."""
    rng = np.random.default_rng(seed)
    return [rng.integers(0, 256, size=(size, size, 3), dtype=np.uint8)
            for _ in range(n)]
