"""Mini-batch training: SGD with momentum, RMSProp, transfer init.

Determinism contract: a fixed config seed fixes parameter init, per-epoch
shuffling, augmentation and dropout masks, so two single-threaded runs
produce identical logs and weights.  A non-finite loss aborts training and
returns the checkpoint taken after the last completed epoch.
"""

from __future__ import annotations

import csv
import logging
import zlib
from dataclasses import dataclass, field, replace

import numpy as np

from .checkpoint import Checkpoint
from .errors import ContractError, NumericError
from .graph import Graph, GraphExecutor, _node_rng
from .layers import KINDS, softmax_cross_entropy

logger = logging.getLogger("onfire.train")

OPTIMIZERS = ("sgd_momentum", "rmsprop")


@dataclass(frozen=True)
class TrainConfig:
    optimizer: str = "sgd_momentum"
    learning_rate: float = 0.001
    epochs: int = 30
    batch_size: int = 64
    momentum: float = 0.9
    rmsprop_decay: float = 0.9
    rmsprop_eps: float = 1e-10
    label_smoothing: float = 0.0
    seed: int = 0
    horizontal_flip: bool = False

    def __post_init__(self):
        if self.optimizer not in OPTIMIZERS:
            raise ContractError(f"optimizer must be one of {OPTIMIZERS}, got {self.optimizer!r}")
        if self.learning_rate < 0:
            raise ContractError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if self.epochs < 1:
            raise ContractError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ContractError(f"batch_size must be >= 1, got {self.batch_size}")
        if not (0.0 <= self.momentum < 1.0):
            raise ContractError(f"momentum must be in [0,1), got {self.momentum}")
        if not (0.0 < self.rmsprop_decay < 1.0):
            raise ContractError(f"rmsprop decay must be in (0,1), got {self.rmsprop_decay}")
        if self.label_smoothing < 0:
            raise ContractError(f"label_smoothing must be >= 0, got {self.label_smoothing}")

    def hash(self) -> int:
        return zlib.crc32(repr(self).encode())


# ---------------------------------------------------------------------------
# optimizer update rules


def sgd_momentum_step(w, g, velocity, lr, mu):
    """v' = mu*v - lr*g;  w' = w + v'."""
    v = mu * velocity - lr * g
    return w + v, v


def rmsprop_step(w, g, cache, lr, decay, eps):
    """cache' = decay*cache + (1-decay)*g^2;  w' = w - lr*g/(sqrt(cache')+eps)."""
    c = decay * cache + (1.0 - decay) * (g * g)
    return w - lr * g / (np.sqrt(c) + eps), c


# ---------------------------------------------------------------------------
# datasets are plain array bundles


@dataclass
class ArrayDataset:
    x_train: np.ndarray
    y_train: np.ndarray
    x_val: np.ndarray
    y_val: np.ndarray


@dataclass
class TrainResult:
    checkpoint: Checkpoint
    log: list = field(default_factory=list)      # (epoch, split, loss, accuracy)
    aborted: bool = False


def weight_init(layer_spec, in_shapes, seed: int = 0) -> dict:
    """Deterministic fan-in-scaled uniform init for one layer (biases zero)."""
    return KINDS[layer_spec.kind].init_params(
        layer_spec, in_shapes, _node_rng(seed, layer_spec.name))


def _eval_arrays(ex: GraphExecutor, x, y, batch_size, smoothing):
    losses, correct = [], 0
    name = ex.graph.logits_node.name
    for i in range(0, len(x), batch_size):
        xb, yb = x[i:i + batch_size], y[i:i + batch_size]
        logits = ex.run(xb, mode="infer", upto=name)
        loss, _ = softmax_cross_entropy(logits, yb, smoothing)
        losses.append(loss * len(xb))
        correct += int((logits.argmax(1) == yb.argmax(1)).sum())
    return sum(losses) / len(x), correct / len(x)


def train(graph: Graph | GraphExecutor, dataset: ArrayDataset, config: TrainConfig,
          log_path=None) -> TrainResult:
    """Run the configured optimizer over the dataset; returns the final
    checkpoint plus a per-epoch (train/val) loss and accuracy log."""
    if len(dataset.x_train) == 0:
        raise ContractError("training dataset is empty")
    ex = graph if isinstance(graph, GraphExecutor) else GraphExecutor(graph, seed=config.seed)
    opt_state = {
        node: {key: np.zeros_like(arr) for key, arr in p.items()}
        for node, p in ex.params.items()
    }
    n = len(dataset.x_train)
    log: list = []
    last_good = Checkpoint.from_executor(ex, epoch=0, config_hash=config.hash())
    aborted = False
    for epoch in range(1, config.epochs + 1):
        perm = np.random.default_rng([config.seed, 0xE0, epoch]).permutation(n)
        run_loss, run_correct, seen = 0.0, 0, 0
        for bi, start in enumerate(range(0, n, config.batch_size)):
            idx = perm[start:start + config.batch_size]
            xb = dataset.x_train[idx]
            yb = dataset.y_train[idx]
            rng = np.random.default_rng([config.seed, 0xBA, epoch, bi])
            if config.horizontal_flip:
                flip = rng.random(len(xb)) < 0.5
                xb = xb.copy()
                xb[flip] = xb[flip, :, ::-1, :]
            try:
                logits, caches = ex.forward_logits(xb, mode="train", rng=rng)
                loss, dlogits = softmax_cross_entropy(logits, yb, config.label_smoothing)
                diverged = not np.isfinite(loss)
            except NumericError as exc:
                logger.warning("numeric overflow at epoch %d batch %d (%s)",
                               epoch, bi, exc)
                diverged = True
            if diverged:
                logger.warning("divergence at epoch %d batch %d; aborting with "
                               "last good checkpoint", epoch, bi)
                aborted = True
                break
            grads, _ = ex.backward(dlogits, caches)
            _apply_updates(ex, grads, opt_state, config)
            run_loss += loss * len(xb)
            run_correct += int((logits.argmax(1) == yb.argmax(1)).sum())
            seen += len(xb)
        if aborted:
            break
        log.append((epoch, "train", run_loss / seen, run_correct / seen))
        if len(dataset.x_val):
            vl, va = _eval_arrays(ex, dataset.x_val, dataset.y_val,
                                  config.batch_size, config.label_smoothing)
            log.append((epoch, "val", vl, va))
        last_good = Checkpoint.from_executor(ex, epoch=epoch, config_hash=config.hash())
    if log_path is not None:
        write_log(log, log_path)
    return TrainResult(last_good, log, aborted)


def _apply_updates(ex, grads, opt_state, config):
    for node, dparams in grads.items():
        for key, g in dparams.items():
            if g is None:
                continue
            w = ex.params[node][key]
            s = opt_state[node][key]
            if config.optimizer == "sgd_momentum":
                new_w, new_s = sgd_momentum_step(w, g, s, config.learning_rate,
                                                 config.momentum)
            else:
                new_w, new_s = rmsprop_step(w, g, s, config.learning_rate,
                                            config.rmsprop_decay, config.rmsprop_eps)
            w[...] = new_w
            s[...] = new_s


def write_log(log, path) -> None:
    """Append-only CSV: epoch,split,loss,accuracy."""
    with open(path, "a", newline="") as fh:
        writer = csv.writer(fh)
        if fh.tell() == 0:
            writer.writerow(["epoch", "split", "loss", "accuracy"])
        for epoch, split, loss, acc in log:
            writer.writerow([epoch, split, f"{loss:.6f}", f"{acc:.6f}"])


# ---------------------------------------------------------------------------
# transfer learning


@dataclass
class TransferReport:
    copied: list
    reinitialized: list


def transfer_init(target_graph: Graph, source: Checkpoint,
                  strategy: str = "copy_compatible_reinit_head",
                  seed: int = 0) -> tuple[GraphExecutor, TransferReport]:
    """Initialize a graph from a source checkpoint.

    Every layer whose tensor names and shapes all match is copied
    bit-exactly; the classification head (nodes under ``head.``) and any
    mismatched layer keep their fresh initialization.  Raises if nothing at
    all matches (wrong source checkpoint).
    """
    if strategy != "copy_compatible_reinit_head":
        raise ContractError(f"unknown transfer strategy {strategy!r}")
    ex = GraphExecutor(target_graph, seed=seed)
    source_tensors = source.layer_tensors()
    copied, reinit = [], []
    own_nodes = sorted(set(ex.params) | set(ex.state))
    for node in own_nodes:
        tensors = {}
        tensors.update(ex.params.get(node, {}))
        tensors.update(ex.state.get(node, {}))
        is_head = node == "head.dense" or node.startswith("head.dense.")
        names = {f"{node}/{key}": key for key in tensors}
        compatible = all(
            full in source_tensors and source_tensors[full].shape == tensors[key].shape
            for full, key in names.items())
        if compatible and not is_head:
            for full, key in names.items():
                tensors[key][...] = source_tensors[full]
            copied.append(node)
        else:
            reinit.append(node)
    if not copied:
        raise ContractError(
            f"no layer of {target_graph.name!r} matches checkpoint "
            f"{source.arch_name!r}; wrong source?")
    return ex, TransferReport(copied, reinit)
