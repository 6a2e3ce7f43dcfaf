"""Architecture graphs: validation, static shape inference, execution.

A :class:`Graph` is an ordered list of :class:`~onfire.layers.LayerSpec`
nodes in definition-before-use (topological) order with exactly one
``input`` node and one output node.  :class:`GraphExecutor` owns the
parameter tensors and runs forward/backward passes over the DAG.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, GraphValidationError, ShapeError
from .layers import KINDS, LayerSpec
from .tensor import check_finite


@dataclass
class Graph:
    name: str
    nodes: list = field(default_factory=list)

    def __post_init__(self):
        self._by_name = {}
        for spec in self.nodes:
            self._by_name[spec.name] = spec

    def node(self, name: str) -> LayerSpec:
        return self._by_name[name]

    def add(self, spec: LayerSpec) -> str:
        if spec.name in self._by_name:
            raise GraphValidationError(f"duplicate node name {spec.name!r}")
        self.nodes.append(spec)
        self._by_name[spec.name] = spec
        return spec.name

    @property
    def input_node(self) -> LayerSpec:
        for spec in self.nodes:
            if spec.kind == "input":
                return spec
        raise GraphValidationError(f"graph {self.name!r} has no input node")

    @property
    def output_node(self) -> LayerSpec:
        consumed = {name for spec in self.nodes for name in spec.inputs}
        outs = [spec for spec in self.nodes if spec.name not in consumed]
        if len(outs) != 1:
            raise GraphValidationError(
                f"graph {self.name!r} must have exactly one output, found "
                f"{[s.name for s in outs]}")
        return outs[0]

    @property
    def logits_node(self) -> LayerSpec:
        """The node whose output feeds the final softmax (the logits)."""
        out = self.output_node
        if out.kind != "softmax":
            return out
        return self.node(out.inputs[0])

    def validate(self) -> None:
        """Structural checks: names, ordering, arity, single output, shapes."""
        seen = set()
        input_count = 0
        for spec in self.nodes:
            if spec.name in seen:
                raise GraphValidationError(f"duplicate node name {spec.name!r}")
            impl = KINDS[spec.kind]
            lo, hi = impl.min_inputs, impl.max_inputs
            if len(spec.inputs) < lo or (hi is not None and len(spec.inputs) > hi):
                raise GraphValidationError(
                    f"node {spec.name!r} ({spec.kind}) takes "
                    f"{lo if hi == lo else f'{lo}+'} input(s), got {len(spec.inputs)}")
            for dep in spec.inputs:
                if dep not in seen:
                    raise GraphValidationError(
                        f"node {spec.name!r} references {dep!r} before definition")
            if spec.kind == "input":
                input_count += 1
            seen.add(spec.name)
        if input_count != 1:
            raise GraphValidationError(
                f"graph {self.name!r} must have exactly one input node, found {input_count}")
        self.output_node
        self.infer_shapes()

    def infer_shapes(self) -> dict:
        """Static output shape of every node (no batch axis)."""
        shapes = {}
        for spec in self.nodes:
            in_shapes = [shapes[d] for d in spec.inputs]
            try:
                shapes[spec.name] = KINDS[spec.kind].out_shape(spec, in_shapes)
            except (ShapeError, ContractError, GraphValidationError) as exc:
                raise GraphValidationError(
                    f"shape inference failed at node {spec.name!r}: {exc}") from exc
        return shapes

    @property
    def input_size(self) -> tuple[int, int]:
        cfg = self.input_node.cfg
        return (cfg["h"], cfg["w"])


def _node_rng(seed: int, name: str) -> np.random.Generator:
    return np.random.default_rng([seed, zlib.crc32(name.encode())])


class GraphExecutor:
    """Owns parameters and running state for one graph; runs fwd/bwd passes.

    Parameter init is fan-in-scaled uniform, derived per node from
    ``(seed, crc32(node name))`` so it is deterministic and independent of
    node insertion order.
    """

    def __init__(self, graph: Graph, seed: int = 0):
        graph.validate()
        self.graph = graph
        self.shapes = graph.infer_shapes()
        self.params: dict[str, dict[str, np.ndarray]] = {}
        self.state: dict[str, dict[str, np.ndarray]] = {}
        for spec in graph.nodes:
            impl = KINDS[spec.kind]
            in_shapes = [self.shapes[d] for d in spec.inputs]
            p = impl.init_params(spec, in_shapes, _node_rng(seed, spec.name))
            s = impl.init_state(spec, in_shapes)
            if p:
                self.params[spec.name] = p
            if s:
                self.state[spec.name] = s

    # -- execution ----------------------------------------------------------

    def _check_input(self, x):
        if x.ndim != 4:
            raise ShapeError(f"expected NHWC input, got shape {tuple(x.shape)}")
        h, w, c = self.shapes[self.graph.input_node.name]
        if x.shape[1:] != (h, w, c):
            raise ShapeError(
                f"input shape {tuple(x.shape[1:])} does not match graph input {(h, w, c)}")

    def run(self, x: np.ndarray, mode: str = "infer",
            rng: np.random.Generator | None = None,
            upto: str | None = None, keep_caches: bool = False):
        """Forward pass; returns (activation of ``upto`` or the output node,
        caches dict when ``keep_caches``)."""
        self._check_input(x)
        if rng is None:
            rng = np.random.default_rng(0)
        stop = upto or self.graph.output_node.name
        acts: dict[str, np.ndarray] = {}
        caches: dict[str, object] = {}
        for spec in self.graph.nodes:
            if spec.kind == "input":
                acts[spec.name] = x
            else:
                xs = [acts[d] for d in spec.inputs]
                y, cache = KINDS[spec.kind].forward(
                    spec, xs, self.params.get(spec.name, {}),
                    self.state.get(spec.name, {}), mode, rng)
                acts[spec.name] = y
                if keep_caches:
                    caches[spec.name] = cache
            if spec.name == stop:
                break
        out = acts[stop]
        check_finite(out, f"graph {self.graph.name!r} output")
        return (out, caches) if keep_caches else out

    def predict(self, x: np.ndarray) -> np.ndarray:
        """Class probabilities for a batch (inference mode)."""
        return self.run(x, mode="infer")

    def forward_logits(self, x: np.ndarray, mode: str = "train",
                       rng: np.random.Generator | None = None):
        """Activations at the logits node plus caches for backprop."""
        name = self.graph.logits_node.name
        out, caches = self.run(x, mode=mode, rng=rng, upto=name, keep_caches=True)
        return out, caches

    def backward(self, d_start: np.ndarray, caches: dict, start: str | None = None):
        """Reverse sweep from ``start`` (default: logits node).

        Returns (parameter gradients keyed ``node -> param -> array``,
        gradient w.r.t. the graph input).  Fan-out gradients accumulate.
        """
        if not caches:
            raise ContractError("backward called without forward caches")
        start = start or self.graph.logits_node.name
        flowing: dict[str, np.ndarray] = {start: d_start}
        grads: dict[str, dict[str, np.ndarray]] = {}
        d_input = None
        idx = next(i for i, s in enumerate(self.graph.nodes) if s.name == start)
        for spec in reversed(self.graph.nodes[:idx + 1]):
            dy = flowing.pop(spec.name, None)
            if dy is None:
                continue
            if spec.kind == "input":
                d_input = dy
                continue
            dxs, dparams = KINDS[spec.kind].backward(
                spec, dy, caches[spec.name], self.params.get(spec.name, {}))
            if dparams:
                grads[spec.name] = dparams
            for dep, dx in zip(spec.inputs, dxs):
                if dep in flowing:
                    flowing[dep] = flowing[dep] + dx
                else:
                    flowing[dep] = dx
        return grads, d_input

    # -- tensor map ---------------------------------------------------------

    def named_tensors(self) -> dict[str, np.ndarray]:
        """Flat view of all parameters and running stats as ``node/name``."""
        out = {}
        for node, p in self.params.items():
            for key, arr in p.items():
                out[f"{node}/{key}"] = arr
        for node, s in self.state.items():
            for key, arr in s.items():
                out[f"{node}/{key}"] = arr
        return out

    def load_named_tensors(self, tensors: dict[str, np.ndarray]) -> None:
        own = self.named_tensors()
        for name, arr in tensors.items():
            if name not in own:
                raise ContractError(f"tensor {name!r} does not exist in graph "
                                    f"{self.graph.name!r}")
            if own[name].shape != arr.shape:
                raise ShapeError(f"tensor {name!r}: shape {arr.shape} does not match "
                                 f"declared {own[name].shape}")
            own[name][...] = arr
