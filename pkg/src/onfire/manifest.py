"""Line-oriented architecture manifest format.

Layout (UTF-8, one node per line, definition before use)::

    ONFIRE-ARCH v1 <archname>
    <name> <kind> key=value ... inputs=[a,b]
    ...
    end <node-count>

Values are ints, floats, ``true``/``false`` or bare strings; node names must
not contain whitespace.  The ``end`` trailer makes truncated files
detectable.  ``deserialize_arch(serialize_arch(g))`` reproduces the graph
exactly (names, hyperparameters, topology).
"""

from __future__ import annotations

from .errors import ManifestParseError
from .graph import Graph
from .layers import LayerSpec

HEADER = "ONFIRE-ARCH v1"


def _format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, float)):
        return repr(v)
    s = str(v)
    if not s or any(ch.isspace() for ch in s):
        raise ValueError(f"manifest values must be non-empty and space-free, got {v!r}")
    return s


def _parse_value(tok: str):
    if tok == "true":
        return True
    if tok == "false":
        return False
    try:
        return int(tok)
    except ValueError:
        pass
    try:
        return float(tok)
    except ValueError:
        pass
    return tok


def serialize_arch(graph: Graph) -> str:
    lines = [f"{HEADER} {graph.name}"]
    for spec in graph.nodes:
        if any(ch.isspace() for ch in spec.name):
            raise ValueError(f"node name {spec.name!r} contains whitespace")
        parts = [spec.name, spec.kind]
        parts += [f"{k}={_format_value(v)}" for k, v in spec.cfg.items()]
        parts.append("inputs=[" + ",".join(spec.inputs) + "]")
        lines.append(" ".join(parts))
    lines.append(f"end {len(graph.nodes)}")
    return "\n".join(lines) + "\n"


def deserialize_arch(text: str) -> Graph:
    lines = text.splitlines()
    if not lines:
        raise ManifestParseError(1, "empty manifest")
    header = lines[0].split()
    if len(header) != 3 or " ".join(header[:2]) != HEADER:
        raise ManifestParseError(1, f"expected header {HEADER!r} <archname>, got {lines[0]!r}")
    arch_name = header[2]
    nodes = []
    ended = False
    for line_no, raw in enumerate(lines[1:], start=2):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if ended:
            raise ManifestParseError(line_no, "content after end marker")
        toks = line.split()
        if toks[0] == "end":
            if len(toks) != 2 or not toks[1].isdigit():
                raise ManifestParseError(line_no, "malformed end marker")
            if int(toks[1]) != len(nodes):
                raise ManifestParseError(
                    line_no, f"end marker says {toks[1]} nodes, parsed {len(nodes)}")
            ended = True
            continue
        if len(toks) < 3:
            raise ManifestParseError(line_no, f"node line needs name, kind, inputs: {line!r}")
        name, kind = toks[0], toks[1]
        if not toks[-1].startswith("inputs=[") or not toks[-1].endswith("]"):
            raise ManifestParseError(line_no, "node line must end with inputs=[...]")
        inner = toks[-1][len("inputs=["):-1]
        inputs = [t for t in inner.split(",") if t]
        cfg = {}
        for tok in toks[2:-1]:
            if "=" not in tok:
                raise ManifestParseError(line_no, f"expected key=value, got {tok!r}")
            key, _, val = tok.partition("=")
            cfg[key] = _parse_value(val)
        try:
            nodes.append(LayerSpec(name, kind, cfg, inputs))
        except Exception as exc:
            raise ManifestParseError(line_no, str(exc)) from exc
    if not ended:
        raise ManifestParseError(len(lines) + 1, "missing end marker (truncated manifest?)")
    graph = Graph(arch_name, nodes)
    graph.validate()
    return graph


def save_manifest(graph: Graph, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(serialize_arch(graph))


def load_manifest(path) -> Graph:
    with open(path, "r", encoding="utf-8") as fh:
        return deserialize_arch(fh.read())
