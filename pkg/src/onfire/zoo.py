"""Architecture catalog: every named variant, the builder, the counter.

The catalog holds 38 entries: the InceptionV2 family (A3-A6, B3-B6, C3-C6),
twelve InceptionV3 variants, twelve InceptionV4 variants, and the two
compact fire-detection networks InceptionV3-OnFire / InceptionV4-OnFire.
Numbered variants assemble their checked components in the canonical order
Module-A, GR-A, Module-B, GR-B, Module-C, one instance per component; the
``v07``-``v12`` rows (and InceptionV3-OnFire) apply the filter-reduction
rule everywhere, stems included.

Full-frame models take 224x224x3 input by default.  V3/V4 family graphs
place batch norm after every convolution; the V2 family is norm-free unless
a normalization is requested explicitly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .blocks import ModuleSpec, build_grid_reduction, build_module, build_stem
from .errors import UnknownArchitectureError
from .graph import Graph
from .layers import KINDS, LayerSpec


@dataclass(frozen=True)
class ArchSpec:
    """Declarative description of one catalog architecture."""

    name: str
    stem: str                       # v2 / v3 / v4
    body: tuple = ()                # ((component, count), ...)
    reduced_filters: bool = False
    head_dropout: float | None = None
    input_size: tuple = (224, 224)
    default_norm: str = "batch_norm"


def _row(name, stem, a, ga, b, gb, c, reduced, norm="batch_norm", dropout=None):
    body = []
    if a:
        body.append(("Module-A", 1))
    if ga:
        body.append(("GR-A", 1))
    if b:
        body.append(("Module-B", 1))
    if gb:
        body.append(("GR-B", 1))
    if c:
        body.append(("Module-C", 1))
    return ArchSpec(name, stem, tuple(body), reduced, dropout,
                    default_norm=norm)


def _build_catalog() -> dict:
    cat = {}
    for mod in "ABC":
        for n in range(3, 7):
            name = f"InceptionV2-{mod}{n}"
            cat[name] = ArchSpec(name, "v2", ((f"Module-{mod}", n),),
                                 default_norm="none")
    # (Module-A, GR-A, Module-B, GR-B, Module-C, reduced) per variant row.
    v3_rows = {
        "v01": (1, 1, 1, 1, 1, 0), "v02": (1, 0, 1, 1, 1, 0),
        "v03": (1, 0, 1, 0, 1, 0), "v04": (0, 1, 1, 1, 1, 0),
        "v05": (0, 1, 1, 1, 0, 0), "v06": (0, 1, 1, 1, 0, 0),
        "v07": (0, 1, 1, 1, 0, 1), "v08": (1, 1, 1, 1, 0, 1),
        "v09": (1, 0, 1, 0, 1, 1), "v10": (0, 1, 1, 1, 1, 1),
        "v11": (1, 0, 1, 1, 1, 1), "v12": (1, 1, 1, 1, 0, 1),
    }
    v4_rows = {
        "v01": (1, 1, 1, 1, 1, 0), "v02": (1, 1, 1, 0, 1, 0),
        "v03": (1, 0, 1, 1, 1, 0), "v04": (1, 1, 0, 1, 1, 0),
        "v05": (1, 0, 1, 0, 1, 0), "v06": (0, 1, 1, 1, 1, 0),
        "v07": (1, 1, 1, 1, 1, 1), "v08": (1, 1, 1, 1, 0, 1),
        "v09": (1, 0, 1, 1, 1, 1), "v10": (0, 1, 1, 1, 1, 1),
        "v11": (1, 0, 1, 1, 0, 1), "v12": (1, 1, 1, 1, 1, 1),
    }
    for suffix, (a, ga, b, gb, c, r) in v3_rows.items():
        name = f"InceptionV3_{suffix}"
        cat[name] = _row(name, "v3", a, ga, b, gb, c, bool(r))
    for suffix, (a, ga, b, gb, c, r) in v4_rows.items():
        name = f"InceptionV4_{suffix}"
        cat[name] = _row(name, "v4", a, ga, b, gb, c, bool(r))
    cat["InceptionV3-OnFire"] = _row("InceptionV3-OnFire", "v3",
                                     1, 0, 1, 0, 1, True)
    cat["InceptionV4-OnFire"] = _row("InceptionV4-OnFire", "v4",
                                     1, 0, 1, 0, 1, False, dropout=0.4)
    return cat


CATALOG: dict[str, ArchSpec] = _build_catalog()

_PREFIXES = {"Module-A": "modA", "Module-B": "modB", "Module-C": "modC",
             "GR-A": "redA", "GR-B": "redB"}


def _add_head(g: Graph, tail: str, dropout: float | None) -> None:
    tail = g.add(LayerSpec("head.gmp", "global_max_pool", {}, [tail]))
    if dropout is not None:
        tail = g.add(LayerSpec("head.dropout", "dropout", {"rate": dropout}, [tail]))
    tail = g.add(LayerSpec("head.dense", "dense", {"units": 2, "act": "none"}, [tail]))
    g.add(LayerSpec("head.softmax", "softmax", {}, [tail]))


def build_from_spec(arch: ArchSpec, input_size: tuple | None = None,
                    norm: str | None = None, asymmetric_n: int = 7,
                    module_multiplicity: int = 1) -> Graph:
    h, w = input_size or arch.input_size
    norm = arch.default_norm if norm is None else norm
    flavor = arch.stem
    g = Graph(arch.name)
    g.add(LayerSpec("input", "input", {"h": h, "w": w, "c": 3}))
    tail = build_stem(g, "input", arch.stem, reduced=arch.reduced_filters, norm=norm)
    counters = {k: 0 for k in _PREFIXES}
    for component, count in arch.body:
        if component.startswith("Module"):
            count *= module_multiplicity
        for _ in range(count):
            counters[component] += 1
            prefix = f"{_PREFIXES[component]}{counters[component]}"
            if component.startswith("Module"):
                mspec = ModuleSpec(component[-1], flavor, asymmetric_n,
                                   arch.reduced_filters)
                tail = build_module(g, tail, prefix, mspec, norm=norm)
            else:
                tail = build_grid_reduction(g, tail, prefix, variant=component,
                                            flavor=flavor,
                                            reduced=arch.reduced_filters,
                                            norm=norm, asymmetric_n=asymmetric_n)
    _add_head(g, tail, arch.head_dropout)
    g.validate()
    return g


# Small trainable net used by the desk-scale workflows and tests: the same
# stem + Module-A/B/C + head layout as the OnFire networks, with tiny
# filter counts and a shallow two-conv stem.

_SLIM_A = [
    {"pool": False, "convs": [(1, 1, 8)], "heads": None},
    {"pool": False, "convs": [(1, 1, 8), (3, 3, 12), (3, 3, 12)], "heads": None},
    {"pool": False, "convs": [(1, 1, 8), (3, 3, 12)], "heads": None},
    {"pool": True, "convs": [(1, 1, 8)], "heads": None},
]
_SLIM_B = [
    {"pool": False, "convs": [(1, 1, 12)], "heads": None},
    {"pool": False, "convs": [(1, 1, 8), (1, "n", 8), ("n", 1, 8),
                              (1, "n", 8), ("n", 1, 12)], "heads": None},
    {"pool": False, "convs": [(1, 1, 8), (1, "n", 8), ("n", 1, 12)], "heads": None},
    {"pool": True, "convs": [(1, 1, 12)], "heads": None},
]
_SLIM_C = [
    {"pool": False, "convs": [(1, 1, 12)], "heads": None},
    {"pool": False, "convs": [(1, 1, 12), (3, 3, 16)], "heads": [(1, 3, 12), (3, 1, 12)]},
    {"pool": False, "convs": [(1, 1, 12)], "heads": [(1, 3, 12), (3, 1, 12)]},
    {"pool": True, "convs": [(1, 1, 12)], "heads": None},
]


def build_onfire_slim(input_size: tuple = (64, 64), norm: str = "batch_norm",
                      asymmetric_n: int = 7, head_dropout: float | None = None) -> Graph:
    from .blocks import add_conv
    h, w = input_size
    g = Graph("OnFire-Slim")
    g.add(LayerSpec("input", "input", {"h": h, "w": w, "c": 3}))
    tail = add_conv(g, "input", "stem.conv1", 3, 3, 16, stride=2, padding="valid", norm=norm)
    tail = add_conv(g, tail, "stem.conv2", 3, 3, 16, padding="valid", norm=norm)
    tail = g.add(LayerSpec("stem.pool", "max_pool",
                           {"window": 3, "stride": 2, "padding": "valid"}, [tail]))
    for prefix, table in (("modA1", _SLIM_A), ("modB1", _SLIM_B), ("modC1", _SLIM_C)):
        mspec = ModuleSpec(prefix[3], "v3", asymmetric_n, False, filters=table)
        tail = build_module(g, tail, prefix, mspec, norm=norm)
    _add_head(g, tail, head_dropout)
    g.validate()
    return g


EXTRA_BUILDERS = {"OnFire-Slim": build_onfire_slim}


def arch_names(include_extras: bool = False) -> list[str]:
    names = list(CATALOG)
    if include_extras:
        names += list(EXTRA_BUILDERS)
    return names


def build_arch(name: str, input_size: tuple | None = None, norm: str | None = None,
               asymmetric_n: int = 7, module_multiplicity: int = 1) -> Graph:
    """Build and validate a catalog (or extra) architecture by name."""
    if name in CATALOG:
        return build_from_spec(CATALOG[name], input_size, norm, asymmetric_n,
                               module_multiplicity)
    if name in EXTRA_BUILDERS:
        kwargs = {}
        if input_size is not None:
            kwargs["input_size"] = input_size
        if norm is not None:
            kwargs["norm"] = norm
        return EXTRA_BUILDERS[name](asymmetric_n=asymmetric_n, **kwargs)
    raise UnknownArchitectureError(name, arch_names(include_extras=True))


# ---------------------------------------------------------------------------
# complexity audit


@dataclass
class LayerCount:
    name: str
    kind: str
    trainable: int = 0
    non_trainable: int = 0
    out_shape: tuple = field(default_factory=tuple)


def count_parameters(graph: Graph):
    """Exact parameter census.

    conv: kh*kw*Cin*F + F; dense: in*out + out; batch norm: 2C trainable
    plus 2C running statistics reported as non-trainable.  Returns
    ``(total_trainable, rows)`` where rows cover every node.
    """
    shapes = graph.infer_shapes()
    rows = []
    for spec in graph.nodes:
        row = LayerCount(spec.name, spec.kind, out_shape=shapes[spec.name])
        if spec.kind == "conv":
            cin = shapes[spec.inputs[0]][2]
            kh, kw, f = spec.cfg["kh"], spec.cfg["kw"], spec.cfg["filters"]
            row.trainable = kh * kw * cin * f + f
        elif spec.kind == "dense":
            d = shapes[spec.inputs[0]][0]
            u = spec.cfg["units"]
            row.trainable = d * u + u
        elif spec.kind == "batch_norm":
            c = shapes[spec.inputs[0]][-1]
            row.trainable = 2 * c
            row.non_trainable = 2 * c
        rows.append(row)
    return sum(r.trainable for r in rows), rows


def count_parameters_of(name: str, **kwargs) -> int:
    total, _ = count_parameters(build_arch(name, **kwargs))
    return total


# Published reference figures for context in reports (documentation only;
# these baselines are not buildable here).
REFERENCE_COMPLEXITY = {
    "FireNet": {"params_millions": 68.3, "accuracy_pct": 91.5, "fps": 17.0},
    "InceptionV1-OnFire": {"params_millions": 1.2, "accuracy_pct": 93.4, "fps": 8.4},
    "InceptionV3-OnFire": {"params_millions": 0.96, "accuracy_pct": 94.4, "fps": 13.8},
    "InceptionV4-OnFire": {"params_millions": 7.18, "accuracy_pct": 95.6, "fps": 12.0},
}
