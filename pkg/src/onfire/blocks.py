"""Composite blocks: Inception Modules A/B/C, grid-size reductions, stems.

All builders append nodes to an existing :class:`~onfire.graph.Graph` and
return the name of the subgraph's output node.  Filter counts default to the
published values of the originating Inception architectures; passing
``reduced=True`` pushes every count through :func:`reduce_filters`, which
caps layer widths at 100 filters.

Topology conventions:

* Module branches run at stride 1 with ``same`` padding, so modules preserve
  spatial extents; branch outputs join with a channel concat in a fixed
  order (1x1 branch, deep branch, shallow branch, pool branch).
* Module-B factorizes its square kernels into ``1xn`` / ``nx1`` chains
  (default n=7); Module-C ends its conv branches in parallel widened
  ``1x3`` / ``3x1`` heads.
* Grid reductions put stride-2 valid convolution branch(es) in parallel
  with a stride-2 window-3 max pool, halving spatial extents while the pool
  branch passes input channels through.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ContractError, GraphValidationError
from .graph import Graph
from .layers import LayerSpec

FILTER_CAP = 100


def reduce_filters(m: int) -> int:
    """Cap a filter count at 100 by halving: ceil(m / 2^k) for the smallest
    k with m / 2^k <= 100.  Identity for m <= 100; the result always lands
    in (50, 100] otherwise, so the rule is idempotent."""
    if m < 1:
        raise ContractError(f"filter count must be >= 1, got {m}")
    if m <= FILTER_CAP:
        return m
    d = 1
    while m > FILTER_CAP * d:
        d *= 2
    return -(-m // d)


@dataclass
class ModuleSpec:
    """Configuration of one inception module instance."""

    module_type: str            # A, B or C
    version_flavor: str = "v3"  # v2, v3 or v4 filter tables
    asymmetric_n: int = 7
    reduced: bool = False
    filters: dict | None = None  # override the flavor's branch table

    def __post_init__(self):
        if self.module_type not in ("A", "B", "C"):
            raise ContractError(f"module_type must be A/B/C, got {self.module_type!r}")
        if self.version_flavor not in ("v2", "v3", "v4"):
            raise ContractError(f"version_flavor must be v2/v3/v4, got {self.version_flavor!r}")
        if self.module_type == "B" and (self.asymmetric_n < 3 or self.asymmetric_n % 2 == 0):
            raise ContractError(f"asymmetric_n must be odd and >= 3, got {self.asymmetric_n}")


# Branch tables.  Each branch: pool prefix flag, conv chain [(kh, kw, f)],
# optional pair of widened head convs.  "n" is replaced by asymmetric_n.
# v2 shares the v3 counts (the flavors differ in normalization placement).

_A_V3 = [
    {"pool": False, "convs": [(1, 1, 64)], "heads": None},
    {"pool": False, "convs": [(1, 1, 64), (3, 3, 96), (3, 3, 96)], "heads": None},
    {"pool": False, "convs": [(1, 1, 48), (3, 3, 64)], "heads": None},
    {"pool": True, "convs": [(1, 1, 32)], "heads": None},
]
_A_V4 = [
    {"pool": False, "convs": [(1, 1, 96)], "heads": None},
    {"pool": False, "convs": [(1, 1, 64), (3, 3, 96), (3, 3, 96)], "heads": None},
    {"pool": False, "convs": [(1, 1, 64), (3, 3, 96)], "heads": None},
    {"pool": True, "convs": [(1, 1, 96)], "heads": None},
]
_B_V3 = [
    {"pool": False, "convs": [(1, 1, 192)], "heads": None},
    {"pool": False, "convs": [(1, 1, 160), (1, "n", 160), ("n", 1, 160),
                              (1, "n", 160), ("n", 1, 192)], "heads": None},
    {"pool": False, "convs": [(1, 1, 160), (1, "n", 160), ("n", 1, 192)], "heads": None},
    {"pool": True, "convs": [(1, 1, 192)], "heads": None},
]
_B_V4 = [
    {"pool": False, "convs": [(1, 1, 384)], "heads": None},
    {"pool": False, "convs": [(1, 1, 192), (1, "n", 192), ("n", 1, 224),
                              (1, "n", 224), ("n", 1, 256)], "heads": None},
    {"pool": False, "convs": [(1, 1, 192), (1, "n", 224), ("n", 1, 256)], "heads": None},
    {"pool": True, "convs": [(1, 1, 128)], "heads": None},
]
_C_V3 = [
    {"pool": False, "convs": [(1, 1, 320)], "heads": None},
    {"pool": False, "convs": [(1, 1, 448), (3, 3, 384)], "heads": [(1, 3, 384), (3, 1, 384)]},
    {"pool": False, "convs": [(1, 1, 384)], "heads": [(1, 3, 384), (3, 1, 384)]},
    {"pool": True, "convs": [(1, 1, 192)], "heads": None},
]
# The v4 flavor keeps the originating network's asymmetric mid pair in the
# deep branch (1x3 then 3x1) instead of the v3 flavor's single 3x3.
_C_V4 = [
    {"pool": False, "convs": [(1, 1, 256)], "heads": None},
    {"pool": False, "convs": [(1, 1, 384), (1, 3, 448), (3, 1, 512)],
     "heads": [(1, 3, 256), (3, 1, 256)]},
    {"pool": False, "convs": [(1, 1, 384)], "heads": [(1, 3, 256), (3, 1, 256)]},
    {"pool": True, "convs": [(1, 1, 256)], "heads": None},
]

MODULE_LIBRARY = {
    ("A", "v2"): _A_V3, ("A", "v3"): _A_V3, ("A", "v4"): _A_V4,
    ("B", "v2"): _B_V3, ("B", "v3"): _B_V3, ("B", "v4"): _B_V4,
    ("C", "v2"): _C_V3, ("C", "v3"): _C_V3, ("C", "v4"): _C_V4,
}

# Grid reduction conv branches; the last conv of each chain runs stride 2
# with valid padding, everything before it stride 1 same.
GR_LIBRARY = {
    ("GR-A", "v3"): [[(3, 3, 384)], [(1, 1, 64), (3, 3, 96), (3, 3, 96)]],
    ("GR-A", "v4"): [[(3, 3, 384)], [(1, 1, 192), (3, 3, 224), (3, 3, 256)]],
    ("GR-B", "v3"): [[(1, 1, 192), (3, 3, 320)],
                     [(1, 1, 192), (1, "n", 192), ("n", 1, 192), (3, 3, 192)]],
    ("GR-B", "v4"): [[(1, 1, 192), (3, 3, 192)],
                     [(1, 1, 256), (1, "n", 256), ("n", 1, 320), (3, 3, 320)]],
}


def _materialize(kernel, n: int) -> int:
    return n if kernel == "n" else kernel


def add_conv(g: Graph, input_name: str, name: str, kh: int, kw: int, filters: int,
             stride: int = 1, padding: str = "same", norm: str = "none",
             act: str = "relu") -> str:
    """Append a convolution with its normalization/activation nodes.

    ``batch_norm`` places BN between the linear conv and the activation;
    ``lrn`` normalizes the activated output.  Returns the tail node name.
    """
    if norm == "batch_norm":
        g.add(LayerSpec(name, "conv", {"kh": kh, "kw": kw, "filters": filters,
                                       "stride": stride, "padding": padding,
                                       "act": "none"}, [input_name]))
        return g.add(LayerSpec(f"{name}.bn", "batch_norm", {"act": act}, [name]))
    g.add(LayerSpec(name, "conv", {"kh": kh, "kw": kw, "filters": filters,
                                   "stride": stride, "padding": padding,
                                   "act": act}, [input_name]))
    if norm == "lrn":
        return g.add(LayerSpec(f"{name}.lrn", "lrn", {}, [name]))
    if norm != "none":
        raise ContractError(f"unknown normalization {norm!r}")
    return name


def build_module(g: Graph, input_name: str, prefix: str, spec: ModuleSpec,
                 norm: str = "none") -> str:
    """Append one inception module; returns the concat node name."""
    table = spec.filters or MODULE_LIBRARY[(spec.module_type, spec.version_flavor)]
    rf = reduce_filters if spec.reduced else (lambda f: f)
    tails = []
    for bi, branch in enumerate(table, start=1):
        tail = input_name
        if branch["pool"]:
            tail = g.add(LayerSpec(f"{prefix}.b{bi}.pool", "avg_pool",
                                   {"window": 3, "stride": 1, "padding": "same"},
                                   [tail]))
        for ci, (kh, kw, f) in enumerate(branch["convs"], start=1):
            tail = add_conv(g, tail, f"{prefix}.b{bi}.conv{ci}",
                            _materialize(kh, spec.asymmetric_n),
                            _materialize(kw, spec.asymmetric_n), rf(f), norm=norm)
        if branch["heads"]:
            for hi, (kh, kw, f) in enumerate(branch["heads"], start=1):
                tails.append(add_conv(g, tail, f"{prefix}.b{bi}.head{hi}",
                                      kh, kw, rf(f), norm=norm))
        else:
            tails.append(tail)
    return g.add(LayerSpec(f"{prefix}.concat", "concat", {}, tails))


def build_grid_reduction(g: Graph, input_name: str, prefix: str,
                         variant: str = "GR-A", flavor: str = "v3",
                         reduced: bool = False, norm: str = "none",
                         conv_filters: int | None = None,
                         asymmetric_n: int = 7) -> str:
    """Append a grid-size reduction block.

    With ``conv_filters`` set, builds the minimal form: a single stride-2
    convolution of that many filters in parallel with the stride-2 max pool
    (output channels = conv_filters + input channels).  Otherwise the
    variant's reference conv branches are used.
    """
    if variant not in ("GR-A", "GR-B"):
        raise ContractError(f"variant must be GR-A or GR-B, got {variant!r}")
    flavor = "v3" if flavor == "v2" else flavor
    if conv_filters is not None:
        branches = [[(3, 3, conv_filters)]]
    else:
        branches = GR_LIBRARY[(variant, flavor)]
    rf = reduce_filters if reduced else (lambda f: f)
    tails = []
    for bi, chain in enumerate(branches, start=1):
        tail = input_name
        last = len(chain) - 1
        for ci, (kh, kw, f) in enumerate(chain):
            stride, padding = (2, "valid") if ci == last else (1, "same")
            tail = add_conv(g, tail, f"{prefix}.b{bi}.conv{ci + 1}",
                            _materialize(kh, asymmetric_n),
                            _materialize(kw, asymmetric_n),
                            rf(f), stride=stride, padding=padding, norm=norm)
        tails.append(tail)
    tails.append(g.add(LayerSpec(f"{prefix}.pool", "max_pool",
                                 {"window": 3, "stride": 2, "padding": "valid"},
                                 [input_name])))
    return g.add(LayerSpec(f"{prefix}.concat", "concat", {}, tails))


# Stem definitions.  The v2/v3 stem is two convolutions, a pool, then three
# convolutions; the v4 stem interleaves three parallel-branch concat stages
# (the grid-size-reduction idea applied to the stem itself).

def _stem_v3(g, tail, prefix, rf, norm):
    tail = add_conv(g, tail, f"{prefix}.conv1", 3, 3, rf(32), stride=2, padding="valid", norm=norm)
    tail = add_conv(g, tail, f"{prefix}.conv2", 3, 3, rf(32), padding="valid", norm=norm)
    tail = g.add(LayerSpec(f"{prefix}.pool", "max_pool",
                           {"window": 3, "stride": 2, "padding": "valid"}, [tail]))
    tail = add_conv(g, tail, f"{prefix}.conv3", 3, 3, rf(64), norm=norm)
    tail = add_conv(g, tail, f"{prefix}.conv4", 1, 1, rf(80), norm=norm)
    tail = add_conv(g, tail, f"{prefix}.conv5", 3, 3, rf(192), stride=2, padding="valid", norm=norm)
    return tail


def _stem_v4(g, tail, prefix, rf, norm):
    tail = add_conv(g, tail, f"{prefix}.conv1", 3, 3, rf(32), stride=2, padding="valid", norm=norm)
    tail = add_conv(g, tail, f"{prefix}.conv2", 3, 3, rf(32), padding="valid", norm=norm)
    tail = add_conv(g, tail, f"{prefix}.conv3", 3, 3, rf(64), norm=norm)
    conv_a = add_conv(g, tail, f"{prefix}.mix1.conv", 3, 3, rf(96), stride=2,
                      padding="valid", norm=norm)
    pool_a = g.add(LayerSpec(f"{prefix}.mix1.pool", "max_pool",
                             {"window": 3, "stride": 2, "padding": "valid"}, [tail]))
    tail = g.add(LayerSpec(f"{prefix}.mix1.concat", "concat", {}, [conv_a, pool_a]))
    short = add_conv(g, tail, f"{prefix}.mix2.a.conv1", 1, 1, rf(64), norm=norm)
    short = add_conv(g, short, f"{prefix}.mix2.a.conv2", 3, 3, rf(96),
                     padding="valid", norm=norm)
    long = add_conv(g, tail, f"{prefix}.mix2.b.conv1", 1, 1, rf(64), norm=norm)
    long = add_conv(g, long, f"{prefix}.mix2.b.conv2", 1, 7, rf(64), norm=norm)
    long = add_conv(g, long, f"{prefix}.mix2.b.conv3", 7, 1, rf(64), norm=norm)
    long = add_conv(g, long, f"{prefix}.mix2.b.conv4", 3, 3, rf(96),
                    padding="valid", norm=norm)
    tail = g.add(LayerSpec(f"{prefix}.mix2.concat", "concat", {}, [short, long]))
    conv_c = add_conv(g, tail, f"{prefix}.mix3.conv", 3, 3, rf(192), stride=2,
                      padding="valid", norm=norm)
    pool_c = g.add(LayerSpec(f"{prefix}.mix3.pool", "max_pool",
                             {"window": 3, "stride": 2, "padding": "valid"}, [tail]))
    return g.add(LayerSpec(f"{prefix}.mix3.concat", "concat", {}, [conv_c, pool_c]))


def build_stem(g: Graph, input_name: str, version: str, reduced: bool = False,
               norm: str = "none", prefix: str = "stem") -> str:
    """Append the per-version stem; requires input extents >= 64."""
    inp = g.node(input_name)
    if inp.kind == "input" and (inp.cfg["h"] < 64 or inp.cfg["w"] < 64):
        raise GraphValidationError(
            f"stem requires input extents >= 64, got "
            f"{inp.cfg['h']}x{inp.cfg['w']} at node {input_name!r}")
    rf = reduce_filters if reduced else (lambda f: f)
    if version in ("v2", "v3"):
        return _stem_v3(g, input_name, prefix, rf, norm)
    if version == "v4":
        return _stem_v4(g, input_name, prefix, rf, norm)
    raise ContractError(f"unknown stem version {version!r}")
