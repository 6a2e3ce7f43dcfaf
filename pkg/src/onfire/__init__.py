"""onfire: compact Inception-family CNN engine for fire detection.

Dense NHWC tensor primitives with analytic gradients, the InceptionV2/V3/V4
variant catalog including the compact OnFire networks, a deterministic
trainer with transfer learning, SLIC superpixel localization, and an
operator CLI.  Hot kernels run on a compiled Cython core when built, with a
pure-numpy fallback selected automatically at import.
"""

from . import backend
from .blocks import ModuleSpec, reduce_filters
from .checkpoint import Checkpoint
from .graph import Graph, GraphExecutor
from .layers import LayerSpec, softmax_cross_entropy
from .metrics import MetricsReport
from .ops import ConvGeometry, avg_pool, concat_channels, conv2d, global_max_pool, max_pool
from .slic import SlicParams, SuperpixelMap, extract_patch, localize, slic_segment
from .train import ArrayDataset, TrainConfig, train, transfer_init
from .zoo import CATALOG, arch_names, build_arch, count_parameters

__version__ = "0.1.0"

__all__ = [
    "ArrayDataset", "CATALOG", "Checkpoint", "ConvGeometry", "Graph",
    "GraphExecutor", "LayerSpec", "MetricsReport", "ModuleSpec", "SlicParams",
    "SuperpixelMap", "TrainConfig", "arch_names", "avg_pool", "backend",
    "build_arch", "concat_channels", "conv2d", "count_parameters",
    "extract_patch", "global_max_pool", "localize", "max_pool",
    "reduce_filters", "slic_segment", "softmax_cross_entropy", "train",
    "transfer_init",
]
