"""Joint implicit SDF reconstruction and part segmentation for CAD shapes.

A shared sine-activated trunk predicts signed distances while a plug-in
segmentation head predicts part logits in the same continuous field. The
package covers the whole per-shape pipeline: labeled-shape ingestion and
synthesis, curvature-regularized training, label-aware isosurface
extraction, and a reconstruction/segmentation evaluation suite.
"""

from .config import RunConfig
from .extractor import GridSpec, extract_mesh
from .field_net import FieldNetwork, HEAD_VARIANTS, forward, init, input_gradient
from .losses import LossReport, LossWeights, loss_total
from .metrics import ShapeMetrics, evaluate_shape
from .sampler import SampleBatch, SamplerConfig, make_batch, tangent_frame
from .shape_data import (
    LabeledMesh,
    LabeledPointCloud,
    Normalization,
    generate_synthetic,
    load_labeled_mesh,
    normalize,
    sample_surface,
    save_labeled_mesh,
)
from .trainer import TrainConfig, fit

__version__ = "0.1.0"

__all__ = [
    "RunConfig",
    "GridSpec",
    "extract_mesh",
    "FieldNetwork",
    "HEAD_VARIANTS",
    "forward",
    "init",
    "input_gradient",
    "LossReport",
    "LossWeights",
    "loss_total",
    "ShapeMetrics",
    "evaluate_shape",
    "SampleBatch",
    "SamplerConfig",
    "make_batch",
    "tangent_frame",
    "LabeledMesh",
    "LabeledPointCloud",
    "Normalization",
    "generate_synthetic",
    "load_labeled_mesh",
    "normalize",
    "sample_surface",
    "save_labeled_mesh",
    "TrainConfig",
    "fit",
    "__version__",
]
