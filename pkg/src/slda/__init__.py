"""Synthetic laser-diffraction analysis of particle mixtures.

Simulates far-field diffraction patterns of random particle scenes on a
micromirror grid, reduces each captured frame to a 26-element feature vector,
and identifies geometry, size, count, and mixture dominance with cascaded
feed-forward networks trained by scaled conjugate gradients.
"""

from .scene import (
    ApertureMask,
    ParticleSpec,
    PlacementError,
    SceneSpec,
    ShapeKind,
    place_particles,
    rasterize,
    shape_footprint,
)
from .optics import (
    CameraFrame,
    FarFieldPattern,
    OpticalConfig,
    analytic_far_field,
    capture,
    far_field,
    overlap,
    simulate_frame,
)
from .features import (
    AugmentSchema,
    Standardizer,
    apply_standardizer,
    augment,
    build_core_vector,
    build_v1,
    downsample,
    fit_standardizer,
    one_hot,
)
from .neuralnet import (
    MLPModel,
    TrainConfig,
    TrainReport,
    cross_entropy,
    forward,
    gradient,
    initialize_model,
    load_model,
    predict,
    save_model,
    scg_train,
)
from .cascade import (
    DatasetManifest,
    Exp1Label,
    Exp2Label,
    enumerate_categories,
    generate_records,
    predict_exp1,
    predict_exp2,
)
from .datafile import Dataset, read_dataset, write_dataset
from .evaluate import (
    ConfusionMatrix,
    SplitPlan,
    evaluate_cascade,
    export_report,
    split,
    train_all,
)

__version__ = "0.1.0"
