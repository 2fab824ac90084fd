"""Blind-zoom-free panoptic display synthesis and fixation analytics.

The package splits into a geometric substrate (:mod:`windb.geometry`), the
display-synthesis pipeline with its dynamic-blur state machine
(:mod:`windb.pipeline`), fixation analytics and saliency metrics
(:mod:`windb.analytics`, :mod:`windb.metrics`), file formats
(:mod:`windb.io_formats`), a local session service (:mod:`windb.service`),
scikit-learn style wrappers (:mod:`windb.estimators`), and the ``windb``
command-line tool (:mod:`windb.cli`).
"""

from .analytics import (
    ClusterConfig,
    FilterConfig,
    GazeSample,
    LossConfig,
    ShiftWeight,
    Spot,
    classify_clip,
    cluster_fixations,
    coattention_enhance,
    extract_spot,
    kl_divergence,
    lightup,
    rasterize_fixation_map,
    shift_weight,
    shifting_loss,
)
from .estimators import (
    DiscriminativeVerticalBlur,
    DistortionFreeProjector,
    MeshScreen,
    SphericalDBSCAN,
)
from .geometry import (
    ErpCoord,
    GeometryError,
    GridMapping,
    GridSpec,
    SphericalCoord,
    SubWindowSpec,
    build_grid,
    erp_to_sphere,
    gnomonic_sample,
    sphere_to_erp,
    spherical_distance,
)
from .io_formats import GazeRecord, ToolConfig, read_config, read_gaze_log, read_map, write_gaze_log, write_map
from .metrics import metric_auc_judd, metric_cc, metric_nss, metric_sim
from .pipeline import (
    AuxWindowState,
    PipelineConfig,
    WinDbFrame,
    apply_mesh,
    build_aux_layout,
    build_mesh_mask,
    compose_aux_overlays,
    discriminative_vertical_blur,
    project_distortion_free,
    render_windb_frame,
    step_dynamic_blur,
)
from .service import Session, create_app

__version__ = "0.1.0"
