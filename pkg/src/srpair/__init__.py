"""Sub-pixel registration of screen-captured image pairs against their digital source.

Renders marker/bar display frames, simulates their capture, registers
captures by marker centroids plus frequency-domain bar-phase refinement, and
assembles aligned LR/HR/digital training triplets.
"""

__version__ = "0.1.0"

from .capture import (
    CameraScreenGeometry,
    CaptureGroundTruth,
    capture_session,
    imaged_pixel_size,
    min_moire_distance,
    simulate_capture,
)
from .errors import (
    DegenerateAnchorsError,
    DimensionMismatchError,
    InsufficientOverlapError,
    LayoutError,
    MarkerNotFoundError,
    SingularTransformError,
    SrpairError,
    StageError,
)
from .freq import (
    FrequencyProbe,
    RefineOptions,
    RegistrationResult,
    delta_m,
    objective_f2,
    probe_coefficient,
    refine_dual_domain,
)
from .pattern import BarSpec, LayoutSpec, MarkerSpec, Rect, make_layout, render_black, render_target
from .pipeline import (
    ErrorReport,
    RegisteredPair,
    TripletRecord,
    build_triplet,
    dual_reference_loss,
    register_pair,
    registration_error,
    subtract_black,
)
from .raster import (
    AffineTransform,
    bilinear_sample,
    image_gradient,
    resample,
    warp_affine,
)
from .spatial import AnchorSet, MarkerSegment, centroid, extract_marker_segment, solve_affine_ls
