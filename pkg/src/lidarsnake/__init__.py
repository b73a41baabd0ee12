"""Building footprint extraction from LiDAR point clouds.

The pipeline densifies a sparse projected elevation raster by constrained
proximal-gradient optimisation, evolves closed active contours on that
raster under a diffused force field and an adaptive balloon force, and
scores the results with per-area / per-object accuracy metrics.
"""

from .energy import (GradientVectorFlow, VectorField, e_edge, e_img, e_line,
                     e_term, external_field, gaussian_smooth, gvf, gvf_residual)
from .errors import (Collapsed, ConfigError, DegenerateNormal, DimMismatch,
                     Diverged, EmptyCloud, EmptySparse, LidarSnakeError,
                     MissingBand, MissingInput, NonFinite, NumericalError,
                     SingularOperator, Unstable)
from .evaluation import (AreaMetrics, EvalReport, ObjectMetrics, area_metrics,
                         boundary_rmse, evaluate_footprints, object_metrics)
from .geometry import (GeoTransform, bilinear_sample, densify_closed,
                       enclosed_area, ensure_positive_orientation, perimeter,
                       pixel_to_world, signed_area, world_to_pixel)
from .pipeline import (BuildingExtractor, ExtractedBuilding, extract_buildings,
                       tiled_superres)
from .scene import (BoxSpec, MultiSpectralImage, SceneSpec, estimate_terrain,
                    mask_from_contour, moore_trace, ndvi, points_in_polygon,
                    preliminary_extract, synth_scene, vegetation_mask)
from .snake import (ImplicitStep, SnakeModel, SnakeParams, SnakeState,
                    classic_balloon, evolve, improved_balloon,
                    internal_step_matrix, outward_normals, resample)
from .superres import (SparseZImage, SrBenchmarkReport, SrParams, SrTrace,
                       SuperResolution, interp_bilinear, interp_nearest,
                       project_points, propagate_fista, psnr, rmse_image,
                       sr_benchmark, ssdg_cost, ssdg_grad, ssim)

__version__ = "0.1.0"
