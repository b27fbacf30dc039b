"""Fixed-point contour plots of multidimensional data.

Pipeline: load and normalize a CSV, project it to 2D with PCA, triangulate,
relax the layout under a planarity guarantee, then interpolate the original
dimension values across every pixel with Moving Least Squares and render the
result as an isocontour background behind the (fixed) data points.
"""

from .dataset import Dataset, denormalize, load_csv, normalize
from .field import (
    CoordinateField,
    MlsParams,
    TargetAssignment,
    compute_field,
    dimension_targets,
    projection_targets,
)
from .layout import LayoutParams, LayoutState, interpolate_layout, layout_run, layout_step
from .mesh import TriMesh, delaunay, limiting_lines, signed_area
from .projection import PointCloud2D, ProjectionModel, pca_project
from .render import RenderSpec, RenderedImage, overlay_points
from .render import render as render_image

__version__ = "0.1.0"

__all__ = [
    "Dataset",
    "load_csv",
    "normalize",
    "denormalize",
    "ProjectionModel",
    "PointCloud2D",
    "pca_project",
    "TriMesh",
    "delaunay",
    "signed_area",
    "limiting_lines",
    "LayoutParams",
    "LayoutState",
    "layout_run",
    "layout_step",
    "interpolate_layout",
    "MlsParams",
    "TargetAssignment",
    "CoordinateField",
    "compute_field",
    "projection_targets",
    "dimension_targets",
    "RenderSpec",
    "RenderedImage",
    "render_image",
    "overlay_points",
    "__version__",
]
