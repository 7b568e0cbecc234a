"""Figure rendering over mcte-lab file artifacts; no recomputation."""

from .figures import FIGURE_KINDS, FigureSpec, FigureStyle, build_figure, render
from .schemas import (
    SchemaError,
    read_contour_csv,
    read_holonomy_json,
    read_path_csv,
    read_stability_csv,
    read_sweep_csv,
)

__version__ = "0.1.0"

__all__ = [
    "FIGURE_KINDS",
    "FigureSpec",
    "FigureStyle",
    "SchemaError",
    "build_figure",
    "read_contour_csv",
    "read_holonomy_json",
    "read_path_csv",
    "read_stability_csv",
    "read_sweep_csv",
    "render",
    "__version__",
]
