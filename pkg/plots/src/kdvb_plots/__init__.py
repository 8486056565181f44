"""Figures from CSV/JSON experiment artifacts."""

from kdvb_plots.figures import FIGURE_KINDS, FigureSpec, PlotError, plot

__version__ = "0.1.0"

__all__ = ["FIGURE_KINDS", "FigureSpec", "PlotError", "plot", "__version__"]
