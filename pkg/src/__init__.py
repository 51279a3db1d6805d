"""windfractal - multifractal analysis and spatial mapping of station wind-speed records."""

__version__ = "0.1.0"
