"""SmokeyNet: tiled spatiotemporal wildfire smoke detection."""

__version__ = "0.1.0"
