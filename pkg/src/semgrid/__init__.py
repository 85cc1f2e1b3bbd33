"""Door detection, map segmentation and place categorization for occupancy grid maps."""

__version__ = "0.1.0"
