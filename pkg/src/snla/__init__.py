"""Link adaptation for short-packet links in interference-limited subnetworks."""

__version__ = "0.1.0"
