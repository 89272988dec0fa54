"""QoS-aware content placement for cloud-based CDNs."""

__version__ = "0.1.0"
