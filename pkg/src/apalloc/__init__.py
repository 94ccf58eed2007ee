"""Fast AP assignment for SDN-controlled wireless access networks."""

__version__ = "0.1.0"
