"""Forward-backward simulator and actor-critic trainer for cache-aided multicast streaming."""

__version__ = "0.1.0"
