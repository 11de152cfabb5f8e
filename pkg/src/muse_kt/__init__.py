"""Multi-scale knowledge tracing: a windowed attention model and an
unlimited-window recurrent model over student interaction logs, blended by
gradient-boosted trees."""

__version__ = "0.1.0"
