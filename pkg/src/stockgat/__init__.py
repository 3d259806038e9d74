"""Stock movement classification with temporal attention, multimodal fusion,
and a graph attention network over company relations."""

__version__ = "0.1.0"
